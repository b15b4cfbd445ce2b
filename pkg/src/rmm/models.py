"""Memory models: precedence, commutability, barriers and write grains.

A memory model decides two things about the temporary store:

* whether a pending entry may be performed ahead of everything issued before
  it (:meth:`MemoryModel.commutable`), and
* which visibility sets a pending write may acquire (its write grain).

Commutability is generated by a precedence relation: an entry is blocked by
any earlier entry that precedes it.  The relation always contains the
minimal precedence :func:`min_precedes`; a model adds same-thread program
order for the orders it does not relax, an optional read-read coherence rule,
and the precedences of the barriers it knows.  ``lwsync`` needs a rule that
cannot be phrased pairwise, so barriers may also contribute blockers that
look at the whole prefix.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

from .lang import FALSE, TRUE, Ident, Ref
from .relaxed import BarrierOp, Entry, Read, ReadMark, Write


class ModelError(ValueError):
    """Unknown model, unknown barrier kind, or malformed model description."""


def alias(rho, rho2) -> bool:
    """``rho`` may denote ``rho2``: same reference, or ``rho`` still unresolved."""
    return rho == rho2 or isinstance(rho, Ident)


def min_precedes(earlier: Entry, later: Entry, strict_wr_read_precedence: bool = False) -> bool:
    """The precedence every memory model must respect.

    With ``strict_wr_read_precedence`` a write precedes a read of another
    thread only when the reader sees the write; by default a write that has
    already served an early read also precedes every aliasing read.
    """
    t, x = earlier
    u, y = later
    if isinstance(x, Write):
        if isinstance(y, Read):
            if not alias(x.target, y.target):
                return False
            if u == t or u in x.visibility:
                return True
            return bool(x.served) and not strict_wr_read_precedence
        if isinstance(y, Write):
            if not alias(x.target, y.target):
                return False
            return u == t or u in x.visibility or (bool(x.served) and bool(y.served))
        if isinstance(y, ReadMark):
            return y.ident in x.served
        return False
    if isinstance(x, Read) and isinstance(y, Write):
        return u == t and alias(x.target, y.target)
    return False


# ---------------------------------------------------------------------------
# Barriers
# ---------------------------------------------------------------------------

SELF = "self"
_KIND = {Read: "R", ReadMark: "M", Write: "W"}


@dataclass(frozen=True)
class PrecedenceRule:
    """``earlier`` precedes ``later`` for the barrier that owns the rule.

    Either side is an operation kind (``"R"`` read, ``"M"`` read mark,
    ``"W"`` write) or ``"self"`` for the barrier itself.  ``threads`` is
    ``"same"`` (both entries from one thread), ``"visible"`` (the later
    entry's thread is in the earlier write's visibility) or
    ``"same_or_visible"``.
    """

    earlier: str
    later: str
    threads: str = "same"

    def holds(self, earlier: Entry, later: Entry) -> bool:
        t, x = earlier
        u, _ = later
        if self.threads == "same":
            return t == u
        visible = isinstance(x, Write) and u in x.visibility
        if self.threads == "visible":
            return visible
        return t == u or visible


def lwsync_blocker(prefix, cand: Entry) -> bool:
    """A read cannot overtake an ``lwsync`` of its own thread while a read (or
    read mark) of that thread is still pending before the barrier."""
    t, op = cand
    if not isinstance(op, Read):
        return False
    seen_read = False
    for u, x in prefix:
        if u != t:
            continue
        if isinstance(x, (Read, ReadMark)):
            seen_read = True
        elif seen_read and isinstance(x, BarrierOp) and x.kind == "lwsync":
            return True
    return False


Blocker = Callable[[tuple, Entry], bool]

# blockers that only look at entries of the candidate's own thread
THREAD_LOCAL_BLOCKERS = frozenset({lwsync_blocker})


@dataclass(frozen=True)
class BarrierSemantics:
    rules: tuple[PrecedenceRule, ...]
    blockers: tuple[Blocker, ...] = ()


_R = PrecedenceRule
BARRIERS: dict[str, BarrierSemantics] = {
    "wr": BarrierSemantics((_R("W", SELF), _R(SELF, "R"))),
    "ww": BarrierSemantics((_R("W", SELF), _R(SELF, "W"))),
    "rr": BarrierSemantics((_R("R", SELF), _R("M", SELF), _R(SELF, "R"))),
    "rw": BarrierSemantics((_R("R", SELF), _R("M", SELF), _R(SELF, "W"))),
    "sync": BarrierSemantics((
        _R("W", SELF, "same_or_visible"),
        _R("R", SELF),
        _R("M", SELF),
        _R(SELF, "R"),
        _R(SELF, "W"),
    )),
    "lwsync": BarrierSemantics(
        (
            _R("W", SELF, "same_or_visible"),
            _R("R", SELF),
            _R("M", SELF),
            _R(SELF, "W"),
        ),
        (lwsync_blocker,),
    ),
}


def barrier_semantics(kind: str) -> BarrierSemantics:
    try:
        return BARRIERS[kind]
    except KeyError:
        raise ModelError(f"unknown barrier kind {kind!r}") from None


# ---------------------------------------------------------------------------
# Write grains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WriteGrain:
    """The visibilities a pending write may acquire.

    ``kind`` is ``"none"`` (only the empty set), ``"own"`` (empty set and
    singletons), ``"all"`` (every set of threads) or ``"explicit"`` (the
    empty set plus ``sets``).
    """

    kind: str
    sets: frozenset = frozenset()

    def allows(self, visibility) -> bool:
        if not visibility:
            return True
        match self.kind:
            case "none":
                return False
            case "own":
                return len(visibility) == 1
            case "all":
                return True
            case "explicit":
                return frozenset(visibility) in self.sets
        raise ModelError(f"unknown grain kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "explicit":
            return "explicit " + " ".join("{" + ",".join(sorted(s)) + "}" for s in sorted(self.sets, key=sorted))
        return self.kind


EMPTY_ONLY = WriteGrain("none")
OWN_ONLY = WriteGrain("own")
ALL_SUBSETS = WriteGrain("all")
GRAINS = {"none": EMPTY_ONLY, "own": OWN_ONLY, "all": ALL_SUBSETS}


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

_ORDERS = {("W", "R"): "relax_wr", ("W", "W"): "relax_ww", ("R", "R"): "relax_rr", ("R", "W"): "relax_rw"}


@dataclass(frozen=True)
class MemoryModel:
    name: str
    relax_wr: bool = False
    relax_ww: bool = False
    relax_rr: bool = False
    relax_rw: bool = False
    coherence_rr: bool = True
    barriers: Mapping[str, BarrierSemantics] = field(default_factory=dict)
    grain: WriteGrain = OWN_ONLY
    # only the head of the temporary store may ever be performed
    in_order: bool = False
    strict_wr_read_precedence: bool = False
    blockers: tuple[Blocker, ...] = ()

    def __post_init__(self) -> None:
        extra = tuple(b for sem in self.barriers.values() for b in sem.blockers)
        object.__setattr__(self, "_all_blockers", self.blockers + extra)
        # lookup tables for precedes()
        ordered = frozenset(pair for pair, flag in _ORDERS.items() if not getattr(self, flag))
        object.__setattr__(self, "_ordered", ordered)
        after, before = {}, {}
        for kind, sem in self.barriers.items():
            for rule in sem.rules:
                if rule.earlier == SELF:
                    after.setdefault((kind, rule.later), []).append(rule)
                elif rule.later == SELF:
                    before.setdefault((kind, rule.earlier), []).append(rule)
        object.__setattr__(self, "_after_barrier", after)
        object.__setattr__(self, "_before_barrier", before)

    def _barrier(self, kind: str) -> BarrierSemantics:
        try:
            return self.barriers[kind]
        except KeyError:
            raise ModelError(f"barrier {kind!r} is not supported by model {self.name!r}") from None

    def precedes(self, earlier: Entry, later: Entry) -> bool:
        if min_precedes(earlier, later, self.strict_wr_read_precedence):
            return True
        t, x = earlier
        u, y = later
        kx, ky = _KIND.get(type(x)), _KIND.get(type(y))
        if t == u and (kx, ky) in _ORDERS:
            if (kx, ky) in self._ordered:
                return True
            if self.coherence_rr and kx == ky == "R" and alias(x.target, y.target):
                return True
        if kx is None:
            self._barrier(x.kind)
            for rule in self._after_barrier.get((x.kind, ky), ()):
                if rule.holds(earlier, later):
                    return True
        if ky is None:
            self._barrier(y.kind)
            for rule in self._before_barrier.get((y.kind, kx), ()):
                if rule.holds(earlier, later):
                    return True
        return False

    @property
    def thread_order_only(self) -> bool:
        """Whether commutability ignores the relative order of entries of
        different threads that do not conflict (see
        :func:`rmm.relaxed.normalize`)."""
        return not self.in_order and all(b in THREAD_LOCAL_BLOCKERS for b in self._all_blockers)

    def commutable(self, prefix, cand: Entry) -> bool:
        """May ``cand`` be performed ahead of every entry of ``prefix``?"""
        if not prefix:
            return True
        if self.in_order:
            return False
        for e in prefix:
            if self.precedes(e, cand):
                return False
        for blocked in self._all_blockers:
            if blocked(prefix, cand):
                return False
        return True

    def commutable_barriers_only(self, prefix, cand: Entry) -> bool:
        return self.commutable(tuple(e for e in prefix if isinstance(e[1], BarrierOp)), cand)

    def grain_allows(self, visibility) -> bool:
        return self.grain.allows(visibility)

    def check_barrier(self, kind: str) -> None:
        self._barrier(kind)

    def with_overrides(self, **changes) -> "MemoryModel":
        return replace(self, **changes)

    def describe(self) -> dict:
        relaxed = [f"{a}->{b}" for (a, b), flag in _ORDERS.items() if getattr(self, flag)]
        return {
            "name": self.name,
            "relaxed_orders": relaxed,
            "coherence_rr": self.coherence_rr,
            "in_order": self.in_order,
            "grain": self.grain.describe(),
            "barriers": sorted(self.barriers),
            "strict_wr_read_precedence": self.strict_wr_read_precedence,
        }


# free-function forms of the model methods

def commutable(model: MemoryModel, prefix, cand: Entry) -> bool:
    return model.commutable(tuple(prefix), cand)


def commutable_barriers_only(model: MemoryModel, prefix, cand: Entry) -> bool:
    return model.commutable_barriers_only(tuple(prefix), cand)


def grain_allows(model: MemoryModel, visibility) -> bool:
    return model.grain_allows(frozenset(visibility))


def _table(*kinds: str) -> dict[str, BarrierSemantics]:
    return {k: BARRIERS[k] for k in kinds}


MODEL_NAMES = ("sc", "tso", "pso", "rmo", "relaxed", "power")


def builtin_model(name: str) -> MemoryModel:
    match name:
        case "sc":
            return MemoryModel("sc", in_order=True, barriers=_table(*BARRIERS), grain=OWN_ONLY)
        case "tso":
            return MemoryModel("tso", relax_wr=True, barriers=_table("wr"), grain=OWN_ONLY)
        case "pso":
            return MemoryModel("pso", relax_wr=True, relax_ww=True, barriers=_table("wr", "ww"), grain=OWN_ONLY)
        case "rmo":
            return MemoryModel(
                "rmo", relax_wr=True, relax_ww=True, relax_rr=True, relax_rw=True,
                coherence_rr=False, barriers=_table("wr", "ww", "rr", "rw"), grain=OWN_ONLY,
            )
        case "relaxed":
            return MemoryModel(
                "relaxed", relax_wr=True, relax_ww=True, relax_rr=True, relax_rw=True,
                coherence_rr=False, barriers=_table(*BARRIERS), grain=ALL_SUBSETS,
            )
        case "power":
            return MemoryModel(
                "power", relax_wr=True, relax_ww=True, relax_rr=True, relax_rw=True,
                coherence_rr=True, barriers=_table("sync", "lwsync"), grain=ALL_SUBSETS,
            )
    raise ModelError(f"unknown model {name!r}; known models: {', '.join(MODEL_NAMES)}")


def model_from_dict(spec: dict) -> MemoryModel:
    """Build a model from a small declarative description, e.g.::

        {"name": "mine", "base": "tso", "relax": ["WR", "WW"],
         "grain": "own", "barriers": ["wr", "ww"], "coherence_rr": true}

    Keys other than ``name`` are optional; unspecified ones come from ``base``
    (default: ``sc`` without the in-order restriction).
    """
    known = {"name", "base", "relax", "grain", "barriers", "coherence_rr", "in_order", "strict_wr_read_precedence"}
    unknown = set(spec) - known
    if unknown:
        raise ModelError(f"unknown model keys: {sorted(unknown)}")
    if "name" not in spec:
        raise ModelError("model description needs a name")
    base = builtin_model(spec["base"]) if "base" in spec else replace(builtin_model("sc"), in_order=False)
    changes: dict = {"name": spec["name"]}
    if "relax" in spec:
        flags = {"WR": "relax_wr", "WW": "relax_ww", "RR": "relax_rr", "RW": "relax_rw"}
        relax = {s.upper().replace("->", "") for s in spec["relax"]}
        if relax - set(flags):
            raise ModelError(f"unknown relaxations: {sorted(relax - set(flags))}")
        for key, flag in flags.items():
            changes[flag] = key in relax
    if "grain" in spec:
        changes["grain"] = parse_grain(spec["grain"])
    if "barriers" in spec:
        changes["barriers"] = {k: barrier_semantics(k) for k in spec["barriers"]}
    for key in ("coherence_rr", "in_order", "strict_wr_read_precedence"):
        if key in spec:
            changes[key] = bool(spec[key])
    return replace(base, **changes)


def parse_grain(g) -> WriteGrain:
    if isinstance(g, str):
        try:
            return GRAINS[g]
        except KeyError:
            raise ModelError(f"unknown grain {g!r}") from None
    return WriteGrain("explicit", frozenset(frozenset(s) for s in g))


def load_model_file(path: str) -> MemoryModel:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(spec, dict):
        raise ModelError(f"{path}: expected a JSON object")
    return model_from_dict(spec)


# ---------------------------------------------------------------------------
# Axiom checking
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    model: str
    samples: int = 0
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def _random_entry(rng: random.Random, threads, refs, idents, barriers) -> Entry:
    t = rng.choice(threads)
    targets = list(refs) + list(idents[:2])
    kind = rng.choice("RMWWB" if barriers else "RMWW")
    if kind == "R":
        return (t, Read(rng.choice(targets), rng.choice(idents)))
    if kind == "M":
        return (t, ReadMark(rng.choice(idents)))
    if kind == "B":
        return (t, BarrierOp(rng.choice(barriers)))
    vis = frozenset(u for u in threads if rng.random() < 0.4)
    served = frozenset(i for i in idents if rng.random() < 0.2)
    value = rng.choice([TRUE, FALSE, rng.choice(idents)])
    return (t, Write(rng.choice(targets), value, vis, served))


def validate_model(model: MemoryModel, sample_budget: int = 10_000, seed: int = 0,
                   max_len: int = 6, n_threads: int = 3, n_refs: int = 2) -> ValidationReport:
    """Check axioms (E) and (A) for the minimal precedence on random samples.

    (E): every entry may be performed from the head of the temporary store.
    (A): if ``cand`` may overtake ``sigma0 . x . sigma1`` then ``x`` does not
    minimally precede ``cand``.
    """
    rng = random.Random(seed)
    threads = [f"t{k}" for k in range(n_threads)]
    refs = [Ref(name) for name in "pqrs"[:n_refs]]
    idents = [Ident(t, k) for t in threads for k in range(2)]
    barriers = sorted(model.barriers)
    report = ValidationReport(model.name)
    for _ in range(sample_budget):
        cand = _random_entry(rng, threads, refs, idents, barriers)
        if not model.commutable((), cand):
            report.counterexamples.append(("E", (), cand))
        sigma = tuple(_random_entry(rng, threads, refs, idents, barriers) for _ in range(rng.randint(1, max_len)))
        if model.commutable(sigma, cand):
            for x in sigma:
                if min_precedes(x, cand, model.strict_wr_read_precedence):
                    report.counterexamples.append(("A", sigma, cand))
                    break
        report.samples += 1
    return report


def model_names() -> Iterable[str]:
    return MODEL_NAMES
