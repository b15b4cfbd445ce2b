"""Relaxed configurations and their transitions.

A configuration is a triple (store, temporary store, thread pool).  Threads
evaluate locally and *issue* memory operations at the end of the temporary
store (:func:`local_step`); operations are then *performed* against the
shared store, possibly out of order, by the six global rules R1-R6 under the
control of a memory model.

The memory model is only consulted through three methods, so this module does
not depend on :mod:`rmm.models`::

    model.commutable(prefix, entry) -> bool
    model.commutable_barriers_only(prefix, entry) -> bool
    model.grain_allows(visibility) -> bool

Every rule function returns the successor configuration, or ``None`` when the
rule instance is not enabled.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Union

from .lang import (
    UNIT, App, Assign, Bool, Deref, Expr, Fence, Ident, If, Lam, Ref, RefNew, Redex, Value, decompose, idents_in, is_pure, is_value,
    plug, show, subst_ident, subst_var,
)

if TYPE_CHECKING:
    from .models import MemoryModel


# ---------------------------------------------------------------------------
# Memory operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Read:
    target: Value
    ident: Ident


@dataclass(frozen=True, slots=True)
class ReadMark:
    ident: Ident


@dataclass(frozen=True, slots=True)
class Write:
    target: Value
    value: Value
    visibility: frozenset = frozenset()
    served: frozenset = frozenset()


@dataclass(frozen=True, slots=True)
class BarrierOp:
    kind: str


MemOp = Union[Read, ReadMark, Write, BarrierOp]
Entry = tuple  # (thread id, MemOp)
TemporaryStore = tuple  # tuple[Entry, ...]
Store = tuple  # sorted tuple of (Ref, Value) pairs
ThreadPool = tuple  # tuple of (thread id, Expr), in program order


def show_op(op: MemOp) -> str:
    match op:
        case Read(t, i):
            return f"rd({show(t)}, {i})"
        case ReadMark(i):
            return f"mark({i})"
        case Write(t, v, w, served):
            vis = "{" + ",".join(sorted(w)) + "}"
            srv = "{" + ",".join(sorted(map(str, served))) + "}"
            return f"wr({show(t)}, {show(v)}; {vis}; {srv})"
        case BarrierOp(k):
            return k
    raise TypeError(op)


def show_entry(entry: Entry) -> str:
    return f"({entry[0]}, {show_op(entry[1])})"


def _ref_order(r: Ref):
    return (r.origin is not None, r.origin or (), r.name)


def store_get(store: Store, ref: Ref):
    for r, v in store:
        if r == ref:
            return v
    raise KeyError(ref)


def store_has(store: Store, ref: Ref) -> bool:
    return any(r == ref for r, _ in store)


def store_set(store: Store, ref: Ref, value: Value) -> Store:
    items = [(r, v) for r, v in store if r != ref]
    items.append((ref, value))
    items.sort(key=lambda rv: _ref_order(rv[0]))
    return tuple(items)


def make_store(mapping: Iterable[tuple[Ref, Value]]) -> Store:
    return tuple(sorted(mapping, key=lambda rv: _ref_order(rv[0])))


# ---------------------------------------------------------------------------
# Identifier substitution over operations, temporary stores and thread pools
# ---------------------------------------------------------------------------


def subst_ident_op(op: MemOp, ident: Ident, v: Value) -> MemOp:
    """Resolve ``ident`` inside an operation.  Served sets are left alone."""
    match op:
        case Read(t, i):
            nt = subst_ident(t, ident, v)
            return op if nt is t else Read(nt, i)
        case Write(t, val, w, served):
            nt, nv = subst_ident(t, ident, v), subst_ident(val, ident, v)
            return op if (nt is t and nv is val) else Write(nt, nv, w, served)
    return op


def subst_ident_temp(temp: TemporaryStore, ident: Ident, v: Value) -> TemporaryStore:
    return tuple((t, subst_ident_op(op, ident, v)) for t, op in temp)


def subst_ident_threads(threads: ThreadPool, ident: Ident, v: Value) -> ThreadPool:
    return tuple((t, subst_ident(e, ident, v)) for t, e in threads)


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RelaxedConfig:
    store: Store
    temp: TemporaryStore
    threads: ThreadPool
    # per thread: (references allocated, identifiers issued); fresh-name
    # bookkeeping only, not part of the semantic state
    counters: tuple = field(default=(), compare=False)

    @classmethod
    def initial(cls, store: Iterable[tuple[Ref, Value]], threads: Iterable[tuple[str, Expr]]) -> "RelaxedConfig":
        threads = tuple(threads)
        return cls(make_store(store), (), threads, tuple((0, 0) for _ in threads))

    @property
    def tids(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.threads)

    def thread_index(self, tid: str) -> int:
        for k, (t, _) in enumerate(self.threads):
            if t == tid:
                return k
        raise KeyError(tid)

    def is_normal(self) -> bool:
        if self.temp:
            return False
        return all(is_pure(e) for _, e in self.threads) and all(is_pure(v) for _, v in self.store)

    def is_final(self) -> bool:
        """Normal, and every thread has terminated."""
        return self.is_normal() and all(is_value(e) for _, e in self.threads)

    def pretty(self) -> str:
        store = ", ".join(f"{r.name}={show(v)}" for r, v in self.store)
        temp = " . ".join(show_entry(e) for e in self.temp) or "eps"
        threads = " || ".join(f"({t}, {show(e)})" for t, e in self.threads)
        return f"S = {{{store}}}\nsigma = {temp}\nT = {threads}"


# ---------------------------------------------------------------------------
# Thread steps
# ---------------------------------------------------------------------------

LOCAL_RULES = ("beta", "if", "ref", "deref", "assign", "barrier")


def local_step(c: RelaxedConfig, tid: str) -> list[tuple[str, RelaxedConfig]]:
    """The (at most one) thread-local step of ``tid``, as ``[(rule, config)]``.

    Thread steps never touch the store; memory effects are appended to the
    temporary store for later.
    """
    k = c.thread_index(tid)
    d = decompose(c.threads[k][1])
    if not isinstance(d, Redex):
        return []
    ctx, r = d.context, d.redex
    temp, counters = c.temp, c.counters
    match r:
        case App(Lam(x, body), v):
            rule, new = "beta", subst_var(body, x, v)
        case If(Bool(b), then, else_):
            rule, new = "if", then if b else else_
        case RefNew(v):
            nrefs, nids = counters[k]
            p = Ref.fresh(tid, nrefs)
            counters = counters[:k] + ((nrefs + 1, nids),) + counters[k + 1:]
            temp = temp + ((tid, Write(p, v)),)
            rule, new = "ref", p
        case Deref(target):
            nrefs, nids = counters[k]
            i = Ident(tid, nids)
            counters = counters[:k] + ((nrefs, nids + 1),) + counters[k + 1:]
            temp = temp + ((tid, Read(target, i)),)
            rule, new = "deref", i
        case Assign(target, v):
            temp = temp + ((tid, Write(target, v)),)
            rule, new = "assign", UNIT
        case Fence(kind):
            temp = temp + ((tid, BarrierOp(kind)),)
            rule, new = "barrier", UNIT
        case _:
            raise AssertionError(f"unexpected redex {r!r}")
    threads = c.threads[:k] + ((tid, plug(ctx, new)),) + c.threads[k + 1:]
    return [(rule, RelaxedConfig(c.store, temp, threads, counters))]


def has_local_step(c: RelaxedConfig) -> bool:
    return any(isinstance(decompose(e), Redex) for _, e in c.threads)


# ---------------------------------------------------------------------------
# Global steps R1-R6
# ---------------------------------------------------------------------------


def _entry(c: RelaxedConfig, i: int, kind) -> Entry | None:
    if 0 <= i < len(c.temp) and isinstance(c.temp[i][1], kind):
        return c.temp[i]
    return None


def _resolve(c: RelaxedConfig, temp: TemporaryStore, ident: Ident, v: Value) -> RelaxedConfig:
    return RelaxedConfig(
        c.store,
        subst_ident_temp(temp, ident, v),
        subst_ident_threads(c.threads, ident, v),
        c.counters,
    )


def _r1_enabled(c: RelaxedConfig, i: int, model: "MemoryModel") -> bool:
    e = _entry(c, i, Read)
    if e is None:
        return False
    p = e[1].target
    return isinstance(p, Ref) and store_has(c.store, p) and model.commutable(c.temp[:i], e)


def r1_perform_read(c: RelaxedConfig, position: int, model: "MemoryModel") -> RelaxedConfig | None:
    """Read from the shared store; every use of the read's identifier gets the value."""
    if not _r1_enabled(c, position, model):
        return None
    _, op = c.temp[position]
    v = store_get(c.store, op.target)
    return _resolve(c, c.temp[:position] + c.temp[position + 1:], op.ident, v)


def _r2_enabled(c: RelaxedConfig, wpos: int, rpos: int, model: "MemoryModel") -> bool:
    if not 0 <= wpos < rpos:
        return False
    w, r = _entry(c, wpos, Write), _entry(c, rpos, Read)
    if w is None or r is None:
        return False
    p = r[1].target
    return (
        isinstance(p, Ref)
        and w[1].target == p
        and r[0] in w[1].visibility
        and model.commutable(c.temp[wpos + 1:rpos], r)
        and model.commutable_barriers_only(c.temp[:wpos], r)
    )


def r2_read_early(c: RelaxedConfig, write_pos: int, read_pos: int, model: "MemoryModel") -> RelaxedConfig | None:
    """Serve a read from an earlier pending write that is visible to the reader.

    The read leaves a mark behind, and its identifier is recorded in the
    write's served set.
    """
    if not _r2_enabled(c, write_pos, read_pos, model):
        return None
    t_w, w = c.temp[write_pos]
    t_r, r = c.temp[read_pos]
    temp = list(c.temp)
    temp[write_pos] = (t_w, Write(w.target, w.value, w.visibility, w.served | {r.ident}))
    temp[read_pos] = (t_r, ReadMark(r.ident))
    return _resolve(c, tuple(temp), r.ident, w.value)


def _r3_enabled(c: RelaxedConfig, i: int, model: "MemoryModel") -> bool:
    e = _entry(c, i, ReadMark)
    if e is None:
        return False
    if model.commutable(c.temp[:i], e):
        return True
    everyone = frozenset(c.tids)
    ident = e[1].ident
    for j in range(i):
        op = c.temp[j][1]
        if (
            isinstance(op, Write)
            and isinstance(op.target, Ref)
            and op.visibility == everyone
            and ident in op.served
            and model.commutable(c.temp[:j], c.temp[j])
        ):
            return True
    return False


def r3_eliminate_mark(c: RelaxedConfig, position: int, model: "MemoryModel") -> RelaxedConfig | None:
    """Drop a read mark, once it commutes with what precedes it or its write is
    visible to every thread and could be performed."""
    if not _r3_enabled(c, position, model):
        return None
    return RelaxedConfig(c.store, c.temp[:position] + c.temp[position + 1:], c.threads, c.counters)


def _r4_enabled(c: RelaxedConfig, i: int, model: "MemoryModel") -> bool:
    e = _entry(c, i, Write)
    if e is None:
        return False
    w = e[1]
    return isinstance(w.target, Ref) and is_pure(w.value) and model.commutable(c.temp[:i], e)


def r4_perform_write(c: RelaxedConfig, position: int, model: "MemoryModel") -> RelaxedConfig | None:
    if not _r4_enabled(c, position, model):
        return None
    w = c.temp[position][1]
    return RelaxedConfig(
        store_set(c.store, w.target, w.value),
        c.temp[:position] + c.temp[position + 1:],
        c.threads,
        c.counters,
    )


def _r5_enabled(c: RelaxedConfig, i: int, new_w: frozenset, model: "MemoryModel") -> bool:
    e = _entry(c, i, Write)
    if e is None:
        return False
    t, w = e
    return t in new_w and w.visibility < new_w and new_w <= frozenset(c.tids) and model.grain_allows(new_w)


def r5_extend_visibility(c: RelaxedConfig, position: int, new_w, model: "MemoryModel") -> RelaxedConfig | None:
    new_w = frozenset(new_w)
    if not _r5_enabled(c, position, new_w, model):
        return None
    t, w = c.temp[position]
    temp = c.temp[:position] + ((t, Write(w.target, w.value, new_w, w.served)),) + c.temp[position + 1:]
    return RelaxedConfig(c.store, temp, c.threads, c.counters)


def _r6_enabled(c: RelaxedConfig, i: int, model: "MemoryModel") -> bool:
    e = _entry(c, i, BarrierOp)
    return e is not None and model.commutable(c.temp[:i], e)


def r6_perform_barrier(c: RelaxedConfig, position: int, model: "MemoryModel") -> RelaxedConfig | None:
    if not _r6_enabled(c, position, model):
        return None
    return RelaxedConfig(c.store, c.temp[:position] + c.temp[position + 1:], c.threads, c.counters)


# ---------------------------------------------------------------------------
# Visibility candidates for R5
# ---------------------------------------------------------------------------


def live_threads(threads: ThreadPool) -> frozenset:
    """Threads whose expression is not yet a value."""
    return frozenset(t for t, e in threads if not is_value(e))


def reading_threads(temp: Iterable[Entry]) -> frozenset:
    """Threads with a pending (not yet performed) read in ``temp``."""
    return frozenset(t for t, op in temp if isinstance(op, Read))


@dataclass(frozen=True)
class StepOptions:
    """Search-space restrictions on R5.

    ``restrict_r5``: a write may only become visible to every thread at once,
    or to threads that can still read it (live threads, or threads with a
    pending read after the write).  ``register_r5``: a write to a register is
    only ever made visible to the register's owner.
    """

    restrict_r5: bool = True
    register_r5: bool = True
    # Take a step that only lifts constraints (dropping a read mark or a
    # barrier, or retiring a write to a register in ``silent``) as the sole
    # successor.  Such a step never disables another one, so no final store
    # is lost.  Writes to silent registers are also never made visible.
    prune: bool = True
    silent: frozenset = frozenset()
    # Keep temporary stores in trace normal form, merging configurations
    # that only differ in the order of non-conflicting entries of different
    # threads.
    normalize: bool = True


UNRESTRICTED = StepOptions(restrict_r5=False, register_r5=False, prune=False, normalize=False)


def silent_registers(c: RelaxedConfig) -> frozenset:
    """Registers whose only occurrences are as the target of an assignment.

    Nothing ever reads such a register or passes it around, so the moment a
    write to it is performed cannot influence any other step.
    """
    registers = {r for r, _ in c.store if r.is_register}
    exposed: set = set()

    def scan(e) -> None:
        match e:
            case Ref():
                exposed.add(e)
            case Assign(Ref(), v):
                scan(v)
            case Lam(_, b) | RefNew(b) | Deref(b):
                scan(b)
            case App(f, a) | Assign(f, a):
                scan(f)
                scan(a)
            case If(x, a, b):
                scan(x)
                scan(a)
                scan(b)

    for _, e in c.threads:
        scan(e)
    for _, v in c.store:
        scan(v)
    for _, op in c.temp:
        match op:
            case Read(t, _):
                scan(t)
            case Write(t, v, _, _):
                scan(t)
                scan(v)
    return frozenset(r.name for r in registers - exposed)


def visibility_candidates(
    c: RelaxedConfig, write_pos: int, model: "MemoryModel", options: StepOptions = StepOptions()
) -> list[frozenset]:
    tids = c.tids
    allowed = _allowed(c, write_pos, live_threads(c.threads), model, options)
    return _candidates(c.temp[write_pos], tids, {u: k for k, u in enumerate(tids)}, allowed, model, options)


def _may_alias(w: Write, op: Read) -> bool:
    return op.target == w.target or isinstance(op.target, Ident) or isinstance(w.target, Ident)


def _allowed(c: RelaxedConfig, write_pos: int, live: frozenset, model: "MemoryModel",
             options: StepOptions) -> list[frozenset]:
    """Bounds on the strict subsets a write may become visible to."""
    bounds = []
    after = c.temp[write_pos + 1:]
    if options.restrict_r5:
        bounds.append(live | reading_threads(after))
    if options.prune:
        # seeing the write only constrains a thread that cannot read it early
        t, w = c.temp[write_pos]
        if model.in_order:
            # an early read needs the read right after the write (read
            # marks aside, which may still disappear)
            nxt = next((e for e in after if not isinstance(e[1], ReadMark)), None)
            if nxt is None:
                bounds.append(live | {t})
            elif isinstance(nxt[1], Read) and _may_alias(w, nxt[1]):
                bounds.append(frozenset({t, nxt[0]}))
            else:
                bounds.append(frozenset())
        else:
            readers = frozenset(u for u, op in after if isinstance(op, Read) and _may_alias(w, op))
            bounds.append(live | readers | {t})
    return bounds


def _candidates(entry: Entry, tids, order: dict, allowed, model: "MemoryModel", options: StepOptions) -> list[frozenset]:
    t, w = entry
    everyone = frozenset(tids)
    if options.prune and isinstance(w.target, Ref) and w.target.is_register and w.target.name in options.silent:
        # nobody can observe the visibility of such a write
        return []
    if options.register_r5 and isinstance(w.target, Ref) and w.target.is_register:
        pool = [frozenset({t})]
    else:
        others = [u for u in tids if u != t]
        pool = [
            frozenset({t, *combo})
            for n in range(len(others) + 1)
            for combo in itertools.combinations(others, n)
        ]
    for bound in allowed:
        pool = [s for s in pool if s == everyone or s <= bound]
    cands = [s for s in pool if w.visibility < s and model.grain_allows(s)]
    cands.sort(key=lambda s: (len(s), sorted(order[u] for u in s)))
    return cands


# ---------------------------------------------------------------------------
# Aggregate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalStep:
    """One instance of a global rule: R1-R6, σ positions, and the new
    visibility for R5."""

    rule: str
    positions: tuple
    visibility: tuple | None = None

    def describe(self, c: RelaxedConfig | None = None) -> str:
        where = ", ".join(map(str, self.positions))
        extra = f" -> {{{','.join(self.visibility)}}}" if self.visibility is not None else ""
        text = f"{self.rule} @ {where}{extra}"
        if c is not None:
            text += "  " + " / ".join(show_entry(c.temp[i]) for i in self.positions)
        return text


@dataclass(frozen=True)
class LocalStep:
    thread: str
    rule: str

    def describe(self, c: RelaxedConfig | None = None) -> str:
        return f"local {self.rule} @ {self.thread}"


def enabled_global(c: RelaxedConfig, model: "MemoryModel", options: StepOptions = StepOptions()) -> list[GlobalStep]:
    """Every enabled global step, ordered by rule, then position, then
    visibility.  Equivalent to querying the ``_rN_enabled`` predicates one by
    one, with the shared prefix checks computed once."""
    temp = c.temp
    n = len(temp)
    if not n:
        return []
    tids = c.tids
    order = {u: k for k, u in enumerate(tids)}
    everyone = frozenset(tids)
    store_refs = {r for r, _ in c.store}
    live = live_threads(c.threads)
    # can entry i be performed ahead of everything issued before it?
    free = [model.commutable(temp[:i], temp[i]) for i in range(n)]
    r1, r2, r3, r4, r5, r6 = [], [], [], [], [], []
    for i, (t, op) in enumerate(temp):
        if isinstance(op, Read):
            p = op.target
            if not isinstance(p, Ref):
                continue
            if free[i] and p in store_refs:
                r1.append(GlobalStep("R1", (i,)))
            for j in range(i):
                w = temp[j][1]
                if (
                    isinstance(w, Write)
                    and w.target == p
                    and t in w.visibility
                    and model.commutable(temp[j + 1:i], temp[i])
                    and model.commutable_barriers_only(temp[:j], temp[i])
                ):
                    r2.append(GlobalStep("R2", (j, i)))
        elif isinstance(op, ReadMark):
            if free[i] or any(
                isinstance(w, Write)
                and free[j]
                and isinstance(w.target, Ref)
                and w.visibility == everyone
                and op.ident in w.served
                for j, (_, w) in enumerate(temp[:i])
            ):
                r3.append(GlobalStep("R3", (i,)))
        elif isinstance(op, Write):
            if free[i] and isinstance(op.target, Ref) and is_pure(op.value):
                r4.append(GlobalStep("R4", (i,)))
            allowed = _allowed(c, i, live, model, options)
            for cand in _candidates(temp[i], tids, order, allowed, model, options):
                r5.append(GlobalStep("R5", (i,), tuple(sorted(cand, key=order.__getitem__))))
        elif free[i]:
            r6.append(GlobalStep("R6", (i,)))
    return r1 + r2 + r3 + r4 + r5 + r6


def apply_global(c: RelaxedConfig, step: GlobalStep, model: "MemoryModel") -> RelaxedConfig | None:
    match step.rule:
        case "R1":
            return r1_perform_read(c, step.positions[0], model)
        case "R2":
            return r2_read_early(c, step.positions[0], step.positions[1], model)
        case "R3":
            return r3_eliminate_mark(c, step.positions[0], model)
        case "R4":
            return r4_perform_write(c, step.positions[0], model)
        case "R5":
            return r5_extend_visibility(c, step.positions[0], step.visibility or (), model)
        case "R6":
            return r6_perform_barrier(c, step.positions[0], model)
    raise ValueError(f"unknown rule {step.rule!r}")


def apply_step(c: RelaxedConfig, step: GlobalStep | LocalStep, model: "MemoryModel") -> RelaxedConfig | None:
    if isinstance(step, LocalStep):
        if step.thread not in c.tids:
            return None
        for rule, nxt in local_step(c, step.thread):
            if rule == step.rule:
                return nxt
        return None
    return apply_global(c, step, model)


def _touches(w: Write, op: MemOp) -> bool:
    if isinstance(op, (Read, Write)):
        return _may_alias(w, op)
    return True  # read marks may have been served by w; barriers may see it


def conflict(a: Entry, b: Entry) -> bool:
    """Whether the relative order of two entries can ever matter.

    Entries of one thread always conflict.  Across threads only a write
    matters, against accesses that may alias it, read marks and barriers.
    """
    (t, x), (u, y) = a, b
    if t == u:
        return True
    if isinstance(x, Write):
        return _touches(x, y)
    if isinstance(y, Write):
        return _touches(y, x)
    return False


def normalize(c: RelaxedConfig, model: "MemoryModel") -> RelaxedConfig:
    """Reorder the temporary store into its lexicographic trace normal form.

    Swapping adjacent non-conflicting entries of different threads changes
    no precedence, so both orders have the same behaviours.  Among all
    orders reachable by such swaps, the one listing lower thread indices
    first is chosen.  Models whose commutability depends on cross-thread
    order (in-order models, custom blockers) are left alone.
    """
    temp = c.temp
    n = len(temp)
    if n < 2 or not model.thread_order_only:
        return c
    rank = {t: k for k, (t, _) in enumerate(c.threads)}
    succ: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for j in range(n):
        for i in range(j):
            if conflict(temp[i], temp[j]):
                succ[i].append(j)
                indeg[j] += 1
    ready = [(rank[temp[i][0]], i) for i in range(n) if not indeg[i]]
    heapq.heapify(ready)
    order = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if not indeg[j]:
                heapq.heappush(ready, (rank[temp[j][0]], j))
    if order == list(range(n)):
        return c
    return RelaxedConfig(c.store, tuple(temp[i] for i in order), c.threads, c.counters)


def removal_step(c: RelaxedConfig, model: "MemoryModel", options: StepOptions) -> GlobalStep | None:
    """The first enabled step that only removes a constraint, if any."""
    temp = c.temp
    for i, (_, op) in enumerate(temp):
        if isinstance(op, ReadMark):
            if _r3_enabled(c, i, model):
                return GlobalStep("R3", (i,))
        elif isinstance(op, BarrierOp):
            if _r6_enabled(c, i, model):
                return GlobalStep("R6", (i,))
        elif (
            isinstance(op, Write)
            and isinstance(op.target, Ref)
            and op.target.name in options.silent
            and op.target.is_register
            and _r4_enabled(c, i, model)
        ):
            return GlobalStep("R4", (i,))
    return None


def successors(
    c: RelaxedConfig, model: "MemoryModel", options: StepOptions = StepOptions(), eager: bool = False
) -> list[tuple[GlobalStep | LocalStep, RelaxedConfig]]:
    """All one-step successors, local steps first (in thread order).

    With ``eager`` set, global steps are only offered once no thread can take
    a local step.  With ``options.prune`` set, an enabled removal step (see
    :func:`removal_step`) is returned alone.
    """
    out: list = []
    step = removal_step(c, model, options) if options.prune and c.temp else None
    if step is not None:
        out.append((step, apply_global(c, step, model)))
    else:
        for tid in c.tids:
            for rule, nxt in local_step(c, tid):
                out.append((LocalStep(tid, rule), nxt))
        if not (eager and out):
            for step in enabled_global(c, model, options):
                out.append((step, apply_global(c, step, model)))
    if options.normalize:
        out = [(step, normalize(nxt, model)) for step, nxt in out]
    return out


# ---------------------------------------------------------------------------
# Invariants (debug)
# ---------------------------------------------------------------------------


class InvariantError(AssertionError):
    pass


def check_invariants(c: RelaxedConfig) -> None:
    """Raise :class:`InvariantError` if a structural invariant is broken."""
    for r, v in c.store:
        if not is_pure(v):
            raise InvariantError(f"impure value stored at {r.name}: {show(v)}")
    owners: dict[Ident, int] = {}
    pending: set[Ident] = set()
    for k, (_, op) in enumerate(c.temp):
        if isinstance(op, (Read, ReadMark)):
            if op.ident in owners:
                raise InvariantError(f"identifier {op.ident} issued twice")
            owners[op.ident] = k
            if isinstance(op, Read):
                pending.add(op.ident)
    servers: dict[Ident, int] = {}
    for k, (_, op) in enumerate(c.temp):
        if isinstance(op, Write):
            for i in op.served:
                if i in servers:
                    raise InvariantError(f"identifier {i} served by two writes")
                servers[i] = k
                if i in owners and isinstance(c.temp[owners[i]][1], ReadMark) and owners[i] < k:
                    raise InvariantError(f"mark for {i} precedes its write")
    used: set[Ident] = set()
    for _, op in c.temp:
        match op:
            case Read(t, _):
                used |= idents_in(t)
            case Write(t, v, _, _):
                used |= idents_in(t) | idents_in(v)
    for _, e in c.threads:
        used |= idents_in(e)
    dangling = used - pending
    if dangling:
        raise InvariantError(f"unresolved identifiers without a pending read: {sorted(map(str, dangling))}")
