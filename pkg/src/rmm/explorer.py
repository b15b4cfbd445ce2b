"""Exhaustive exploration of relaxed configurations.

Exploration is a level-synchronous breadth-first search over configurations,
merged on the fingerprint given by :func:`canonicalize`.
Three strategies are offered:

``brute``
    every enabled step is explored.
``eager``
    thread-local steps are applied before anything else; global steps only
    fire once no thread can move.  Performing an operation never depends on
    what was issued after it, so no final configuration is lost.
``partitioned``
    the eager closure of the initial configuration is computed first, then
    each maximal temporary store is explored in its own state space (nothing
    is shared between them).  Slower, but each space is small.

A search can be spread over worker processes: each BFS level is cut into
contiguous chunks and the successors are merged back in frontier order, so
the result does not depend on the number of workers.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

from .lang import (
    App, Assign, Deref, Fence, If, Lam, Ref, RefNew, show,
)
from .relaxed import (
    BarrierOp, LocalStep, RelaxedConfig, StepOptions,
    apply_step, live_threads, normalize, silent_registers, local_step, reading_threads,
    successors, visibility_candidates,
)
from .models import MemoryModel

__all__ = [
    "Strategy", "ExplorationResult", "Outcome", "Witness", "canonicalize",
    "outcome_of", "step_all", "eager_local_closure", "explore", "find_witness",
    "replay_witness", "live_threads", "reading_threads", "visibility_candidates",
    "ReplayError",
]

DEFAULT_MAX_STATES = 10_000_000
DEFAULT_MAX_DEPTH = 10_000
STRATEGIES = ("brute", "eager", "partitioned")
_PARALLEL_THRESHOLD = 256


# ---------------------------------------------------------------------------
# Canonical keys
# ---------------------------------------------------------------------------


def canonicalize(c: RelaxedConfig) -> tuple:
    """A hashable fingerprint of ``c``.

    Identifiers and allocated references are named after the issuing thread
    and a per-thread counter, so two interleavings that issue the same
    operations produce the same names and the configurations themselves
    serve as keys.  The fresh-name counters are left out.
    """
    return (c.store, c.temp, c.threads)


def _sort_key(key) -> str:
    return repr(key)


# ---------------------------------------------------------------------------
# Outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Outcome:
    """A final store: sorted ``(name, value)`` pairs with values printed.

    Allocated references are renamed ``#0``, ``#1``... in order of first
    occurrence so that outcomes compare across runs and semantics.
    """

    items: tuple

    def as_dict(self) -> dict[str, str]:
        return dict(self.items)

    def get(self, name: str) -> str | None:
        return self.as_dict().get(name)

    def __str__(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.items)


def outcome_of(store) -> Outcome:
    rename: dict[Ref, str] = {}

    def name_of(r: Ref) -> str:
        if r.origin is None:
            return r.name
        if r not in rename:
            rename[r] = f"#{len(rename)}"
        return rename[r]

    def text(v) -> str:
        match v:
            case Ref():
                return name_of(v)
            case _:
                s = show(v)
                # allocated references nested inside lambdas
                for r in sorted(_refs_in(v), key=lambda r: r.origin):
                    s = s.replace(r.name, name_of(r))
                return s

    declared = [(r, v) for r, v in store if r.origin is None]
    allocated = [(r, v) for r, v in store if r.origin is not None]
    items = [(r.name, text(v)) for r, v in declared]
    for r, v in allocated:
        items.append((name_of(r), text(v)))
    return Outcome(tuple(sorted(items)))


def _refs_in(v) -> set[Ref]:
    out = set()
    stack = [v]
    while stack:
        x = stack.pop()
        match x:
            case Ref(_, _, origin) if origin is not None:
                out.add(x)
            case Lam(_, b):
                stack.append(b)
            case App(f, a):
                stack += [f, a]
            case If(c, a, b):
                stack += [c, a, b]
            case RefNew(w) | Deref(w):
                stack.append(w)
            case Assign(t, w):
                stack += [t, w]
    return out


# ---------------------------------------------------------------------------
# Strategy and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    kind: str = "eager"
    max_states: int = DEFAULT_MAX_STATES
    max_depth: int = DEFAULT_MAX_DEPTH
    options: StepOptions = StepOptions()
    dedup: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")


@dataclass
class ExplorationResult:
    outcomes: set = field(default_factory=set)
    exhaustive: bool = True
    states_visited: int = 0
    transitions: int = 0
    max_frontier: int = 0
    elapsed: float = 0.0
    truncation: str | None = None
    stuck: int = 0

    @property
    def stats(self) -> dict:
        return {
            "states_visited": self.states_visited,
            "transitions": self.transitions,
            "max_frontier": self.max_frontier,
            "stuck_states": self.stuck,
        }

    def sorted_outcomes(self) -> list[Outcome]:
        return sorted(self.outcomes)


@dataclass
class Witness:
    """A run from ``initial``: the steps, and the model and options needed to
    replay them (positions refer to normalized temporary stores when
    ``options.normalize`` is set)."""

    initial: RelaxedConfig
    steps: list = field(default_factory=list)
    model: MemoryModel | None = None
    options: StepOptions = StepOptions()

    def configs(self) -> list[RelaxedConfig]:
        """The configurations along the run, ``initial`` included."""
        out = [self.initial]
        for k, step in enumerate(self.steps):
            nxt = apply_step(out[-1], step, self.model)
            if nxt is None:
                raise ReplayError(k, step)
            if self.options.normalize:
                nxt = normalize(nxt, self.model)
            out.append(nxt)
        return out

    def describe(self) -> list[str]:
        configs = self.configs() if self.model is not None else [None] * len(self.steps)
        return [f"{k:3d}. {step.describe(c)}" for k, (step, c) in enumerate(zip(self.steps, configs))]

    def to_json(self) -> list[dict]:
        out = []
        for step in self.steps:
            if isinstance(step, LocalStep):
                out.append({"kind": "local", "thread": step.thread, "rule": step.rule})
            else:
                d = {"kind": "global", "rule": step.rule, "positions": list(step.positions)}
                if step.visibility is not None:
                    d["visibility"] = list(step.visibility)
                out.append(d)
        return out


class ReplayError(RuntimeError):
    def __init__(self, index: int, step) -> None:
        super().__init__(f"step {index} ({step.describe()}) is not enabled")
        self.index = index
        self.step = step


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def step_all(c: RelaxedConfig, model: MemoryModel, options: StepOptions = StepOptions()) -> list[RelaxedConfig]:
    """Every configuration reachable in one step (local or global)."""
    return [nxt for _, nxt in successors(c, model, options)]


def _expand(c: RelaxedConfig, model: MemoryModel, options: StepOptions, eager: bool, local_only: bool):
    if local_only:
        succ = [(LocalStep(t, rule), nxt) for t in c.tids for rule, nxt in local_step(c, t)]
    else:
        succ = successors(c, model, options, eager=eager)
    return [(step, nxt, canonicalize(nxt)) for step, nxt in succ]


def _expand_chunk(args):
    chunk, model, options, eager, local_only = args
    return [_expand(c, model, options, eager, local_only) for c in chunk]


class _Search:
    """One BFS over a single state space, with parent links for witnesses."""

    def __init__(self, model: MemoryModel, strategy: Strategy, eager: bool, local_only: bool = False,
                 pool: ProcessPoolExecutor | None = None) -> None:
        self.model = model
        self.strategy = strategy
        self.eager = eager
        self.local_only = local_only
        self.pool = pool
        self.parents: dict = {}
        self.result = ExplorationResult()
        self.finals: list[tuple] = []  # (key, config) of terminal states
        self._serial = 0

    def _level(self, frontier: list[RelaxedConfig]):
        opts = self.strategy.options
        workers = self.strategy.workers
        if self.pool is None or workers <= 1 or len(frontier) < _PARALLEL_THRESHOLD:
            return [_expand(c, self.model, opts, self.eager, self.local_only) for c in frontier]
        size = -(-len(frontier) // workers)
        chunks = [frontier[k:k + size] for k in range(0, len(frontier), size)]
        out = []
        for part in self.pool.map(_expand_chunk, [(ch, self.model, opts, self.eager, self.local_only) for ch in chunks]):
            out.extend(part)
        return out

    def run(self, start: RelaxedConfig, on_terminal: Callable | None = None) -> ExplorationResult:
        res = self.result
        strat = self.strategy
        key0 = canonicalize(start)
        self.parents[key0] = None
        res.states_visited = 1
        frontier = [(key0, start)]
        depth = 0
        while frontier:
            res.max_frontier = max(res.max_frontier, len(frontier))
            if depth >= strat.max_depth:
                res.exhaustive = False
                res.truncation = f"depth limit {strat.max_depth} reached"
                break
            expanded = self._level([c for _, c in frontier])
            nxt_frontier = []
            for (key, c), succ in zip(frontier, expanded):
                if not succ:
                    self.finals.append((key, c))
                    if on_terminal is not None and on_terminal(key, c):
                        return res
                    continue
                for step, s, k in succ:
                    res.transitions += 1
                    if strat.dedup:
                        if k in self.parents:
                            continue
                        self.parents[k] = (key, step)
                    else:
                        # tree search: states are paths, never merged
                        self._serial += 1
                        k = ("node", self._serial)
                        self.parents[k] = (key, step)
                    res.states_visited += 1
                    nxt_frontier.append((k, s))
                    if res.states_visited >= strat.max_states:
                        res.exhaustive = False
                        res.truncation = f"state limit {strat.max_states} reached"
                        self._collect(frontier, expanded)
                        return res
            frontier = nxt_frontier
            depth += 1
        return res

    def _collect(self, frontier, expanded) -> None:
        for (key, c), succ in zip(frontier, expanded):
            if not succ:
                self.finals.append((key, c))

    def path_to(self, key) -> list:
        steps = []
        while self.parents.get(key) is not None:
            key, step = self.parents[key]
            steps.append(step)
        steps.reverse()
        return steps


@dataclass
class LocalClosure:
    """Maximal configurations reachable by thread-local steps only."""

    configs: list
    exhaustive: bool
    states_visited: int
    paths: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)


def eager_local_closure(c: RelaxedConfig, max_depth: int = DEFAULT_MAX_DEPTH,
                        max_states: int = DEFAULT_MAX_STATES) -> LocalClosure:
    """All configurations reachable from ``c`` by thread steps alone in which
    no thread step is enabled any more, sorted by canonical key."""
    search = _Search(None, Strategy("eager", max_states=max_states, max_depth=max_depth), eager=True, local_only=True)
    res = search.run(c)
    finals = sorted(search.finals, key=lambda kc: _sort_key(kc[0]))
    paths = {key: search.path_to(key) for key, _ in finals}
    return LocalClosure([cfg for _, cfg in finals], res.exhaustive, res.states_visited, paths)


def _check_barriers(c: RelaxedConfig, model: MemoryModel) -> None:
    stack = [e for _, e in c.threads]
    while stack:
        e = stack.pop()
        match e:
            case Fence(k):
                model.check_barrier(k)
            case Lam(_, b):
                stack.append(b)
            case App(f, a):
                stack += [f, a]
            case If(cnd, a, b):
                stack += [cnd, a, b]
    for _, op in c.temp:
        if isinstance(op, BarrierOp):
            model.check_barrier(op.kind)


def _terminal_outcome(c: RelaxedConfig) -> Outcome | None:
    return outcome_of(c.store) if c.is_final() else None


def _make_pool(strategy: Strategy) -> ProcessPoolExecutor | None:
    # a single worker process only adds pickling overhead
    n = min(strategy.workers, os.cpu_count() or 1)
    if n <= 1:
        return None
    return ProcessPoolExecutor(max_workers=n)


def _run(initial: RelaxedConfig, model: MemoryModel, strategy: Strategy,
         target: Callable[[Outcome], bool] | None = None):
    """Shared driver of :func:`explore` and :func:`find_witness`.

    Returns ``(result, witness)``; the witness is only searched for when a
    ``target`` is given.
    """
    _check_barriers(initial, model)
    if strategy.options.prune:
        strategy = replace(strategy, options=replace(strategy.options, silent=silent_registers(initial)))
    t0 = time.perf_counter()
    result = ExplorationResult()
    witness = None
    found: list = []

    def on_terminal(search: _Search, prefix: list):
        def hook(key, c):
            out = _terminal_outcome(c)
            if out is None:
                result.stuck += 1
                return False
            result.outcomes.add(out)
            if target is not None and target(out) and not found:
                found.append(prefix + search.path_to(key))
                return True
            return False
        return hook

    pool = _make_pool(strategy)
    try:
        if strategy.kind == "partitioned":
            closure = eager_local_closure(initial, strategy.max_depth, strategy.max_states)
            result.states_visited += closure.states_visited
            if not closure.exhaustive:
                result.exhaustive = False
                result.truncation = "local closure truncated"
            started: set = set()
            for part in closure.configs:
                key = canonicalize(part)
                if strategy.options.normalize:
                    part = normalize(part, model)
                    if canonicalize(part) in started:
                        continue
                    started.add(canonicalize(part))
                remaining = strategy.max_states - result.states_visited
                if remaining <= 0:
                    result.exhaustive = False
                    result.truncation = f"state limit {strategy.max_states} reached"
                    break
                search = _Search(model, replace(strategy, max_states=remaining), eager=True, pool=pool)
                sub = search.run(part, on_terminal(search, closure.paths[key]))
                _merge(result, sub)
                if found:
                    break
        else:
            search = _Search(model, strategy, eager=strategy.kind == "eager", pool=pool)
            sub = search.run(initial, on_terminal(search, []))
            _merge(result, sub)
    finally:
        if pool is not None:
            pool.shutdown()
    result.elapsed = time.perf_counter() - t0
    if found:
        witness = Witness(initial, found[0], model, strategy.options)
    return result, witness


def _merge(into: ExplorationResult, sub: ExplorationResult) -> None:
    into.states_visited += sub.states_visited
    into.transitions += sub.transitions
    into.max_frontier = max(into.max_frontier, sub.max_frontier)
    if not sub.exhaustive:
        into.exhaustive = False
        into.truncation = into.truncation or sub.truncation


def explore(initial: RelaxedConfig, model: MemoryModel, strategy: Strategy = Strategy()) -> ExplorationResult:
    """Every final store reachable from ``initial`` under ``model``."""
    result, _ = _run(initial, model, strategy)
    return result


def find_witness(initial: RelaxedConfig, model: MemoryModel, target: Callable[[Outcome], bool],
                 strategy: Strategy = Strategy()) -> tuple[Witness | None, ExplorationResult]:
    """Search for a run ending in a final store satisfying ``target``.

    Returns the witness (or ``None``) together with the exploration result;
    when no witness is found, ``result.exhaustive`` tells whether the answer
    is conclusive.  The search stops at the first hit, so the result's
    outcome set is partial in that case.
    """
    result, witness = _run(initial, model, strategy, target)
    return witness, result


def replay_witness(w: Witness, model: MemoryModel | None = None) -> RelaxedConfig:
    """Re-execute a witness and return its final configuration; raises
    :class:`ReplayError` at the first step that is not enabled."""
    if model is not None:
        w = replace(w, model=model)
    if w.model is None:
        raise ValueError("replaying a witness needs a model")
    return w.configs()[-1]
