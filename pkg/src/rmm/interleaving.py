"""Reference interleaving semantics (sequential consistency).

Each step lets one thread reduce its redex directly against the shared store.
Barriers are no-ops here.  The explorer is independent of this module; the two
are only compared through their outcome sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .lang import (
    UNIT, App, Assign, Bool, Deref, Fence, If, Lam, Ref, RefNew, Redex,
    decompose, is_value, plug, subst_var,
)
from .relaxed import make_store, store_get, store_has, store_set
from .explorer import DEFAULT_MAX_DEPTH, DEFAULT_MAX_STATES, outcome_of


@dataclass(frozen=True)
class ScState:
    store: tuple
    threads: tuple  # ((tid, expr), ...)
    counters: tuple = field(default=(), compare=False)


@dataclass
class OracleResult:
    outcomes: set = field(default_factory=set)
    exhaustive: bool = True
    states_visited: int = 0
    truncation: str | None = None
    dangling: list = field(default_factory=list)


def sc_step(store, threads) -> list[tuple]:
    """One-step successors ``(store, threads)`` of the interleaving semantics."""
    st = ScState(tuple(store), tuple(threads), tuple(0 for _ in threads))
    return [(s.store, s.threads) for s in _successors(st, [])]


def _successors(st: ScState, dangling: list) -> list[ScState]:
    out = []
    for k, (tid, e) in enumerate(st.threads):
        d = decompose(e)
        if not isinstance(d, Redex):
            continue
        ctx, r = d.context, d.redex
        store, counters = st.store, st.counters
        match r:
            case App(Lam(x, body), v):
                new = subst_var(body, x, v)
            case If(Bool(b), then, else_):
                new = then if b else else_
            case RefNew(v):
                n = counters[k] if counters else 0
                p = Ref.fresh(tid, n)
                counters = counters[:k] + (n + 1,) + counters[k + 1:]
                store = store_set(store, p, v)
                new = p
            case Deref(p):
                if not isinstance(p, Ref) or not store_has(store, p):
                    dangling.append((tid, p))
                    continue
                new = store_get(store, p)
            case Assign(p, v):
                if not isinstance(p, Ref) or not store_has(store, p):
                    dangling.append((tid, p))
                    continue
                store = store_set(store, p, v)
                new = UNIT
            case Fence():
                new = UNIT
            case _:
                raise AssertionError(f"unexpected redex {r!r}")
        threads = st.threads[:k] + ((tid, plug(ctx, new)),) + st.threads[k + 1:]
        out.append(ScState(store, threads, counters))
    return out


def _key(st: ScState) -> tuple:
    return (st.store, st.threads)


def sc_explore(store: Iterable, threads: Iterable, max_states: int = DEFAULT_MAX_STATES,
               max_depth: int = DEFAULT_MAX_DEPTH) -> OracleResult:
    """Final stores of every complete interleaving."""
    threads = tuple(threads)
    start = ScState(make_store(store), threads, tuple(0 for _ in threads))
    res = OracleResult()
    seen = {_key(start)}
    res.states_visited = 1
    frontier = [start]
    depth = 0
    while frontier:
        if depth >= max_depth:
            res.exhaustive, res.truncation = False, f"depth limit {max_depth} reached"
            break
        nxt = []
        for st in frontier:
            succ = _successors(st, res.dangling)
            if not succ and all(is_value(e) for _, e in st.threads):
                res.outcomes.add(outcome_of(st.store))
            for s in succ:
                k = _key(s)
                if k in seen:
                    continue
                seen.add(k)
                res.states_visited += 1
                if res.states_visited >= max_states:
                    res.exhaustive, res.truncation = False, f"state limit {max_states} reached"
                    return res
                nxt.append(s)
        frontier = nxt
        depth += 1
    return res
