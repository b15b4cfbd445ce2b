import itertools
import random

import pytest

from rmm.lang import FALSE, TRUE, UNIT, App, Assign, Deref, Fence, Ident, Lam, Ref, RefNew, Var
from rmm.models import builtin_model
from rmm.relaxed import (
    UNRESTRICTED, BarrierOp, GlobalStep, InvariantError, Read, ReadMark, RelaxedConfig,
    StepOptions, Write, _r1_enabled, _r2_enabled, _r3_enabled, _r4_enabled, _r6_enabled,
    apply_global, check_invariants, conflict, enabled_global, live_threads, local_step,
    make_store, normalize, r1_perform_read, r2_read_early, r3_eliminate_mark, r4_perform_write,
    r5_extend_visibility, r6_perform_barrier, reading_threads, silent_registers, successors,
    visibility_candidates,
)

from conftest import corpus_by_name

p, q = Ref("p"), Ref("q")
r0 = Ref("r0", is_register=True)
relaxed, tso, power, sc = (builtin_model(m) for m in ("relaxed", "tso", "power", "sc"))


def cfg(temp, threads=(("t0", UNIT), ("t1", UNIT)), store=((p, FALSE), (q, FALSE))):
    return RelaxedConfig(make_store(store), tuple(temp), tuple(threads), tuple((0, 0) for _ in threads))


def ident(t, k=0):
    return Ident(t, k)


# -- thread steps ---------------------------------------------------------


def test_deref_issues_read_with_fresh_identifier():
    c = RelaxedConfig.initial([(p, FALSE)], [("t0", Deref(p))])
    [(rule, c1)] = local_step(c, "t0")
    assert rule == "deref"
    assert c1.temp == (("t0", Read(p, Ident("t0", 0))),)
    assert c1.threads == (("t0", Ident("t0", 0)),)
    assert c1.store == c.store


def test_assign_ref_and_fence_are_buffered():
    c = RelaxedConfig.initial([(p, FALSE)], [("t0", App(Lam("_", Fence("wr")), Assign(p, TRUE)))])
    [(rule, c1)] = local_step(c, "t0")
    assert rule == "assign" and c1.temp == (("t0", Write(p, TRUE)),)
    [(rule, c2)] = local_step(c1, "t0")
    assert rule == "beta"
    [(rule, c3)] = local_step(c2, "t0")
    assert rule == "barrier" and c3.temp[-1] == ("t0", BarrierOp("wr"))

    c = RelaxedConfig.initial([], [("t0", RefNew(TRUE))])
    [(rule, c1)] = local_step(c, "t0")
    fresh = c1.threads[0][1]
    assert rule == "ref" and isinstance(fresh, Ref) and fresh.origin == ("t0", 0)
    assert c1.temp == (("t0", Write(fresh, TRUE)),)
    assert c1.store == ()


def test_no_local_step_for_values_or_blocked_threads():
    c = cfg([], threads=[("t0", UNIT), ("t1", App(Var("f"), TRUE))])
    assert local_step(c, "t0") == [] and local_step(c, "t1") == []


# -- R1 to R6 -------------------------------------------------------------


def test_r1_reads_the_store_and_resolves_everywhere():
    i = ident("t0")
    c = cfg([("t0", Read(p, i)), ("t0", Write(r0, i))], threads=[("t0", App(Lam("x", Var("x")), i))],
            store=[(p, TRUE), (r0, FALSE)])
    c1 = r1_perform_read(c, 0, relaxed)
    assert c1.temp == (("t0", Write(r0, TRUE)),)
    assert c1.threads[0][1] == App(Lam("x", Var("x")), TRUE)


def test_r1_blocked_by_same_thread_aliasing_write():
    c = cfg([("t0", Write(p, TRUE)), ("t0", Read(p, ident("t0")))])
    assert not _r1_enabled(c, 1, relaxed)
    assert r1_perform_read(c, 1, relaxed) is None
    # a different location is fine once W->R is relaxed, not under sc
    c = cfg([("t0", Write(p, TRUE)), ("t0", Read(q, ident("t0")))])
    assert _r1_enabled(c, 1, tso)
    assert not _r1_enabled(c, 1, sc)


def test_r2_needs_visibility_and_leaves_a_mark():
    i = ident("t1")
    w = Write(p, TRUE)
    c = cfg([("t0", w), ("t1", Read(p, i))])
    assert not _r2_enabled(c, 0, 1, relaxed)
    c = r5_extend_visibility(c, 0, {"t0", "t1"}, relaxed)
    c2 = r2_read_early(c, 0, 1, relaxed)
    assert c2.temp == (("t0", Write(p, TRUE, frozenset({"t0", "t1"}), frozenset({i}))), ("t1", ReadMark(i)))
    check_invariants(c2)


def test_r2_blocked_by_barrier_before_the_write():
    i = ident("t1")
    c = cfg([("t1", BarrierOp("rr")), ("t0", Write(p, TRUE, frozenset({"t0", "t1"}))), ("t1", Read(p, i))])
    assert _r2_enabled(c, 1, 2, relaxed) is False
    c = cfg([("t0", BarrierOp("rr")), ("t0", Write(p, TRUE, frozenset({"t0", "t1"}))), ("t1", Read(p, i))])
    assert _r2_enabled(c, 1, 2, relaxed)


def test_r3_mark_waits_for_its_write_unless_globally_visible():
    i = ident("t1")
    w = Write(p, TRUE, frozenset({"t0", "t1"}), frozenset({i}))
    c = cfg([("t0", w), ("t1", ReadMark(i))], threads=[("t0", UNIT), ("t1", UNIT), ("t2", UNIT)])
    assert not _r3_enabled(c, 1, relaxed)
    c = r5_extend_visibility(c, 0, {"t0", "t1", "t2"}, relaxed)
    assert _r3_enabled(c, 1, relaxed)
    assert r3_eliminate_mark(c, 1, relaxed).temp == (c.temp[0],)


def test_r4_needs_a_pure_value_and_a_reference():
    c = cfg([("t0", Write(p, ident("t0")))])
    assert not _r4_enabled(c, 0, relaxed)
    c = cfg([("t0", Write(ident("t1"), TRUE))])
    assert not _r4_enabled(c, 0, relaxed)
    c = cfg([("t0", Write(p, TRUE))])
    assert dict(r4_perform_write(c, 0, relaxed).store)[p] == TRUE


def test_r5_must_grow_and_include_the_writer():
    c = cfg([("t0", Write(p, TRUE))])
    assert r5_extend_visibility(c, 0, {"t1"}, relaxed) is None
    c1 = r5_extend_visibility(c, 0, {"t0"}, relaxed)
    assert c1 is not None
    assert r5_extend_visibility(c1, 0, {"t0"}, relaxed) is None
    # own-only grain refuses foreign threads
    assert r5_extend_visibility(c, 0, {"t0", "t1"}, tso) is None


def test_r6_barrier_waits_for_earlier_writes():
    c = cfg([("t0", Write(p, TRUE)), ("t0", BarrierOp("wr"))])
    assert not _r6_enabled(c, 1, tso)
    c = cfg([("t1", Write(p, TRUE)), ("t0", BarrierOp("wr"))])
    assert r6_perform_barrier(c, 1, tso).temp == (c.temp[0],)


def test_sync_blocked_by_foreign_visible_write():
    c = cfg([("t1", Write(p, TRUE, frozenset({"t1", "t0"}))), ("t0", BarrierOp("sync"))])
    assert not _r6_enabled(c, 1, power)
    c = cfg([("t1", Write(p, TRUE, frozenset({"t1"}))), ("t0", BarrierOp("sync"))])
    assert _r6_enabled(c, 1, power)


# -- visibility candidates -------------------------------------------------


def test_restricted_candidates():
    threads = [("t0", UNIT), ("t1", UNIT), ("t2", UNIT)]
    c = cfg([("t0", Write(p, TRUE)), ("t1", Read(p, ident("t1")))], threads=threads)
    assert reading_threads(c.temp[1:]) == {"t1"}
    assert live_threads(c.threads) == frozenset()
    full = visibility_candidates(c, 0, relaxed, UNRESTRICTED)
    assert len(full) == 4
    restricted = visibility_candidates(c, 0, relaxed, StepOptions(prune=False))
    # only everyone, since the writer itself is neither live nor reading
    assert restricted == [frozenset({"t0", "t1", "t2"})]


def test_register_writes_only_visible_to_owner():
    c = cfg([("t0", Write(r0, TRUE))], store=[(p, FALSE), (r0, FALSE)],
            threads=[("t0", Deref(r0)), ("t1", UNIT)])
    assert visibility_candidates(c, 0, relaxed, StepOptions(restrict_r5=False, prune=False)) == [frozenset({"t0"})]
    assert len(visibility_candidates(c, 0, relaxed, UNRESTRICTED)) == 2


def test_silent_registers():
    sb = corpus_by_name()["sb"]
    assert silent_registers(sb.initial_config()) == {"r0", "r1"}
    c = cfg([], threads=[("t0", Assign(r0, TRUE)), ("t1", Deref(r0))], store=[(r0, FALSE)])
    assert silent_registers(c) == frozenset()


# -- aggregate enumeration -------------------------------------------------


def naive_enabled(c, model, options):
    n = len(c.temp)
    steps = [GlobalStep("R1", (i,)) for i in range(n) if _r1_enabled(c, i, model)]
    steps += [GlobalStep("R2", (i, j)) for j in range(n) for i in range(j) if _r2_enabled(c, i, j, model)]
    steps += [GlobalStep("R3", (i,)) for i in range(n) if _r3_enabled(c, i, model)]
    steps += [GlobalStep("R4", (i,)) for i in range(n) if _r4_enabled(c, i, model)]
    order = {t: k for k, t in enumerate(c.tids)}
    for i in range(n):
        if isinstance(c.temp[i][1], Write):
            for cand in visibility_candidates(c, i, model, options):
                steps.append(GlobalStep("R5", (i,), tuple(sorted(cand, key=order.__getitem__))))
    steps += [GlobalStep("R6", (i,)) for i in range(n) if _r6_enabled(c, i, model)]
    return steps


def random_walk_configs(test, model, options, n, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        c = test.initial_config()
        while True:
            succ = successors(c, model, options)
            if not succ:
                break
            c = rng.choice(succ)[1]
            out.append(c)
    return out


@pytest.mark.parametrize("name,model", [("iriw_lwsync_sync", "power"), ("own_early", "tso"),
                                        ("wrc", "relaxed"), ("sb_wr", "sc")])
@pytest.mark.parametrize("options", [StepOptions(), UNRESTRICTED], ids=["default", "unrestricted"])
def test_enabled_global_matches_rule_predicates(name, model, options):
    test = corpus_by_name()[name]
    mm = test.resolve_model(model)
    for c in random_walk_configs(test, mm, options, 300, seed=7):
        assert enabled_global(c, mm, options) == naive_enabled(c, mm, options)
        for step in enabled_global(c, mm, options):
            assert apply_global(c, step, mm) is not None


# -- normal form -----------------------------------------------------------


def test_conflict_relation():
    w = ("t0", Write(p, TRUE))
    assert conflict(w, ("t1", Read(p, ident("t1"))))
    assert not conflict(w, ("t1", Read(q, ident("t1"))))
    assert conflict(w, ("t1", Read(ident("t2"), ident("t1"))))
    assert conflict(w, ("t1", BarrierOp("sync")))
    assert conflict(w, ("t1", ReadMark(ident("t1"))))
    assert not conflict(("t0", Read(p, ident("t0"))), ("t1", Read(p, ident("t1"))))
    assert conflict(("t0", Read(p, ident("t0"))), ("t0", Read(q, ident("t0", 1))))


def test_normalize_sorts_independent_entries_by_thread():
    a = ("t1", Read(q, ident("t1")))
    b = ("t0", Read(p, ident("t0")))
    c = cfg([a, b])
    assert normalize(c, relaxed).temp == (b, a)
    # a write to p pins a later read of p
    w = ("t1", Write(p, TRUE))
    c = cfg([w, b])
    assert normalize(c, relaxed).temp == (w, b)


def test_normalize_leaves_in_order_models_alone():
    c = cfg([("t1", Read(q, ident("t1"))), ("t0", Read(p, ident("t0")))])
    assert normalize(c, sc) is c


@pytest.mark.parametrize("name", ["iriw_lwsync_sync", "wrc_lwsync"])
def test_normal_form_is_canonical_over_swaps(name):
    test = corpus_by_name()[name]
    mm = test.resolve_model("power")
    rng = random.Random(3)
    for c in random_walk_configs(test, mm, UNRESTRICTED, 200, seed=11):
        nf = normalize(c, mm)
        assert sorted(map(repr, nf.temp)) == sorted(map(repr, c.temp))
        assert normalize(nf, mm) == nf
        temp = list(c.temp)
        for _ in range(10):
            k = rng.randrange(max(1, len(temp) - 1))
            if k + 1 < len(temp) and not conflict(temp[k], temp[k + 1]):
                temp[k], temp[k + 1] = temp[k + 1], temp[k]
        swapped = RelaxedConfig(c.store, tuple(temp), c.threads, c.counters)
        assert normalize(swapped, mm) == nf


def test_removal_steps_are_taken_alone():
    c = cfg([("t0", Write(p, TRUE)), ("t1", BarrierOp("ww")), ("t1", Read(q, ident("t1")))])
    succ = successors(c, relaxed)
    assert [s.rule for s, _ in succ] == ["R6"]
    assert len(successors(c, relaxed, UNRESTRICTED)) > 1


# -- invariants --------------------------------------------------------------


def test_invariant_checker_flags_broken_configs():
    i = ident("t0")
    with pytest.raises(InvariantError):
        check_invariants(cfg([], store=[(p, i)]))
    with pytest.raises(InvariantError):
        check_invariants(cfg([("t0", Read(p, i)), ("t0", Read(q, i))]))
    with pytest.raises(InvariantError):
        check_invariants(cfg([], threads=[("t0", i)]))
    with pytest.raises(InvariantError):
        check_invariants(cfg([("t1", ReadMark(i)), ("t0", Write(p, TRUE, frozenset({"t0"}), frozenset({i})))]))
    check_invariants(cfg([("t0", Read(p, i))], threads=[("t0", i)]))


def test_final_and_normal():
    assert cfg([]).is_final()
    assert not cfg([("t0", BarrierOp("wr"))]).is_normal()
    assert not cfg([], threads=[("t0", Deref(p))]).is_final()


def test_all_successors_keep_invariants_on_small_space():
    test = corpus_by_name()["sb_wr"]
    mm = test.resolve_model("relaxed")
    seen, frontier = set(), [test.initial_config()]
    while frontier:
        c = frontier.pop()
        for _, nxt in successors(c, mm, UNRESTRICTED):
            check_invariants(nxt)
            key = (nxt.store, nxt.temp, nxt.threads)
            if key not in seen:
                seen.add(key)
                frontier.append(nxt)
    assert len(seen) > 1000


def test_visibility_only_grows():
    test = corpus_by_name()["iriw"]
    mm = test.resolve_model("power")
    rng = random.Random(0)
    for _ in range(30):
        c = test.initial_config()
        vis = {}
        while True:
            succ = successors(c, mm, UNRESTRICTED)
            if not succ:
                break
            c = rng.choice(succ)[1]
            for t, op in c.temp:
                if isinstance(op, Write):
                    key = (t, op.target)
                    assert vis.get(key, frozenset()) <= op.visibility
                    vis[key] = op.visibility


def test_permutations_of_threads_give_same_outcome_count():
    # swapping thread order must not change what the semantics can do
    test = corpus_by_name()["sb"]
    mm = test.resolve_model("tso")
    from rmm.explorer import Strategy, explore
    base = explore(test.initial_config(), mm, Strategy())
    for perm in itertools.permutations(test.initial_config().threads):
        c = RelaxedConfig.initial(test.initial_config().store, perm)
        assert explore(c, mm, Strategy()).outcomes == base.outcomes
