from dataclasses import replace

import pytest

from rmm.explorer import (
    ReplayError, Strategy, Witness, canonicalize, eager_local_closure,
    explore, find_witness, outcome_of, replay_witness,
)
from rmm.lang import FALSE, TRUE, App, Assign, Deref, Lam, Ref, RefNew, Var
from rmm.litmus import parse_test
from rmm.models import builtin_model
from rmm.relaxed import UNRESTRICTED, GlobalStep, LocalStep, RelaxedConfig, StepOptions

from conftest import corpus_by_name, default_run

SMALL = ["sb", "sb_wr", "seq_ww", "corr", "corr_strict"]


def rv(o, *names):
    return tuple(o.get(n) == "true" for n in names)


def outcomes(name, model, **kw):
    test = corpus_by_name()[name]
    return explore(test.initial_config(), test.resolve_model(model), Strategy(**kw))


def test_sb_tso_outcomes():
    res = default_run("sb", "tso").result
    assert res.exhaustive
    assert {rv(o, "r0", "r1") for o in res.outcomes} == {(a, b) for a in (True, False) for b in (True, False)}
    assert all(o.get("p") == o.get("q") == "true" for o in res.outcomes)
    assert res.states_visited > 0 and res.transitions >= res.states_visited - 1


def test_sb_sc_outcomes():
    res = default_run("sb", "sc").result
    assert {rv(o, "r0", "r1") for o in res.outcomes} == {(True, True), (True, False), (False, True)}


@pytest.mark.parametrize("name", SMALL)
@pytest.mark.parametrize("kind", ["brute", "partitioned"])
def test_strategies_agree(name, kind):
    test = corpus_by_name()[name]
    for model in test.models_in_assertions():
        assert outcomes(name, model, kind=kind).outcomes == default_run(name, model).result.outcomes


@pytest.mark.parametrize("kind", ["brute", "partitioned"])
def test_strategies_agree_on_own_early(kind):
    for model in ("tso", "relaxed"):
        assert outcomes("own_early", model, kind=kind).outcomes == default_run("own_early", model).result.outcomes


@pytest.mark.parametrize("name", SMALL)
def test_optimizations_preserve_outcomes(name):
    test = corpus_by_name()[name]
    for model in test.models_in_assertions():
        base = default_run(name, model).result
        for options in (UNRESTRICTED, StepOptions(normalize=False), StepOptions(prune=False)):
            res = outcomes(name, model, options=options)
            assert res.exhaustive and res.outcomes == base.outcomes


def test_dedup_is_sound_on_tiny_programs():
    for name, model in [("sb", "tso"), ("seq_ww", "relaxed"), ("corr", "sc")]:
        plain = outcomes(name, model, dedup=False)
        assert plain.exhaustive
        assert plain.outcomes == default_run(name, model).result.outcomes
        assert plain.states_visited >= default_run(name, model).result.states_visited


def test_truncation_is_reported():
    res = outcomes("iriw", "power", max_states=50)
    assert not res.exhaustive and "state limit" in res.truncation
    res = outcomes("iriw", "power", max_depth=3)
    assert not res.exhaustive and "depth" in res.truncation


def test_workers_do_not_change_results(monkeypatch):
    import os
    from rmm.explorer import _make_pool
    # make sure a real process pool is used even on a single core
    monkeypatch.setattr(os, "cpu_count", lambda: 4)
    pool = _make_pool(Strategy(workers=4))
    assert pool is not None
    pool.shutdown()
    assert _make_pool(Strategy(workers=1)) is None
    one = outcomes("own_early", "relaxed")
    many = outcomes("own_early", "relaxed", workers=4)
    assert one.outcomes == many.outcomes
    assert one.states_visited == many.states_visited
    assert one.transitions == many.transitions


def test_models_are_monotone_on_barrier_free_tests():
    chain = ["sc", "tso", "pso", "rmo", "relaxed"]
    for name in ("sb", "seq_ww", "corr"):
        prev = set()
        for model in chain:
            cur = outcomes(name, model).outcomes
            assert prev <= cur, (name, model)
            prev = cur


def test_allocation_outcomes_rename_fresh_references():
    text = """
    test "alloc"
    shared p=false
    regs r0
    thread t0: { let x = ref true in p := x }
    thread t1: { r0 := !p }
    """
    test = parse_test(text)
    res = explore(test.initial_config(), test.resolve_model("relaxed"))
    assert {o.get("p") for o in res.outcomes} == {"#0"}
    assert {o.get("#0") for o in res.outcomes} == {"true"}
    assert {o.get("r0") for o in res.outcomes} == {"false", "#0"}


def test_outcome_of_names_allocations_by_first_use():
    a, b = Ref.fresh("t1", 0), Ref.fresh("t0", 0)
    o = outcome_of(((Ref("p"), a), (a, b), (b, TRUE)))
    assert o.as_dict() == {"p": "#0", "#0": "#1", "#1": "true"}


def test_canonical_key_ignores_counters_only():
    test = corpus_by_name()["sb"]
    c = test.initial_config()
    assert canonicalize(c) == canonicalize(replace(c, counters=((5, 5), (5, 5))))
    assert canonicalize(c) != canonicalize(replace(c, threads=c.threads[::-1]))


# -- the local closure --------------------------------------------------------


def test_sb_has_twenty_maximal_temporary_stores():
    closure = eager_local_closure(corpus_by_name()["sb"].initial_config())
    assert closure.exhaustive and len(closure) == 20
    assert len({canonicalize(c) for c in closure}) == 20
    for c in closure:
        assert all(t in ("t0", "t1") for t, _ in c.temp)


def test_local_closure_of_a_finished_program_is_itself():
    c = RelaxedConfig.initial([(Ref("p"), FALSE)], [("t0", TRUE)])
    assert eager_local_closure(c).configs == [c]


# -- witnesses -----------------------------------------------------------------


def sb_ff(o):
    return o.get("r0") == "false" and o.get("r1") == "false"


def test_witness_replays_to_the_target():
    test = corpus_by_name()["sb"]
    for model in ("tso", "relaxed", "power"):
        w, res = find_witness(test.initial_config(), test.resolve_model(model), sb_ff)
        assert w is not None
        final = replay_witness(w)
        assert final.is_final() and sb_ff(outcome_of(final.store))
        assert len(w.describe()) == len(w.steps) == len(w.to_json())


def test_no_witness_under_sc():
    test = corpus_by_name()["sb"]
    w, res = find_witness(test.initial_config(), test.resolve_model("sc"), sb_ff)
    assert w is None and res.exhaustive


def test_every_outcome_has_a_witness():
    test = corpus_by_name()["own_early"]
    model = test.resolve_model("tso")
    for o in default_run("own_early", "tso").result.outcomes:
        w, _ = find_witness(test.initial_config(), model, lambda x, o=o: x == o)
        assert w is not None and outcome_of(replay_witness(w).store) == o


def test_empty_witness_replays_to_initial():
    c = corpus_by_name()["sb"].initial_config()
    assert replay_witness(Witness(c, [], builtin_model("tso"))) == c


def test_replay_reports_first_bad_step():
    test = corpus_by_name()["sb"]
    model = test.resolve_model("tso")
    w, _ = find_witness(test.initial_config(), model, sb_ff)
    # a read that has not been issued yet cannot be performed
    bad = replace(w, steps=[GlobalStep("R1", (0,))] + w.steps)
    with pytest.raises(ReplayError) as err:
        replay_witness(bad)
    assert err.value.index == 0
    swapped = list(w.steps)
    k = next(i for i, s in enumerate(swapped) if isinstance(s, GlobalStep))
    swapped = swapped[k:k + 1] + swapped[:k] + swapped[k + 1:]
    with pytest.raises(ReplayError):
        replay_witness(replace(w, steps=swapped))
    with pytest.raises(ReplayError):
        replay_witness(replace(w, steps=[LocalStep("t9", "beta")]))


def test_replay_needs_a_model():
    c = corpus_by_name()["sb"].initial_config()
    with pytest.raises(ValueError):
        replay_witness(Witness(c, []))
    assert replay_witness(Witness(c, []), builtin_model("sc")) == c


def test_unsupported_barrier_is_rejected_before_exploring():
    from rmm.models import ModelError
    test = corpus_by_name()["iriw_sync_sync"]
    with pytest.raises(ModelError):
        explore(test.initial_config(), builtin_model("tso"))


def test_dangling_reads_get_stuck_not_crash():
    # a thread dereferencing a value that is not a reference is stuck
    c = RelaxedConfig.initial([(Ref("p"), FALSE)], [("t0", Deref(TRUE))])
    res = explore(c, builtin_model("relaxed"))
    assert res.outcomes == set() and res.stuck == 1


def test_allocation_then_write():
    e = App(Lam("x", Assign(Var("x"), FALSE)), RefNew(TRUE))
    c = RelaxedConfig.initial([], [("t0", e)])
    for model in ("sc", "tso", "relaxed"):
        res = explore(c, builtin_model(model))
        assert [o.as_dict() for o in res.outcomes] == [{"#0": "false"}]


def performs_in_program_order(w):
    """No global step performs an entry while an earlier read or write of the
    same thread is still pending."""
    from rmm.relaxed import Read, Write
    for c, step in zip(w.configs(), w.steps):
        if not isinstance(step, GlobalStep) or step.rule not in ("R1", "R2", "R4"):
            continue
        k = step.positions[-1]
        t = c.temp[k][0]
        if any(u == t and isinstance(op, (Read, Write)) for u, op in c.temp[:k]):
            return False
    return True


def test_iriw_needs_no_reordering_under_power():
    test = corpus_by_name()["iriw"]
    target = test.assertions[0].predicate
    power = test.resolve_model("power")
    ordered = power.with_overrides(name="power-po", relax_wr=False, relax_ww=False, relax_rr=False, relax_rw=False)
    w, _ = find_witness(test.initial_config(), ordered, target)
    assert w is not None and performs_in_program_order(w)
    rules = [s.rule for s in w.steps if isinstance(s, GlobalStep)]
    assert rules.count("R5") >= 1 and rules.count("R2") >= 1
    # the same run is a run of power itself
    assert target(outcome_of(replay_witness(w, power).store))


def test_sb_witness_under_tso_overtakes_writes():
    test = corpus_by_name()["sb"]
    w, _ = find_witness(test.initial_config(), test.resolve_model("tso"), sb_ff)
    assert not performs_in_program_order(w)
    rules = [s.rule for s in w.steps if isinstance(s, GlobalStep)]
    # both reads are performed before either write to p or q
    assert rules[:2] == ["R1", "R1"]
