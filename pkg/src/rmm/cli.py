"""Command-line front end.

Exit codes: 0 every checked assertion holds, 1 some assertion fails,
2 inconclusive (exploration truncated), 3 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .explorer import STRATEGIES, Strategy, find_witness
from .interleaving import sc_explore
from .litmus import (
    CORPUS, LitmusError, LitmusTest, TestRun, builtin_corpus, load_test, parse_predicate, run_test,
)
from .models import MODEL_NAMES, ModelError, builtin_model, load_model_file
from .relaxed import UNRESTRICTED, StepOptions

EXIT_OK, EXIT_FAIL, EXIT_UNKNOWN, EXIT_USAGE = 0, 1, 2, 3
SCHEMA = "rmm-report/1"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _exploration_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help=f"built-in model ({', '.join(MODEL_NAMES)}); default: the test header")
    p.add_argument("--model-file", help="JSON model description")
    p.add_argument("--strategy", choices=STRATEGIES, default="eager")
    p.add_argument("--max-states", type=int, default=Strategy().max_states)
    p.add_argument("--max-depth", type=int, default=Strategy().max_depth)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--unrestricted-r5", action="store_true",
                   help="turn off every state-space reduction (slower, same outcomes)")


def build_parser() -> argparse.ArgumentParser:
    ap = _ArgumentParser(prog="rmm", description="Explore litmus tests under relaxed memory models.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("run", help="explore a test and check its assertions")
    p.add_argument("file")
    _exploration_args(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--witness", action="store_true", help="print a trace for every reachable assertion")

    p = sub.add_parser("outcomes", help="list the reachable final stores")
    p.add_argument("file")
    _exploration_args(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("witness", help="print a run reaching an outcome")
    p.add_argument("file")
    _exploration_args(p)
    p.add_argument("--outcome", required=True, help="predicate such as 'r0=false /\\ r1=false'")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("models", help="list built-in models")
    p.add_argument("--describe", metavar="MODEL")

    p = sub.add_parser("corpus", help="list or run the built-in corpus")
    p.add_argument("--run-all", action="store_true")
    p.add_argument("--json", action="store_true")
    p.add_argument("--strategy", choices=STRATEGIES, default="eager")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-states", type=int, default=Strategy().max_states)

    p = sub.add_parser("oracle", help="outcomes under the interleaving semantics")
    p.add_argument("file")
    p.add_argument("--max-states", type=int, default=Strategy().max_states)
    p.add_argument("--json", action="store_true")
    return ap


def _strategy(args) -> Strategy:
    options = UNRESTRICTED if getattr(args, "unrestricted_r5", False) else StepOptions()
    return Strategy(
        kind=args.strategy,
        max_states=args.max_states,
        max_depth=getattr(args, "max_depth", Strategy().max_depth),
        options=options,
        workers=args.workers,
    )


def _model(args, test: LitmusTest):
    if args.model and args.model_file:
        raise ModelError("--model and --model-file are mutually exclusive")
    if args.model_file:
        return test.resolve_model(load_model_file(args.model_file))
    return test.resolve_model(args.model)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def run_report(run: TestRun) -> dict:
    res = run.result
    return {
        "test": run.test.name,
        "model": run.model.name,
        "exhaustive": res.exhaustive,
        "truncation": res.truncation,
        "stats": res.stats,
        "outcomes": [o.as_dict() for o in res.sorted_outcomes()],
        "assertions": [
            {
                "assertion": v.assertion.format(),
                "status": v.status,
                "reachable": v.sat,
                **({"witness": v.witness.to_json()} if v.witness is not None else {}),
            }
            for v in run.verdicts
        ],
    }


def _exit_code(runs) -> int:
    if any(v.status == "fails" for r in runs for v in r.verdicts):
        return EXIT_FAIL
    if any(r.inconclusive for r in runs):
        return EXIT_UNKNOWN
    return EXIT_OK


def _print_run(run: TestRun) -> None:
    res = run.result
    print(f"test {run.test.name} under {run.model.name}: {len(res.outcomes)} outcome(s), "
          f"{res.states_visited} states, {'exhaustive' if res.exhaustive else 'truncated: ' + str(res.truncation)}")
    for o in res.sorted_outcomes():
        print(f"  {o}")
    for v in run.verdicts:
        print(f"{v.status.upper():8} {v.assertion.format()}  [{v.sat}]")
        if v.witness is not None:
            print("  witness:")
            for line in v.witness.describe():
                print(f"    {line}")


def cmd_run(args) -> int:
    test = load_test(args.file)
    run = run_test(test, _model(args, test), _strategy(args), witnesses=args.witness)
    if args.json:
        print(_dump({"schema": SCHEMA, "runs": [run_report(run)]}))
    else:
        _print_run(run)
    return _exit_code([run])


def cmd_outcomes(args) -> int:
    test = load_test(args.file)
    run = run_test(replace(test, assertions=()), _model(args, test), _strategy(args))
    res = run.result
    if args.json:
        print(_dump({"schema": SCHEMA, "test": test.name, "model": run.model.name,
                     "exhaustive": res.exhaustive, "outcomes": [o.as_dict() for o in res.sorted_outcomes()]}))
    else:
        for o in res.sorted_outcomes():
            print(o)
        if not res.exhaustive:
            print(f"(truncated: {res.truncation})")
    return EXIT_OK if res.exhaustive else EXIT_UNKNOWN


def cmd_witness(args) -> int:
    test = load_test(args.file)
    pred = parse_predicate(args.outcome, test)
    model = _model(args, test)
    witness, res = find_witness(test.initial_config(), model, pred, _strategy(args))
    if witness is None:
        verdict = "UNSAT" if res.exhaustive else "UNKNOWN"
        if args.json:
            print(_dump({"schema": SCHEMA, "test": test.name, "model": model.name, "reachable": verdict}))
        else:
            print(f"no run reaches {pred.format()} under {model.name} ({verdict})")
        return EXIT_FAIL if res.exhaustive else EXIT_UNKNOWN
    if args.json:
        print(_dump({"schema": SCHEMA, "test": test.name, "model": model.name, "reachable": "SAT",
                     "witness": witness.to_json()}))
    else:
        print("\n".join(witness.describe()))
    return EXIT_OK


def cmd_models(args) -> int:
    if args.describe:
        print(_dump(builtin_model(args.describe).describe()))
        return EXIT_OK
    for name in MODEL_NAMES:
        d = builtin_model(name).describe()
        relaxed = ",".join(d["relaxed_orders"]) or "-"
        print(f"{name:8} relaxed={relaxed:22} grain={d['grain']:5} barriers={','.join(d['barriers']) or '-'}")
    return EXIT_OK


def corpus_runs(strategy: Strategy) -> list[TestRun]:
    """Run every corpus test under every model its assertions name."""
    runs = []
    for test in builtin_corpus():
        for model in test.models_in_assertions():
            if any(a.applies_to(model) for a in test.assertions):
                runs.append(run_test(test, model, strategy))
    return runs


def cmd_corpus(args) -> int:
    if not args.run_all:
        for test in builtin_corpus():
            print(f"{test.name:18} models: {', '.join(test.models_in_assertions())}")
        return EXIT_OK
    strategy = Strategy(kind=args.strategy, max_states=args.max_states, workers=args.workers)
    runs = corpus_runs(strategy)
    per_test: dict[str, bool] = {name: True for name in CORPUS}
    for r in runs:
        per_test[r.test.name] &= r.all_hold
    reproduced = sum(per_test.values())
    if args.json:
        print(_dump({
            "schema": SCHEMA,
            "runs": [run_report(r) for r in runs],
            "reproduced": reproduced,
            "total": len(per_test),
        }))
    else:
        for r in runs:
            tag = "ok" if r.all_hold else ("??" if r.inconclusive else "FAIL")
            print(f"{tag:4} {r.test.name:18} {r.model.name:8} {len(r.result.outcomes)} outcome(s), "
                  f"{r.result.states_visited} states")
        print(f"{reproduced}/{len(per_test)} tests reproduced")
    return _exit_code(runs)


def cmd_oracle(args) -> int:
    test = load_test(args.file)
    res = sc_explore(test.initial_store(), test.program(), max_states=args.max_states)
    outcomes = sorted(res.outcomes)
    if args.json:
        print(_dump({"schema": SCHEMA, "test": test.name, "semantics": "interleaving",
                     "exhaustive": res.exhaustive, "outcomes": [o.as_dict() for o in outcomes]}))
    else:
        for o in outcomes:
            print(o)
        if not res.exhaustive:
            print(f"(truncated: {res.truncation})")
    return EXIT_OK if res.exhaustive else EXIT_UNKNOWN


COMMANDS = {
    "run": cmd_run, "outcomes": cmd_outcomes, "witness": cmd_witness,
    "models": cmd_models, "corpus": cmd_corpus, "oracle": cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (LitmusError, ModelError, OSError) as exc:
        print(f"rmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
