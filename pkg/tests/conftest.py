import contextlib
import functools
import io
import sys

import pytest

from rmm.cli import main
from rmm.explorer import Strategy
from rmm.litmus import builtin_corpus, run_test


@functools.lru_cache(maxsize=None)
def corpus_by_name():
    return {t.name: t for t in builtin_corpus()}


@functools.lru_cache(maxsize=None)
def default_run(name: str, model: str):
    """Exploration of a corpus test under the default strategy, shared
    across test modules."""
    return run_test(corpus_by_name()[name], model, Strategy())


@pytest.fixture(scope="session")
def corpus():
    return corpus_by_name()


def cli(*argv):
    """Run the command-line entry point in-process; returns (code, stdout)."""
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(list(argv))
    return code, buf.getvalue()


@functools.lru_cache(maxsize=None)
def corpus_json(workers: int = 1) -> str:
    code, out = cli("corpus", "--run-all", "--json", "--workers", str(workers))
    return out


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(acceptance.RESULTS.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
