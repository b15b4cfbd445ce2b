"""Litmus tests: file format, static checks, verdicts and the built-in corpus.

A test file is line oriented::

    test "sb"
    model tso
    shared p=false q=false
    regs r0 r1
    thread t0: { p := true; r0 := !q }
    thread t1: { q := true; r1 := !p }
    exists [tso, power] r0=false /\\ r1=false
    forbidden [sc] r0=false /\\ r1=false

Optional header lines ``grain own|all|none``, ``coherence on|off`` and
``precedence default|strict`` override the corresponding parameters of the
selected model.  An assertion with a bracketed model list is only checked
when the test runs under one of those models; without a list it is checked
under every model.  ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable

from .lang import (
    FALSE, TRUE, UNIT, Bool, Ref, SApp, SAssign, SDeref, SFence, SIf, SLam, SLet,
    SRef, SSeq, SVal, SVar, Surface, Unit, desugar,
)
from .models import MODEL_NAMES, MemoryModel, builtin_model, parse_grain
from .relaxed import RelaxedConfig
from .explorer import ExplorationResult, Outcome, Strategy, Witness, explore, find_witness

FENCE_KINDS = ("wr", "ww", "rr", "rw")
_KEYWORDS = {"let", "in", "if", "then", "else", "ref", "fence", "sync", "lwsync", "true", "false"}
_HEADER = {"test", "model", "grain", "coherence", "precedence", "shared", "regs", "thread", "exists", "forbidden"}


class LitmusError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


# ---------------------------------------------------------------------------
# Assertions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PEq:
    name: str
    value: str  # "true", "false" or "()"

    def __call__(self, outcome: Outcome) -> bool:
        return outcome.get(self.name) == self.value

    def names(self) -> set[str]:
        return {self.name}

    def format(self) -> str:
        return f"{self.name}={self.value}"


@dataclass(frozen=True)
class PAnd:
    items: tuple

    def __call__(self, outcome: Outcome) -> bool:
        return all(p(outcome) for p in self.items)

    def names(self) -> set[str]:
        return set().union(*(p.names() for p in self.items))

    def format(self) -> str:
        return " /\\ ".join(_paren(p, PAnd) for p in self.items)


@dataclass(frozen=True)
class POr:
    items: tuple

    def __call__(self, outcome: Outcome) -> bool:
        return any(p(outcome) for p in self.items)

    def names(self) -> set[str]:
        return set().union(*(p.names() for p in self.items))

    def format(self) -> str:
        return " \\/ ".join(_paren(p, POr) for p in self.items)


def _paren(p, parent) -> str:
    if isinstance(p, PEq) or (parent is POr and isinstance(p, PAnd)):
        return p.format()
    return f"({p.format()})"


Predicate = PEq | PAnd | POr


@dataclass(frozen=True)
class Assertion:
    mode: str  # "exists" | "forbidden"
    predicate: Predicate
    models: tuple = ()

    def applies_to(self, model_name: str) -> bool:
        return not self.models or model_name in self.models

    def format(self) -> str:
        scope = f" [{', '.join(self.models)}]" if self.models else ""
        return f"{self.mode}{scope} {self.predicate.format()}"


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LitmusTest:
    name: str
    model: str = "sc"
    shared: tuple = ()  # ((name, Value), ...)
    regs: tuple = ()
    threads: tuple = ()  # ((tid, Surface), ...)
    assertions: tuple = ()
    grain: str | None = None
    coherence: bool | None = None
    precedence: str | None = None

    def refs(self) -> dict[str, Ref]:
        out = {name: Ref(name) for name, _ in self.shared}
        out.update({name: Ref(name, is_register=True) for name in self.regs})
        return out

    def program(self) -> tuple:
        return tuple((tid, desugar(body)) for tid, body in self.threads)

    def initial_config(self) -> RelaxedConfig:
        refs = self.refs()
        store = [(refs[n], v) for n, v in self.shared] + [(refs[n], FALSE) for n in self.regs]
        return RelaxedConfig.initial(store, self.program())

    def initial_store(self) -> list:
        refs = self.refs()
        return [(refs[n], v) for n, v in self.shared] + [(refs[n], FALSE) for n in self.regs]

    def resolve_model(self, model: str | MemoryModel | None = None) -> MemoryModel:
        """The model named in the header (or ``model``), with header overrides."""
        if isinstance(model, MemoryModel):
            base = model
        else:
            base = builtin_model(model or self.model)
        changes = {}
        if self.grain is not None:
            changes["grain"] = parse_grain(self.grain)
        if self.coherence is not None:
            changes["coherence_rr"] = self.coherence
        if self.precedence is not None:
            changes["strict_wr_read_precedence"] = self.precedence == "strict"
        return replace(base, **changes) if changes else base

    def models_in_assertions(self) -> list[str]:
        named = {m for a in self.assertions for m in a.models}
        named.add(self.model)
        ordered = [m for m in MODEL_NAMES if m in named]
        return ordered + sorted(named - set(ordered))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>\#[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<sym>:=|->|/\\|\\/|\(\)|[\\(){};=!:,\[\]])
  | (?P<ident>[A-Za-z][A-Za-z0-9_']*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int


def tokenize(text: str) -> list[Tok]:
    toks, line, pos = [], 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise LitmusError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, m.group(), line))
        pos = m.end()
    toks.append(Tok("eof", "", line))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: list[Tok]) -> None:
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def advance(self) -> Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "string"

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            raise LitmusError(f"expected {text!r}, found {self.tok.text or 'end of file'!r}", self.tok.line)
        return self.advance()

    def name(self, what: str = "name") -> Tok:
        t = self.tok
        if t.kind != "ident" or t.text in _KEYWORDS:
            raise LitmusError(f"expected {what}, found {t.text or 'end of file'!r}", t.line)
        return self.advance()

    # -- expressions ------------------------------------------------------

    def seq(self, env) -> Surface:
        first = self.unit(env)
        if self.at(";"):
            self.advance()
            return SSeq(first, self.seq(env))
        return first

    def unit(self, env) -> Surface:
        if self.at("let"):
            self.advance()
            x = self.name("variable").text
            self.expect("=")
            bound = self.seq(env)
            self.expect("in")
            return SLet(x, bound, self.seq(env | {x}))
        if self.at("if"):
            self.advance()
            cond = self.seq(env)
            self.expect("then")
            then = self.seq(env)
            self.expect("else")
            return SIf(cond, then, self.seq(env))
        if self.at("\\"):
            self.advance()
            x = self.name("parameter").text
            self.expect("->")
            return SLam(x, self.seq(env | {x}))
        lhs = self.app(env)
        if self.at(":="):
            self.advance()
            return SAssign(lhs, self.app(env))
        return lhs

    def app(self, env) -> Surface:
        e = self.prefix(env)
        while self._starts_atom():
            e = SApp(e, self.prefix(env))
        return e

    def _starts_atom(self) -> bool:
        t = self.tok
        if t.kind == "ident":
            return t.text not in _KEYWORDS or t.text in ("true", "false", "ref", "fence", "sync", "lwsync")
        return t.text in ("(", "()", "!")

    def prefix(self, env) -> Surface:
        if self.at("!"):
            self.advance()
            return SDeref(self.prefix(env))
        if self.at("ref"):
            self.advance()
            return SRef(self.prefix(env))
        return self.atom(env)

    def atom(self, env) -> Surface:
        t = self.tok
        if t.text == "true":
            self.advance()
            return SVal(TRUE)
        if t.text == "false":
            self.advance()
            return SVal(FALSE)
        if t.text == "()":
            self.advance()
            return SVal(UNIT)
        if t.text in ("sync", "lwsync"):
            self.advance()
            return SFence(t.text)
        if t.text == "fence":
            self.advance()
            k = self.tok
            if k.text not in FENCE_KINDS:
                raise LitmusError(f"unknown fence kind {k.text!r}; expected one of {', '.join(FENCE_KINDS)}", k.line)
            self.advance()
            return SFence(k.text)
        if t.text == "(":
            self.advance()
            e = self.seq(env)
            self.expect(")")
            return e
        x = self.name("expression")
        if x.text in env:
            return SVar(x.text)
        if x.text in self.refs:
            return SVal(self.refs[x.text])
        raise LitmusError(f"undeclared name {x.text!r}", x.line)

    # -- predicates -------------------------------------------------------

    def pred(self) -> Predicate:
        items = [self.conj()]
        while self.at("\\/"):
            self.advance()
            items.append(self.conj())
        return items[0] if len(items) == 1 else POr(tuple(items))

    def conj(self) -> Predicate:
        items = [self.patom()]
        while self.at("/\\"):
            self.advance()
            items.append(self.patom())
        return items[0] if len(items) == 1 else PAnd(tuple(items))

    def patom(self) -> Predicate:
        if self.at("("):
            self.advance()
            p = self.pred()
            self.expect(")")
            return p
        n = self.name("name")
        self.expect("=")
        v = self.tok
        if v.text not in ("true", "false", "()"):
            raise LitmusError(f"expected true, false or (), found {v.text!r}", v.line)
        self.advance()
        return PEq(n.text, v.text)


def _literal(tok: Tok) -> object:
    match tok.text:
        case "true":
            return TRUE
        case "false":
            return FALSE
        case "()":
            return UNIT
    raise LitmusError(f"expected an initial value (true, false or ()), found {tok.text!r}", tok.line)


def parse_test(text: str, allow_shared_registers: bool = False) -> LitmusTest:
    """Parse and statically check a litmus test."""
    p = _Parser(tokenize(text))
    fields: dict = {}
    shared: list = []
    regs: list = []
    threads: list = []  # (tid, line, token index of body)
    assertions: list = []
    seen_heads: set = set()

    def same_line(line: int) -> bool:
        return p.tok.kind != "eof" and p.tok.line == line

    while p.tok.kind != "eof":
        head = p.tok
        if head.kind != "ident" or head.text not in _HEADER:
            raise LitmusError(f"unexpected {head.text!r} at top level", head.line)
        p.advance()
        kw = head.text
        if kw in ("test", "model", "grain", "coherence", "precedence"):
            if kw in seen_heads:
                raise LitmusError(f"duplicate {kw!r} line", head.line)
            seen_heads.add(kw)
        match kw:
            case "test":
                if p.tok.kind != "string":
                    raise LitmusError("expected a quoted test name", head.line)
                fields["name"] = p.advance().text[1:-1]
            case "model":
                fields["model"] = p.name("model name").text
            case "grain":
                g = p.name("grain").text
                if g not in ("own", "all", "none"):
                    raise LitmusError(f"unknown grain {g!r}", head.line)
                fields["grain"] = g
            case "coherence":
                v = p.name("on/off").text
                if v not in ("on", "off"):
                    raise LitmusError(f"expected on or off, found {v!r}", head.line)
                fields["coherence"] = v == "on"
            case "precedence":
                v = p.name("default/strict").text
                if v not in ("default", "strict"):
                    raise LitmusError(f"expected default or strict, found {v!r}", head.line)
                fields["precedence"] = v
            case "shared":
                while same_line(head.line):
                    n = p.name("reference name")
                    p.expect("=")
                    shared.append((n, _literal(p.advance())))
            case "regs":
                while same_line(head.line):
                    regs.append(p.name("register name"))
            case "thread":
                tid = p.name("thread id")
                p.expect(":")
                p.expect("{")
                start = p.i
                depth = 1
                while depth:
                    t = p.advance()
                    if t.kind == "eof":
                        raise LitmusError(f"unterminated body of thread {tid.text!r}", tid.line)
                    depth += {"{": 1, "}": -1}.get(t.text, 0)
                threads.append((tid, start))
            case "exists" | "forbidden":
                models: list = []
                if p.at("["):
                    p.advance()
                    models.append(p.name("model name").text)
                    while p.at(","):
                        p.advance()
                        models.append(p.name("model name").text)
                    p.expect("]")
                assertions.append((head, Assertion(kw, p.pred(), tuple(models))))

    if "name" not in fields:
        raise LitmusError("missing 'test \"<name>\"' line")
    if not threads:
        raise LitmusError("a test needs at least one thread")

    names: dict[str, Tok] = {}
    for tok in [n for n, _ in shared] + regs:
        if tok.text in names:
            raise LitmusError(f"{tok.text!r} declared twice", tok.line)
        if tok.text in _KEYWORDS:
            raise LitmusError(f"{tok.text!r} is a keyword", tok.line)
        names[tok.text] = tok
    test = LitmusTest(
        name=fields["name"],
        model=fields.get("model", "sc"),
        shared=tuple((n.text, v) for n, v in shared),
        regs=tuple(r.text for r in regs),
        grain=fields.get("grain"),
        coherence=fields.get("coherence"),
        precedence=fields.get("precedence"),
    )
    p.refs = test.refs()

    bodies = []
    seen_tids: set = set()
    for tid, start in threads:
        if tid.text in seen_tids:
            raise LitmusError(f"duplicate thread id {tid.text!r}", tid.line)
        seen_tids.add(tid.text)
        p.i = start
        body = p.seq(frozenset())
        p.expect("}")
        bodies.append((tid.text, body))

    for head, a in assertions:
        unknown = a.predicate.names() - set(names)
        if unknown:
            raise LitmusError(f"assertion mentions undeclared {sorted(unknown)}", head.line)
    test = replace(test, threads=tuple(bodies), assertions=tuple(a for _, a in assertions))
    check_registers(test, allow_shared_registers)
    return test


def parse_predicate(text: str, test: LitmusTest | None = None) -> Predicate:
    """Parse an outcome predicate such as ``r0=true /\\ r1=false``; with a
    ``test``, names must be declared in it."""
    p = _Parser(tokenize(text))
    pred = p.pred()
    if p.tok.kind != "eof":
        raise LitmusError(f"trailing input in predicate: {p.tok.text!r}")
    if test is not None:
        unknown = pred.names() - {n for n, _ in test.shared} - set(test.regs)
        if unknown:
            raise LitmusError(f"predicate mentions undeclared {sorted(unknown)}")
    return pred


def _assigned_refs(s: Surface) -> set[str]:
    match s:
        case SAssign(SVal(Ref(name)), v):
            return {name} | _assigned_refs(v)
        case SAssign(t, v):
            return _assigned_refs(t) | _assigned_refs(v)
        case SLam(_, b) | SRef(b) | SDeref(b):
            return _assigned_refs(b)
        case SLet(_, a, b) | SSeq(a, b) | SApp(a, b):
            return _assigned_refs(a) | _assigned_refs(b)
        case SIf(c, a, b):
            return _assigned_refs(c) | _assigned_refs(a) | _assigned_refs(b)
    return set()


def check_registers(test: LitmusTest, allow_shared_registers: bool = False) -> list[str]:
    """Each register may be assigned by one thread only; the visibility
    restriction on register writes is unsound otherwise.  Returns the
    violations when they are allowed, raises otherwise."""
    writers: dict[str, list[str]] = {}
    for tid, body in test.threads:
        for name in _assigned_refs(body):
            if name in test.regs:
                writers.setdefault(name, []).append(tid)
    problems = [f"register {r!r} written by threads {', '.join(ts)}" for r, ts in writers.items() if len(ts) > 1]
    if problems and not allow_shared_registers:
        raise LitmusError("; ".join(problems))
    return problems


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _fmt(s: Surface) -> str:
    match s:
        case SVal(Bool(b)):
            return "true" if b else "false"
        case SVal(Unit()):
            return "()"
        case SVal(Ref(name)):
            return name
        case SVar(x):
            return x
        case SFence(k):
            return k if k in ("sync", "lwsync") else f"fence {k}"
        case SLam(x, b):
            return f"(\\{x} -> {_fmt(b)})"
        case SLet(x, a, b):
            return f"(let {x} = {_fmt(a)} in {_fmt(b)})"
        case SSeq(a, b):
            return f"({_fmt(a)}; {_fmt(b)})"
        case SApp(f, a):
            return f"({_fmt(f)} {_fmt(a)})"
        case SIf(c, a, b):
            return f"(if {_fmt(c)} then {_fmt(a)} else {_fmt(b)})"
        case SRef(v):
            return f"(ref {_fmt(v)})"
        case SDeref(t):
            return f"(!{_fmt(t)})"
        case SAssign(t, v):
            return f"({_fmt(t)} := {_fmt(v)})"
    raise TypeError(s)


def _value_text(v) -> str:
    match v:
        case Bool(b):
            return "true" if b else "false"
        case Unit():
            return "()"
    raise TypeError(v)


def format_test(test: LitmusTest) -> str:
    lines = [f'test "{test.name}"', f"model {test.model}"]
    if test.grain is not None:
        lines.append(f"grain {test.grain}")
    if test.coherence is not None:
        lines.append(f"coherence {'on' if test.coherence else 'off'}")
    if test.precedence is not None:
        lines.append(f"precedence {test.precedence}")
    if test.shared:
        lines.append("shared " + " ".join(f"{n}={_value_text(v)}" for n, v in test.shared))
    if test.regs:
        lines.append("regs " + " ".join(test.regs))
    for tid, body in test.threads:
        lines.append(f"thread {tid}: {{ {_fmt(body)} }}")
    lines.extend(a.format() for a in test.assertions)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Running tests
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    assertion: Assertion
    status: str  # "holds" | "fails" | "unknown"
    reachable: bool | None
    witness: Witness | None = None

    @property
    def sat(self) -> str:
        return {True: "SAT", False: "UNSAT", None: "UNKNOWN"}[self.reachable]


@dataclass
class TestRun:
    test: LitmusTest
    model: MemoryModel
    result: ExplorationResult
    verdicts: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(v.status == "holds" for v in self.verdicts)

    @property
    def inconclusive(self) -> bool:
        return any(v.status == "unknown" for v in self.verdicts)


def _verdict(a: Assertion, result: ExplorationResult) -> Verdict:
    hit = any(a.predicate(o) for o in result.outcomes)
    reachable = True if hit else (False if result.exhaustive else None)
    if reachable is None:
        status = "unknown"
    elif a.mode == "exists":
        status = "holds" if reachable else "fails"
    else:
        status = "fails" if reachable else "holds"
    return Verdict(a, status, reachable)


def run_test(test: LitmusTest, model: str | MemoryModel | None = None, strategy: Strategy = Strategy(),
             witnesses: bool = False) -> TestRun:
    """Explore ``test`` under ``model`` and judge the assertions scoped to it.

    With ``witnesses`` set, a trace is attached to every reachable assertion
    predicate: the satisfying run of an ``exists``, the counterexample of a
    ``forbidden``.
    """
    mm = test.resolve_model(model)
    init = test.initial_config()
    result = explore(init, mm, strategy)
    run = TestRun(test, mm, result)
    for a in test.assertions:
        if not a.applies_to(mm.name):
            continue
        v = _verdict(a, result)
        if witnesses and v.reachable:
            v.witness, _ = find_witness(init, mm, a.predicate, strategy)
        run.verdicts.append(v)
    return run


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

CORPUS = (
    "sb", "sb_wr", "seq_ww", "corr", "corr_strict", "own_early",
    "iriw", "iriw_lwsync_sync", "iriw_sync_sync", "wrc", "wrc_lwsync",
)


def corpus_text(name: str) -> str:
    return resources.files("rmm").joinpath("corpus", f"{name}.lit").read_text(encoding="utf-8")


def builtin_corpus() -> list[LitmusTest]:
    return [parse_test(corpus_text(n)) for n in CORPUS]


def load_test(path: str, allow_shared_registers: bool = False) -> LitmusTest:
    with open(path, encoding="utf-8") as fh:
        return parse_test(fh.read(), allow_shared_registers)


def load_tests(paths: Iterable[str]) -> list[LitmusTest]:
    return [load_test(p) for p in paths]
