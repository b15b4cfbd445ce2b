"""Core language in administrative normal form.

Values are immutable dataclasses.  Expressions only sequence computation
through application, so the evaluation order of a thread (its program order)
is fixed by :func:`decompose`.

Run-time names come in three disjoint families: variables (plain strings
inside :class:`Var` / :class:`Lam`), references (:class:`Ref`) and read
identifiers (:class:`Ident`).  References and identifiers created at run time
carry an origin tag ``(thread, counter)`` so that two independent runs of the
same program choose exactly the same names.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Union

__all__ = [
    "Var", "Lam", "Bool", "Unit", "Ref", "Ident", "TRUE", "FALSE", "UNIT",
    "App", "If", "RefNew", "Deref", "Assign", "Fence",
    "Value", "Expr", "Redex", "IsValue", "Blocked",
    "is_value", "is_pure", "idents_in", "free_vars", "subst_var", "subst_ident",
    "decompose", "plug", "show",
    "SVal", "SVar", "SLam", "SLet", "SSeq", "SApp", "SIf", "SRef", "SDeref",
    "SAssign", "SFence", "desugar",
]


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Lam:
    param: str
    body: "Expr"


@dataclass(frozen=True, slots=True)
class Bool:
    value: bool


@dataclass(frozen=True, slots=True)
class Unit:
    pass


@dataclass(frozen=True, slots=True)
class Ref:
    """A reference.  Declared references have ``origin=None``; allocated ones
    are tagged with the allocating thread and its allocation counter."""

    name: str
    is_register: bool = False
    origin: tuple[str, int] | None = None

    @classmethod
    def fresh(cls, thread: str, counter: int) -> "Ref":
        return cls(f"{thread}.ref{counter}", False, (thread, counter))


@dataclass(frozen=True, slots=True)
class Ident:
    """Placeholder for the value of a read that has not been performed yet."""

    thread: str
    counter: int

    @property
    def origin(self) -> tuple[str, int]:
        return (self.thread, self.counter)

    def __str__(self) -> str:
        return f"i.{self.thread}.{self.counter}"


TRUE = Bool(True)
FALSE = Bool(False)
UNIT = Unit()


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class App:
    fun: "Value"
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class If:
    cond: "Value"
    then: "Expr"
    else_: "Expr"


@dataclass(frozen=True, slots=True)
class RefNew:
    value: "Value"


@dataclass(frozen=True, slots=True)
class Deref:
    target: "Value"


@dataclass(frozen=True, slots=True)
class Assign:
    target: "Value"
    value: "Value"


@dataclass(frozen=True, slots=True)
class Fence:
    kind: str


Value = Union[Var, Lam, Bool, Unit, Ref, Ident]
Expr = Union[Value, App, If, RefNew, Deref, Assign, Fence]

_VALUE_TYPES = (Var, Lam, Bool, Unit, Ref, Ident)


def is_value(e: Expr) -> bool:
    return isinstance(e, _VALUE_TYPES)


def _children(e: Expr) -> Iterator[Expr]:
    match e:
        case Lam(_, body):
            yield body
        case App(f, a):
            yield f
            yield a
        case If(c, a, b):
            yield c
            yield a
            yield b
        case RefNew(v) | Deref(v):
            yield v
        case Assign(t, v):
            yield t
            yield v


def idents_in(e: Expr) -> set[Ident]:
    found: set[Ident] = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Ident):
            found.add(x)
        else:
            stack.extend(_children(x))
    return found


def is_pure(e: Expr) -> bool:
    """True when no read identifier occurs anywhere in ``e``."""
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Ident):
            return False
        stack.extend(_children(x))
    return True


def free_vars(e: Expr) -> set[str]:
    match e:
        case Var(x):
            return {x}
        case Lam(x, body):
            return free_vars(body) - {x}
        case _:
            out: set[str] = set()
            for c in _children(e):
                out |= free_vars(c)
            return out


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def _fresh_var(base: str, avoid: set[str]) -> str:
    name = base
    while name in avoid:
        name += "'"
    return name


def subst_var(e: Expr, x: str, v: Value) -> Expr:
    """Capture-avoiding substitution of ``v`` for the free occurrences of ``x``."""
    fv = free_vars(v)
    return _subst_var(e, x, v, fv)


def _subst_var(e: Expr, x: str, v: Value, fv: set[str]) -> Expr:
    match e:
        case Var(y):
            return v if y == x else e
        case Lam(y, body):
            if y == x:
                return e
            if y in fv:
                z = _fresh_var(y, fv | free_vars(body) | {x})
                body = _subst_var(body, y, Var(z), {z})
                y = z
            return Lam(y, _subst_var(body, x, v, fv))
        case Bool() | Unit() | Ref() | Ident() | Fence():
            return e
        case App(f, a):
            return App(_subst_var(f, x, v, fv), _subst_var(a, x, v, fv))
        case If(c, a, b):
            return If(_subst_var(c, x, v, fv), _subst_var(a, x, v, fv), _subst_var(b, x, v, fv))
        case RefNew(w):
            return RefNew(_subst_var(w, x, v, fv))
        case Deref(t):
            return Deref(_subst_var(t, x, v, fv))
        case Assign(t, w):
            return Assign(_subst_var(t, x, v, fv), _subst_var(w, x, v, fv))
    raise TypeError(f"not an expression: {e!r}")


def subst_ident(e: Expr, ident: Ident, v: Value) -> Expr:
    """Replace every occurrence of ``ident`` in ``e`` by ``v``.

    Identifiers are not variables, so no binder can capture them and the
    substitution descends into lambda bodies unconditionally.  Subterms that
    do not mention ``ident`` are returned unchanged (shared, not copied).
    """
    match e:
        case Ident():
            return v if e == ident else e
        case Var() | Bool() | Unit() | Ref() | Fence():
            return e
        case Lam(y, body):
            nb = subst_ident(body, ident, v)
            return e if nb is body else Lam(y, nb)
        case App(f, a):
            nf, na = subst_ident(f, ident, v), subst_ident(a, ident, v)
            return e if (nf is f and na is a) else App(nf, na)
        case If(c, a, b):
            nc, na, nb = subst_ident(c, ident, v), subst_ident(a, ident, v), subst_ident(b, ident, v)
            return e if (nc is c and na is a and nb is b) else If(nc, na, nb)
        case RefNew(w):
            nw = subst_ident(w, ident, v)
            return e if nw is w else RefNew(nw)
        case Deref(t):
            nt = subst_ident(t, ident, v)
            return e if nt is t else Deref(nt)
        case Assign(t, w):
            nt, nw = subst_ident(t, ident, v), subst_ident(w, ident, v)
            return e if (nt is t and nw is w) else Assign(nt, nw)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation contexts
# ---------------------------------------------------------------------------

# A context is a tuple of function values, outermost first:
#   (f0, f1) stands for (f0 (f1 [])).
Context = tuple


@dataclass(frozen=True, slots=True)
class IsValue:
    value: Value


@dataclass(frozen=True, slots=True)
class Redex:
    context: Context
    redex: Expr


@dataclass(frozen=True, slots=True)
class Blocked:
    """The next step of the thread cannot be taken.

    ``reason`` is ``"unresolved"`` when the thread waits for a read
    identifier to be resolved, ``"stuck"`` for a genuine run-time type error
    (which no later step can repair).
    """

    context: Context
    expr: Expr
    reason: str


def plug(ctx: Context, e: Expr) -> Expr:
    for f in reversed(ctx):
        e = App(f, e)
    return e


def _blocked_on(frames: list, e: Expr, v: Value) -> Blocked:
    reason = "unresolved" if isinstance(v, Ident) else "stuck"
    return Blocked(tuple(frames), e, reason)


def decompose(e: Expr) -> IsValue | Redex | Blocked:
    frames: list[Value] = []
    while True:
        match e:
            case App(f, a):
                if not is_value(a):
                    frames.append(f)
                    e = a
                    continue
                if isinstance(f, Lam):
                    return Redex(tuple(frames), e)
                return _blocked_on(frames, e, f)
            case If(c, _, _):
                if isinstance(c, Bool):
                    return Redex(tuple(frames), e)
                return _blocked_on(frames, e, c)
            case Deref(t) | Assign(t, _):
                if isinstance(t, (Ref, Ident)):
                    return Redex(tuple(frames), e)
                return _blocked_on(frames, e, t)
            case RefNew() | Fence():
                return Redex(tuple(frames), e)
            case _:
                # a value in the hole of a non-empty context is an App redex,
                # handled above
                assert not frames
                return IsValue(e)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def show(e: Expr) -> str:
    match e:
        case Var(x):
            return x
        case Lam(x, body):
            return f"(\\{x} -> {show(body)})"
        case Bool(b):
            return "true" if b else "false"
        case Unit():
            return "()"
        case Ref(name):
            return name
        case Ident():
            return str(e)
        case App(f, a):
            return f"({show(f)} {show(a)})"
        case If(c, a, b):
            return f"(if {show(c)} then {show(a)} else {show(b)})"
        case RefNew(v):
            return f"(ref {show(v)})"
        case Deref(t):
            return f"!{show(t)}"
        case Assign(t, v):
            return f"({show(t)} := {show(v)})"
        case Fence(k):
            return k if k in ("sync", "lwsync") else f"fence {k}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Surface syntax and desugaring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SVal:
    """A literal value: ``true``, ``false``, ``()`` or a reference."""

    value: Value


@dataclass(frozen=True)
class SVar:
    name: str


@dataclass(frozen=True)
class SLam:
    param: str
    body: "Surface"


@dataclass(frozen=True)
class SLet:
    name: str
    bound: "Surface"
    body: "Surface"


@dataclass(frozen=True)
class SSeq:
    first: "Surface"
    second: "Surface"


@dataclass(frozen=True)
class SApp:
    fun: "Surface"
    arg: "Surface"


@dataclass(frozen=True)
class SIf:
    cond: "Surface"
    then: "Surface"
    else_: "Surface"


@dataclass(frozen=True)
class SRef:
    init: "Surface"


@dataclass(frozen=True)
class SDeref:
    target: "Surface"


@dataclass(frozen=True)
class SAssign:
    target: "Surface"
    value: "Surface"


@dataclass(frozen=True)
class SFence:
    kind: str


Surface = Union[SVal, SVar, SLam, SLet, SSeq, SApp, SIf, SRef, SDeref, SAssign, SFence]


class _Desugarer:
    # surface identifiers cannot start with "_", so these never clash
    def __init__(self) -> None:
        self._ids = itertools.count()

    def fresh(self) -> str:
        return f"_x{next(self._ids)}"

    def atom(self, s: Surface, k) -> Expr:
        """Desugar ``s`` and hand a value for it to ``k``, let-binding when needed."""
        e = self.expr(s)
        if is_value(e):
            return k(e)
        x = self.fresh()
        return App(Lam(x, k(Var(x))), e)

    def expr(self, s: Surface) -> Expr:
        match s:
            case SVal(v):
                return v
            case SVar(x):
                return Var(x)
            case SLam(x, body):
                return Lam(x, self.expr(body))
            case SLet(x, bound, body):
                return App(Lam(x, self.expr(body)), self.expr(bound))
            case SSeq(a, b):
                return App(Lam("_", self.expr(b)), self.expr(a))
            case SApp(f, a):
                return self.atom(f, lambda fv: self.atom(a, lambda av: App(fv, av)))
            case SIf(c, a, b):
                return self.atom(c, lambda cv: If(cv, self.expr(a), self.expr(b)))
            case SRef(init):
                return self.atom(init, RefNew)
            case SDeref(t):
                return self.atom(t, Deref)
            case SAssign(t, v):
                return self.atom(t, lambda tv: self.atom(v, lambda vv: Assign(tv, vv)))
            case SFence(kind):
                return Fence(kind)
        raise TypeError(f"not a surface term: {s!r}")


def desugar(s: Surface) -> Expr:
    """Convert surface syntax to administrative normal form.

    ``let x = e0 in e1`` becomes ``((\\x -> e1) e0)`` and ``e0; e1`` is a let
    whose variable is never used.  Every other construct that expects a value
    in some position gets a fresh let-binding for a non-value argument, e.g.
    ``(v := e)`` becomes ``let x = e in (v := x)``.
    """
    return _Desugarer().expr(s)
