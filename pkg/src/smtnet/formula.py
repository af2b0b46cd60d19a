"""Quantifier-free linear real arithmetic formulas.

Atoms compare an affine expression against zero.  Formulas are plain
trees of ``And``/``Or``/``Not``/``Implies`` over atoms and can be
evaluated exactly under a rational assignment, which is how solver
models are checked back.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union

INPUT = "x"
AFFINE_OUT = "y"
INPUT_DELTA = "dx"
BIAS_DELTA = "db"
KINDS = (INPUT, AFFINE_OUT, INPUT_DELTA, BIAS_DELTA)


@dataclass(frozen=True, order=True)
class VarId:
    """A real variable.  ``layer`` is None for input deltas."""

    instance: str
    kind: str
    layer: Optional[int]
    index: int

    @property
    def name(self) -> str:
        if self.kind == BIAS_DELTA:
            return f"db{self.layer}_{self.index}"
        if self.kind == INPUT_DELTA:
            return f"{self.instance}_dx_{self.index}"
        return f"{self.instance}_{self.kind}{self.layer}_{self.index}"

    def __str__(self):
        return self.name


class LinExpr:
    """Affine combination ``sum(c_i * v_i) + const`` with Fraction coefficients."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0):
        self.coeffs: dict[VarId, Fraction] = {}
        for var, c in (coeffs or {}).items():
            c = Fraction(c)
            if c:
                self.coeffs[var] = self.coeffs.get(var, Fraction(0)) + c
        self.const = Fraction(const)

    @classmethod
    def lift(cls, value) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, VarId):
            return cls({value: 1})
        return cls(const=value)

    def __add__(self, other):
        other = LinExpr.lift(other)
        coeffs = dict(self.coeffs)
        for var, c in other.coeffs.items():
            coeffs[var] = coeffs.get(var, Fraction(0)) + c
        return LinExpr(coeffs, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({v: -c for v, c in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-LinExpr.lift(other))

    def __rsub__(self, other):
        return LinExpr.lift(other) - self

    def scale(self, k) -> "LinExpr":
        k = Fraction(k)
        return LinExpr({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    def variables(self):
        return self.coeffs.keys()

    def value(self, model: Mapping[VarId, Fraction]) -> Fraction:
        return sum((c * model[v] for v, c in self.coeffs.items()), Fraction(0)) + self.const

    def __eq__(self, other):
        return (
            isinstance(other, LinExpr)
            and {v: c for v, c in self.coeffs.items() if c} == {v: c for v, c in other.coeffs.items() if c}
            and self.const == other.const
        )

    def __hash__(self):
        return hash((frozenset((v, c) for v, c in self.coeffs.items() if c), self.const))

    def __repr__(self):
        terms = " + ".join(f"{c}*{v.name}" for v, c in self.coeffs.items() if c)
        return f"LinExpr({terms or '0'} + {self.const})"


RELATIONS = ("=", "<=", "<", ">=", ">")


@dataclass(frozen=True)
class Atom:
    """``lhs rel rhs``, kept as written so rendered scripts stay readable."""

    lhs: LinExpr
    rel: str
    rhs: LinExpr

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(f"unknown relation {self.rel!r}")


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class Implies:
    antecedent: object
    consequent: object


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)

Formula = Union[Atom, And, Or, Not, Implies, Const]


def _atom(lhs, rel, rhs):
    return Atom(LinExpr.lift(lhs), rel, LinExpr.lift(rhs))


def eq(lhs, rhs):
    return _atom(lhs, "=", rhs)


def le(lhs, rhs):
    return _atom(lhs, "<=", rhs)


def lt(lhs, rhs):
    return _atom(lhs, "<", rhs)


def ge(lhs, rhs):
    return _atom(lhs, ">=", rhs)


def gt(lhs, rhs):
    return _atom(lhs, ">", rhs)


def conj(*parts) -> Formula:
    flat = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.args)
        elif p == TRUE:
            continue
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*parts) -> Formula:
    flat = [p for p in parts if p != FALSE]
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def implies(a, b) -> Formula:
    return Implies(a, b)


def _compare(a: Fraction, rel: str, b: Fraction) -> bool:
    if rel == "=":
        return a == b
    if rel == "<=":
        return a <= b
    if rel == "<":
        return a < b
    if rel == ">=":
        return a >= b
    return a > b


def evaluate(formula: Formula, model: Mapping[VarId, Fraction]) -> bool:
    """Exact truth value of ``formula``; missing variables raise KeyError."""
    if isinstance(formula, Atom):
        return _compare(formula.lhs.value(model), formula.rel, formula.rhs.value(model))
    if isinstance(formula, And):
        return all(evaluate(f, model) for f in formula.args)
    if isinstance(formula, Or):
        return any(evaluate(f, model) for f in formula.args)
    if isinstance(formula, Not):
        return not evaluate(formula.arg, model)
    if isinstance(formula, Implies):
        return (not evaluate(formula.antecedent, model)) or evaluate(formula.consequent, model)
    if isinstance(formula, Const):
        return formula.value
    raise TypeError(f"not a formula: {formula!r}")


def iter_variables(formula: Formula) -> Iterator[VarId]:
    """Variables in first-use order (left to right, depth first); may repeat."""
    stack = [formula]
    while stack:
        f = stack.pop()
        if isinstance(f, Atom):
            yield from f.lhs.variables()
            yield from f.rhs.variables()
        elif isinstance(f, (And, Or)):
            stack.extend(reversed(f.args))
        elif isinstance(f, Not):
            stack.append(f.arg)
        elif isinstance(f, Implies):
            stack.append(f.consequent)
            stack.append(f.antecedent)


def count_atoms(formula: Formula) -> int:
    if isinstance(formula, Atom):
        return 1
    if isinstance(formula, (And, Or)):
        return sum(count_atoms(f) for f in formula.args)
    if isinstance(formula, Not):
        return count_atoms(formula.arg)
    if isinstance(formula, Implies):
        return count_atoms(formula.antecedent) + count_atoms(formula.consequent)
    return 0
