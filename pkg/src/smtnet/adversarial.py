"""Minimal l-infinity input perturbations by bisection over SMT queries.

``F(alpha)`` asks for a perturbation ``dx`` with ``|dx|_inf <= alpha`` that
puts ``x0 + dx`` strictly in the target class.  Satisfiability is monotone
in ``alpha``, so bisection on the radius brackets the smallest one.  Since
class membership uses strict inequalities the infimum may not be attained;
the result is always a certified bracket plus a witness at its upper end.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .encoder import encode_box_bound, encode_class_membership, encode_network_instance
from .network import DimensionError, Network, forward
from .solver import ProofArtifact, Sat, SolverConfig, SolverError, Unknown, Unsat, check


class Status(str, enum.Enum):
    FOUND = "Found"
    INFEASIBLE = "Infeasible"
    ALREADY_SATISFIED = "AlreadySatisfiedAtLo"
    UNKNOWN = "Unknown"


@dataclass
class BisectionResult:
    status: Status
    alpha_lo: Fraction
    alpha_hi: Fraction
    witness: object = None
    n_queries: int = 0
    # (alpha, verdict name, artifact) for every query, in order
    queries: list = field(default_factory=list)

    def artifact_at(self, alpha, verdict: str) -> Optional[ProofArtifact]:
        for a, name, art in reversed(self.queries):
            if a == alpha and name == verdict:
                return art
        return None


def query_budget(lo, hi, epsilon) -> int:
    """Upper bound on predicate calls made by :func:`bisect`."""
    ratio = Fraction(hi - lo) / Fraction(epsilon)
    return 2 + max(0, math.ceil(math.log2(ratio))) if ratio > 1 else 2


def bisect(predicate: Callable, lo, hi, epsilon) -> BisectionResult:
    """Bracket the sat threshold of a monotone predicate on ``[lo, hi]``.

    ``predicate(alpha)`` returns a verdict, or a ``(verdict, artifact)``
    pair whose artifact is kept in ``queries``.  Midpoints are exact.
    """
    lo, hi, epsilon = Fraction(lo), Fraction(hi), Fraction(epsilon)
    if lo >= hi:
        raise ValueError("bisection needs lo < hi")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    result = BisectionResult(Status.UNKNOWN, lo, hi)

    def ask(alpha):
        out = predicate(alpha)
        verdict, artifact = out if isinstance(out, tuple) else (out, None)
        result.n_queries += 1
        result.queries.append((alpha, verdict.name, artifact))
        return verdict

    verdict = ask(lo)
    if isinstance(verdict, Sat):
        result.status = Status.ALREADY_SATISFIED
        result.alpha_hi = lo
        result.witness = verdict
        return result
    if isinstance(verdict, Unknown):
        return result
    verdict = ask(hi)
    if isinstance(verdict, Unsat):
        result.status = Status.INFEASIBLE
        return result
    if isinstance(verdict, Unknown):
        return result
    result.witness = verdict
    while result.alpha_hi - result.alpha_lo > epsilon:
        mid = (result.alpha_lo + result.alpha_hi) / 2
        verdict = ask(mid)
        if isinstance(verdict, Sat):
            result.alpha_hi = mid
            result.witness = verdict
        elif isinstance(verdict, Unsat):
            result.alpha_lo = mid
        else:
            return result
    result.status = Status.FOUND
    return result


@dataclass(frozen=True)
class AttackProblem:
    network: Network
    x0: tuple
    target_class: int
    alpha_lo: Fraction = Fraction(0)
    alpha_hi: Fraction = Fraction(1)
    epsilon: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(Fraction(v) for v in self.x0))
        for name in ("alpha_lo", "alpha_hi", "epsilon"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if len(self.x0) != self.network.input_dim:
            raise DimensionError(
                f"x0 has length {len(self.x0)}, network expects {self.network.input_dim}"
            )
        if not 0 <= self.alpha_lo < self.alpha_hi:
            raise ValueError("need 0 <= alpha_lo < alpha_hi")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.target_class < self.network.output_dim:
            raise ValueError(f"target class {self.target_class} out of range")


def default_upper_bound(x0: Sequence) -> Fraction:
    """Twice the l-infinity norm of ``x0``, at least 1."""
    return max(Fraction(1), 2 * max((abs(Fraction(v)) for v in x0), default=Fraction(0)))


def build_F_alpha(problem: AttackProblem, alpha):
    """Formulas and declared variables for the query ``F(alpha)``."""
    inst = encode_network_instance(problem.network, "adv", with_input_delta=True)
    formulas = [
        inst.constraints,
        inst.pin_input(problem.x0),
        encode_class_membership(inst.output_vars, problem.target_class),
        encode_box_bound(inst.delta_input_vars, alpha),
    ]
    return formulas, list(inst.variables), inst


def min_adversarial_input(problem: AttackProblem, config: Optional[SolverConfig] = None):
    """Bisect ``F(alpha)``; the witness is the perturbation vector ``dx``.

    The witness is re-checked with exact inference before it is returned.
    """
    config = config or SolverConfig()
    dx_vars = []

    def predicate(alpha):
        formulas, declared, inst = build_F_alpha(problem, alpha)
        dx_vars[:] = inst.delta_input_vars
        return check(config, formulas, declared)

    result = bisect(predicate, problem.alpha_lo, problem.alpha_hi, problem.epsilon)
    if isinstance(result.witness, Sat):
        dx = tuple(result.witness.model[v] for v in dx_vars)
        if not witness_holds(problem.network, problem.x0, dx, problem.target_class, result.alpha_hi):
            raise SolverError("solver witness fails exact re-verification")
        result.witness = dx
    return result


def witness_holds(net: Network, x0, dx, target_class: int, alpha=None) -> bool:
    """Exact check that ``x0 + dx`` lands strictly in ``target_class``."""
    if alpha is not None and max((abs(Fraction(d)) for d in dx), default=0) > Fraction(alpha):
        return False
    y = forward(net, [Fraction(a) + Fraction(d) for a, d in zip(x0, dx)])
    return all(y[target_class] > v for j, v in enumerate(y) if j != target_class)
