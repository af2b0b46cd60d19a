"""Bias-only network patching.

Every example in the keep and change sets gets its own copy of the encoded
network.  All copies share one set of bias-delta variables and the weights
stay fixed, so the whole problem remains linear.  A sat answer is a patch,
an unsat answer is a replayable proof that no patch within the bound exists.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .adversarial import Status as BisectStatus, bisect
from .encoder import (
    bias_delta_vars,
    encode_box_bound,
    encode_class_membership,
    encode_network_instance,
)
from .network import Affine, DimensionError, Network, classify, forward
from .solver import Sat, SolverConfig, SolverError, Unsat, check

DEFAULT_BIAS_BOUND = Fraction(1, 4)


class PatchStatus(str, enum.Enum):
    PATCHED = "Patched"
    INFEASIBLE = "Infeasible"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class LabeledExample:
    x: tuple
    class_index: int

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(Fraction(v) for v in self.x))


@dataclass(frozen=True)
class PatchProblem:
    network: Network
    keep: tuple = ()
    change: tuple = ()
    bias_bound: Fraction = DEFAULT_BIAS_BOUND
    patchable_layers: Optional[tuple] = None
    minimize: bool = False
    epsilon: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        object.__setattr__(self, "keep", tuple(self.keep))
        object.__setattr__(self, "change", tuple(self.change))
        object.__setattr__(self, "bias_bound", Fraction(self.bias_bound))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        if self.patchable_layers is not None:
            object.__setattr__(self, "patchable_layers", tuple(sorted(set(self.patchable_layers))))
        validate_problem(self)

    @property
    def examples(self) -> tuple:
        return self.keep + self.change


def validate_problem(problem: PatchProblem) -> None:
    net = problem.network
    if problem.bias_bound < 0:
        raise ValueError("bias_bound must be non-negative")
    if problem.minimize and problem.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    seen = {}
    for which, examples in (("keep", problem.keep), ("change", problem.change)):
        for i, ex in enumerate(examples):
            if len(ex.x) != net.input_dim:
                raise DimensionError(
                    f"{which}[{i}] has length {len(ex.x)}, network expects {net.input_dim}"
                )
            if not 0 <= ex.class_index < net.output_dim:
                raise ValueError(f"{which}[{i}] class {ex.class_index} out of range")
            if ex.x in seen:
                raise ValueError(
                    f"{which}[{i}] repeats the input of {seen[ex.x]}; "
                    "keep and change inputs must be pairwise distinct"
                )
            seen[ex.x] = f"{which}[{i}]"
    bias_delta_vars(net, problem.patchable_layers)


@dataclass
class PatchResult:
    status: PatchStatus
    delta_bias: dict = field(default_factory=dict)
    patched_network: Optional[Network] = None
    achieved_bound: Optional[Fraction] = None
    bound_lo: Optional[Fraction] = None
    bound_hi: Optional[Fraction] = None
    n_queries: int = 0
    # (bound, verdict name, artifact)
    queries: list = field(default_factory=list)
    report: Optional["VerificationReport"] = None

    @property
    def artifacts(self):
        return [q[2] for q in self.queries if q[2] is not None]


def build_patch_formula(problem: PatchProblem, bound):
    """Formulas, declared variables and the shared delta variables."""
    net = problem.network
    deltas = bias_delta_vars(net, problem.patchable_layers)
    formulas = []
    delta_vars = [v for k in sorted(deltas) for v in deltas[k]]
    declared = list(delta_vars)
    used = set()
    for which, examples in (("k", problem.keep), ("c", problem.change)):
        for i, ex in enumerate(examples):
            inst = encode_network_instance(
                net,
                f"{which}{i}",
                with_bias_delta=True,
                patchable_layers=problem.patchable_layers,
                used_tags=used,
            )
            formulas.append(inst.constraints)
            formulas.append(inst.pin_input(ex.x))
            formulas.append(encode_class_membership(inst.output_vars, ex.class_index))
            declared.extend(inst.variables)
    formulas.append(encode_box_bound(delta_vars, bound))
    return formulas, declared, deltas


def apply_patch(net: Network, delta_bias: Mapping[int, Sequence]) -> Network:
    """Add bias deltas to the affine layers named by index; weights untouched."""
    affine = set(net.affine_indices())
    for k, delta in delta_bias.items():
        if k not in affine:
            raise DimensionError(f"layer {k} is not an affine layer")
        if len(delta) != net.layers[k].out_dim:
            raise DimensionError(
                f"delta for layer {k} has length {len(delta)}, bias has {net.layers[k].out_dim}"
            )
    layers = []
    for k, layer in enumerate(net.layers):
        if isinstance(layer, Affine) and k in delta_bias:
            layer = Affine(
                layer.weights,
                [b + Fraction(d) for b, d in zip(layer.bias, delta_bias[k])],
            )
        layers.append(layer)
    return Network(net.name, layers, net.labels)


@dataclass
class VerificationReport:
    # (set name, index, expected class, predicted class, strict)
    rows: list

    @property
    def passed(self) -> bool:
        return all(r[3] == r[2] and r[4] for r in self.rows)

    @property
    def n_failed(self) -> int:
        return sum(not (r[3] == r[2] and r[4]) for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_examples": len(self.rows),
            "n_failed": self.n_failed,
            "examples": [
                {"set": s, "index": i, "expected": e, "predicted": p, "strict": st,
                 "ok": p == e and st}
                for s, i, e, p, st in self.rows
            ],
        }


def verify_patch(patched: Network, keep=(), change=()) -> VerificationReport:
    """Exact inference on every example.

    ``strict`` records whether the prescribed class is the unique maximum,
    which is what the solver constraints promise; a tie is a failure.
    """
    rows = []
    for which, examples in (("keep", keep), ("change", change)):
        for i, ex in enumerate(examples):
            y = forward(patched, ex.x)
            predicted = classify(y)
            strict = all(y[ex.class_index] > v for j, v in enumerate(y) if j != ex.class_index)
            rows.append((which, i, ex.class_index, predicted, strict))
    return VerificationReport(rows)


def _delta_from_model(model, deltas) -> dict:
    return {k: tuple(model[v] for v in vs) for k, vs in deltas.items()}


def find_patch(problem: PatchProblem, config: Optional[SolverConfig] = None) -> PatchResult:
    """Search for a bias patch, optionally minimizing its l-infinity norm."""
    config = config or SolverConfig()
    deltas = {}

    def query(bound):
        formulas, declared, dvars = build_patch_formula(problem, bound)
        deltas.clear()
        deltas.update(dvars)
        return check(config, formulas, declared)

    if problem.minimize and problem.bias_bound > 0:
        outcome = bisect(query, 0, problem.bias_bound, problem.epsilon)
        result = PatchResult(
            PatchStatus.UNKNOWN,
            bound_lo=outcome.alpha_lo,
            bound_hi=outcome.alpha_hi,
            n_queries=outcome.n_queries,
            queries=outcome.queries,
        )
        if outcome.status == BisectStatus.INFEASIBLE:
            result.status = PatchStatus.INFEASIBLE
            return result
        if outcome.status == BisectStatus.UNKNOWN:
            return result
        verdict = outcome.witness
    else:
        verdict, artifact = query(problem.bias_bound)
        result = PatchResult(
            PatchStatus.UNKNOWN,
            n_queries=1,
            queries=[(problem.bias_bound, verdict.name, artifact)],
        )
        if isinstance(verdict, Unsat):
            result.status = PatchStatus.INFEASIBLE
            result.bound_lo = problem.bias_bound
            return result
        if not isinstance(verdict, Sat):
            return result
        result.bound_hi = problem.bias_bound

    delta = _delta_from_model(verdict.model, deltas)
    patched = apply_patch(problem.network, delta)
    report = verify_patch(patched, problem.keep, problem.change)
    if not report.passed:
        raise SolverError("patched network fails exact re-verification")
    result.status = PatchStatus.PATCHED
    result.delta_bias = delta
    result.patched_network = patched
    result.achieved_bound = max(
        (abs(d) for vs in delta.values() for d in vs), default=Fraction(0)
    )
    result.report = report
    return result


def bias_table(original: Network, patched: Network):
    """Rows ``(layer, index, original, delta, patched)`` for every bias entry."""
    rows = []
    for k in original.affine_indices():
        for j, (b0, b1) in enumerate(zip(original.layers[k].bias, patched.layers[k].bias)):
            rows.append((k, j, b0, b1 - b0, b1))
    return rows
