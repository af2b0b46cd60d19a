"""Compile networks into linear real arithmetic constraints.

Variables follow the layer list.  ``x{k}`` holds the value entering layer
``k`` (and ``x{L}`` the network output), ``y{k}`` the output of affine
layer ``k``.  The first activation after an affine layer reads ``y{k}``
directly, so a block ``affine; relu`` owns ``x{k}``, ``y{k}`` and
``x{k+2}``.  Bias deltas ``db{k}_{j}`` carry no instance prefix and are
shared by every instance in one query.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from . import formula as fm
from .formula import AFFINE_OUT, BIAS_DELTA, INPUT, INPUT_DELTA, LinExpr, VarId
from .network import Affine, Network, ReLU, check_network


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkInstance:
    tag: str
    input_vars: tuple[VarId, ...]
    output_vars: tuple[VarId, ...]
    delta_input_vars: Optional[tuple[VarId, ...]]
    delta_bias_vars: Optional[dict]
    constraints: fm.Formula
    variables: tuple[VarId, ...]

    def pin_input(self, x: Sequence) -> fm.Formula:
        return fm.conj(*(fm.eq(v, Fraction(c)) for v, c in zip(self.input_vars, x)))


def bias_delta_vars(net: Network, layers: Optional[Iterable[int]] = None) -> dict[int, tuple[VarId, ...]]:
    """Shared ``db`` variables for the selected affine layers (default: all)."""
    affine = net.affine_indices()
    selected = affine if layers is None else sorted(set(layers))
    for k in selected:
        if k not in affine:
            raise EncodingError(f"patchable layer {k} is not an affine layer")
    return {
        k: tuple(VarId("", BIAS_DELTA, k, j) for j in range(net.layers[k].out_dim))
        for k in selected
    }


def _relu(u: LinExpr, v: VarId) -> fm.Formula:
    # v = max(u, 0)
    return fm.conj(
        fm.implies(fm.lt(u, 0), fm.eq(v, 0)),
        fm.implies(fm.ge(u, 0), fm.eq(v, u)),
    )


def _hardtanh(u: LinExpr, v: VarId) -> fm.Formula:
    # v = max(eta, -1) with eta = min(u, 1); both cases of the min substituted
    return fm.conj(
        fm.implies(fm.ge(u, 1), fm.eq(v, 1)),
        fm.implies(
            fm.lt(u, 1),
            fm.conj(
                fm.implies(fm.lt(u, -1), fm.eq(v, -1)),
                fm.implies(fm.ge(u, -1), fm.eq(v, u)),
            ),
        ),
    )


def encode_network_instance(
    net: Network,
    tag: str,
    with_input_delta: bool = False,
    with_bias_delta: bool = False,
    patchable_layers: Optional[Iterable[int]] = None,
    used_tags: Optional[set] = None,
) -> NetworkInstance:
    """Encode ``y = f(x)`` for one fresh copy of the network.

    ``used_tags`` is the per-session tag registry; a repeated tag raises.
    With ``with_input_delta`` the first affine layer reads ``x + dx``.
    """
    check_network(net)
    if not tag or not tag.replace("_", "").isalnum():
        raise EncodingError(f"tag must be a non-empty identifier, got {tag!r}")
    if used_tags is not None:
        if tag in used_tags:
            raise EncodingError(f"duplicate instance tag {tag!r}")
        used_tags.add(tag)
    if patchable_layers is not None and not with_bias_delta:
        raise EncodingError("patchable_layers given without with_bias_delta")
    deltas = bias_delta_vars(net, patchable_layers) if with_bias_delta else None

    def var(kind, k, j):
        return VarId(tag, kind, k, j)

    variables: list[VarId] = []
    parts: list[fm.Formula] = []
    n = net.input_dim
    inputs = tuple(var(INPUT, 0, j) for j in range(n))
    variables.extend(inputs)
    dx = None
    current = [LinExpr.lift(v) for v in inputs]
    if with_input_delta:
        dx = tuple(VarId(tag, INPUT_DELTA, None, j) for j in range(n))
        variables.extend(dx)
        current = [c + d for c, d in zip(current, dx)]

    last = len(net.layers)
    for k, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            outs = tuple(var(AFFINE_OUT, k, j) for j in range(layer.out_dim))
            variables.extend(outs)
            for j, (row, b) in enumerate(zip(layer.weights, layer.bias)):
                rhs = LinExpr(const=b)
                for w, u in zip(row, current):
                    if w:
                        rhs = rhs + u.scale(w)
                if deltas is not None and k in deltas:
                    rhs = rhs + deltas[k][j]
                parts.append(fm.eq(outs[j], rhs))
            current = [LinExpr.lift(v) for v in outs]
        else:
            outs = tuple(var(INPUT, k + 1, j) for j in range(len(current)))
            variables.extend(outs)
            encode = _relu if isinstance(layer, ReLU) else _hardtanh
            for u, v in zip(current, outs):
                parts.append(encode(u, v))
            current = [LinExpr.lift(v) for v in outs]
        nxt = net.layers[k + 1] if k + 1 < last else None
        # x{k+1} is materialized where an affine output feeds another affine or is the output
        if isinstance(layer, Affine) and (nxt is None or isinstance(nxt, Affine)):
            outs = tuple(var(INPUT, k + 1, j) for j in range(len(current)))
            variables.extend(outs)
            parts.extend(fm.eq(v, u) for v, u in zip(outs, current))
            current = [LinExpr.lift(v) for v in outs]
    outputs = tuple(next(iter(c.variables())) for c in current)
    return NetworkInstance(
        tag=tag,
        input_vars=inputs,
        output_vars=outputs,
        delta_input_vars=dx,
        delta_bias_vars=deltas,
        constraints=fm.conj(*parts),
        variables=tuple(variables),
    )


def encode_class_membership(output_vars: Sequence[VarId], class_index: int) -> fm.Formula:
    """The ``class_index`` output strictly exceeds every other output."""
    m = len(output_vars)
    if not 0 <= class_index < m:
        raise EncodingError(f"class index {class_index} out of range for {m} outputs")
    target = output_vars[class_index]
    return fm.conj(*(fm.gt(target, v) for j, v in enumerate(output_vars) if j != class_index))


def encode_box_bound(variables: Sequence[VarId], radius) -> fm.Formula:
    """l-infinity ball: ``-radius <= v <= radius`` for every variable."""
    radius = Fraction(radius)
    if radius < 0:
        raise EncodingError("box radius must be non-negative")
    parts = []
    for v in variables:
        parts.append(fm.le(-radius, v))
        parts.append(fm.le(v, radius))
    return fm.conj(*parts)


def encode_output_differs(output_vars: Sequence[VarId], values: Sequence) -> fm.Formula:
    """Some output component differs from ``values`` (split as ``<`` or ``>``)."""
    return fm.disj(
        *(
            fm.disj(fm.lt(v, Fraction(c)), fm.gt(v, Fraction(c)))
            for v, c in zip(output_vars, values)
        )
    )
