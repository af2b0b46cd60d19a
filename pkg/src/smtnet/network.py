"""Sequential piecewise-affine networks with exact rational parameters.

A network is an ordered list of layers: affine maps ``W x + b`` and the
componentwise activations ReLU (``max(x, 0)``) and HardTanh
(``max(min(x, 1), -1)``).  Everything here is evaluated with
:class:`fractions.Fraction`, so inference never rounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .rationals import format_rational, parse_rational


class NetworkFormatError(ValueError):
    """Raised when a network document cannot be read."""


class NetworkValidationError(ValueError):
    """Raised when a network breaks a structural invariant."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(_issue_text(i) for i in report.issues))


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Affine:
    weights: tuple[tuple[Fraction, ...], ...]
    bias: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "weights", tuple(tuple(Fraction(w) for w in row) for row in self.weights)
        )
        object.__setattr__(self, "bias", tuple(Fraction(b) for b in self.bias))

    @property
    def in_dim(self) -> int:
        return len(self.weights[0]) if self.weights else 0

    @property
    def out_dim(self) -> int:
        return len(self.weights)

    def __call__(self, x: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(
            sum((w * xi for w, xi in zip(row, x)), Fraction(0)) + b
            for row, b in zip(self.weights, self.bias)
        )


@dataclass(frozen=True)
class ReLU:
    def __call__(self, x):
        return tuple(v if v > 0 else Fraction(0) for v in x)


@dataclass(frozen=True)
class HardTanh:
    def __call__(self, x):
        one = Fraction(1)
        return tuple(max(min(v, one), -one) for v in x)


Layer = Union[Affine, ReLU, HardTanh]
ACTIVATIONS = {"relu": ReLU, "hardtanh": HardTanh}


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[tuple[Optional[int], str], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues


def _issue_text(issue):
    index, message = issue
    return message if index is None else f"layer {index}: {message}"


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[Layer, ...]
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        dim = self.input_dim
        for layer in self.layers:
            if isinstance(layer, Affine):
                dim = layer.out_dim
        return dim

    def affine_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Affine)]

    def label_of(self, index: int) -> str:
        return self.labels[index] if self.labels is not None else str(index)

    def class_index(self, label) -> int:
        """Resolve a class given as label string or integer index."""
        if isinstance(label, int) and not isinstance(label, bool):
            index = label
        elif self.labels is not None and str(label) in self.labels:
            index = self.labels.index(str(label))
        else:
            try:
                index = int(label)
            except (TypeError, ValueError):
                raise ValueError(f"unknown class label {label!r}") from None
        if not 0 <= index < self.output_dim:
            raise ValueError(f"class index {index} out of range for {self.output_dim} outputs")
        return index


def validate_network(net: Network) -> ValidationReport:
    issues = []
    if not net.layers:
        return ValidationReport(((None, "no layers"),))
    first = net.layers[0]
    if not isinstance(first, Affine):
        issues.append((0, "input dimension undefined: first layer must be affine"))
    dim = None
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            if layer.out_dim < 1 or layer.in_dim < 1:
                issues.append((i, "affine layer with an empty dimension"))
                continue
            if any(len(row) != layer.in_dim for row in layer.weights):
                issues.append((i, "ragged weight matrix"))
                continue
            if len(layer.bias) != layer.out_dim:
                issues.append(
                    (i, f"bias length {len(layer.bias)} != weight rows {layer.out_dim}")
                )
            if dim is not None and layer.in_dim != dim:
                issues.append((i, f"expects input dim {layer.in_dim}, previous layer gives {dim}"))
            dim = layer.out_dim
        elif not isinstance(layer, (ReLU, HardTanh)):
            issues.append((i, f"unknown layer type {type(layer).__name__}"))
    if net.labels is not None and dim is not None and len(net.labels) != dim:
        issues.append((None, f"{len(net.labels)} labels for output dim {dim}"))
    return ValidationReport(tuple(issues))


def check_network(net: Network) -> Network:
    report = validate_network(net)
    if not report.ok:
        raise NetworkValidationError(report)
    return net


def forward(net: Network, x: Sequence) -> tuple[Fraction, ...]:
    if len(x) != net.input_dim:
        raise DimensionError(f"input has length {len(x)}, network expects {net.input_dim}")
    values = tuple(Fraction(v) for v in x)
    for layer in net.layers:
        values = layer(values)
    return values


def classify(y: Sequence, labels: Optional[Sequence[str]] = None):
    """Index of the largest component; the lowest index wins ties.

    With ``labels`` the pair ``(index, label)`` is returned instead.
    """
    if len(y) == 0:
        raise ValueError("cannot classify an empty output vector")
    best = 0
    for i in range(1, len(y)):
        if y[i] > y[best]:
            best = i
    if labels is not None:
        return best, labels[best]
    return best


def predict(net: Network, x: Sequence) -> int:
    return classify(forward(net, x))


# -- serialization ----------------------------------------------------------


def network_from_dict(doc, validate: bool = True) -> Network:
    if not isinstance(doc, dict):
        raise NetworkFormatError("network document must be a JSON object")
    if "layers" not in doc or not isinstance(doc["layers"], list):
        raise NetworkFormatError("missing 'layers' list")
    layers = []
    for i, spec in enumerate(doc["layers"]):
        kind = spec.get("type") if isinstance(spec, dict) else None
        if kind == "affine":
            try:
                weights = [[parse_rational(w) for w in row] for row in spec["weights"]]
                bias = [parse_rational(b) for b in spec["bias"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise NetworkFormatError(f"layer {i}: bad affine parameters ({exc})") from exc
            layers.append(Affine(weights, bias))
        elif kind in ACTIVATIONS:
            layers.append(ACTIVATIONS[kind]())
        else:
            raise NetworkFormatError(f"layer {i}: unknown layer type {kind!r}")
    labels = doc.get("labels")
    if labels is not None and not isinstance(labels, list):
        raise NetworkFormatError("'labels' must be a list of strings")
    net = Network(str(doc.get("name", "")), layers, labels)
    return check_network(net) if validate else net


def parse_network(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(
            f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return network_from_dict(doc)


def network_to_dict(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            layers.append(
                {
                    "type": "affine",
                    "weights": [[format_rational(w) for w in row] for row in layer.weights],
                    "bias": [format_rational(b) for b in layer.bias],
                }
            )
        else:
            layers.append({"type": "relu" if isinstance(layer, ReLU) else "hardtanh"})
    doc = {"name": net.name}
    if net.labels is not None:
        doc["labels"] = list(net.labels)
    doc["layers"] = layers
    return doc


def render_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def save_network(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_network(net))


# -- quantization -----------------------------------------------------------


def round_significand(q: Fraction, bits: int) -> Fraction:
    """Round to ``bits`` significand bits, ties to even, exponent unbounded.

    Non-dyadic values are first cast to the nearest double.
    """
    if bits < 1:
        raise ValueError("significand_bits must be >= 1")
    q = Fraction(q)
    if q == 0:
        return q
    if (q.denominator & (q.denominator - 1)) != 0:
        q = Fraction(float(q))
    sign = -1 if q < 0 else 1
    q = abs(q)
    # q in [2**e, 2**(e+1))
    e = q.numerator.bit_length() - q.denominator.bit_length()
    if Fraction(2) ** e > q:
        e -= 1
    unit = Fraction(2) ** (e - bits + 1)
    return sign * round(q / unit) * unit


def quantize_network(net: Network, significand_bits: int) -> Network:
    if significand_bits < 1:
        raise ValueError("significand_bits must be >= 1")
    layers = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            layer = Affine(
                [[round_significand(w, significand_bits) for w in row] for row in layer.weights],
                [round_significand(b, significand_bits) for b in layer.bias],
            )
        layers.append(layer)
    return Network(net.name, layers, net.labels)


def census(net: Network) -> dict:
    """Layer counts and parameter bit sizes, used by ``inspect``."""
    affine = [l for l in net.layers if isinstance(l, Affine)]
    params = [p for l in affine for row in l.weights for p in row] + [
        p for l in affine for p in l.bias
    ]
    return {
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "layers": len(net.layers),
        "affine": len(affine),
        "relu": sum(isinstance(l, ReLU) for l in net.layers),
        "hardtanh": sum(isinstance(l, HardTanh) for l in net.layers),
        "parameters": len(params),
        "max_denominator_bits": max((p.denominator.bit_length() - 1 for p in params), default=0),
        "dims": [net.input_dim] + [l.out_dim for l in affine],
        "max_abs_bias": max((abs(b) for l in affine for b in l.bias), default=Fraction(0)),
        "log2_max_abs": math.log2(max((abs(p) for p in params if p), default=1)),
    }
