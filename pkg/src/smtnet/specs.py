"""Attack and patch spec files, and the JSON results written for them.

Input vectors in a spec are either literal (``"x": [...]``) or a dataset
row (``{"dataset": ..., "row": i, "pca": ...}``).  ``dataset`` and ``pca``
may also be set once at the top level of the spec.  Relative paths are
resolved against the spec file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .adversarial import AttackProblem, BisectionResult, default_upper_bound
from .data import Dataset, load_csv, load_pca, pca_project
from .network import Network, load_network, predict
from .patcher import LabeledExample, PatchProblem, PatchResult, DEFAULT_BIAS_BOUND
from .rationals import format_rational, format_vector, parse_rational, parse_vector


class SpecError(ValueError):
    pass


class _Resolver:
    """Loads each referenced dataset / PCA file once."""

    def __init__(self, base: Path, defaults: dict):
        self.base = base
        self.defaults = defaults
        self._data: dict = {}
        self._pca: dict = {}

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def dataset(self, p) -> Dataset:
        key = self.path(p)
        if key not in self._data:
            self._data[key] = load_csv(key)
        return self._data[key]

    def pca(self, p):
        key = self.path(p)
        if key not in self._pca:
            self._pca[key] = load_pca(key)
        return self._pca[key]

    def vector(self, entry, where: str):
        """``(x, dataset_label or None)`` for a literal vector or a row reference."""
        if isinstance(entry, list):
            return parse_vector(entry), None
        if not isinstance(entry, dict):
            raise SpecError(f"{where}: expected a vector or a row reference")
        if "x" in entry:
            return parse_vector(entry["x"]), None
        if "row" not in entry:
            raise SpecError(f"{where}: needs 'x' or 'row'")
        source = entry.get("dataset", self.defaults.get("dataset"))
        if source is None:
            raise SpecError(f"{where}: row reference without a dataset")
        data = self.dataset(source)
        row = int(entry["row"])
        if not 0 <= row < len(data):
            raise SpecError(f"{where}: row {row} outside dataset of {len(data)} rows")
        x = data.features[row]
        pca = entry.get("pca", self.defaults.get("pca"))
        if pca is not None:
            x = pca_project(self.pca(pca), x)
        return x, data.labels[row]


def _read(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: spec must be a JSON object")
    return doc


@dataclass
class AttackSpec:
    problem: AttackProblem
    network_path: Path
    timeout_s: Optional[float]


def load_attack_spec(path, network: Optional[Network] = None) -> AttackSpec:
    path = Path(path).resolve()
    doc = _read(path)
    resolver = _Resolver(path.parent, doc)
    if "network" not in doc and network is None:
        raise SpecError("attack spec needs 'network'")
    net_path = resolver.path(doc["network"]) if "network" in doc else None
    net = network or load_network(net_path)
    if "x0" not in doc:
        raise SpecError("attack spec needs 'x0'")
    x0, _ = resolver.vector(doc["x0"], "x0")
    if "target" not in doc:
        raise SpecError("attack spec needs 'target'")
    try:
        target = net.class_index(doc["target"])
        lo = parse_rational(doc.get("lo", 0))
        hi = parse_rational(doc["hi"]) if "hi" in doc else default_upper_bound(x0)
        eps = parse_rational(doc.get("epsilon", "1/1000"))
        problem = AttackProblem(net, x0, target, lo, hi, eps)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    timeout = doc.get("timeout", doc.get("timeout_s"))
    return AttackSpec(problem, net_path, None if timeout is None else float(timeout))


@dataclass
class PatchSpec:
    problem: PatchProblem
    network_path: Optional[Path]
    timeout_s: Optional[float]


def _examples(entries, which, net: Network, resolver: _Resolver):
    out = []
    if not isinstance(entries, list):
        raise SpecError(f"'{which}' must be a list")
    for i, entry in enumerate(entries):
        where = f"{which}[{i}]"
        x, _ = resolver.vector(entry, where)
        if isinstance(entry, dict) and "label" in entry:
            label = net.class_index(entry["label"])
        elif which == "keep":
            # a keep entry without a label preserves the current prediction
            label = predict(net, x)
        else:
            raise SpecError(f"{where}: change entries need a 'label'")
        out.append(LabeledExample(x, label))
    return out


def load_patch_spec(path, network: Optional[Network] = None) -> PatchSpec:
    path = Path(path).resolve()
    doc = _read(path)
    resolver = _Resolver(path.parent, doc)
    if "network" not in doc and network is None:
        raise SpecError("patch spec needs 'network'")
    net_path = resolver.path(doc["network"]) if "network" in doc else None
    net = network or load_network(net_path)
    try:
        keep = _examples(doc.get("keep", []), "keep", net, resolver)
        change = _examples(doc.get("change", []), "change", net, resolver)
        layers = doc.get("patchable_layers")
        problem = PatchProblem(
            net,
            keep,
            change,
            bias_bound=parse_rational(doc.get("bias_bound", format_rational(DEFAULT_BIAS_BOUND))),
            patchable_layers=None if layers is None else tuple(int(k) for k in layers),
            minimize=bool(doc.get("minimize", False)),
            epsilon=parse_rational(doc.get("epsilon", "1/1000")),
        )
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    timeout = doc.get("timeout", doc.get("timeout_s"))
    return PatchSpec(problem, net_path, None if timeout is None else float(timeout))


# -- results ------------------------------------------------------------------------


def attack_result_to_dict(result: BisectionResult, problem: AttackProblem, network_path, artifacts) -> dict:
    witness = result.witness if isinstance(result.witness, tuple) else None
    return {
        "kind": "attack",
        "status": result.status.value,
        "alpha_lo": format_rational(result.alpha_lo),
        "alpha_hi": format_rational(result.alpha_hi),
        "witness": None if witness is None else format_vector(witness),
        "n_queries": result.n_queries,
        "artifacts": [str(p) for p in artifacts],
        "network": None if network_path is None else str(network_path),
        "x0": format_vector(problem.x0),
        "target_class": problem.target_class,
        "target_label": problem.network.label_of(problem.target_class),
    }


def patch_result_to_dict(result: PatchResult, spec_path, network_path, patched_path, artifacts) -> dict:
    def opt(q):
        return None if q is None else format_rational(q)

    return {
        "kind": "patch",
        "status": result.status.value,
        "achieved_bound": opt(result.achieved_bound),
        "bound_lo": opt(result.bound_lo),
        "bound_hi": opt(result.bound_hi),
        "delta_bias": {str(k): format_vector(v) for k, v in sorted(result.delta_bias.items())},
        "n_queries": result.n_queries,
        "verification": None if result.report is None else result.report.to_dict(),
        "artifacts": [str(p) for p in artifacts],
        "spec": str(spec_path),
        "network": None if network_path is None else str(network_path),
        "patched_network": None if patched_path is None else str(patched_path),
    }


def delta_from_dict(doc) -> dict:
    return {int(k): parse_vector(v) for k, v in doc.items()}
