"""Command-line front end.

Exit codes: 0 success or sat, 1 a verify/replay check failed, 2 infeasible
(unsat), 3 solver unknown or timeout, 4 usage or validation error, 5 the
solver could not be run or its output could not be read.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .adversarial import Status, min_adversarial_input, witness_holds
from .data import (
    evaluate_accuracy,
    format_accuracy_table,
    load_csv,
    load_idx,
    load_pca,
    pca_fit,
    project_dataset,
    save_pca,
    write_accuracy_csv,
)
from .network import (
    NetworkFormatError,
    census,
    load_network,
    network_from_dict,
    quantize_network,
    save_network,
    validate_network,
)
from .patcher import PatchStatus, bias_table, find_patch, verify_patch
from .rationals import format_rational, parse_rational, parse_vector
from .solver import ProofArtifact, SolverConfig, SolverError, replay
from .specs import (
    SpecError,
    attack_result_to_dict,
    load_patch_spec,
    load_attack_spec,
    patch_result_to_dict,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_UNKNOWN = 3
EXIT_USAGE = 4
EXIT_SOLVER = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(args, stem_source, suffix) -> Path:
    out_dir = Path(args.out_dir).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / f"{Path(stem_source).stem}.{args.command}.{suffix}"


def _solver_config(args, timeout=None) -> SolverConfig:
    return SolverConfig.from_env(
        executable=args.solver,
        timeout_s=args.timeout_s if args.timeout_s is not None else timeout,
    )


def _load_dataset(args, path):
    path = Path(path)
    if getattr(args, "idx_labels", None):
        data = load_idx(path, args.idx_labels, limit=args.limit)
    elif path.suffix == ".csv":
        data = load_csv(path)
        if args.limit is not None:
            data = data.subset(range(min(args.limit, len(data))))
    else:
        raise UsageError(f"{path}: use a .csv dataset or pass --idx-labels for IDX images")
    return data


def _dump(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------------


def cmd_inspect(args):
    doc = json.loads(Path(args.network).read_text(encoding="utf-8"))
    net = network_from_dict(doc, validate=False)
    report = validate_network(net)
    print(f"network: {net.name or Path(args.network).stem}")
    if report.ok:
        info = census(net)
        print(f"input dim: {info['input_dim']}  output dim: {info['output_dim']}")
        print(
            f"layers: {info['layers']} (affine {info['affine']}, relu {info['relu']}, "
            f"hardtanh {info['hardtanh']})"
        )
        print("dims: " + " -> ".join(str(d) for d in info["dims"]))
        print(f"parameters: {info['parameters']}  max denominator bits: {info['max_denominator_bits']}")
        if net.labels is not None:
            print("labels: " + " ".join(net.labels))
        print("validation: ok")
        return EXIT_OK
    print("validation: FAILED")
    for index, message in report.issues:
        print(f"  {'-' if index is None else index}: {message}")
    return EXIT_USAGE


def cmd_eval(args):
    nets = [load_network(args.network)] + [load_network(p) for p in args.compare]
    data = _load_dataset(args, args.data)
    if args.pca:
        data = project_dataset(load_pca(args.pca), data)
    names = [Path(args.network).stem] + [Path(p).stem for p in args.compare]
    if args.names:
        names = args.names.split(",")
        if len(names) != len(nets):
            raise UsageError("--names needs one name per network")
    tables = {name: evaluate_accuracy(net, data) for name, net in zip(names, nets)}
    out = _out(args, args.network, "csv")
    write_accuracy_csv(tables, out)
    print(format_accuracy_table(tables))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_quantize(args):
    net = load_network(args.network)
    out = _out(args, args.network, "json")
    save_network(quantize_network(net, args.bits), out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_pca(args):
    data = _load_dataset(args, args.data)
    t = pca_fit(data, args.k)
    out = _out(args, args.data, "json")
    save_pca(t, out)
    if t.padded:
        print(f"warning: data rank {t.rank} < k={args.k}; trailing components are zero")
    if args.project:
        from .data import save_csv

        proj = _out(args, args.data, "projected.csv")
        save_csv(project_dataset(t, data), proj)
        print(f"wrote {proj}")
    print(f"wrote {out}")
    return EXIT_OK


def _save_artifacts(args, stem_source, queries):
    paths = []
    for i, (alpha, verdict, artifact) in enumerate(queries):
        if artifact is None:
            continue
        paths.append(artifact.save(_out(args, stem_source, f"q{i:02d}")))
    return paths


def cmd_attack(args):
    spec = load_attack_spec(args.spec)
    problem = spec.problem
    config = _solver_config(args, spec.timeout_s)
    result = min_adversarial_input(problem, config)
    artifacts = _save_artifacts(args, args.spec, result.queries)
    doc = attack_result_to_dict(result, problem, spec.network_path, artifacts)
    out = _out(args, args.spec, "json")
    _dump(out, doc)
    print(f"status: {result.status.value}")
    print(f"bracket: [{format_rational(result.alpha_lo)}, {format_rational(result.alpha_hi)}]"
          f"  (~[{float(result.alpha_lo):.6g}, {float(result.alpha_hi):.6g}])")
    print(f"solver queries: {result.n_queries}")
    print(f"wrote {out}")
    return {
        Status.FOUND: EXIT_OK,
        Status.ALREADY_SATISFIED: EXIT_OK,
        Status.INFEASIBLE: EXIT_INFEASIBLE,
        Status.UNKNOWN: EXIT_UNKNOWN,
    }[result.status]


def _write_bias_csvs(args, stem_source, original, patched):
    rows = bias_table(original, patched)
    raw = _out(args, stem_source, "biases.csv")
    with open(raw, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "index", "original", "delta", "patched",
                         "original_f", "delta_f", "patched_f"])
        for k, j, b0, d, b1 in rows:
            writer.writerow([k, j, format_rational(b0), format_rational(d), format_rational(b1),
                             repr(float(b0)), repr(float(d)), repr(float(b1))])
    hist = _out(args, stem_source, "hist.csv")
    with open(hist, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "bin_lo", "bin_hi", "count"])
        for series, col in (("original", 2), ("delta", 3), ("patched", 4)):
            values = np.array([float(r[col]) for r in rows])
            counts, edges = np.histogram(values, bins=args.bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                writer.writerow([series, repr(float(lo)), repr(float(hi)), int(c)])
    return raw, hist


def cmd_patch(args):
    spec = load_patch_spec(args.spec)
    problem = spec.problem
    if args.bias_bound is not None:
        problem = replace(problem, bias_bound=parse_rational(args.bias_bound))
    config = _solver_config(args, spec.timeout_s)
    result = find_patch(problem, config)
    artifacts = _save_artifacts(args, args.spec, result.queries)
    patched_path = None
    if result.status == PatchStatus.PATCHED:
        patched_path = _out(args, args.spec, "net.json")
        save_network(result.patched_network, patched_path)
        raw, hist = _write_bias_csvs(args, args.spec, problem.network, result.patched_network)
        print(f"wrote {patched_path}, {raw}, {hist}")
    doc = patch_result_to_dict(result, Path(args.spec).resolve(), spec.network_path,
                               patched_path, artifacts)
    if result.status == PatchStatus.PATCHED and args.eval_data:
        data = _load_dataset(args, args.eval_data)
        if args.eval_pca:
            data = project_dataset(load_pca(args.eval_pca), data)
        tables = {
            "Original": evaluate_accuracy(problem.network, data),
            "Modified": evaluate_accuracy(result.patched_network, data),
        }
        table_path = _out(args, args.spec, "eval.csv")
        write_accuracy_csv(tables, table_path)
        print(format_accuracy_table(tables))
        doc["accuracy"] = {
            name: {"overall": round(t.overall, 4), "correct": t.total_correct, "total": t.total}
            for name, t in tables.items()
        }
    out = _out(args, args.spec, "json")
    _dump(out, doc)
    print(f"status: {result.status.value}")
    if result.achieved_bound is not None:
        print(f"max |delta bias|: {format_rational(result.achieved_bound)}"
              f" (~{float(result.achieved_bound):.6g})")
    if result.report is not None:
        r = result.report
        print(f"verification: {len(r.rows) - r.n_failed}/{len(r.rows)} examples at prescribed class")
    print(f"wrote {out}")
    return {
        PatchStatus.PATCHED: EXIT_OK,
        PatchStatus.INFEASIBLE: EXIT_INFEASIBLE,
        PatchStatus.UNKNOWN: EXIT_UNKNOWN,
    }[result.status]


def _verify_attack(doc, base: Path):
    if doc.get("witness") is None:
        raise UsageError("attack result carries no witness to verify")
    net = load_network(base / doc["network"] if not Path(doc["network"]).is_absolute() else doc["network"])
    dx = parse_vector(doc["witness"])
    ok = witness_holds(net, parse_vector(doc["x0"]), dx, int(doc["target_class"]),
                       alpha=Fraction(doc["alpha_hi"]))
    print(f"attack witness: {'pass' if ok else 'FAIL'} (target {doc.get('target_label')})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_verify(args):
    path = Path(args.file)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("kind") == "attack":
        return _verify_attack(doc, path.parent)
    if doc.get("kind") == "patch":
        if doc.get("patched_network") is None:
            raise UsageError("patch result has no patched network to verify")
        net_path = Path(args.network or doc["patched_network"])
        spec_path = Path(doc["spec"])
    else:
        if not args.network:
            raise UsageError("verifying a patch spec needs --network")
        net_path, spec_path = Path(args.network), path
    net = load_network(net_path)
    spec = load_patch_spec(spec_path, network=net)
    report = verify_patch(net, spec.problem.keep, spec.problem.change)
    for which, i, expected, predicted, strict in report.rows:
        ok = predicted == expected and strict
        note = "" if strict or predicted != expected else " (tie)"
        print(f"{which}[{i}]: expected '{net.label_of(expected)}', got "
              f"'{net.label_of(predicted)}'{note}  {'pass' if ok else 'FAIL'}")
    print(f"{len(report.rows) - report.n_failed}/{len(report.rows)} pass")
    if args.report:
        _dump(args.report, report.to_dict())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_replay(args):
    artifact = ProofArtifact.load(args.artifact)
    config = _solver_config(args)
    verdict, matches = replay(config, artifact)
    print(f"recorded: {artifact.verdict}  replayed: {verdict.name}  "
          f"{'match' if matches else 'MISMATCH'}")
    if verdict.name == "unknown" and not matches:
        return EXIT_UNKNOWN
    return EXIT_OK if matches else EXIT_CHECK_FAILED


# -- wiring -----------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="smtnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(p):
        p.add_argument("--solver", help="SMT-LIB2 solver executable (env SMTNET_SOLVER, default z3)")
        p.add_argument("--timeout-s", type=float, help="per-query timeout (env SMTNET_TIMEOUT_S)")

    def out_flag(p):
        p.add_argument("-o", "--out-dir", default=".", help="directory for output files")

    def data_flags(p):
        p.add_argument("--idx-labels", help="IDX label file when the data file is IDX images")
        p.add_argument("--limit", type=int, help="use only the first N rows")

    p = sub.add_parser("inspect", help="print dimensions, layer census and validation")
    p.add_argument("network")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("eval", help="per-class accuracy table")
    p.add_argument("network")
    p.add_argument("data")
    p.add_argument("--pca", help="project rows with this PCA transform first")
    p.add_argument("--compare", nargs="*", default=[], help="further networks as extra columns")
    p.add_argument("--names", help="comma-separated column names")
    data_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quantize", help="round parameters to a number of significand bits")
    p.add_argument("network")
    p.add_argument("--bits", type=int, required=True)
    out_flag(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("pca", help="fit a PCA transform on a dataset")
    p.add_argument("data")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--project", action="store_true", help="also write the projected dataset")
    data_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("attack", help="minimal l-inf adversarial input from an attack spec")
    p.add_argument("spec")
    solver_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("patch", help="bias patch from a patch spec")
    p.add_argument("spec")
    p.add_argument("--bias-bound", help="override the spec's bias bound (p/q)")
    p.add_argument("--bins", type=int, default=20, help="histogram bins")
    p.add_argument("--eval-data", help="dataset for before/after accuracy")
    p.add_argument("--eval-pca", help="PCA transform for --eval-data")
    p.set_defaults(idx_labels=None, limit=None)
    solver_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("verify", help="re-check a patch or attack result with exact inference")
    p.add_argument("file", help="patch/attack result JSON, or a patch spec with --network")
    p.add_argument("--network", help="network to verify (overrides the result's)")
    p.add_argument("--report", help="write the per-example report as JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="re-run a stored .smt2 proof artifact")
    p.add_argument("artifact")
    solver_flags(p)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, SpecError, NetworkFormatError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
