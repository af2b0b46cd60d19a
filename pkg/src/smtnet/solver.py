"""SMT-LIB2 rendering and an external solver driven over stdin/stdout.

Scripts are plain text and fully deterministic, so the script that produced
a verdict can be stored next to it and replayed later by any solver that
speaks SMT-LIB2.
"""

from __future__ import annotations

import functools
import json
import os
import shlex
import subprocess
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

from . import formula as fm
from .formula import VarId

LOGIC = "QF_LRA"
DEFAULT_SOLVER = "z3"
DEFAULT_ARGS = {"z3": ("-in",), "cvc5": ("--lang=smt2", "--produce-models"), "yices-smt2": ()}


class SolverError(RuntimeError):
    """The solver could not be run or produced output we cannot read."""


# -- rendering ----------------------------------------------------------------


def _number(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        body = str(abs(q.numerator))
    else:
        body = f"(/ {abs(q.numerator)} {q.denominator})"
    return f"(- {body})" if q < 0 else body


def _term(c: Fraction, name: str) -> str:
    if c == 1:
        return name
    if c == -1:
        return f"(- {name})"
    return f"(* {_number(c)} {name})"


def render_expr(expr: fm.LinExpr) -> str:
    terms = [_term(c, v.name) for v, c in expr.coeffs.items() if c]
    if expr.const or not terms:
        terms.append(_number(expr.const))
    return terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"


def render_formula(f: fm.Formula) -> str:
    if isinstance(f, fm.Atom):
        return f"({f.rel} {render_expr(f.lhs)} {render_expr(f.rhs)})"
    if isinstance(f, fm.And):
        return "(and " + " ".join(render_formula(a) for a in f.args) + ")"
    if isinstance(f, fm.Or):
        return "(or " + " ".join(render_formula(a) for a in f.args) + ")"
    if isinstance(f, fm.Not):
        return f"(not {render_formula(f.arg)})"
    if isinstance(f, fm.Implies):
        return f"(=> {render_formula(f.antecedent)} {render_formula(f.consequent)})"
    if isinstance(f, fm.Const):
        return "true" if f.value else "false"
    raise TypeError(f"not a formula: {f!r}")


def declaration_order(formulas: Sequence[fm.Formula], declared_vars: Sequence[VarId]) -> list[VarId]:
    """First-use order; declared but unused variables follow in given order."""
    declared = set(declared_vars)
    order: dict[VarId, None] = {}
    for f in formulas:
        for v in fm.iter_variables(f):
            if v not in declared:
                raise SolverError(f"undeclared variable {v.name}")
            order.setdefault(v, None)
    for v in declared_vars:
        order.setdefault(v, None)
    names = {}
    for v in order:
        if names.setdefault(v.name, v) != v:
            raise SolverError(f"two variables render as {v.name}")
    return list(order)


def render_script(formulas: Sequence[fm.Formula], declared_vars: Sequence[VarId]) -> str:
    variables = declaration_order(formulas, declared_vars)
    lines = ["(set-option :produce-models true)", f"(set-logic {LOGIC})"]
    lines += [f"(declare-fun {v.name} () Real)" for v in variables]
    lines += [f"(assert {render_formula(f)})" for f in formulas]
    lines.append("(check-sat)")
    if variables:
        lines.append("(get-value (" + " ".join(v.name for v in variables) + "))")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


# -- output parsing -----------------------------------------------------------


def _tokenize(text: str):
    token = []
    for ch in text:
        if ch in "()":
            if token:
                yield "".join(token)
                token = []
            yield ch
        elif ch.isspace():
            if token:
                yield "".join(token)
                token = []
        else:
            token.append(ch)
    if token:
        yield "".join(token)


def parse_sexprs(text: str) -> list:
    stack: list[list] = [[]]
    for tok in _tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SolverError(f"unbalanced solver output: {text!r}")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SolverError(f"unbalanced solver output: {text!r}")
    return stack[0]


def parse_value(sexpr) -> Fraction:
    """Read an SMT-LIB real value: ``3``, ``2.5``, ``(- x)``, ``(/ p q)``."""
    if isinstance(sexpr, str):
        try:
            return Fraction(sexpr)
        except ValueError:
            raise SolverError(f"unexpected value token {sexpr!r}") from None
    if len(sexpr) == 2 and sexpr[0] == "-":
        return -parse_value(sexpr[1])
    if len(sexpr) == 3 and sexpr[0] == "/":
        return parse_value(sexpr[1]) / parse_value(sexpr[2])
    raise SolverError(f"unexpected value expression {sexpr!r}")


# -- running --------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    executable: str = DEFAULT_SOLVER
    args: Optional[tuple[str, ...]] = None
    timeout_s: float = 600.0

    def __post_init__(self):
        if not self.timeout_s > 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, executable=None, timeout_s=None, args=None) -> "SolverConfig":
        """Fill unset fields from SMTNET_SOLVER, SMTNET_SOLVER_ARGS, SMTNET_TIMEOUT_S."""
        executable = executable or os.environ.get("SMTNET_SOLVER") or DEFAULT_SOLVER
        if args is None and os.environ.get("SMTNET_SOLVER_ARGS"):
            args = tuple(shlex.split(os.environ["SMTNET_SOLVER_ARGS"]))
        if timeout_s is None:
            timeout_s = float(os.environ.get("SMTNET_TIMEOUT_S", 600))
        return cls(executable, args, timeout_s)

    @property
    def command(self) -> list[str]:
        args = self.args
        if args is None:
            args = DEFAULT_ARGS.get(Path(self.executable).name, ())
        return [self.executable, *args]


@dataclass(frozen=True)
class Sat:
    model: dict

    name = "sat"

    def value(self, var: VarId) -> Fraction:
        return self.model[var]


@dataclass(frozen=True)
class Unsat:
    name = "unsat"


@dataclass(frozen=True)
class Unknown:
    reason: str = ""

    name = "unknown"


Verdict = Union[Sat, Unsat, Unknown]


@dataclass
class ProofArtifact:
    script: str
    solver: str
    verdict: str
    seconds: float
    version: str = ""

    def save(self, path) -> Path:
        """Write ``<path>.smt2`` and the JSON sidecar ``<path>.json``."""
        path = Path(path)
        if path.suffix == ".smt2":
            path = path.with_suffix("")
        script_path = path.with_name(path.name + ".smt2")
        script_path.write_text(self.script, encoding="utf-8")
        sidecar = {
            "solver": self.solver,
            "version": self.version,
            "verdict": self.verdict,
            "seconds": round(self.seconds, 6),
        }
        path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=1) + "\n")
        return script_path

    @classmethod
    def load(cls, script_path) -> "ProofArtifact":
        script_path = Path(script_path)
        meta = json.loads(script_path.with_suffix(".json").read_text())
        return cls(
            script=script_path.read_text(encoding="utf-8"),
            solver=meta.get("solver", ""),
            verdict=meta["verdict"],
            seconds=float(meta.get("seconds", 0.0)),
            version=meta.get("version", ""),
        )


@functools.lru_cache(maxsize=None)
def solver_version(executable: str) -> str:
    try:
        out = subprocess.run(
            [executable, "--version"], capture_output=True, text=True, timeout=30
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return (out.stdout or out.stderr).strip().splitlines()[0] if (out.stdout or out.stderr) else "unknown"


def run_script(config: SolverConfig, script: str):
    """Feed ``script`` to the solver; return ``(verdict, seconds)``.

    Variables are matched back by name, so the model maps names to values
    here; :func:`check` rekeys it by VarId.
    """
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            config.command,
            input=script,
            capture_output=True,
            text=True,
            timeout=config.timeout_s,
        )
    except subprocess.TimeoutExpired:
        return Unknown("timeout"), time.perf_counter() - start
    except OSError as exc:
        raise SolverError(f"cannot run solver {config.executable!r}: {exc}") from exc
    seconds = time.perf_counter() - start
    lines = proc.stdout.strip().splitlines()
    head = lines[0].strip() if lines else ""
    if head == "unsat":
        return Unsat(), seconds
    if head in ("unknown", "timeout"):
        return Unknown(head), seconds
    if head != "sat":
        raise SolverError(
            f"solver exited with status {proc.returncode} without a verdict:\n"
            f"{proc.stdout}{proc.stderr}"
        )
    model = {}
    for entry in parse_sexprs("\n".join(lines[1:])):
        if not isinstance(entry, list):
            raise SolverError(f"malformed model output:\n{proc.stdout}")
        for pair in entry:
            if not (isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str)):
                raise SolverError(f"malformed model output:\n{proc.stdout}")
            model[pair[0]] = parse_value(pair[1])
    return Sat(model), seconds


def check(config: SolverConfig, formulas: Sequence[fm.Formula], declared_vars: Sequence[VarId]):
    """Decide ``formulas`` and return ``(verdict, artifact)``.

    A Sat model is checked back against every formula with exact
    arithmetic before it is returned.
    """
    formulas = list(formulas)
    variables = declaration_order(formulas, declared_vars)
    script = render_script(formulas, variables)
    verdict, seconds = run_script(config, script)
    if isinstance(verdict, Sat):
        by_name = verdict.model
        try:
            model = {v: by_name[v.name] for v in variables}
        except KeyError as exc:
            raise SolverError(f"solver model lacks variable {exc.args[0]}") from None
        for f in formulas:
            if not fm.evaluate(f, model):
                raise SolverError("solver model does not satisfy the asserted formulas")
        verdict = Sat(model)
    artifact = ProofArtifact(
        script=script,
        solver=config.executable,
        verdict=verdict.name,
        seconds=seconds,
        version=solver_version(config.executable),
    )
    return verdict, artifact


def replay(config: SolverConfig, artifact: ProofArtifact):
    """Re-run a stored script; returns ``(verdict, matches_recorded)``."""
    verdict, _ = run_script(config, artifact.script)
    return verdict, verdict.name == artifact.verdict
