"""Problem file loading.

A problem file is YAML with this layout:

    variables:
      - {name: X, manifold: SPD, dim: 5}
    constants:
      A: [[4.0, 0.0], [0.0, 9.0]]        # inline matrix
      h: [1.0, 2.0]                       # vector
      B: {file: data.csv, format: csv}    # rows = lines, comma separated
    objective: "sdivergence(X, A) + sdivergence(X, I)"
    solver: {max_iter: 500, grad_tol: 1.0e-8}
    fuzz: {trials: 1000, seed: 7, inject: [{a: S1, b: S2}]}

Every identifier in the objective must resolve to a declared variable, a
constant, or a registered atom.  Matrix file paths resolve relative to the
problem file.  All floats are 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dsl import parse_dsl
from .errors import GeocertError, ProblemFileError
from .expr import Expression, Manifold, SPD, Variable, VariableScope

_SOLVER_KEYS = {"max_iter", "grad_tol"}
_FUZZ_KEYS = {"trials", "seed", "tol", "dim", "cond_max", "t_samples", "inject"}


@dataclass
class LoadedProblem:
    path: str
    variables: dict[str, Variable]
    constants: dict[str, np.ndarray]
    objective_text: str
    expression: Expression
    manifold: Manifold
    solver: dict = field(default_factory=dict)
    fuzz: dict = field(default_factory=dict)
    injected: tuple = ()


def _load_matrix_entry(name, value, base: Path) -> np.ndarray:
    if isinstance(value, dict):
        if "file" not in value:
            raise ProblemFileError(f"constant '{name}': file entry needs a 'file' key")
        fmt = value.get("format", "csv")
        if fmt != "csv":
            raise ProblemFileError(f"constant '{name}': unsupported format '{fmt}'")
        target = base / str(value["file"])
        try:
            arr = np.loadtxt(target, delimiter=",", ndmin=2, dtype=float)
        except OSError as exc:
            raise ProblemFileError(f"constant '{name}': cannot read {target}: {exc}") from exc
    else:
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProblemFileError(f"constant '{name}' is not numeric: {exc}") from exc
    if arr.ndim not in (1, 2) or arr.size == 0:
        raise ProblemFileError(f"constant '{name}' must be a vector or 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError(f"constant '{name}' has non-finite entries")
    return arr


def load_problem(path) -> LoadedProblem:
    """Parse and validate a problem file; raises ProblemFileError on any defect."""
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ProblemFileError(f"cannot read {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ProblemFileError(f"{p}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProblemFileError(f"{p}: top level must be a mapping")
    unknown = set(raw) - {"variables", "constants", "objective", "solver", "fuzz"}
    if unknown:
        raise ProblemFileError(f"{p}: unknown top-level keys {sorted(unknown)}")

    var_entries = raw.get("variables")
    if not isinstance(var_entries, list) or not var_entries:
        raise ProblemFileError(f"{p}: 'variables' must be a non-empty list")
    scope = VariableScope()
    variables: dict[str, Variable] = {}
    for entry in var_entries:
        if not isinstance(entry, dict) or "name" not in entry or "dim" not in entry:
            raise ProblemFileError(f"{p}: each variable needs 'name' and 'dim'")
        kind = entry.get("manifold", "SPD")
        if kind != "SPD":
            raise ProblemFileError(f"{p}: unsupported manifold '{kind}'")
        name = str(entry["name"])
        if name in variables:
            raise ProblemFileError(f"{p}: variable '{name}' declared twice")
        try:
            variables[name] = scope.declare(name, SPD(int(entry["dim"])))
        except GeocertError as exc:
            raise ProblemFileError(f"{p}: variable '{name}': {exc}") from exc

    constants: dict[str, np.ndarray] = {}
    const_entries = raw.get("constants") or {}
    if not isinstance(const_entries, dict):
        raise ProblemFileError(f"{p}: 'constants' must be a mapping")
    for name, value in const_entries.items():
        name = str(name)
        if name in variables:
            raise ProblemFileError(f"{p}: '{name}' is both a variable and a constant")
        constants[name] = _load_matrix_entry(name, value, p.parent)

    objective = raw.get("objective")
    if not isinstance(objective, str) or not objective.strip():
        raise ProblemFileError(f"{p}: exactly one non-empty 'objective' string is required")

    env: dict = dict(constants)
    env.update(variables)
    try:
        expression = parse_dsl(objective, env)
    except GeocertError as exc:
        raise ProblemFileError(f"{p}: objective: {exc}") from exc

    used = [variables[n] for n in expression.variables] or list(variables.values())
    manifolds = {v.manifold for v in used}
    if len(manifolds) > 1:
        raise ProblemFileError(f"{p}: all variables must share one manifold dimension")
    manifold = manifolds.pop()

    solver_block = _validated_block(raw.get("solver"), _SOLVER_KEYS, p, "solver")
    fuzz_block = _validated_block(raw.get("fuzz"), _FUZZ_KEYS, p, "fuzz")

    injected = []
    for pair in fuzz_block.pop("inject", []) or []:
        if not isinstance(pair, dict) or "a" not in pair or "b" not in pair:
            raise ProblemFileError(f"{p}: fuzz.inject entries need 'a' and 'b'")
        injected.append((_resolve_point(pair["a"], constants, p),
                         _resolve_point(pair["b"], constants, p)))

    return LoadedProblem(
        path=str(path),
        variables=variables,
        constants=constants,
        objective_text=objective.strip(),
        expression=expression,
        manifold=manifold,
        solver=solver_block,
        fuzz=fuzz_block,
        injected=tuple(injected),
    )


def _validated_block(block, allowed: set, p: Path, label: str) -> dict:
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ProblemFileError(f"{p}: '{label}' must be a mapping")
    unknown = set(block) - allowed
    if unknown:
        raise ProblemFileError(f"{p}: unknown {label} keys {sorted(unknown)}")
    return dict(block)


def _resolve_point(spec, constants: dict, p: Path) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in constants:
            raise ProblemFileError(f"{p}: fuzz.inject references unknown constant '{spec}'")
        return constants[spec]
    arr = np.asarray(spec, dtype=float)
    if arr.ndim != 2:
        raise ProblemFileError(f"{p}: fuzz.inject points must be matrices")
    return arr
