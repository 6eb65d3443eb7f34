"""Command-line runner: a problem file in, delimited artifacts and figures out.

Problem files are JSON with complex numbers as [re, im] pairs::

    {
      "label": "fig1",              // optional run label
      "psi0": [[1, 0], [0, 0]],     // initial state amplitudes
      "targets": [                  // visit these states at these times
        {"state": [[0.7071, 0], [0.7071, 0]], "time": 1.0}
      ],
      "sigma": 0.04,                // closeness weight (> 0)
      "steps": 300,                 // grid steps N
      "t0": 0.0,                    // optional, default 0
      "t_final": 3.0,               // optional, default last target time
      "h0": "auto"                  // optional; "auto" = geodesic toward the
    }                               // first target, or a [[re,im],..] matrix

Each run writes trajectory.csv, hamiltonian.csv, cost_history.csv,
validation.json (unless --no-validate), summary.json, a coherent-state
trajectory when --coherent-k is given, and the report figures.  CSV floats
carry 17 significant digits and JSON keys are sorted, so reruns with the same
configuration are byte-identical.  Exit status: 0 converged, 2 finished
without converging, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coherent import embed_path, metric_scale, occupation_basis
from .forward import ProblemSpec, energies, make_problem, terminal_residual
from .optimizer import DescentOptions, Solution, solve, validate
from .state_geom import bloch_coords, field_decomposition

__all__ = ["ConfigError", "RunConfig", "load_problem", "run", "main"]


class ConfigError(ValueError):
    """Problem file rejected: parse failure or inconsistent contents."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; flag overrides are applied before the solve."""

    config: str
    out_dir: str = "out"
    sigma: float | None = None
    steps: int | None = None
    tol: float | None = None
    max_iters: int | None = None
    coherent_k: int | None = None
    validate: bool = True
    label: str | None = None


def _as_pairs(node, what: str) -> np.ndarray:
    """[[re, im], ...] -> complex vector, with a named error on bad shape."""
    arr = np.asarray(node, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"{what} must be a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _parse_problem(
    doc: dict, sigma: float | None = None, steps: int | None = None
) -> tuple[ProblemSpec, list[str]]:
    """Build a validated ProblemSpec from a decoded problem document.

    Returns the spec plus human-readable notes about silent repairs
    (currently only input normalization), for the run summary.
    """
    if not isinstance(doc, dict):
        raise ConfigError("problem document must be a JSON object")
    for key in ("psi0", "targets", "sigma", "steps"):
        if key not in doc:
            raise ConfigError(f"problem document is missing {key!r}")

    notes = []
    psi0 = _as_pairs(doc["psi0"], "psi0")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        notes.append("psi0 was not normalized; rescaled to unit norm")

    targets = []
    for j, entry in enumerate(doc["targets"]):
        if not isinstance(entry, dict) or "state" not in entry or "time" not in entry:
            raise ConfigError(f"target {j} must be an object with state and time")
        state = _as_pairs(entry["state"], f"target {j} state")
        if state.size != psi0.size:
            raise ConfigError(
                f"target {j} has dimension {state.size}, psi0 has {psi0.size}"
            )
        if abs(np.linalg.norm(state) - 1.0) > 1e-9:
            notes.append(f"target {j} was not normalized; rescaled to unit norm")
        targets.append((state, float(entry["time"])))

    sig = float(doc["sigma"] if sigma is None else sigma)
    if not sig > 0.0:
        raise ConfigError(f"sigma must be positive, got {sig}")
    nsteps = int(doc["steps"] if steps is None else steps)

    h0 = doc.get("h0", "auto")
    if isinstance(h0, str):
        if h0 != "auto":
            raise ConfigError(f"h0 must be \"auto\" or a matrix, got {h0!r}")
        h0 = None
    else:
        rows = [_as_pairs(row, "h0 row") for row in h0]
        h0 = np.stack(rows)

    try:
        spec = make_problem(
            psi0,
            targets,
            sigma=sig,
            steps=nsteps,
            t0=float(doc.get("t0", 0.0)),
            t_final=doc.get("t_final"),
            h0=h0,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return spec, notes


def load_problem(path) -> ProblemSpec:
    """Read and validate a problem file; see the module docstring for the schema.

    Raises ConfigError with a line reference on malformed JSON, and with the
    offending field named on inconsistent contents.
    """
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read problem file: {err}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path} is not valid JSON: {err.msg} (line {err.lineno}, column {err.colno})"
        ) from None
    spec, _ = _parse_problem(doc)
    return spec


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_rows(target: Path, header: list, rows) -> None:
    with open(target, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_trajectory(spec: ProblemSpec, states: np.ndarray, out: Path) -> None:
    d = spec.dim
    header = ["t"]
    for i in range(d):
        header += [f"psi{i}_re", f"psi{i}_im"]
    if d == 2:
        header += ["bloch_x", "bloch_y", "bloch_z"]
    rows = []
    for t, s in zip(spec.times(), states):
        row = [t]
        for i in range(d):
            row += [s[i].real, s[i].imag]
        if d == 2:
            row += list(bloch_coords(s))
        rows.append(row)
    _write_rows(out / "trajectory.csv", header, rows)


def _write_hamiltonian(spec: ProblemSpec, H: np.ndarray, out: Path) -> None:
    d = spec.dim
    header = ["t"]
    for i in range(d):
        for j in range(d):
            header += [f"h{i}{j}_re", f"h{i}{j}_im"]
    if d == 2:
        header += ["omega", "axis_x", "axis_y", "axis_z", "degenerate"]
    rows = []
    for t, h in zip(spec.times(), H):
        h = np.asarray(h, dtype=complex)
        row = [t]
        for i in range(d):
            for j in range(d):
                row += [h[i, j].real, h[i, j].imag]
        if d == 2:
            dec = field_decomposition(h)
            row += [dec.omega, *dec.axis, float(dec.degenerate)]
        rows.append(row)
    _write_rows(out / "hamiltonian.csv", header, rows)


def _write_cost_history(sol: Solution, out: Path) -> None:
    _write_rows(
        out / "cost_history.csv",
        ["iter", "cost", "grad_norm", "step"],
        sol.history,
    )


def _write_coherent(sol: Solution, k: int, out: Path) -> None:
    spec = sol.spec
    occs = occupation_basis(spec.n, k)
    header = ["t"]
    for occ in occs:
        tag = "".join(str(c) for c in occ)
        header += [f"amp{tag}_re", f"amp{tag}_im"]
    rows = []
    for t, state in zip(spec.times(), embed_path(sol.path, k)):
        row = [t]
        for a in state.vec:
            row += [complex(a).real, complex(a).imag]
        rows.append(row)
    _write_rows(out / "coherent_trajectory.csv", header, rows)


def _pairs_out(vec: np.ndarray) -> list:
    return [[float(np.real(x)), float(np.imag(x))] for x in np.asarray(vec, dtype=complex)]


def _matrix_out(mat: np.ndarray) -> list:
    return [_pairs_out(row) for row in np.asarray(mat, dtype=complex)]


def _summary(
    cfg: RunConfig, spec: ProblemSpec, sol: Solution, notes: list, label
) -> dict:
    rate, mis = energies(sol.path)
    res_l, res_m = terminal_residual(sol.path)
    doc = {
        "label": label,
        "problem": {
            "psi0": _pairs_out(spec.psi0.vec),
            "targets": [
                {"state": _pairs_out(tp.state.vec), "time": tp.time}
                for tp in spec.targets.targets
            ],
            "sigma": spec.targets.sigma,
            "steps": spec.steps,
            "t0": spec.t0,
            "t_final": spec.t_final,
            "h0": _matrix_out(spec.h0.mat),
        },
        "solver": {
            "cost": sol.cost,
            "grad_norm": sol.grad_norm,
            "iterations": sol.iterations,
            "converged": sol.converged,
            "message": sol.message,
            "rate_energy": rate,
            "mismatch_energy": mis,
            "terminal_rate": res_l,
            "terminal_multiplier": res_m,
        },
        "notes": notes,
    }
    if sol.impulses:
        doc["solver"]["impulse_nodes"] = [int(node) for node, _ in sol.impulses]
    if cfg.coherent_k is not None:
        k = cfg.coherent_k
        doc["coherent"] = {
            "k": k,
            "dim": math.comb(spec.n + k, k),
            "metric_scale": metric_scale(k),
            "file": "coherent_trajectory.csv",
        }
    return doc


def run(cfg: RunConfig) -> int:
    """Execute one configured run; returns the process exit code."""
    try:
        try:
            text = Path(cfg.config).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read problem file: {err}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(
                f"{cfg.config} is not valid JSON: {err.msg} "
                f"(line {err.lineno}, column {err.colno})"
            ) from None
        if cfg.coherent_k is not None and cfg.coherent_k < 1:
            raise ConfigError(f"coherent order must be >= 1, got {cfg.coherent_k}")
        spec, notes = _parse_problem(doc, sigma=cfg.sigma, steps=cfg.steps)
        label = cfg.label if cfg.label is not None else doc.get("label")

        opts = DescentOptions()
        if cfg.tol is not None or cfg.max_iters is not None:
            opts = DescentOptions(
                grad_tol=cfg.tol if cfg.tol is not None else opts.grad_tol,
                max_iters=(
                    cfg.max_iters if cfg.max_iters is not None else opts.max_iters
                ),
            )
        sol = solve(spec, opts)

        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        states = np.asarray(sol.path.states(), dtype=complex)
        _write_trajectory(spec, states, out)
        _write_hamiltonian(spec, sol.path.H, out)
        _write_cost_history(sol, out)
        if cfg.coherent_k is not None:
            _write_coherent(sol, cfg.coherent_k, out)
        if cfg.validate:
            report = validate(sol)
            with open(out / "validation.json", "w") as fh:
                json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(out / "summary.json", "w") as fh:
            json.dump(_summary(cfg, spec, sol, notes, label), fh, indent=2, sort_keys=True)
            fh.write("\n")

        from .figures import render_report

        render_report(sol, out)

        res_l, res_m = terminal_residual(sol.path)
        print(
            f"cost={sol.cost:.12g} grad_norm={sol.grad_norm:.3e} "
            f"terminal=({res_l:.3e}, {res_m:.3e}) iterations={sol.iterations} "
            f"converged={sol.converged}"
        )
        return 0 if sol.converged else 2
    except (ConfigError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qspline",
        description="Solve a quantum-spline interpolation problem and write "
        "trajectory, Hamiltonian, and descent artifacts.",
    )
    p.add_argument("--config", required=True, help="problem file (JSON)")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--sigma", type=float, help="override the closeness weight")
    p.add_argument("--steps", type=int, help="override the grid step count")
    p.add_argument("--tol", type=float, help="gradient-norm stopping tolerance")
    p.add_argument("--max-iters", type=int, help="iteration budget for the descent")
    p.add_argument(
        "--coherent-k", type=int,
        help="also write the k-particle coherent trajectory",
    )
    p.add_argument(
        "--validate", default=True, action=argparse.BooleanOptionalAction,
        help="write validation.json with the convergence certificates",
    )
    p.add_argument("--label", help="run label recorded in the summary")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return run(
        RunConfig(
            config=args.config,
            out_dir=args.out_dir,
            sigma=args.sigma,
            steps=args.steps,
            tol=args.tol,
            max_iters=args.max_iters,
            coherent_k=args.coherent_k,
            validate=args.validate,
            label=args.label,
        )
    )


if __name__ == "__main__":
    sys.exit(main())
