"""Command-line front end.

    fcsim [sweep|schmidt|cascade|design|oracle-check] --config run.json --out DIR

The config is a flat JSON object; see ``RunConfig`` for keys and ranges.
Exit codes: 0 success, 1 unexpected failure, 2 config error, 3 numerical
non-convergence, 4 infeasible design. On failure ``error.json`` is written
to the output directory and any partial outputs are removed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from .coupling import (ConvergenceError, CouplingKernel, GridCoverageError, build_j1,
                       default_time_window, integrate_coupling, pump_integral_quadrature)
from .domain import DeviceParams, PmfKind, default_grids, matched_input_photon, mu_parameters
from .experiments import (MODELS, CascadeSpec, InfeasibleDesignError, cascade_unitary,
                          default_strengths, design_mu_zero, rotation_norm, sweep_efficiency)
from .propagate import (UnitarityError, magnus_generators, magnus_unitary,
                        time_ordered_unitary)
from .schmidt import conversion_probability, schmidt_decompose

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_INFEASIBLE = 4

EXPERIMENTS = ("sweep", "schmidt", "cascade", "design", "oracle-check")
SWEEP_HEADER = ("strength", "eff_toc", "eff_no_toc", "r1", "r2", "r3", "r4", "c0_sq", "c1_sq")
CASCADE_HEADER = ("stages", "strength", "eff_toc", "eff_no_toc", "rotation_norm")
FLOAT_FORMAT = "{:.11e}"  # 12 significant digits


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    # device
    s_a: float = 0.5
    s_b: float = 3.0
    s_p: float = 1.0
    tau: float = 1.0
    gamma: float = 0.193
    pmf_kind: str = "gaussian"
    # strength grid: strength = r0_tilde * epsilon
    epsilon_max: Optional[float] = None
    strength_max: Optional[float] = None
    n_strengths: int = 65
    model: str = "exact"
    photon_order: int = 0
    # cascade
    stages: tuple = (1, 2, 4, 10)
    cascade_strength: float = math.pi / 2
    # oracle-check
    check_strength: float = 0.5
    # grids and numerics
    n_points: int = 64
    half_width_factor: float = 6.0
    n_steps: int = 512
    oracle_tol: float = 1e-8
    magnus_panels: int = 48
    magnus_nodes: int = 16
    magnus_tol: float = 1e-8
    output_name: Optional[str] = None

    def device(self, epsilon: float = 0.0) -> DeviceParams:
        return DeviceParams(self.s_a, self.s_b, self.s_p, self.tau, self.gamma,
                            epsilon, PmfKind(self.pmf_kind))

    def strengths(self) -> np.ndarray:
        if self.epsilon_max is not None:
            r0 = mu_parameters(self.device()).r0_tilde
            return default_strengths(self.n_strengths, r0 * self.epsilon_max)
        stop = 3.25 if self.strength_max is None else self.strength_max
        return default_strengths(self.n_strengths, stop)

    @property
    def name(self) -> str:
        return self.output_name or self.experiment

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["stages"] = list(self.stages)
        return out


# key -> (kind, lo, hi); kind "float" ranges are inclusive unless noted
_RANGES = {
    "s_a": ("float", -1e3, 1e3), "s_b": ("float", -1e3, 1e3), "s_p": ("float", -1e3, 1e3),
    "tau": ("float+", 0.0, 1e3), "gamma": ("float+", 0.0, 10.0),
    "epsilon_max": ("float", 0.0, 1e3), "strength_max": ("float", 0.0, 20.0),
    "n_strengths": ("int", 2, 10001), "photon_order": ("int", 0, 20),
    "cascade_strength": ("float", 0.0, 20.0), "check_strength": ("float+", 0.0, 5.0),
    "n_points": ("int", 8, 256), "half_width_factor": ("float", 2.0, 30.0),
    "n_steps": ("int", 64, 1 << 16), "oracle_tol": ("float+", 0.0, 1e-2),
    "magnus_panels": ("int", 2, 4096), "magnus_nodes": ("int", 2, 64),
    "magnus_tol": ("float+", 0.0, 1e-2),
}
_CHOICES = {"experiment": EXPERIMENTS, "pmf_kind": tuple(k.value for k in PmfKind),
            "model": MODELS}


def _check_number(key, value, kind, lo, hi):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind == "int":
        if int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key} must be finite, got {value!r}")
    low_ok = value > lo if kind == "float+" else value >= lo
    if not (low_ok and value <= hi):
        bracket = "(" if kind == "float+" else "["
        raise ConfigError(f"{key}={value!r} out of range, permitted {bracket}{lo}, {hi}]")
    return value


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config document and fill defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(repr(k) for k in unknown)}")
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'")
    values = {}
    for key, value in raw.items():
        if key in _CHOICES:
            if value not in _CHOICES[key]:
                raise ConfigError(f"{key}={value!r} not one of {list(_CHOICES[key])}")
        elif key in _RANGES:
            if value is None and key in ("epsilon_max", "strength_max"):
                pass
            else:
                value = _check_number(key, value, *_RANGES[key])
        elif key == "stages":
            if not isinstance(value, list) or not value:
                raise ConfigError("stages must be a non-empty list of integers")
            value = tuple(_check_number("stages", v, "int", 1, 1000) for v in value)
        elif key == "output_name":
            if value is not None and (not isinstance(value, str) or not value
                                      or os.sep in value or value.startswith(".")):
                raise ConfigError(f"output_name must be a plain file stem, got {value!r}")
        values[key] = value
    if values.get("epsilon_max") is not None and values.get("strength_max") is not None:
        raise ConfigError("give at most one of epsilon_max and strength_max")
    cfg = RunConfig(**values)
    try:
        cfg.device()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical JSON form (sorted keys, all defaults explicit)."""
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FORMAT.format(float(v))


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# experiments

def _sweep(cfg: RunConfig, threads):
    params = cfg.device()
    grids = default_grids(params, cfg.n_points, cfg.half_width_factor)
    photon = matched_input_photon(params, grids[0], cfg.photon_order)
    result = sweep_efficiency(params, cfg.strengths(), photon, model=cfg.model, top_k=4,
                              grids=grids, n_steps=cfg.n_steps, tol=cfg.oracle_tol,
                              magnus_panels=cfg.magnus_panels, magnus_nodes=cfg.magnus_nodes,
                              magnus_tol=cfg.magnus_tol, workers=threads)
    return {"csv": _csv_text(SWEEP_HEADER, result.rows())}, result.metadata


def _cascade(cfg: RunConfig, threads):
    base = cfg.device()
    r0 = mu_parameters(base).r0_tilde
    params = base.with_epsilon(cfg.cascade_strength / r0)
    grid_a, grid_b = default_grids(base, cfg.n_points, cfg.half_width_factor)
    photon = matched_input_photon(base, grid_a, cfg.photon_order)
    rows = []
    for n in cfg.stages:
        U = cascade_unitary(CascadeSpec(params, n), grid_a, grid_b,
                            n_steps=cfg.n_steps, tol=cfg.oracle_tol)
        rows.append((n, cfg.cascade_strength, conversion_probability(U, photon),
                     math.sin(cfg.cascade_strength) ** 2, rotation_norm(U)))
    meta = {"r0_tilde": r0, "grid_a": grid_a.to_dict(), "grid_b": grid_b.to_dict(),
            "n_steps": cfg.n_steps, "oracle_tol": cfg.oracle_tol}
    return {"csv": _csv_text(CASCADE_HEADER, rows)}, meta


def _design(cfg: RunConfig, threads):
    tau = design_mu_zero(cfg.s_a, cfg.s_b, cfg.s_p)
    mu = mu_parameters(DeviceParams(cfg.s_a, cfg.s_b, cfg.s_p, tau, cfg.gamma))
    report = {"tau": tau, "mu_sq": mu.mu_sq, "mu_a": mu.mu_a, "mu_b": mu.mu_b,
              "r0_tilde": mu.r0_tilde}
    return {"json": json.dumps(report, sort_keys=True, indent=2) + "\n"}, {}


def _oracle_check(cfg: RunConfig, threads):
    base = cfg.device()
    r0 = mu_parameters(base).r0_tilde
    params = base.with_epsilon(cfg.check_strength / r0)
    ga, gb = default_grids(base, cfg.n_points, cfg.half_width_factor)
    photon = matched_input_photon(base, ga, cfg.photon_order)
    checks = []

    def record(name, measured, tol):
        checks.append({"name": name, "measured": float(measured), "tol": tol,
                       "passed": bool(measured <= tol)})

    j1 = build_j1(params, ga, gb)
    integral = integrate_coupling(params, ga, gb)
    record("integrate_coupling_vs_build_j1",
           np.abs(integral - 2 * math.pi * j1.values).max() / np.abs(j1.values).max() / (2 * math.pi),
           1e-6)
    if base.pmf_kind is PmfKind.GAUSSIAN:
        kernel = CouplingKernel(params, ga, gb)
        worst = 0.0
        for t in (-2.0 * params.tau, 0.0, 1.3 * params.tau):
            closed = kernel.m(t)
            quad = -params.epsilon * kernel.weight * pump_integral_quadrature(params, ga, gb, t) * (
                np.exp(1j * gb.detunings * t)[:, None] * np.exp(-1j * ga.detunings * t)[None, :])
            worst = max(worst, np.abs(closed - quad).max() / np.abs(closed).max())
        record("pump_integral_closed_form_vs_quadrature", worst, 1e-9)
    U = time_ordered_unitary(params, ga, gb, n_steps=cfg.n_steps, tol=cfg.oracle_tol)
    record("oracle_unitarity", U.unitarity_error(), 1e-10)
    remain, converted = U.aa @ photon.amplitudes, U.ba @ photon.amplitudes
    record("parseval", abs(np.vdot(remain, remain).real + np.vdot(converted, converted).real - 1), 1e-10)
    sd = schmidt_decompose(U)
    c = sd.input_modes.conj().T @ photon.amplitudes
    record("probability_via_schmidt_sum",
           abs(conversion_probability(U, photon) - float(np.sum(np.abs(c) ** 2 * np.sin(sd.r_theta) ** 2))),
           1e-10)
    gens = magnus_generators(params, ga, gb, n_panels=cfg.magnus_panels,
                             nodes_per_panel=cfg.magnus_nodes, tol=cfg.magnus_tol)
    record("magnus3_vs_oracle_max_deviation",
           np.abs(magnus_unitary(gens).matrix - U.matrix).max(), 1e-3)
    first = magnus_unitary(gens, order=1)
    s_first = np.linalg.svd(first.ba, compute_uv=False)
    r1 = schmidt_decompose(j1).r_theta
    k = r1.size
    record("exp_omega1_vs_first_order_schmidt", np.abs(s_first[:k] - np.sin(r1)).max(), 1e-8)
    if mu_parameters(base).mu_sq == 0.0 and base.pmf_kind is PmfKind.GAUSSIAN:
        s = np.linalg.svd(j1.values, compute_uv=False)
        record("mu_zero_rank_one", s[1] / s[0], 1e-6)
    passed = all(c["passed"] for c in checks)
    report = {"passed": passed, "checks": checks}
    meta = {"r0_tilde": r0, "check_strength": cfg.check_strength,
            "time_window": default_time_window(params),
            "grid_a": ga.to_dict(), "grid_b": gb.to_dict()}
    outputs = {"json": json.dumps(report, sort_keys=True, indent=2) + "\n"}
    if not passed:
        failed = [c["name"] for c in checks if not c["passed"]]
        raise _CheckFailure(f"consistency checks failed: {', '.join(failed)}", outputs, meta)
    return outputs, meta


class _CheckFailure(RuntimeError):
    def __init__(self, message, outputs, meta):
        super().__init__(message)
        self.outputs = outputs
        self.meta = meta


_DISPATCH = {"sweep": _sweep, "schmidt": _sweep, "cascade": _cascade,
             "design": _design, "oracle-check": _oracle_check}


def _write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _error_status(exc: BaseException):
    if isinstance(exc, InfeasibleDesignError):
        return EXIT_INFEASIBLE, "infeasible"
    if isinstance(exc, (ConfigError, GridCoverageError)):
        return EXIT_CONFIG, "config_error"
    if isinstance(exc, (ConvergenceError, UnitarityError, _CheckFailure)):
        return EXIT_CONVERGENCE, "non_convergence"
    return EXIT_FAILURE, "error"


def _write_error(out_dir: Path, exc: BaseException) -> int:
    code, status = _error_status(exc)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"status": status, "exit_code": code, "type": type(exc).__name__,
               "message": str(exc)}
    _write_atomic(out_dir / "error.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return code


def run(cfg: RunConfig, out_dir="out", threads: Optional[int] = None,
        seed: Optional[int] = None) -> int:
    """Run one experiment and write ``<name>.csv`` / ``<name>.json`` plus ``<name>.meta.json``."""
    out_dir = Path(out_dir)
    written = []
    start = time.perf_counter()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"output directory {out_dir} is not writable")
        stale = out_dir / "error.json"
        if stale.exists():
            stale.unlink()
        outputs, meta = _DISPATCH[cfg.experiment](cfg, threads)
        for ext, text in outputs.items():
            path = out_dir / f"{cfg.name}.{ext}"
            written.append(path)
            _write_atomic(path, text)
        sidecar = {
            "tool": "fcsim",
            "version": _tool_version(),
            "config": cfg.to_dict(),
            "derived": meta,
            "outputs": [p.name for p in written],
            "threads": threads,
            "seed": seed,
            "wall_time_s": time.perf_counter() - start,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        }
        path = out_dir / f"{cfg.name}.meta.json"
        written.append(path)
        _write_atomic(path, json.dumps(sidecar, sort_keys=True, indent=2, default=str) + "\n")
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code
        for path in written:
            path.unlink(missing_ok=True)
        if isinstance(exc, _CheckFailure):
            # the failing report is the useful artifact of a check run
            for ext, text in exc.outputs.items():
                _write_atomic(out_dir / f"{cfg.name}.{ext}", text)
        code = _write_error(out_dir, exc)
        print(f"fcsim: {exc}", file=sys.stderr)
        return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcsim", description=__doc__.split("\n\n")[0])
    parser.add_argument("experiment", nargs="?", choices=EXPERIMENTS,
                        help="overrides or must match the config's experiment")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default="out", help="output directory (default ./out)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for sweep points (default all cores)")
    parser.add_argument("--seed", type=int, default=None,
                        help="reserved; nothing is stochastic")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        raw = json.loads(text) if text.strip() else {}
        if args.experiment is not None and isinstance(raw, dict):
            if "experiment" in raw and raw["experiment"] != args.experiment:
                raise ConfigError(f"subcommand {args.experiment!r} does not match config "
                                  f"experiment {raw['experiment']!r}")
            raw = dict(raw, experiment=args.experiment)
            text = json.dumps(raw)
        cfg = parse_config(text)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (OSError, ValueError) as exc:
        if not isinstance(exc, ConfigError):
            exc = ConfigError(str(exc))
        print(f"fcsim: {exc}", file=sys.stderr)
        return _write_error(out_dir, exc)
    return run(cfg, out_dir, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
