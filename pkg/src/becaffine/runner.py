"""Scenario orchestration: config parsing, runs, manifests, verification.

A scenario is described by a plain JSON document. Every run writes its
outputs plus a manifest.json recording the configuration, library versions,
timings, warnings, result numbers, self-checks (as value/threshold pairs)
and a sha256 checksum per output file, so a finished run directory can be
verified without recomputing the physics. All scenarios are deterministic:
fixed-step integrators, deterministic initial data, no random numbers.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .affine import AdaptiveState, analytic_lambda_isotropic, longtime_coefficients, \
    scaling_diagonal_rhs
from .gpe import FieldState, Grid2D, grid_observables, ground_state_imaginary_time, \
    moment_principal_angle, propagate_real, unwrap_principal_angles
from .gridio import write_csv, write_grid
from .integrators import rk4_step
from .thomas_fermi import chemical_potential_tf
from .trap import RotationSchedule, TrapConfig, TrapSchedule

__all__ = ["ScenarioConfig", "parse_config", "config_warnings",
           "run_scenario", "verify_run", "RATE_WARNING_THRESHOLD"]

KINDS = ("ground-state", "rotate", "rotate-release",
         "free-expansion-analytic", "sweep")

# Rotation rates at or above this fraction of omega_x destabilize the
# cloud shape; runs are allowed but flagged.
RATE_WARNING_THRESHOLD = 0.71


@dataclass(frozen=True)
class SweepCell:
    epsilon: float
    g_n: float
    rate_end: float


@dataclass
class ScenarioConfig:
    kind: str
    epsilon: float = 1.5
    g_n: float = 100.0
    omega_x: float = 1.0
    rate_end: float = 0.4
    t_bar_end: float = 15.0
    t_bar_off: Optional[float] = None
    grid_n: int = 128
    grid_length: float = 20.0
    dt: float = 1e-3
    t_bar_total: Optional[float] = None
    sample_every: int = 25
    snapshot_every: Optional[int] = None
    gs_dt: float = 2e-3
    gs_tol: float = 1e-12
    gs_max_steps: int = 40000
    write_fields: bool = True
    expansion_d: int = 2
    expansion_omega0: float = 1.0
    expansion_t_max: float = 10.0
    expansion_samples: int = 201
    sweep_cells: tuple = ()

    def trap_config(self, epsilon: Optional[float] = None,
                    g_n: Optional[float] = None) -> TrapConfig:
        return TrapConfig.two_dimensional(
            epsilon=self.epsilon if epsilon is None else epsilon,
            g_n=self.g_n if g_n is None else g_n,
            omega_x=self.omega_x)

    def resolved_t_bar_total(self) -> float:
        if self.t_bar_total is not None:
            return self.t_bar_total
        if self.kind == "rotate-release":
            return self.resolved_t_bar_off() + 14.0
        return self.t_bar_end + 6.0

    def resolved_t_bar_off(self) -> float:
        if self.t_bar_off is not None:
            return self.t_bar_off
        return self.t_bar_end + 1.0

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega_x


def _require_keys(section: dict, allowed: dict, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ValueError(f"unknown configuration key {path}{key}")


def _number(section: dict, key: str, default, path: str, minimum=None,
            strict_min=False, allow_none=False):
    val = section.get(key, default)
    if val is None:
        if allow_none:
            return None
        raise ValueError(f"{path}{key} must be a number")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValueError(f"{path}{key} must be a number")
    val = float(val)
    if minimum is not None:
        if strict_min and val <= minimum:
            raise ValueError(f"{path}{key} must be greater than {minimum}")
        if not strict_min and val < minimum:
            raise ValueError(f"{path}{key} must be at least {minimum}")
    return val


def _integer(section: dict, key: str, default, path: str, minimum=1,
             allow_none=False):
    val = section.get(key, default)
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, int):
        raise ValueError(f"{path}{key} must be an integer")
    if val < minimum:
        raise ValueError(f"{path}{key} must be at least {minimum}")
    return val


def parse_config(raw: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a plain dict, rejecting unknown keys.

    Every error message names the offending key by its dotted path.
    """
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a mapping")
    _require_keys(raw, {"kind": 1, "trap": 1, "rotation": 1, "grid": 1,
                        "evolution": 1, "ground_state": 1, "expansion": 1,
                        "sweep": 1, "output": 1}, "")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")

    trap = raw.get("trap", {})
    _require_keys(trap, {"epsilon": 1, "g_n": 1, "omega_x": 1}, "trap.")
    epsilon = _number(trap, "epsilon", 1.5, "trap.", minimum=0.0, strict_min=True)
    g_n = _number(trap, "g_n", 100.0, "trap.", minimum=0.0)
    omega_x = _number(trap, "omega_x", 1.0, "trap.", minimum=0.0, strict_min=True)

    rot = raw.get("rotation", {})
    _require_keys(rot, {"rate_end": 1, "t_bar_end": 1, "t_bar_off": 1}, "rotation.")
    rate_end = _number(rot, "rate_end", 0.4, "rotation.", minimum=0.0)
    t_bar_end = _number(rot, "t_bar_end", 15.0, "rotation.", minimum=0.0,
                        strict_min=True)
    t_bar_off = _number(rot, "t_bar_off", None, "rotation.", allow_none=True)
    if t_bar_off is not None and t_bar_off < t_bar_end:
        raise ValueError("rotation.t_bar_off must not precede rotation.t_bar_end: "
                         "switch-off during the ramp is not supported")

    grid = raw.get("grid", {})
    _require_keys(grid, {"n": 1, "length": 1}, "grid.")
    grid_n = _integer(grid, "n", 128, "grid.", minimum=8)
    grid_length = _number(grid, "length", 20.0, "grid.", minimum=0.0, strict_min=True)

    evo = raw.get("evolution", {})
    _require_keys(evo, {"dt": 1, "t_bar_total": 1, "sample_every": 1,
                        "snapshot_every": 1}, "evolution.")
    dt = _number(evo, "dt", 1e-3, "evolution.", minimum=0.0, strict_min=True)
    t_bar_total = _number(evo, "t_bar_total", None, "evolution.", allow_none=True,
                          minimum=0.0, strict_min=True)
    sample_every = _integer(evo, "sample_every", 25, "evolution.")
    snapshot_every = _integer(evo, "snapshot_every", None, "evolution.",
                              allow_none=True)

    gs = raw.get("ground_state", {})
    _require_keys(gs, {"dt": 1, "tol": 1, "max_steps": 1}, "ground_state.")
    gs_dt = _number(gs, "dt", 2e-3, "ground_state.", minimum=0.0, strict_min=True)
    gs_tol = _number(gs, "tol", 1e-12, "ground_state.", minimum=0.0, strict_min=True)
    gs_max_steps = _integer(gs, "max_steps", 40000, "ground_state.")

    exp = raw.get("expansion", {})
    _require_keys(exp, {"d": 1, "omega0": 1, "t_max": 1, "samples": 1}, "expansion.")
    expansion_d = _integer(exp, "d", 2, "expansion.", minimum=1)
    if expansion_d not in (1, 2, 3):
        raise ValueError("expansion.d must be 1, 2 or 3")
    expansion_omega0 = _number(exp, "omega0", 1.0, "expansion.", minimum=0.0,
                               strict_min=True)
    expansion_t_max = _number(exp, "t_max", 10.0, "expansion.", minimum=0.0,
                              strict_min=True)
    expansion_samples = _integer(exp, "samples", 201, "expansion.", minimum=2)

    sweep = raw.get("sweep", {})
    _require_keys(sweep, {"cells": 1}, "sweep.")
    cells = []
    for i, cell in enumerate(sweep.get("cells", [])):
        path = f"sweep.cells[{i}]."
        if not isinstance(cell, dict):
            raise ValueError(f"sweep.cells[{i}] must be a mapping")
        _require_keys(cell, {"epsilon": 1, "g_n": 1, "rate_end": 1}, path)
        cells.append(SweepCell(
            epsilon=_number(cell, "epsilon", None, path, minimum=0.0, strict_min=True),
            g_n=_number(cell, "g_n", None, path, minimum=0.0),
            rate_end=_number(cell, "rate_end", None, path, minimum=0.0)))
    if kind == "sweep" and not cells:
        raise ValueError("sweep.cells must list at least one cell")

    out = raw.get("output", {})
    _require_keys(out, {"fields": 1}, "output.")
    write_fields = out.get("fields", True)
    if not isinstance(write_fields, bool):
        raise ValueError("output.fields must be true or false")

    cfg = ScenarioConfig(
        kind=kind, epsilon=epsilon, g_n=g_n, omega_x=omega_x,
        rate_end=rate_end, t_bar_end=t_bar_end, t_bar_off=t_bar_off,
        grid_n=grid_n, grid_length=grid_length, dt=dt,
        t_bar_total=t_bar_total, sample_every=sample_every,
        snapshot_every=snapshot_every, gs_dt=gs_dt, gs_tol=gs_tol,
        gs_max_steps=gs_max_steps, write_fields=write_fields,
        expansion_d=expansion_d, expansion_omega0=expansion_omega0,
        expansion_t_max=expansion_t_max, expansion_samples=expansion_samples,
        sweep_cells=tuple(cells))
    if cfg.kind in ("rotate", "rotate-release", "sweep"):
        total = cfg.resolved_t_bar_total()
        floor = cfg.resolved_t_bar_off() if cfg.kind == "rotate-release" else cfg.t_bar_end
        if total < floor:
            raise ValueError("evolution.t_bar_total ends the run before the "
                             "rotation schedule completes")
    return cfg


def config_warnings(cfg: ScenarioConfig) -> list:
    """Non-fatal issues worth surfacing: fast rotation near instability."""
    warn = []
    rates = [cfg.rate_end] + [c.rate_end for c in cfg.sweep_cells]
    if cfg.kind in ("rotate", "rotate-release", "sweep"):
        for rate in rates:
            if rate >= RATE_WARNING_THRESHOLD:
                warn.append(
                    f"rotation rate {rate:g} omega_x is at or above "
                    f"{RATE_WARNING_THRESHOLD} omega_x; the cloud shape can "
                    "become dynamically unstable")
                break
    return warn


# ---------------------------------------------------------------------------
# pieces shared by scenario kinds

def _assertion(name: str, value: float, op: str, threshold: float) -> dict:
    passed = {"<=": value <= threshold, "<": value < threshold,
              ">=": value >= threshold, ">": value > threshold}[op]
    return {"name": name, "value": float(value), "op": op,
            "threshold": float(threshold), "passed": bool(passed)}


def _ground_state(cfg: ScenarioConfig, tc: TrapConfig) -> FieldState:
    grid = Grid2D(n=cfg.grid_n, length=cfg.grid_length)
    return ground_state_imaginary_time(grid, tc, dt=cfg.gs_dt, tol=cfg.gs_tol,
                                       max_steps=cfg.gs_max_steps)


def _rotating_run(cfg: ScenarioConfig, tc: TrapConfig, released: bool):
    """Ground state, then rotating (optionally released) propagation."""
    rotation = RotationSchedule.from_periods(
        rate_end=cfg.rate_end * cfg.omega_x, t_bar_end=cfg.t_bar_end,
        t_bar_off=cfg.resolved_t_bar_off() if released else None,
        omega_x=cfg.omega_x)
    schedule = TrapSchedule.rotating(tc, rotation)
    gs = _ground_state(cfg, tc)
    n_steps = int(round(cfg.resolved_t_bar_total() * cfg.period / cfg.dt))
    log = propagate_real(gs, AdaptiveState.identity(2), schedule, cfg.dt,
                         n_steps, stride=cfg.sample_every,
                         snapshot_stride=cfg.snapshot_every)
    return gs, schedule, log


def _write_field_state(path: Path, state: FieldState) -> None:
    g = state.grid
    write_grid(path, state.amps, dx=(g.dx, g.dx),
               origin=(float(g.axis[0]), float(g.axis[0])))


def _bures_csv(path: Path, log) -> None:
    write_csv(path,
              ["tau", "bures", "residual_l2", "norm", "boundary_mass", "det_lam"],
              zip(log.ts, log.bures_vs_ref, log.residual_l2, log.norms,
                  log.boundary_mass, log.det_lams))


def _matrix_csv(path: Path, log) -> None:
    rows = []
    for i, t in enumerate(log.ts):
        l, ld = log.lams[i], log.lam_dots[i]
        rows.append([t, l[0, 0], l[0, 1], l[1, 0], l[1, 1],
                     ld[0, 0], ld[0, 1], ld[1, 0], ld[1, 1], log.betas[i]])
    write_csv(path, ["tau", "l_xx", "l_xy", "l_yx", "l_yy",
                     "ld_xx", "ld_xy", "ld_yx", "ld_yy", "beta"], rows)


def _common_run_assertions(log, n_atoms: float) -> list:
    return [
        _assertion("norm_drift", float(np.max(np.abs(log.norms - log.norms[0]))),
                   "<=", 1e-6 * n_atoms),
        _assertion("irrotationality_residual", log.max_irrot_residual, "<=", 1e-8),
        _assertion("boundary_mass", float(np.max(log.boundary_mass)),
                   "<=", 1e-8 * n_atoms),
    ]


# ---------------------------------------------------------------------------
# scenario kinds

def _run_ground_state(cfg: ScenarioConfig, out_dir: Path):
    tc = cfg.trap_config()
    gs = _ground_state(cfg, tc)
    obs = grid_observables(gs.grid, gs.amps)
    outputs = []
    if cfg.write_fields:
        _write_field_state(out_dir / "ground.becgrid", gs)
        outputs.append("ground.becgrid")
    results = {
        "mu_grid": gs.mu,
        "mu_parabola": chemical_potential_tf(tc),
        "norm": gs.norm,
        "r_mean": obs["r_mean"].tolist(),
        "second_moment": obs["second_moment"].tolist(),
        "boundary_mass": gs.boundary_mass,
    }
    assertions = [
        _assertion("norm_error", abs(gs.norm - tc.n_atoms), "<=", 1e-9 * tc.n_atoms),
        _assertion("boundary_mass", gs.boundary_mass, "<=", 1e-8 * tc.n_atoms),
    ]
    return results, assertions, outputs


def _run_rotate(cfg: ScenarioConfig, out_dir: Path):
    tc = cfg.trap_config()
    gs, schedule, log = _rotating_run(cfg, tc, released=False)
    _bures_csv(out_dir / "bures.csv", log)
    _matrix_csv(out_dir / "matrix.csv", log)
    outputs = ["bures.csv", "matrix.csv"]
    if cfg.write_fields:
        _write_field_state(out_dir / "final.becgrid", log.field_final)
        outputs.append("final.becgrid")
    i_max = int(np.argmax(log.bures_vs_ref))
    results = {
        "mu_grid": gs.mu,
        "b_rot_max": float(log.bures_vs_ref[i_max]),
        "t_at_b_rot_max": float(log.ts[i_max]),
        "residual_l2_max": float(np.max(log.residual_l2)),
        "max_irrot_residual": log.max_irrot_residual,
        "final_norm": log.norms[-1].item(),
    }
    return results, _common_run_assertions(log, tc.n_atoms), outputs


def _run_rotate_release(cfg: ScenarioConfig, out_dir: Path):
    tc = cfg.trap_config()
    cfg_eff = cfg
    if cfg.snapshot_every is None:
        # one snapshot per time unit for the axis-angle track
        cfg_eff = ScenarioConfig(**{**cfg.__dict__,
                                    "snapshot_every": max(1, round(1.0 / cfg.dt))})
    gs, schedule, log = _rotating_run(cfg_eff, tc, released=True)
    _bures_csv(out_dir / "bures.csv", log)
    _matrix_csv(out_dir / "matrix.csv", log)
    outputs = ["bures.csv", "matrix.csv"]
    if cfg.write_fields:
        _write_field_state(out_dir / "final.becgrid", log.field_final)
        outputs.append("final.becgrid")

    t_off = cfg.resolved_t_bar_off() * cfg.period
    post = log.ts >= t_off - 1e-9
    pre = ~post
    b = log.bures_vs_ref
    # lab-frame long-axis angle from the exactly mapped second moment
    angle_rows = []
    angles = []
    for snap in log.snapshots:
        if snap.tau < t_off - 1e-9:
            continue
        m_zeta = grid_observables(gs.grid, snap.amps)["second_moment"]
        m_lab = snap.lam @ m_zeta @ snap.lam.T
        angles.append(moment_principal_angle(m_lab))
        angle_rows.append(snap.tau)
    unwrapped = unwrap_principal_angles(np.array(angles)) if angles else np.zeros(0)
    write_csv(out_dir / "angles.csv", ["tau", "angle"],
              zip(angle_rows, unwrapped))
    outputs.append("angles.csv")

    results = {
        "mu_grid": gs.mu,
        "b_rot_pre_max": float(np.max(b[pre])) if pre.any() else float("nan"),
        "b_post_max": float(np.max(b[post])) if post.any() else float("nan"),
        "b_post_final": float(b[-1]),
        "extra_rotation_after_release":
            float(unwrapped[-1] - unwrapped[0]) if unwrapped.size else float("nan"),
        "max_irrot_residual": log.max_irrot_residual,
    }
    return results, _common_run_assertions(log, tc.n_atoms), outputs


def _expansion_numeric(d: int, omega0: float, ts: np.ndarray) -> np.ndarray:
    """Fixed-step integration of the isotropic scaling factor on ts."""
    w2 = np.full(d, omega0 ** 2)

    def rhs(_, y):
        lam, vel = y[:d], y[d:]
        return np.concatenate([vel, scaling_diagonal_rhs(lam, np.zeros(d), w2)])

    out = np.empty(ts.size)
    out[0] = 1.0
    y = np.concatenate([np.ones(d), np.zeros(d)])
    h_target = 1e-3 / omega0
    for i in range(1, ts.size):
        span = float(ts[i] - ts[i - 1])
        n_sub = max(1, int(math.ceil(span / h_target)))
        h = span / n_sub
        t = float(ts[i - 1])
        for _ in range(n_sub):
            y = rk4_step(rhs, t, y, h)
            t += h
        out[i] = y[0]
    return out


def _run_expansion(cfg: ScenarioConfig, out_dir: Path):
    d, omega0 = cfg.expansion_d, cfg.expansion_omega0
    ts = np.linspace(0.0, cfg.expansion_t_max, cfg.expansion_samples)
    lam_analytic = analytic_lambda_isotropic(d, omega0, ts)
    lam_numeric = _expansion_numeric(d, omega0, ts)
    diff = np.abs(lam_analytic - lam_numeric)
    write_csv(out_dir / "expansion.csv",
              ["t", "lambda_analytic", "lambda_numeric", "abs_diff"],
              zip(ts, lam_analytic, lam_numeric, diff))
    results = {"d": d, "omega0": omega0, "max_abs_diff": float(np.max(diff))}
    try:
        a_fit, b_fit, rms = longtime_coefficients(ts, lam_analytic)
        results["asymptote_intercept"] = a_fit
        results["asymptote_slope"] = b_fit
        results["asymptote_rms"] = rms
    except ValueError:
        results["asymptote_slope"] = None
    assertions = [_assertion("analytic_vs_numeric", float(np.max(diff)),
                             "<=", 1e-6)]
    return results, assertions, ["expansion.csv"]


def _sweep_cell_worker(args: tuple) -> dict:
    (epsilon, g_n, rate_end, base) = args
    cfg = ScenarioConfig(**{**base, "kind": "rotate", "epsilon": epsilon,
                            "g_n": g_n, "rate_end": rate_end,
                            "write_fields": False})
    tc = cfg.trap_config()
    t0 = time.perf_counter()
    _, _, log = _rotating_run(cfg, tc, released=False)
    return {
        "epsilon": epsilon, "g_n": g_n, "rate_end": rate_end,
        "b_rot_max": float(np.max(log.bures_vs_ref)),
        "norm_drift": float(np.max(np.abs(log.norms - log.norms[0]))),
        "max_irrot_residual": log.max_irrot_residual,
        "boundary_mass_max": float(np.max(log.boundary_mass)),
        "seconds": time.perf_counter() - t0,
    }


def _run_sweep(cfg: ScenarioConfig, out_dir: Path, jobs: int):
    base = dict(cfg.__dict__)
    base.pop("sweep_cells")
    tasks = [(c.epsilon, c.g_n, c.rate_end, base) for c in cfg.sweep_cells]
    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.Pool(processes=min(jobs, len(tasks))) as pool:
            cells = pool.map(_sweep_cell_worker, tasks)
    else:
        cells = [_sweep_cell_worker(t) for t in tasks]
    write_csv(out_dir / "sweep.csv",
              ["epsilon", "g_n", "rate_end", "b_rot_max"],
              [[c["epsilon"], c["g_n"], c["rate_end"], c["b_rot_max"]]
               for c in cells])
    assertions = []
    for c in cells:
        tag = f"eps={c['epsilon']:g},g_n={c['g_n']:g},rate={c['rate_end']:g}"
        assertions.append(_assertion(f"norm_drift[{tag}]", c["norm_drift"],
                                     "<=", 1e-6))
        assertions.append(_assertion(f"boundary_mass[{tag}]",
                                     c["boundary_mass_max"], "<=", 1e-8))
    return {"cells": cells}, assertions, ["sweep.csv"]


# ---------------------------------------------------------------------------
# entry points

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def run_scenario(cfg: ScenarioConfig, out_dir, jobs: int = 1) -> dict:
    """Execute a scenario and write its outputs and manifest.json.

    Returns the manifest dict. On an error the manifest is still written,
    with status "error" and the message, before the exception propagates.
    Status is "ok" only when every recorded self-check passed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "bec-run-manifest/1",
        "status": "incomplete",
        "kind": cfg.kind,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in cfg.__dict__.items() if k != "sweep_cells"},
        "sweep_cells": [c.__dict__ for c in cfg.sweep_cells],
        "units": "hbar = m = 1; frequencies in omega_x, durations in trap periods",
        "determinism": "fixed-step integrators and deterministic initial data; "
                       "no random numbers. Reruns with identical configuration "
                       "and library versions reproduce outputs byte for byte.",
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "warnings": config_warnings(cfg),
        "timings": {},
        "results": {},
        "assertions": [],
        "outputs": {},
    }
    t_start = time.perf_counter()
    try:
        if cfg.kind == "ground-state":
            results, assertions, outputs = _run_ground_state(cfg, out_dir)
        elif cfg.kind == "rotate":
            results, assertions, outputs = _run_rotate(cfg, out_dir)
        elif cfg.kind == "rotate-release":
            results, assertions, outputs = _run_rotate_release(cfg, out_dir)
        elif cfg.kind == "free-expansion-analytic":
            results, assertions, outputs = _run_expansion(cfg, out_dir)
        elif cfg.kind == "sweep":
            results, assertions, outputs = _run_sweep(cfg, out_dir, jobs)
        else:
            raise ValueError(f"unknown scenario kind {cfg.kind!r}")
        manifest["results"] = results
        manifest["assertions"] = assertions
        manifest["outputs"] = {
            name: {"sha256": _sha256(out_dir / name),
                   "bytes": (out_dir / name).stat().st_size}
            for name in outputs}
        manifest["timings"]["total_seconds"] = time.perf_counter() - t_start
        all_passed = all(a["passed"] for a in assertions)
        manifest["status"] = "ok" if all_passed else "assertion-failure"
    except Exception as exc:
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["timings"]["total_seconds"] = time.perf_counter() - t_start
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        raise
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def verify_run(out_dir) -> tuple:
    """Check a finished run directory against its manifest.

    Recomputes every output checksum, re-evaluates every recorded
    self-check from its stored value/op/threshold, and requires status
    "ok". Returns (ok, messages).
    """
    out_dir = Path(out_dir)
    messages = []
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.is_file():
        return False, ["manifest.json is missing"]
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        return False, [f"manifest.json is not valid JSON: {exc}"]
    ok = True
    status = manifest.get("status")
    if status != "ok":
        ok = False
        messages.append(f"run status is {status!r}, expected 'ok'")
    ops = {"<=": lambda v, t: v <= t, "<": lambda v, t: v < t,
           ">=": lambda v, t: v >= t, ">": lambda v, t: v > t}
    for a in manifest.get("assertions", []):
        op = ops.get(a.get("op"))
        if op is None:
            ok = False
            messages.append(f"self-check {a.get('name')!r} has unknown op")
            continue
        recomputed = op(a["value"], a["threshold"])
        if recomputed != a["passed"]:
            ok = False
            messages.append(f"self-check {a['name']!r} pass flag is inconsistent")
        elif not recomputed:
            ok = False
            messages.append(
                f"self-check {a['name']!r} failed: {a['value']:g} {a['op']} "
                f"{a['threshold']:g} does not hold")
    for name, meta in manifest.get("outputs", {}).items():
        path = out_dir / name
        if not path.is_file():
            ok = False
            messages.append(f"output {name} is missing")
            continue
        digest = _sha256(path)
        if digest != meta.get("sha256"):
            ok = False
            messages.append(f"output {name} checksum mismatch")
        if path.stat().st_size != meta.get("bytes"):
            ok = False
            messages.append(f"output {name} size mismatch")
    if ok:
        messages.append("run verified: checksums and self-checks are consistent")
    return ok, messages
