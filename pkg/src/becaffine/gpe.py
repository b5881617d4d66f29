"""Mean-field dynamics on a 2D grid in the co-moving adapted frame.

The field psi_L(tau, zeta) obeys

    i hbar d(psi_L)/dtau = -(hbar^2/2m) [Lam^{-T} grad]^2 psi_L
        + (1/det Lam) [(m/2) zeta^T W2(0) zeta + g |psi_L|^2 - mu] psi_L,

with int |psi_L|^2 d^2 zeta = N. The kinetic operator is diagonal in k
space with symbol (hbar/2m) k^T M k, M = Lam^{-1} Lam^{-T}, so the
propagation uses Strang splitting: half a potential step, a full kinetic
step with Lam taken at the interval midpoint, half a potential step.
Potential factors only change the phase, never |psi_L|^2, so the two half
steps that meet between consecutive intervals are applied as one full step
at the shared det Lam; the result is exactly the chained Strang product.

The lab-frame field is reconstructed from the adapted one by an affine
resampling plus an analytic phase,

    psi(t, r) = det(Lam)^{-1/2} e^{i Phi} psi_L(t, Lam^{-1} (r - R)),
    Phi = (1/hbar) {S_1 - beta + P.(r - R/2) + (m/2)(r-R)^T C (r-R)}.

Ground states come from imaginary-time relaxation of the same splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.fft import fft2, ifft2
from scipy.ndimage import map_coordinates

from .affine import AdaptiveState, irrotationality_residual
from .com import ComState
from .integrators import rk4_step
from .trap import TrapConfig, TrapSchedule
from .units import HBAR

__all__ = [
    "Grid2D", "FieldState", "SplitStepKernel", "PropagationLog", "SnapshotRecord",
    "ground_state_imaginary_time", "propagate_real",
    "bures_distance", "ResidualMetric", "residual_metric",
    "to_lab_frame", "from_lab_frame",
    "grid_observables", "energy_terms_grid", "momentum_distribution",
    "principal_angle", "moment_principal_angle", "unwrap_principal_angles",
    "warped_laplacian",
]

_BOUNDARY_TOL = 1e-8
_COVERAGE_TOL = 1e-2
_IRROT_ABORT = 1e-6


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic n x n grid on [-L/2, L/2) x [-L/2, L/2)."""

    n: int
    length: float

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("grid must have at least 4 points per axis")
        if self.length <= 0.0:
            raise ValueError("grid length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def axis(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n)

    @property
    def k_axis(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def cell_volume(self) -> float:
        return self.dx ** 2

    def mesh(self) -> tuple:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def k_mesh(self) -> tuple:
        return np.meshgrid(self.k_axis, self.k_axis, indexing="ij")


@dataclass
class FieldState:
    """Complex field on a grid at one instant, with the mu used in its frame."""

    grid: Grid2D
    amps: np.ndarray
    tau: float
    mu: float

    def __post_init__(self):
        self.amps = np.ascontiguousarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (self.grid.n, self.grid.n):
            raise ValueError("field shape does not match its grid")

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2)) * self.grid.cell_volume

    @property
    def boundary_mass(self) -> float:
        """Mass within two cells of the grid edge, a grid-containment diagnostic."""
        a2 = np.abs(self.amps) ** 2
        band = (a2[:2, :].sum() + a2[-2:, :].sum()
                + a2[2:-2, :2].sum() + a2[2:-2, -2:].sum())
        return float(band) * self.grid.cell_volume


class SplitStepKernel:
    """Cached meshes and exponents for the split-step propagation."""

    def __init__(self, grid: Grid2D, omega_sq0: np.ndarray, g: float,
                 mass: float = 1.0, mu: float = 0.0):
        self.grid = grid
        self.g = float(g)
        self.mass = float(mass)
        self.mu = float(mu)
        w = np.asarray(omega_sq0, dtype=float)
        if w.shape != (2, 2):
            raise ValueError("omega_sq0 must be 2 x 2")
        xx, yy = grid.mesh()
        self.v0 = 0.5 * mass * (w[0, 0] * xx ** 2 + 2.0 * w[0, 1] * xx * yy
                                + w[1, 1] * yy ** 2)
        kx, ky = grid.k_mesh()
        self.kx2 = kx ** 2
        self.ky2 = ky ** 2
        self.kxy = kx * ky

    def potential_energy_density(self, amps: np.ndarray, det_lam: float) -> np.ndarray:
        """(V0 + g |psi|^2 - mu) / det Lam at every grid point."""
        return (self.v0 + self.g * np.abs(amps) ** 2 - self.mu) / det_lam

    def kinetic_symbol(self, lam: np.ndarray) -> np.ndarray:
        """(hbar/2m) k^T M k with M = Lam^{-1} Lam^{-T}, an angular frequency."""
        lam_inv = np.linalg.inv(lam)
        m_mat = lam_inv @ lam_inv.T
        return HBAR / (2.0 * self.mass) * (
            m_mat[0, 0] * self.kx2 + m_mat[1, 1] * self.ky2
            + 2.0 * m_mat[0, 1] * self.kxy)

    def apply_potential(self, amps: np.ndarray, det_lam: float, dt: float) -> np.ndarray:
        return amps * np.exp((-1j * dt / HBAR)
                             * self.potential_energy_density(amps, det_lam))

    def apply_kinetic(self, amps: np.ndarray, symbol: np.ndarray, dt: float) -> np.ndarray:
        return ifft2(fft2(amps) * np.exp(-1j * dt * symbol))


def _normalize(amps: np.ndarray, grid: Grid2D, n_atoms: float) -> np.ndarray:
    nrm = math.sqrt(float(np.sum(np.abs(amps) ** 2)) * grid.cell_volume)
    if nrm == 0.0:
        raise FloatingPointError("field has zero norm")
    return amps * (math.sqrt(n_atoms) / nrm)


def ground_state_imaginary_time(grid: Grid2D, cfg: TrapConfig, dt: float = 2e-3,
                                tol: float = 1e-12, max_steps: int = 40000) -> FieldState:
    """Relax to the trapped ground state by imaginary-time split stepping.

    Starts from the Gaussian exp(-m zeta^T W(0) zeta / 2 hbar), renormalizes
    to N after every step, and stops when the per-step relative change of the
    grid energy drops below tol. The chemical potential of the returned state
    is (E_kin + E_pot + 2 E_int) / N. Raises if the energy rises persistently
    or fails to settle within max_steps.
    """
    if cfg.d != 2:
        raise ValueError("grid relaxation is implemented for d = 2")
    kernel = SplitStepKernel(grid, cfg.omega_sq0, cfg.g, mass=cfg.mass, mu=0.0)
    w_eigs, o_mat = np.linalg.eigh(cfg.omega_sq0)
    sqrt_w = o_mat @ np.diag(np.sqrt(w_eigs)) @ o_mat.T
    xx, yy = grid.mesh()
    quad = (sqrt_w[0, 0] * xx ** 2 + 2.0 * sqrt_w[0, 1] * xx * yy
            + sqrt_w[1, 1] * yy ** 2)
    amps = np.exp(-0.5 * cfg.mass * quad / HBAR).astype(np.complex128)
    amps = _normalize(amps, grid, cfg.n_atoms)

    kin_factor = np.exp(-dt * kernel.kinetic_symbol(np.eye(2)))

    def grid_energy_terms(a):
        return energy_terms_grid(grid, a, kernel.v0, cfg.g, mass=cfg.mass)

    e_prev = grid_energy_terms(amps)["total"]
    e_best = e_prev
    for _ in range(max_steps):
        amps = amps * np.exp(-0.5 * dt / HBAR
                             * kernel.potential_energy_density(amps, 1.0))
        amps = ifft2(fft2(amps) * kin_factor)
        amps = amps * np.exp(-0.5 * dt / HBAR
                             * kernel.potential_energy_density(amps, 1.0))
        amps = _normalize(amps, grid, cfg.n_atoms)
        e_now = grid_energy_terms(amps)["total"]
        if e_now > e_best * (1.0 + 1e-9) + 1e-12:
            raise FloatingPointError(
                "imaginary-time energy is rising; reduce the relaxation step")
        e_best = min(e_best, e_now)
        settled = abs(e_now - e_prev) < tol * max(abs(e_now), 1e-30)
        e_prev = e_now
        if settled:
            terms = grid_energy_terms(amps)
            mu = (terms["kinetic"] + terms["potential"]
                  + 2.0 * terms["interaction"]) / cfg.n_atoms
            return FieldState(grid=grid, amps=amps, tau=0.0, mu=mu)
    raise FloatingPointError(f"ground state did not converge in {max_steps} steps")


@dataclass
class SnapshotRecord:
    """Adapted field together with the matrix data needed to map it anywhere."""

    tau: float
    amps: np.ndarray
    lam: np.ndarray
    lam_dot: np.ndarray
    beta: float

    def adaptive_state(self) -> AdaptiveState:
        return AdaptiveState(t=self.tau, lam=self.lam, lam_dot=self.lam_dot,
                             beta=self.beta)


@dataclass
class PropagationLog:
    ts: np.ndarray
    norms: np.ndarray
    bures_vs_ref: np.ndarray
    residual_l2: np.ndarray
    boundary_mass: np.ndarray
    e_kinetic: np.ndarray
    e_potential: np.ndarray
    e_interaction: np.ndarray
    e_total: np.ndarray
    lams: np.ndarray
    lam_dots: np.ndarray
    betas: np.ndarray
    det_lams: np.ndarray
    max_irrot_residual: float
    field_final: FieldState
    adaptive_final: AdaptiveState
    snapshots: list = dc_field(default_factory=list)


def propagate_real(field: FieldState, adaptive: AdaptiveState,
                   schedule: TrapSchedule, dt: float, n_steps: int,
                   stride: Optional[int] = None,
                   snapshot_stride: Optional[int] = None,
                   reference: Optional[np.ndarray] = None,
                   record_energy: bool = True) -> PropagationLog:
    """Advance the adapted field and its matrix map together.

    One field step covers dt: half a potential step, a kinetic step with the
    map taken at tau + dt/2, half a potential step. The map advances by two
    RK4 half-steps per field step using the same mu as the field, so the
    phase integral beta stays synchronized with the -mu potential term.
    Adjacent potential half-steps between samples are fused (exact: they
    share det Lam, and phase factors leave |psi|^2 unchanged).

    Guards on every step: kinetic phase per step below pi, det Lam positive,
    irrotationality residual below 1e-6 of the matrix scale. Samples are
    recorded every stride steps (default: only the final state); field
    snapshots every snapshot_stride steps. bures_vs_ref and residual_l2
    compare against reference (default: the starting field).
    """
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if abs(field.tau - adaptive.t) > 1e-9 * max(1.0, abs(field.tau)):
        raise ValueError("field and matrix map are at different times")
    if schedule.cfg.d != 2:
        raise ValueError("grid propagation is implemented for d = 2")
    if stride is None:
        stride = n_steps
    if stride <= 0 or (snapshot_stride is not None and snapshot_stride <= 0):
        raise ValueError("strides must be positive")

    cfg = schedule.cfg
    grid = field.grid
    mu = field.mu
    kernel = SplitStepKernel(grid, schedule.omega_sq_ref, cfg.g,
                             mass=cfg.mass, mu=mu)
    ref = field.amps.copy() if reference is None \
        else np.asarray(reference, np.complex128)
    ref_abs = np.abs(ref)
    ref_norm_sq = float(np.sum(ref_abs ** 2)) * grid.cell_volume

    def lam_ode(t, y):
        lam = y[:4].reshape(2, 2)
        lam_dot = y[4:8].reshape(2, 2)
        det = np.linalg.det(lam)
        if abs(det) < 1e-300:
            raise FloatingPointError("det(Lambda) collapsed to zero")
        acc = np.linalg.solve(lam.T, schedule.omega_sq_ref) / det \
            - schedule.omega_sq(t) @ lam
        return np.concatenate([lam_dot.ravel(), acc.ravel(), [mu / det]])

    def unpack(yv):
        return yv[:4].reshape(2, 2).copy(), yv[4:8].reshape(2, 2).copy(), float(yv[8])

    ts, norms, bures_l, resid_l, bmass = [], [], [], [], []
    e_kin, e_pot, e_int, e_tot = [], [], [], []
    lams, lam_dots, betas, dets = [], [], [], []
    snapshots = []

    amps = field.amps.copy()

    def sample(tau_now, lam_now, lam_dot_now, beta_now, det_now, take_snapshot):
        ts.append(tau_now)
        a_abs = np.abs(amps)
        norms.append(float(np.sum(a_abs ** 2)) * grid.cell_volume)
        bures_l.append(bures_distance(grid, amps, ref))
        resid_l.append(math.sqrt(float(np.sum((a_abs - ref_abs) ** 2))
                                 * grid.cell_volume / ref_norm_sq))
        a2 = a_abs ** 2
        bmass.append(float(a2[:2, :].sum() + a2[-2:, :].sum()
                           + a2[2:-2, :2].sum()
                           + a2[2:-2, -2:].sum()) * grid.cell_volume)
        if record_energy:
            lam_inv = np.linalg.inv(lam_now)
            terms = energy_terms_grid(grid, amps, kernel.v0, cfg.g, mass=cfg.mass,
                                      det_lam=det_now, m_mat=lam_inv @ lam_inv.T)
            e_kin.append(terms["kinetic"])
            e_pot.append(terms["potential"])
            e_int.append(terms["interaction"])
            e_tot.append(terms["total"])
        lams.append(lam_now)
        lam_dots.append(lam_dot_now)
        betas.append(beta_now)
        dets.append(det_now)
        if take_snapshot:
            snapshots.append(SnapshotRecord(tau=tau_now, amps=amps.copy(),
                                            lam=lam_now, lam_dot=lam_dot_now,
                                            beta=beta_now))

    y = np.concatenate([adaptive.lam.ravel(), adaptive.lam_dot.ravel(),
                        [adaptive.beta]])
    t0 = field.tau
    lam_now, lam_dot_now, beta_now = unpack(y)
    det_now = float(np.linalg.det(lam_now))
    if det_now <= 0.0:
        raise FloatingPointError("det(Lambda) must start positive")
    max_irrot = irrotationality_residual(lam_now, lam_dot_now)
    sample(t0, lam_now, lam_dot_now, beta_now, det_now,
           snapshot_stride is not None)

    amps = kernel.apply_potential(amps, det_now, 0.5 * dt)
    for i in range(n_steps):
        tau_i = t0 + i * dt
        y = rk4_step(lam_ode, tau_i, y, 0.5 * dt)
        lam_mid = y[:4].reshape(2, 2)
        if np.linalg.det(lam_mid) <= 0.0:
            raise FloatingPointError(f"det(Lambda) lost positivity at tau = {tau_i + 0.5 * dt}")
        symbol = kernel.kinetic_symbol(lam_mid)
        if dt * float(symbol.max()) > math.pi:
            raise ValueError(
                f"kinetic phase per step exceeds pi at tau = {tau_i:.6g}; "
                "reduce dt or coarsen the grid")
        amps = kernel.apply_kinetic(amps, symbol, dt)
        y = rk4_step(lam_ode, tau_i + 0.5 * dt, y, 0.5 * dt)
        tau_next = t0 + (i + 1) * dt
        lam_now, lam_dot_now, beta_now = unpack(y)
        det_now = float(np.linalg.det(lam_now))
        if det_now <= 0.0:
            raise FloatingPointError(f"det(Lambda) lost positivity at tau = {tau_next}")
        resid = irrotationality_residual(lam_now, lam_dot_now)
        max_irrot = max(max_irrot, resid)
        if resid > _IRROT_ABORT * max(1.0, float(np.linalg.norm(lam_now.T @ lam_dot_now))):
            raise FloatingPointError(
                f"irrotationality violated at tau = {tau_next}: residual {resid:.3g}")
        want_snapshot = snapshot_stride is not None \
            and ((i + 1) % snapshot_stride == 0 or i + 1 == n_steps)
        is_sample = ((i + 1) % stride == 0) or (i + 1 == n_steps) or want_snapshot
        if is_sample:
            amps = kernel.apply_potential(amps, det_now, 0.5 * dt)
            sample(tau_next, lam_now, lam_dot_now, beta_now, det_now, want_snapshot)
            if i + 1 < n_steps:
                amps = kernel.apply_potential(amps, det_now, 0.5 * dt)
        else:
            amps = kernel.apply_potential(amps, det_now, dt)

    final_field = FieldState(grid=grid, amps=amps, tau=t0 + n_steps * dt, mu=mu)
    final_adaptive = AdaptiveState(t=final_field.tau, lam=lam_now,
                                   lam_dot=lam_dot_now, beta=beta_now)
    empty = np.zeros(0)
    return PropagationLog(
        ts=np.array(ts), norms=np.array(norms), bures_vs_ref=np.array(bures_l),
        residual_l2=np.array(resid_l), boundary_mass=np.array(bmass),
        e_kinetic=np.array(e_kin) if record_energy else empty,
        e_potential=np.array(e_pot) if record_energy else empty,
        e_interaction=np.array(e_int) if record_energy else empty,
        e_total=np.array(e_tot) if record_energy else empty,
        lams=np.array(lams), lam_dots=np.array(lam_dots),
        betas=np.array(betas), det_lams=np.array(dets),
        max_irrot_residual=max_irrot, field_final=final_field,
        adaptive_final=final_adaptive, snapshots=snapshots)


# ---------------------------------------------------------------------------
# metrics

def bures_distance(grid: Grid2D, psi_a: np.ndarray, psi_b: np.ndarray) -> float:
    """Bures distance between two normalized fields,
    B = sqrt(2 - 2 |<a|b>| / sqrt(<a|a><b|b>))."""
    dv = grid.cell_volume
    na = float(np.sum(np.abs(psi_a) ** 2)) * dv
    nb = float(np.sum(np.abs(psi_b) ** 2)) * dv
    if na == 0.0 or nb == 0.0:
        raise ValueError("Bures distance of a zero field is undefined")
    overlap = abs(complex(np.sum(np.conj(psi_a) * psi_b))) * dv
    fidelity = overlap / math.sqrt(na * nb)
    return math.sqrt(max(0.0, 2.0 - 2.0 * fidelity))


@dataclass(frozen=True)
class ResidualMetric:
    """Pointwise squared amplitude mismatch and its summary numbers."""

    field: np.ndarray
    max_value: float
    max_location: tuple
    l2: float


def residual_metric(grid: Grid2D, psi: np.ndarray, psi_ref: np.ndarray) -> ResidualMetric:
    """(|psi| - |psi_ref|)^2 over the grid; l2 is the integrated mismatch
    relative to the reference norm."""
    diff_sq = (np.abs(psi) - np.abs(psi_ref)) ** 2
    idx = np.unravel_index(int(np.argmax(diff_sq)), diff_sq.shape)
    ax = grid.axis
    ref_norm_sq = float(np.sum(np.abs(psi_ref) ** 2)) * grid.cell_volume
    l2 = math.sqrt(float(np.sum(diff_sq)) * grid.cell_volume / ref_norm_sq)
    return ResidualMetric(field=diff_sq, max_value=float(diff_sq[idx]),
                          max_location=(float(ax[idx[0]]), float(ax[idx[1]])),
                          l2=l2)


# ---------------------------------------------------------------------------
# frame changes

def _affine_phase(r_mesh: tuple, adaptive: AdaptiveState, com: ComState,
                  mass: float) -> np.ndarray:
    """Phi(r) = (S1 - beta + P.(r - R/2) + (m/2)(r-R)^T C (r-R)) / hbar."""
    xx, yy = r_mesh
    r_com, p_com = com.r_com, com.p_com
    c_mat = adaptive.lam_dot @ np.linalg.inv(adaptive.lam)
    dx_, dy_ = xx - r_com[0], yy - r_com[1]
    quad = c_mat[0, 0] * dx_ ** 2 + (c_mat[0, 1] + c_mat[1, 0]) * dx_ * dy_ \
        + c_mat[1, 1] * dy_ ** 2
    lin = p_com[0] * (xx - 0.5 * r_com[0]) + p_com[1] * (yy - 0.5 * r_com[1])
    return (com.s1 - adaptive.beta + lin + 0.5 * mass * quad) / HBAR


def _check_sync(field: FieldState, adaptive: AdaptiveState, com: ComState):
    t = field.tau
    if abs(adaptive.t - t) > 1e-9 * max(1.0, abs(t)) \
            or abs(com.t - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError("field, matrix map and center of mass are at different times")


def _interp_complex(amps: np.ndarray, src_grid: Grid2D,
                    px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear sample of a complex field at physical points (px, py);
    zero outside the source grid."""
    ix = (px - src_grid.axis[0]) / src_grid.dx
    iy = (py - src_grid.axis[0]) / src_grid.dx
    coords = np.stack([ix.ravel(), iy.ravel()])
    re = map_coordinates(amps.real, coords, order=1, mode="constant", cval=0.0)
    im = map_coordinates(amps.imag, coords, order=1, mode="constant", cval=0.0)
    return (re + 1j * im).reshape(px.shape)


def to_lab_frame(field: FieldState, adaptive: AdaptiveState, com: ComState,
                 lab_grid: Grid2D, mass: float = 1.0) -> FieldState:
    """Map the adapted field to the laboratory frame on lab_grid.

    The smooth adapted profile is resampled bilinearly at zeta =
    Lam^{-1}(r - R) and the rapid affine phase is attached analytically.
    Raises if the adapted field touches its grid boundary (mass in the
    outer ring above 1e-8 of the norm) or if lab_grid fails to capture the
    mapped cloud (norm deficit above 1 percent).
    """
    _check_sync(field, adaptive, com)
    det = adaptive.det_lam
    if det <= 0.0:
        raise FloatingPointError("det(Lambda) must be positive")
    src_norm = field.norm
    if field.boundary_mass > _BOUNDARY_TOL * src_norm:
        raise ValueError("adapted field reaches its grid boundary; enlarge the grid")
    xx, yy = lab_grid.mesh()
    lam_inv = np.linalg.inv(adaptive.lam)
    dx_, dy_ = xx - com.r_com[0], yy - com.r_com[1]
    zx = lam_inv[0, 0] * dx_ + lam_inv[0, 1] * dy_
    zy = lam_inv[1, 0] * dx_ + lam_inv[1, 1] * dy_
    sampled = _interp_complex(field.amps, field.grid, zx, zy)
    phase = _affine_phase((xx, yy), adaptive, com, mass)
    amps_lab = sampled * np.exp(1j * phase) / math.sqrt(det)
    out = FieldState(grid=lab_grid, amps=amps_lab, tau=field.tau, mu=field.mu)
    if abs(out.norm - src_norm) > _COVERAGE_TOL * src_norm:
        raise ValueError("lab grid does not cover the mapped cloud")
    return out


def from_lab_frame(field: FieldState, adaptive: AdaptiveState, com: ComState,
                   adapted_grid: Grid2D, mass: float = 1.0) -> FieldState:
    """Map a laboratory-frame field onto adapted_grid in scaled coordinates.

    The affine phase is removed analytically on the lab grid first, so only
    a smooth function is resampled (at r = R + Lam zeta), then the
    det(Lam)^{1/2} amplitude factor is restored. Guards mirror to_lab_frame.
    """
    _check_sync(field, adaptive, com)
    det = adaptive.det_lam
    if det <= 0.0:
        raise FloatingPointError("det(Lambda) must be positive")
    src_norm = field.norm
    if field.boundary_mass > _BOUNDARY_TOL * src_norm:
        raise ValueError("lab field reaches its grid boundary; enlarge the grid")
    phase = _affine_phase(field.grid.mesh(), adaptive, com, mass)
    smooth = field.amps * np.exp(-1j * phase)
    zx, zy = adapted_grid.mesh()
    lam = adaptive.lam
    px = com.r_com[0] + lam[0, 0] * zx + lam[0, 1] * zy
    py = com.r_com[1] + lam[1, 0] * zx + lam[1, 1] * zy
    sampled = _interp_complex(smooth, field.grid, px, py)
    out = FieldState(grid=adapted_grid, amps=sampled * math.sqrt(det),
                     tau=field.tau, mu=field.mu)
    if abs(out.norm - src_norm) > _COVERAGE_TOL * src_norm:
        raise ValueError("adapted grid does not cover the cloud")
    return out


# ---------------------------------------------------------------------------
# observables

def grid_observables(grid: Grid2D, amps: np.ndarray) -> dict:
    """Norm, mean position, mean momentum (spectral) and central second
    moment per particle."""
    dv = grid.cell_volume
    dens = np.abs(amps) ** 2
    norm = float(np.sum(dens)) * dv
    if norm == 0.0:
        raise ValueError("field has zero norm")
    xx, yy = grid.mesh()
    r_mean = np.array([float(np.sum(xx * dens)), float(np.sum(yy * dens))]) * dv / norm
    ft = fft2(amps)
    ft_sq = np.abs(ft) ** 2
    kx, ky = grid.k_mesh()
    scale = dv / (grid.n ** 2) / norm
    p_mean = HBAR * np.array([float(np.sum(kx * ft_sq)),
                              float(np.sum(ky * ft_sq))]) * scale
    dxm, dym = xx - r_mean[0], yy - r_mean[1]
    second = np.array([
        [float(np.sum(dxm * dxm * dens)), float(np.sum(dxm * dym * dens))],
        [float(np.sum(dxm * dym * dens)), float(np.sum(dym * dym * dens))],
    ]) * dv / norm
    return {"norm": norm, "r_mean": r_mean, "p_mean": p_mean,
            "second_moment": second}


def energy_terms_grid(grid: Grid2D, amps: np.ndarray, potential: np.ndarray,
                      g: float, mass: float = 1.0, det_lam: float = 1.0,
                      m_mat: Optional[np.ndarray] = None) -> dict:
    """Kinetic, potential and interaction energy of a field on the grid.

    potential is the bare trap array; in the adapted frame both it and the
    interaction term carry the 1/det Lam factor and the kinetic quadratic
    form is M = Lam^{-1} Lam^{-T} (identity by default).
    """
    dv = grid.cell_volume
    dens = np.abs(amps) ** 2
    kx, ky = grid.k_mesh()
    if m_mat is None:
        quad = kx ** 2 + ky ** 2
    else:
        quad = m_mat[0, 0] * kx ** 2 + m_mat[1, 1] * ky ** 2 \
            + 2.0 * m_mat[0, 1] * kx * ky
    ft_sq = np.abs(fft2(amps)) ** 2
    e_kin = HBAR ** 2 / (2.0 * mass) * float(np.sum(quad * ft_sq)) * dv / grid.n ** 2
    e_pot = float(np.sum(potential * dens)) * dv / det_lam
    e_int = 0.5 * g / det_lam * float(np.sum(dens ** 2)) * dv
    return {"kinetic": e_kin, "potential": e_pot, "interaction": e_int,
            "total": e_kin + e_pot + e_int}


def momentum_distribution(grid: Grid2D, amps: np.ndarray) -> tuple:
    """Momentum-space density |psi~(p)|^2 with psi~ the (2 pi hbar)^{-d/2}
    Fourier transform; returns (p_axis, dist), both fftshifted, normalized
    so that sum(dist) dp^2 equals the field norm."""
    ft = fft2(amps)
    dist = np.fft.fftshift(np.abs(ft) ** 2) * (grid.cell_volume ** 2) \
        / (2.0 * math.pi * HBAR) ** 2
    p_axis = np.fft.fftshift(grid.k_axis) * HBAR
    return p_axis, dist


def moment_principal_angle(second_moment: np.ndarray) -> float:
    """Long-axis orientation of a 2 x 2 second moment, in [0, pi).
    Raises when the moment is degenerate and the axis undefined."""
    evals, evecs = np.linalg.eigh(np.asarray(second_moment, dtype=float))
    if evals[1] - evals[0] < 1e-6 * max(evals[1], 1e-30):
        raise ValueError("density is near-isotropic; principal axis undefined")
    v = evecs[:, 1]
    return float(math.atan2(v[1], v[0]) % math.pi)


def principal_angle(grid: Grid2D, amps: np.ndarray) -> float:
    """Orientation of the long axis of the density on the grid, from the
    central second moment, as an angle in [0, pi)."""
    return moment_principal_angle(grid_observables(grid, amps)["second_moment"])


def unwrap_principal_angles(angles: np.ndarray) -> np.ndarray:
    """Lift a sequence of axis angles (defined mod pi) to a continuous track."""
    angles = np.asarray(angles, dtype=float)
    out = angles.copy()
    for i in range(1, out.size):
        out[i] += math.pi * round((out[i - 1] - out[i]) / math.pi)
    return out


def warped_laplacian(grid: Grid2D, amps: np.ndarray, m_mat: np.ndarray) -> np.ndarray:
    """Spectral evaluation of grad^T M grad applied to the field."""
    kx, ky = grid.k_mesh()
    quad = m_mat[0, 0] * kx ** 2 + m_mat[1, 1] * ky ** 2 + 2.0 * m_mat[0, 1] * kx * ky
    return ifft2(-quad * fft2(np.asarray(amps, np.complex128)))
