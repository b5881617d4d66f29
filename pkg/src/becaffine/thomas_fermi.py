"""Thomas-Fermi (strong-coupling) closed-form evolution.

When the interaction dominates the kinetic pressure inside the cloud, the
initial trapped state is the inverted parabola

    |psi(0, r)|^2 = (1/g) {mu - (m/2) r^T W2(0) r}_+

with chemical potential fixed by the atom number,

    mu = (m/2) [2 Gamma(2 + d/2) / pi^(d/2) * (N g / m) sqrt(det W2(0))]^(2/(d+2)).

Under an affine map (Lambda, R) this profile simply deforms:

    |psi(t, r)|^2 = (1/(g det Lambda)) {mu - (m/2)(r-R)^T Sigma^{-1} (r-R)}_+,
    Sigma = Lambda W2(0)^{-1} Lambda^T,

with quadratic phase
    Phi = (1/hbar) {S_2 - beta + P . r + (m/2)(r-R)^T C (r-R)},
    C = Lambda_dot Lambda^{-1},

so the whole evolution reduces to the matrix ODE plus center-of-mass motion.
Marginals over any subset of axes, the energy, the angular momentum and the
second moments are then elementary integrals of the parabola.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .affine import AdaptiveState, angmom_lambda, energy_lambda, sigma_and_c
from .com import ComState
from .trap import TrapConfig, TrapSchedule
from .units import HBAR

__all__ = [
    "TFModel", "TFSnapshot", "chemical_potential_tf",
    "tf_density", "tf_phase", "tf_wavefunction", "integrated_density",
    "tf_energy", "tf_angular_momentum", "tf_second_moment",
    "tf_initial_interaction_energy",
]


def chemical_potential_tf(cfg: TrapConfig) -> float:
    """Chemical potential of the trapped parabola holding N atoms."""
    if cfg.g <= 0.0:
        raise ValueError("the strong-coupling profile needs g > 0")
    d = cfg.d
    det_w0 = float(np.linalg.det(cfg.omega_sq0))
    inner = (2.0 * math.gamma(2.0 + d / 2.0) / math.pi ** (d / 2.0)
             * cfg.n_atoms * cfg.g / cfg.mass * math.sqrt(det_w0))
    return 0.5 * cfg.mass * inner ** (2.0 / (d + 2.0))


@dataclass(frozen=True)
class TFModel:
    """Static data of a strong-coupling run: trap frame, coupling, initial kick."""

    d: int
    mu_tf: float
    omega_sq0: np.ndarray
    g: float
    n_atoms: float
    mass: float
    r0: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega_sq0", np.asarray(self.omega_sq0, dtype=float))
        object.__setattr__(self, "r0", np.asarray(self.r0, dtype=float))
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        if self.omega_sq0.shape != (self.d, self.d):
            raise ValueError("omega_sq0 must be d x d")
        if self.r0.shape != (self.d,) or self.p0.shape != (self.d,):
            raise ValueError("r0 and p0 must be length-d vectors")

    @classmethod
    def from_config(cls, cfg: TrapConfig, r0: Optional[Sequence[float]] = None,
                    p0: Optional[Sequence[float]] = None) -> "TFModel":
        r0 = np.zeros(cfg.d) if r0 is None else np.asarray(r0, dtype=float)
        p0 = np.zeros(cfg.d) if p0 is None else np.asarray(p0, dtype=float)
        return cls(d=cfg.d, mu_tf=chemical_potential_tf(cfg),
                   omega_sq0=cfg.omega_sq0, g=cfg.g, n_atoms=cfg.n_atoms,
                   mass=cfg.mass, r0=r0, p0=p0)


@dataclass(frozen=True)
class TFSnapshot:
    """Everything needed to evaluate the parabola and its phase at one time.

    lam is optional; it is only required by the generalized phase that
    removes the initial boost, and by callers that want the map itself.
    """

    t: float
    sigma: np.ndarray
    c_mat: np.ndarray
    det_lam: float
    r_com: np.ndarray
    p_com: np.ndarray
    s2: float
    beta: float
    lam: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, model: TFModel) -> "TFSnapshot":
        d = model.d
        return cls(t=0.0, sigma=np.linalg.inv(model.omega_sq0),
                   c_mat=np.zeros((d, d)), det_lam=1.0,
                   r_com=model.r0.copy(), p_com=model.p0.copy(),
                   s2=0.0, beta=0.0, lam=np.eye(d))

    @classmethod
    def from_states(cls, model: TFModel, adaptive: AdaptiveState,
                    com: ComState) -> "TFSnapshot":
        if abs(adaptive.t - com.t) > 1e-9 * max(1.0, abs(com.t)):
            raise ValueError("matrix state and center-of-mass state are at different times")
        der = sigma_and_c(adaptive, model.omega_sq0, mass=model.mass)
        return cls(t=com.t, sigma=der.sigma, c_mat=der.c_mat,
                   det_lam=adaptive.det_lam, r_com=com.r_com, p_com=com.p_com,
                   s2=com.s2, beta=adaptive.beta, lam=adaptive.lam.copy())


def _quad_form(mat: np.ndarray, dr: np.ndarray) -> np.ndarray:
    return np.einsum("...i,ij,...j->...", dr, mat, dr)


def tf_density(model: TFModel, snap: TFSnapshot, r: np.ndarray) -> np.ndarray:
    """Particle density at points r of shape (..., d); integrates to N."""
    r = np.asarray(r, dtype=float)
    dr = r - snap.r_com
    sigma_inv = np.linalg.inv(snap.sigma)
    arg = model.mu_tf - 0.5 * model.mass * _quad_form(sigma_inv, dr)
    return np.maximum(arg, 0.0) / (model.g * snap.det_lam)


def tf_phase(model: TFModel, snap: TFSnapshot, r: np.ndarray,
             generalized: bool = False) -> np.ndarray:
    """Phase of the evolving parabola at points r.

    Phi = (S_2 - beta + P.r + (m/2)(r-R)^T C (r-R)) / hbar. With
    generalized=True the initial boost is removed by subtracting
    P(0).(Lambda^{-1}(r-R) + R(0)) / hbar, which needs snap.lam.
    """
    r = np.asarray(r, dtype=float)
    dr = r - snap.r_com
    phi = (snap.s2 - snap.beta + r @ snap.p_com
           + 0.5 * model.mass * _quad_form(snap.c_mat, dr))
    if generalized:
        if snap.lam is None:
            raise ValueError("generalized phase requires the matrix map in the snapshot")
        zeta = dr @ np.linalg.inv(snap.lam).T
        phi = phi - (zeta + model.r0) @ model.p0
    return phi / HBAR


def tf_wavefunction(model: TFModel, snap: TFSnapshot, r: np.ndarray,
                    generalized: bool = False) -> np.ndarray:
    return np.sqrt(tf_density(model, snap, r)) * np.exp(
        1j * tf_phase(model, snap, r, generalized=generalized))


def integrated_density(model: TFModel, snap: TFSnapshot,
                       keep_axes: Sequence[int], r_kept: np.ndarray) -> np.ndarray:
    """Density integrated over all axes not listed in keep_axes.

    For n integrated axes the marginal is again a power of a parabola,

        n(u) = (2 pi / m)^(n/2) / (Gamma(n/2 + 2) g sqrt(det W2(0) det S11))
               * {mu - (m/2) u^T S11^{-1} u}_+^(n/2 + 1),

    where S11 is the kept block of Sigma and u = r_kept - R_kept.
    keep_axes are 0-based, must be a strict non-empty subset of the axes.
    r_kept carries one trailing component per kept axis; for a single kept
    axis a bare array of coordinates is accepted as well.
    """
    keep = tuple(keep_axes)
    if len(set(keep)) != len(keep):
        raise ValueError("keep_axes must be distinct")
    if any(a < 0 or a >= model.d for a in keep):
        raise ValueError("keep_axes out of range")
    if len(keep) == 0 or len(keep) == model.d:
        raise ValueError("keep_axes must leave at least one axis in and one out")
    n = model.d - len(keep)
    s11 = snap.sigma[np.ix_(keep, keep)]
    s11_inv = np.linalg.inv(s11)
    det_w0 = float(np.linalg.det(model.omega_sq0))
    pref = (2.0 * math.pi / model.mass) ** (n / 2.0) / (
        math.gamma(n / 2.0 + 2.0) * model.g
        * math.sqrt(det_w0 * float(np.linalg.det(s11))))
    u = np.asarray(r_kept, dtype=float)
    if len(keep) == 1 and (u.ndim < 2 or u.shape[-1] != 1):
        u = u[..., np.newaxis]
    if u.shape[-1] != len(keep):
        raise ValueError("r_kept needs one trailing component per kept axis")
    u = u - snap.r_com[list(keep)]
    arg = model.mu_tf - 0.5 * model.mass * _quad_form(s11_inv, u)
    return pref * np.maximum(arg, 0.0) ** (n / 2.0 + 1.0)


def tf_energy(model: TFModel, adaptive: AdaptiveState, com: ComState,
              schedule: TrapSchedule) -> Tuple[float, float, float, float]:
    """Energy per atom of the evolving parabola, split into its pieces.

    Returns (total, com_kinetic, com_potential, internal) with

        total = P^2/2m + V(t, R) + (2/(d+4)) mu E_Lam(t)

    and internal the E_Lam term, which bundles the spread kinetic,
    trap and interaction energies of the cloud around its center.
    Reduces to P(0)^2/2m + ((d+2)/(d+4)) mu at t = 0 in the
    unquenched trap.
    """
    if abs(adaptive.t - com.t) > 1e-9 * max(1.0, abs(com.t)):
        raise ValueError("matrix state and center-of-mass state are at different times")
    e_lam = energy_lambda(adaptive, schedule.omega_sq(adaptive.t), model.omega_sq0)
    kin = float(com.p_com @ com.p_com) / (2.0 * model.mass)
    pot = float(schedule.potential(com.t, com.r_com))
    internal = 2.0 / (model.d + 4.0) * model.mu_tf * e_lam
    return kin + pot + internal, kin, pot, internal


def tf_angular_momentum(model: TFModel, adaptive: AdaptiveState) -> np.ndarray:
    """Orbital angular momentum per atom about the co-moving center.

    Returned as the antisymmetric matrix with (i, j) entry
    <r_i p_j - r_j p_i>; in d = 2 the scalar value is the (0, 1) entry.
    """
    w = np.linalg.eigvalsh(model.omega_sq0)
    alpha = float(np.prod(w)) ** (1.0 / (2.0 * model.d))
    l_lam = angmom_lambda(adaptive, model.omega_sq0)
    return 2.0 / (model.d + 4.0) * model.mu_tf / alpha * l_lam


def tf_second_moment(model: TFModel, sigma: Optional[np.ndarray] = None) -> np.ndarray:
    """Second moment <(r-R)(r-R)^T> per atom; defaults to the initial cloud."""
    if sigma is None:
        sigma = np.linalg.inv(model.omega_sq0)
    return 2.0 / (model.d + 4.0) * model.mu_tf / model.mass * np.asarray(sigma)


def tf_initial_interaction_energy(model: TFModel) -> float:
    """Total interaction energy (g/2) int n^2 of the initial parabola."""
    return 2.0 / (model.d + 4.0) * model.n_atoms * model.mu_tf
