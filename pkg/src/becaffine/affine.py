"""Adaptive linear coordinate map Lambda(t) and everything derived from it.

The internal dynamics of the cloud is followed in coordinates
zeta = Lambda^{-1} (r - R) where the matrix obeys

    Lambda^T (Lambda_dd + W2(tau) Lambda) = W2(0) / det(Lambda),

equivalently Lambda_dd = Lambda^{-T} W2(0)/det(Lambda) - W2(tau) Lambda,
with Lambda(0) = 1, Lambda_dot(0) = 0. Along solutions Lambda^T Lambda_dot
stays symmetric (an irrotationality constraint, d(d-1)/2 conserved
quantities) and det(Lambda) stays positive.

Derived objects: Sigma = Lambda W2(0)^{-1} Lambda^T (shape matrix of the
evolving density), C = Lambda_dot Lambda^{-1} (quadratic phase curvature),
A = (m/2) Lambda^T Lambda_dot, the phase integral beta(tau) = int mu/det
Lambda dtau', a canonical form of the matrix dynamics with Hamiltonian

    H = 1/2 Tr[Pi~^T Pi~ + Lam~^T W2~(t~) Lam~] + 1/det Lam~,

the associated energy and angular momentum functions of the original
variables, closed-form/implicit solutions of the isotropic free expansion,
and linear-asymptote fits for long expansion times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import hyp2f1

from .integrators import rk4_step
from .trap import TrapSchedule

__all__ = [
    "AdaptiveState", "LambdaTrajectory", "DerivedMatrices", "CanonicalState",
    "lambda_rhs", "integrate_lambda", "scaling_diagonal_rhs",
    "sigma_and_c", "integrate_sigma_c", "SigmaCTrajectory",
    "det_lambda_from_sigma_inv",
    "canonical_map", "canonical_unmap", "omega_tilde_sq",
    "hamiltonian_canonical", "canonical_hamilton_rhs",
    "energy_lambda", "angmom_lambda",
    "analytic_lambda_isotropic", "approx_lambda_longtime_1d",
    "LONGTIME_INTERCEPT_3D", "longtime_coefficients",
]

# Intercept of the d=3 linear asymptote, sqrt(pi) Gamma(2/3) / Gamma(1/6).
LONGTIME_INTERCEPT_3D = math.sqrt(math.pi) * math.gamma(2.0 / 3.0) / math.gamma(1.0 / 6.0)

_DET_FLOOR = 1e-300


@dataclass(frozen=True)
class AdaptiveState:
    """Matrix map Lambda, its velocity, and the phase integral beta at time t."""

    t: float
    lam: np.ndarray
    lam_dot: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        lam_dot = np.asarray(self.lam_dot, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError("lam must be a square matrix")
        if lam_dot.shape != lam.shape:
            raise ValueError("lam_dot must match lam in shape")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lam_dot", lam_dot)

    @classmethod
    def identity(cls, d: int, t: float = 0.0) -> "AdaptiveState":
        return cls(t=t, lam=np.eye(d), lam_dot=np.zeros((d, d)))

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    @property
    def det_lam(self) -> float:
        return float(np.linalg.det(self.lam))


@dataclass
class LambdaTrajectory:
    ts: np.ndarray
    lams: np.ndarray       # (n, d, d)
    lam_dots: np.ndarray   # (n, d, d)
    betas: np.ndarray
    max_irrot_residual: float

    @property
    def det_lams(self) -> np.ndarray:
        return np.linalg.det(self.lams)

    def state_at(self, i: int) -> AdaptiveState:
        return AdaptiveState(t=float(self.ts[i]), lam=self.lams[i],
                             lam_dot=self.lam_dots[i], beta=float(self.betas[i]))


def lambda_rhs(lam: np.ndarray, omega_sq_t: np.ndarray,
               omega_sq_0: np.ndarray) -> np.ndarray:
    """Acceleration of the matrix map.

    Lambda_dd = Lambda^{-T} W2(0) / det(Lambda) - W2(tau) Lambda.
    Raises on determinant collapse (|det| below 1e-300).
    """
    det = np.linalg.det(lam)
    if abs(det) < _DET_FLOOR:
        raise FloatingPointError("det(Lambda) collapsed to zero")
    return np.linalg.solve(lam.T, omega_sq_0) / det - omega_sq_t @ lam


def irrotationality_residual(lam: np.ndarray, lam_dot: np.ndarray) -> float:
    """Frobenius norm of Lambda^T Lambda_dot - Lambda_dot^T Lambda."""
    m = lam.T @ lam_dot
    return float(np.linalg.norm(m - m.T))


def integrate_lambda(state: AdaptiveState, schedule: TrapSchedule, dt: float,
                     n_steps: int, mu: float = 0.0,
                     stride: Optional[int] = None,
                     irrot_abort: float = 1e-6) -> "AdaptiveState | LambdaTrajectory":
    """Advance (Lambda, Lambda_dot, beta) with fixed-step RK4.

    mu enters only through dbeta/dtau = mu / det(Lambda). Each accepted step
    is checked: det(Lambda) must stay positive and the irrotationality
    residual must stay below irrot_abort * max(1, |Lambda^T Lambda_dot|_F).
    The step must resolve the stiffest trap direction, dt * max omega <= 0.1.

    Returns the final AdaptiveState, or a LambdaTrajectory recording every
    stride-th step when stride is given.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    d = state.d
    omega_sq_0 = schedule.omega_sq_ref

    def rhs(t, y):
        lam = y[:d * d].reshape(d, d)
        lam_dot = y[d * d:2 * d * d].reshape(d, d)
        acc = lambda_rhs(lam, schedule.omega_sq(t), omega_sq_0)
        det = np.linalg.det(lam)
        return np.concatenate([lam_dot.ravel(), acc.ravel(), [mu / det]])

    y = np.concatenate([state.lam.ravel(), state.lam_dot.ravel(), [state.beta]])
    t = state.t
    record = stride is not None
    if record:
        ts, lams, dots, betas = [t], [state.lam.copy()], [state.lam_dot.copy()], [state.beta]
    max_resid = irrotationality_residual(state.lam, state.lam_dot)
    for i in range(n_steps):
        w2 = schedule.omega_sq(t)
        omega_max = math.sqrt(max(float(np.max(np.linalg.eigvalsh(w2))), 0.0))
        if dt * omega_max > 0.1:
            raise ValueError(f"dt too coarse for the trap: dt*omega = {dt * omega_max:.3g} > 0.1")
        y = rk4_step(rhs, t, y, dt)
        t = state.t + (i + 1) * dt
        lam = y[:d * d].reshape(d, d)
        lam_dot = y[d * d:2 * d * d].reshape(d, d)
        if np.linalg.det(lam) <= 0.0:
            raise FloatingPointError(f"det(Lambda) lost positivity at tau = {t}")
        resid = irrotationality_residual(lam, lam_dot)
        max_resid = max(max_resid, resid)
        scale = max(1.0, float(np.linalg.norm(lam.T @ lam_dot)))
        if resid > irrot_abort * scale:
            raise FloatingPointError(
                f"irrotationality violated at tau = {t}: residual {resid:.3g}")
        if record and ((i + 1) % stride == 0 or i == n_steps - 1):
            ts.append(t)
            lams.append(lam.copy())
            dots.append(lam_dot.copy())
            betas.append(y[-1])
    if record:
        return LambdaTrajectory(ts=np.array(ts), lams=np.array(lams),
                                lam_dots=np.array(dots), betas=np.array(betas),
                                max_irrot_residual=max_resid)
    lam = y[:d * d].reshape(d, d)
    lam_dot = y[d * d:2 * d * d].reshape(d, d)
    return AdaptiveState(t=t, lam=lam, lam_dot=lam_dot, beta=float(y[-1]))


def scaling_diagonal_rhs(lam_diag: np.ndarray, omega_sq_diag_t: np.ndarray,
                         omega_sq_diag_0: np.ndarray) -> np.ndarray:
    """Diagonal (principal-axes) reduction of the matrix dynamics.

    lam_dd_i = w_i^2(0) / (lam_i prod_k lam_k) - w_i^2(tau) lam_i.
    """
    lam_diag = np.asarray(lam_diag, dtype=float)
    if np.any(lam_diag <= 0.0):
        raise ValueError("scaling factors must stay positive")
    vol = float(np.prod(lam_diag))
    return np.asarray(omega_sq_diag_0) / (lam_diag * vol) \
        - np.asarray(omega_sq_diag_t) * lam_diag


# ---------------------------------------------------------------------------
# derived matrices and the (Sigma^{-1}, C) route

@dataclass(frozen=True)
class DerivedMatrices:
    """Shape matrix Sigma, curvature C, mixed matrix A, optional cloud radii."""

    sigma: np.ndarray
    sigma_inv: np.ndarray
    c_mat: np.ndarray
    a_mat: np.ndarray
    radii: Optional[np.ndarray] = None


def sigma_and_c(state: AdaptiveState, omega_sq_0: np.ndarray,
                mu_tf: Optional[float] = None, mass: float = 1.0) -> DerivedMatrices:
    """Sigma = Lambda W2(0)^{-1} Lambda^T, C = Lambda_dot Lambda^{-1},
    A = (m/2) Lambda^T Lambda_dot.

    When mu_tf is given the principal cloud radii sqrt(2 mu_tf s_i / m) are
    attached, s_i the eigenvalues of Sigma (ascending).
    """
    lam, lam_dot = state.lam, state.lam_dot
    omega_inv = np.linalg.inv(np.asarray(omega_sq_0, dtype=float))
    sigma = lam @ omega_inv @ lam.T
    sigma = 0.5 * (sigma + sigma.T)
    c_mat = lam_dot @ np.linalg.inv(lam)
    a_mat = 0.5 * mass * (lam.T @ lam_dot)
    radii = None
    if mu_tf is not None:
        s_eigs = np.linalg.eigvalsh(sigma)
        if np.any(s_eigs <= 0.0):
            raise ValueError("Sigma must be positive definite")
        radii = np.sqrt(2.0 * mu_tf * s_eigs / mass)
    return DerivedMatrices(sigma=sigma, sigma_inv=np.linalg.inv(sigma),
                           c_mat=c_mat, a_mat=a_mat, radii=radii)


@dataclass
class SigmaCTrajectory:
    ts: np.ndarray
    sigma_invs: np.ndarray  # (n, d, d)
    c_mats: np.ndarray      # (n, d, d)


def integrate_sigma_c(sigma_inv: np.ndarray, c_mat: np.ndarray,
                      schedule: TrapSchedule, dt: float, n_steps: int,
                      t0: float = 0.0,
                      stride: Optional[int] = None) -> "tuple | SigmaCTrajectory":
    """Evolve the shape/curvature pair without ever forming Lambda.

        d Sigma^{-1}/dt = -C Sigma^{-1} - Sigma^{-1} C,
        d C/dt          = -C^2 - W2(t) + Sigma^{-1} sqrt(det Sigma^{-1} / det W2(0)).

    Both matrices are symmetrized after every step; the integration aborts if
    Sigma^{-1} loses positive definiteness. Initial data for the standard
    protocol is Sigma^{-1}(0) = W2(0), C(0) = 0.

    Returns (sigma_inv, c_mat) at the final time, or a SigmaCTrajectory when
    stride is given.
    """
    d = np.asarray(sigma_inv).shape[0]
    det_w0 = float(np.linalg.det(schedule.omega_sq_ref))

    def rhs(t, y):
        si = y[:d * d].reshape(d, d)
        c = y[d * d:].reshape(d, d)
        det_si = np.linalg.det(si)
        si_dot = -c @ si - si @ c
        c_dot = -c @ c - schedule.omega_sq(t) + si * math.sqrt(max(det_si, 0.0) / det_w0)
        return np.concatenate([si_dot.ravel(), c_dot.ravel()])

    y = np.concatenate([np.asarray(sigma_inv, float).ravel(),
                        np.asarray(c_mat, float).ravel()])
    t = t0
    record = stride is not None
    if record:
        ts = [t]
        sis = [np.asarray(sigma_inv, float).copy()]
        cs = [np.asarray(c_mat, float).copy()]
    for i in range(n_steps):
        y = rk4_step(rhs, t, y, dt)
        t = t0 + (i + 1) * dt
        si = y[:d * d].reshape(d, d)
        c = y[d * d:].reshape(d, d)
        si = 0.5 * (si + si.T)
        c = 0.5 * (c + c.T)
        if np.min(np.linalg.eigvalsh(si)) <= 0.0:
            raise FloatingPointError(f"Sigma^-1 lost positive definiteness at t = {t}")
        y = np.concatenate([si.ravel(), c.ravel()])
        if record and ((i + 1) % stride == 0 or i == n_steps - 1):
            ts.append(t)
            sis.append(si.copy())
            cs.append(c.copy())
    if record:
        return SigmaCTrajectory(ts=np.array(ts), sigma_invs=np.array(sis),
                                c_mats=np.array(cs))
    si = y[:d * d].reshape(d, d)
    c = y[d * d:].reshape(d, d)
    return si, c


def det_lambda_from_sigma_inv(sigma_inv: np.ndarray,
                              omega_sq_0: np.ndarray) -> float:
    """det Lambda = sqrt(det W2(0) / det Sigma^{-1})."""
    return math.sqrt(float(np.linalg.det(omega_sq_0)) /
                     float(np.linalg.det(sigma_inv)))


# ---------------------------------------------------------------------------
# canonical form

@dataclass(frozen=True)
class CanonicalState:
    """Rescaled coordinates in which the matrix dynamics is Hamiltonian.

    With W2(0) = O D O^T (eigendecomposition) and alpha = det(W2(0))^(1/2d),

        Lam~ = alpha O^T Lambda O D^{-1/2},  Pi~ = O^T Lambda_dot O D^{-1/2},

    and time t~ = alpha t. Initial data maps to Lam~(0) = alpha D^{-1/2},
    Pi~(0) = 0.
    """

    t_tilde: float
    lam_tilde: np.ndarray
    pi_tilde: np.ndarray
    alpha: float
    o_mat: np.ndarray
    d_mat: np.ndarray


def _eig_frame(omega_sq_0: np.ndarray) -> tuple:
    w, o_mat = np.linalg.eigh(np.asarray(omega_sq_0, dtype=float))
    if np.any(w <= 0.0):
        raise ValueError("W2(0) must be positive definite")
    d = omega_sq_0.shape[0]
    alpha = float(np.prod(w)) ** (1.0 / (2.0 * d))
    return w, o_mat, alpha


def canonical_map(state: AdaptiveState, omega_sq_0: np.ndarray) -> CanonicalState:
    w, o_mat, alpha = _eig_frame(omega_sq_0)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(w))
    lam_tilde = alpha * o_mat.T @ state.lam @ o_mat @ d_inv_sqrt
    pi_tilde = o_mat.T @ state.lam_dot @ o_mat @ d_inv_sqrt
    return CanonicalState(t_tilde=alpha * state.t, lam_tilde=lam_tilde,
                          pi_tilde=pi_tilde, alpha=alpha, o_mat=o_mat,
                          d_mat=np.diag(w))


def canonical_unmap(cs: CanonicalState) -> AdaptiveState:
    d_sqrt = np.sqrt(cs.d_mat.diagonal())
    lam = (cs.o_mat @ cs.lam_tilde @ np.diag(d_sqrt) @ cs.o_mat.T) / cs.alpha
    lam_dot = cs.o_mat @ cs.pi_tilde @ np.diag(d_sqrt) @ cs.o_mat.T
    return AdaptiveState(t=cs.t_tilde / cs.alpha, lam=lam, lam_dot=lam_dot)


def omega_tilde_sq(omega_sq_t: np.ndarray, o_mat: np.ndarray,
                   alpha: float) -> np.ndarray:
    """Trap curvature seen in canonical coordinates, O^T W2 O / alpha^2."""
    return o_mat.T @ np.asarray(omega_sq_t, dtype=float) @ o_mat / alpha ** 2


def hamiltonian_canonical(cs: CanonicalState,
                          omega_tilde_sq_mat: np.ndarray) -> float:
    """H = 1/2 Tr[Pi~^T Pi~ + Lam~^T W2~ Lam~] + 1/det Lam~."""
    lam_t, pi_t = cs.lam_tilde, cs.pi_tilde
    det = np.linalg.det(lam_t)
    if abs(det) < _DET_FLOOR:
        raise FloatingPointError("det(Lam~) collapsed to zero")
    kin = 0.5 * float(np.trace(pi_t.T @ pi_t))
    pot = 0.5 * float(np.trace(lam_t.T @ omega_tilde_sq_mat @ lam_t))
    return kin + pot + 1.0 / float(det)


def canonical_hamilton_rhs(lam_tilde: np.ndarray, pi_tilde: np.ndarray,
                           omega_tilde_sq_mat: np.ndarray) -> tuple:
    """Hamilton equations: dLam~/dt~ = Pi~, dPi~/dt~ = -W2~ Lam~ + Lam~^{-T}/det."""
    det = np.linalg.det(lam_tilde)
    if abs(det) < _DET_FLOOR:
        raise FloatingPointError("det(Lam~) collapsed to zero")
    pi_dot = -omega_tilde_sq_mat @ lam_tilde + np.linalg.inv(lam_tilde).T / det
    return pi_tilde.copy(), pi_dot


# ---------------------------------------------------------------------------
# conserved-quantity diagnostics in the original variables

def energy_lambda(state: AdaptiveState, omega_sq_t: np.ndarray,
                  omega_sq_0: np.ndarray) -> float:
    """Scaling energy

        E = 1/2 Tr[(Ld^T Ld + L^T W2(t) L) W2(0)^{-1}] + 1/det L.

    Constant whenever W2(t) is time independent; equals d/2 + 1 on the
    standard initial data in the unquenched trap.
    """
    lam, lam_dot = state.lam, state.lam_dot
    w0_inv = np.linalg.inv(np.asarray(omega_sq_0, dtype=float))
    det = np.linalg.det(lam)
    if det <= 0.0:
        raise FloatingPointError("det(Lambda) must be positive")
    quad = lam_dot.T @ lam_dot + lam.T @ np.asarray(omega_sq_t) @ lam
    return 0.5 * float(np.trace(quad @ w0_inv)) + 1.0 / float(det)


def angmom_lambda(state: AdaptiveState, omega_sq_0: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix alpha [L W2(0)^{-1} Ld^T - Ld W2(0)^{-1} L^T].

    Conserved for isotropic traps with arbitrary breathing schedules; its
    (i, j) entry corresponds to the (r_i p_j - r_j p_i) component.
    """
    _, _, alpha = _eig_frame(omega_sq_0)
    w0_inv = np.linalg.inv(np.asarray(omega_sq_0, dtype=float))
    lam, lam_dot = state.lam, state.lam_dot
    return alpha * (lam @ w0_inv @ lam_dot.T - lam_dot @ w0_inv @ lam.T)


# ---------------------------------------------------------------------------
# isotropic free expansion, closed/implicit solutions

def _implicit_lhs(lam: float, d: int) -> float:
    """int_1^lam z^(d/2)/sqrt(z^d - 1) dz in closed form."""
    if d == 1:
        return math.sqrt(lam * (lam - 1.0)) + math.log(math.sqrt(lam) + math.sqrt(lam - 1.0))
    if d == 3:
        return lam * float(hyp2f1(-1.0 / 3.0, 0.5, 2.0 / 3.0, lam ** -3)) \
            - LONGTIME_INTERCEPT_3D
    raise ValueError("implicit form available for d = 1 and d = 3 only")


def _implicit_dlhs(lam: float, d: int) -> float:
    return lam ** (d / 2.0) / math.sqrt(lam ** d - 1.0)


def analytic_lambda_isotropic(d: int, omega0: float, t) -> np.ndarray:
    """Isotropic expansion factor lambda(t) after a sudden trap switch-off.

    Solves lam_dd = omega0^2 / lam^(d+1), lam(0) = 1, lam_dot(0) = 0:
    closed form sqrt(1 + (omega0 t)^2) in d = 2, otherwise the implicit
    quadrature relation int_1^lam z^(d/2)/sqrt(z^d-1) dz = sqrt(2/d) omega0 t
    solved by bisection (bracket width 1e-12) plus one Newton step.
    Accepts scalar or array t; times must be non-negative.
    """
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0.0):
        raise ValueError("t must be non-negative")
    if d == 2:
        out = np.sqrt(1.0 + (omega0 * ts) ** 2)
        return out if np.ndim(t) else float(out[0])

    rhs_coef = math.sqrt(2.0 / d) * omega0
    out = np.empty_like(ts)
    for i, ti in enumerate(ts):
        x = omega0 * ti
        if x < 1e-4:
            # quadratic short-time expansion, error O(x^4)
            out[i] = 1.0 + 0.5 * x * x
            continue
        target = rhs_coef * ti
        lo, hi = 1.0, 2.0 + math.sqrt(2.0 / d) * x
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if _implicit_lhs(mid, d) < target:
                lo = mid
            else:
                hi = mid
        lam = 0.5 * (lo + hi)
        lam -= (_implicit_lhs(lam, d) - target) / _implicit_dlhs(lam, d)
        out[i] = lam
    return out if np.ndim(t) else float(out[0])


def approx_lambda_longtime_1d(omega0: float, t) -> np.ndarray:
    """Long-time form of the 1D expansion factor,
    sqrt(2) w0 t - (1/2)[ln(4 sqrt(2) w0 t) - 1]."""
    x = np.sqrt(2.0) * omega0 * np.asarray(t, dtype=float)
    return x - 0.5 * (np.log(4.0 * x) - 1.0)


def longtime_coefficients(ts: np.ndarray, lams: np.ndarray,
                          rel_resid_tol: float = 1e-3) -> tuple:
    """Linear asymptote fit Lambda(t) ~ A + B t over the last third.

    lams has shape (n, d, d) (or (n,) for a scalar factor). Returns
    (a_mat, b_mat, rms_residual). Raises if the tail is not in the
    ballistic regime: too few samples, non-positive fitted diagonal
    slopes, or rms residual exceeding rel_resid_tol times the fitted
    growth b_ii * window for some axis.
    """
    ts = np.asarray(ts, dtype=float)
    lams = np.asarray(lams, dtype=float)
    scalar = lams.ndim == 1
    if scalar:
        lams = lams[:, None, None]
    n = ts.size
    if n < 10:
        raise ValueError("trajectory too short for an asymptote fit")
    i0 = (2 * n) // 3
    tt, ll = ts[i0:], lams[i0:]
    window = float(tt[-1] - tt[0])
    if window <= 0.0:
        raise ValueError("degenerate fit window")
    design = np.stack([np.ones_like(tt), tt], axis=1)
    flat = ll.reshape(tt.size, -1)
    coef, _, _, _ = np.linalg.lstsq(design, flat, rcond=None)
    resid = flat - design @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    d = lams.shape[1]
    a_mat = coef[0].reshape(d, d)
    b_mat = coef[1].reshape(d, d)
    for i in range(d):
        growth = b_mat[i, i] * window
        if b_mat[i, i] <= 0.0 or rms > rel_resid_tol * abs(growth):
            raise ValueError("trajectory is not in the free ballistic regime")
    if scalar:
        return float(a_mat[0, 0]), float(b_mat[0, 0]), rms
    return a_mat, b_mat, rms
