"""Time dependent quadratic trap models.

A trap is described locally by its quadratic expansion around a reference
path rho(t),

    V(t, r) = V(t, rho) - F(t).(r - rho) + (m/2) (r - rho)^T W2(t) (r - rho),

with W2(t) the (symmetric) curvature matrix. The main concrete model is a
two dimensional harmonic trap whose principal axes rotate with a smoothly
ramped angular rate and which can be switched off instantaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .integrators import rk4_step

__all__ = [
    "TrapConfig",
    "RotationSchedule",
    "TrapSchedule",
    "omega_squared_rotating",
    "rotation_angle_and_rate",
    "classical_trajectory_rho",
    "quasi2d_coupling",
]


@dataclass(frozen=True)
class TrapConfig:
    """Static trap and gas parameters.

    Attributes
    ----------
    d : spatial dimension, 1, 2 or 3.
    omega0 : trap frequencies of the preparation trap, shape (d,).
    g : contact coupling constant (dimension-reduced, see quasi2d_coupling).
    n_atoms : particle number entering the normalization of the field.
    mass : particle mass, 1 in working units.
    """

    d: int
    omega0: tuple
    g: float
    n_atoms: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        omega0 = tuple(float(w) for w in np.atleast_1d(self.omega0))
        object.__setattr__(self, "omega0", omega0)
        if len(omega0) != self.d:
            raise ValueError(f"omega0 must have length d={self.d}, got {len(omega0)}")
        if any(w <= 0.0 for w in omega0):
            raise ValueError("preparation trap frequencies must be positive")
        if self.g < 0.0:
            raise ValueError("attractive coupling g < 0 is not supported")
        if self.n_atoms <= 0.0:
            raise ValueError("n_atoms must be positive")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")

    @classmethod
    def two_dimensional(cls, epsilon: float, g_n: float, omega_x: float = 1.0,
                        mass: float = 1.0) -> "TrapConfig":
        """2D trap with frequency ratio epsilon = omega_y/omega_x.

        g_n is the dimensionless interaction strength g*N in working units;
        the field is normalized to a single particle (n_atoms = 1), which
        leaves every per-particle observable unchanged.
        """
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(d=2, omega0=(omega_x, epsilon * omega_x), g=float(g_n),
                   n_atoms=1.0, mass=mass)

    @property
    def omega_sq0(self) -> np.ndarray:
        """Curvature matrix of the preparation trap, diag(omega0^2)."""
        return np.diag(np.asarray(self.omega0, dtype=float) ** 2)


@dataclass(frozen=True)
class RotationSchedule:
    """Smoothly ramped rotation of the trap axes, optional switch-off.

    The angular rate follows a smoothstep ramp,

        rate(tau) = rate_end * (3u^2 - 2u^3),  u = tau/t_end <= 1,

    and stays at rate_end afterwards. t_off, if given, is the instant the
    trap is removed entirely (curvature set to zero); it must not interrupt
    the ramp.
    """

    rate_end: float
    t_end: float
    t_off: Optional[float] = None

    def __post_init__(self):
        if self.rate_end < 0.0:
            raise ValueError("rate_end must be non-negative")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.t_off is not None and self.t_off < self.t_end:
            raise ValueError("t_off < t_end: switch-off during the ramp is not supported")

    @classmethod
    def from_periods(cls, rate_end: float, t_bar_end: float,
                     t_bar_off: Optional[float] = None,
                     omega_x: float = 1.0) -> "RotationSchedule":
        """Build from durations counted in trap periods, T = 2 pi t_bar / omega_x."""
        period = 2.0 * math.pi / omega_x
        t_off = None if t_bar_off is None else t_bar_off * period
        return cls(rate_end=rate_end, t_end=t_bar_end * period, t_off=t_off)


def rotation_angle_and_rate(schedule: RotationSchedule, tau: float) -> tuple:
    """Accumulated angle and instantaneous rate of the trap axes at tau.

    The angle is the closed-form integral of the smoothstep rate,
    rate_end * t_end * (u^3 - u^4/2) on the ramp, continuing linearly
    after t_end. Negative times are rejected.
    """
    if tau < 0.0:
        raise ValueError("tau must be non-negative")
    u = tau / schedule.t_end
    if u <= 1.0:
        rate = schedule.rate_end * (3.0 * u * u - 2.0 * u ** 3)
        angle = schedule.rate_end * schedule.t_end * (u ** 3 - 0.5 * u ** 4)
    else:
        rate = schedule.rate_end
        angle = schedule.rate_end * (0.5 * schedule.t_end + (tau - schedule.t_end))
    return angle, rate


def omega_squared_rotating(cfg: TrapConfig, schedule: RotationSchedule,
                           tau: float) -> np.ndarray:
    """Curvature matrix of the rotating trap at time tau.

    W2(tau) = O(phi) diag(omega0^2) O(phi)^T with the clockwise frame

        O(phi) = [[cos phi, sin phi], [-sin phi, cos phi]].

    Zero matrix at and after the switch-off time. Rotation is only defined
    in d = 2.
    """
    if tau < 0.0:
        raise ValueError("tau must be non-negative")
    d = cfg.d
    if schedule.t_off is not None and tau >= schedule.t_off:
        return np.zeros((d, d))
    if schedule.rate_end == 0.0:
        return cfg.omega_sq0
    if d != 2:
        raise ValueError("rotating traps are only supported in d = 2")
    angle, _ = rotation_angle_and_rate(schedule, tau)
    c, s = math.cos(angle), math.sin(angle)
    o_mat = np.array([[c, s], [-s, c]])
    w2 = o_mat @ cfg.omega_sq0 @ o_mat.T
    return 0.5 * (w2 + w2.T)


def quasi2d_coupling(g3d: float, a_z: float) -> float:
    """Effective 2D coupling of a pancake gas, g3d / (sqrt(2 pi) a_z).

    a_z is the oscillator length of the frozen tight direction.
    """
    if g3d < 0.0:
        raise ValueError("g3d must be non-negative")
    if a_z <= 0.0:
        raise ValueError("a_z must be positive")
    return g3d / (math.sqrt(2.0 * math.pi) * a_z)


@dataclass
class TrapSchedule:
    """Full time dependent trap: curvature, reference path, force, offset.

    The default describes the standard protocol: trap minimum fixed at the
    origin, no uniform force, potential gauged to zero on the path. The
    curvature comes from the rotation schedule when one is attached,
    otherwise the static preparation trap. omega_sq_ref is the preparation
    curvature entering the scaling dynamics; it defaults to the curvature
    at tau = 0 and only needs overriding for quench protocols where the
    prepared state belongs to a different trap.
    """

    cfg: TrapConfig
    rotation: Optional[RotationSchedule] = None
    omega_sq_of: Optional[Callable[[float], np.ndarray]] = None
    rho_of: Optional[Callable[[float], np.ndarray]] = None
    rho_dot_of: Optional[Callable[[float], np.ndarray]] = None
    force_of: Optional[Callable[[float], np.ndarray]] = None
    v0_of: Optional[Callable[[float], float]] = None
    omega_sq_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.omega_sq_ref is None:
            self.omega_sq_ref = self.omega_sq(0.0)
        self.omega_sq_ref = np.asarray(self.omega_sq_ref, dtype=float)

    def omega_sq(self, tau: float) -> np.ndarray:
        if self.omega_sq_of is not None:
            return np.asarray(self.omega_sq_of(tau), dtype=float)
        if self.rotation is not None:
            return omega_squared_rotating(self.cfg, self.rotation, tau)
        return self.cfg.omega_sq0

    def rho(self, tau: float) -> np.ndarray:
        if self.rho_of is not None:
            return np.asarray(self.rho_of(tau), dtype=float)
        return np.zeros(self.cfg.d)

    def rho_dot(self, tau: float) -> np.ndarray:
        if self.rho_dot_of is not None:
            return np.asarray(self.rho_dot_of(tau), dtype=float)
        return np.zeros(self.cfg.d)

    def force(self, tau: float) -> np.ndarray:
        if self.force_of is not None:
            return np.asarray(self.force_of(tau), dtype=float)
        return np.zeros(self.cfg.d)

    def v0(self, tau: float) -> float:
        if self.v0_of is not None:
            return float(self.v0_of(tau))
        return 0.0

    def potential(self, tau: float, r: np.ndarray) -> np.ndarray:
        """Quadratic potential at points r, shape (..., d) -> (...)."""
        r = np.asarray(r, dtype=float)
        dr = r - self.rho(tau)
        w2 = self.omega_sq(tau)
        quad = 0.5 * self.cfg.mass * np.einsum("...i,ij,...j->...", dr, w2, dr)
        lin = np.einsum("...i,i->...", dr, self.force(tau))
        return self.v0(tau) - lin + quad

    @classmethod
    def static(cls, cfg: TrapConfig) -> "TrapSchedule":
        return cls(cfg=cfg)

    @classmethod
    def rotating(cls, cfg: TrapConfig, rotation: RotationSchedule) -> "TrapSchedule":
        return cls(cfg=cfg, rotation=rotation)

    @classmethod
    def released(cls, cfg: TrapConfig, t_off: float = 0.0) -> "TrapSchedule":
        """Trap removed instantaneously at t_off; preparation trap before."""
        def w2(tau, _cfg=cfg, _t_off=t_off):
            if tau >= _t_off:
                return np.zeros((_cfg.d, _cfg.d))
            return _cfg.omega_sq0

        return cls(cfg=cfg, omega_sq_of=w2, omega_sq_ref=cfg.omega_sq0)


def classical_trajectory_rho(schedule: TrapSchedule, mode: str,
                             taus: np.ndarray,
                             rho0: Optional[np.ndarray] = None,
                             rho_dot0: Optional[np.ndarray] = None) -> tuple:
    """Reference path rho(t) sampled on taus, plus its velocity.

    mode "trap-minimum" returns the configured minimum path; it requires a
    confining (non-singular) curvature at every sample, so a released trap
    is rejected. mode "semiclassical" integrates m rho_dd = F - m W2 (rho -
    rho_min) with RK4 from (rho0, rho_dot0) over the uniform grid taus.
    """
    taus = np.asarray(taus, dtype=float)
    d = schedule.cfg.d
    if mode == "trap-minimum":
        rho = np.empty((taus.size, d))
        rho_dot = np.empty((taus.size, d))
        for i, tau in enumerate(taus):
            w2 = schedule.omega_sq(tau)
            if abs(np.linalg.det(w2)) < 1e-30:
                raise ValueError("trap-minimum path undefined: singular curvature "
                                 f"at tau = {tau}")
            rho[i] = schedule.rho(tau)
            rho_dot[i] = schedule.rho_dot(tau)
        return rho, rho_dot
    if mode != "semiclassical":
        raise ValueError(f"unknown mode {mode!r}")
    if rho0 is None:
        rho0 = schedule.rho(float(taus[0]))
    if rho_dot0 is None:
        rho_dot0 = schedule.rho_dot(float(taus[0]))
    steps = np.diff(taus)
    if steps.size and not np.allclose(steps, steps[0], rtol=1e-10, atol=1e-14):
        raise ValueError("semiclassical mode needs a uniform time grid")
    mass = schedule.cfg.mass

    def rhs(t, y):
        r, v = y[:d], y[d:]
        acc = schedule.force(t) / mass - schedule.omega_sq(t) @ (r - schedule.rho(t))
        return np.concatenate([v, acc])

    y = np.concatenate([np.asarray(rho0, float), np.asarray(rho_dot0, float)])
    rho = np.empty((taus.size, d))
    rho_dot = np.empty((taus.size, d))
    rho[0], rho_dot[0] = y[:d], y[d:]
    for i in range(1, taus.size):
        y = rk4_step(rhs, float(taus[i - 1]), y, float(taus[i] - taus[i - 1]))
        rho[i], rho_dot[i] = y[:d], y[d:]
    return rho, rho_dot
