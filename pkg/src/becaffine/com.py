"""Center-of-mass motion and its accumulated action phases.

The mean position and momentum of the cloud obey the classical equations

    dR/dt = P/m,    dP/dt = -m W2(t) (R - rho) + F,

independently of the interaction strength. Two action phases ride along,

    S_k(t) = int_0^t L dt' - (k/2) [R.P - R(0).P(0)],   k = 1, 2,

with the classical Lagrangian

    L = P^2/(2m) - V(t, rho) + F.(R - rho) - (m/2)(R - rho)^T W2 (R - rho).

Both S_1 and S_2 are accumulated inside the same RK4 step as (R, P) by
differentiating the surface term through the equations of motion, so the
phases stay exactly synchronous with the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import rk4_step
from .trap import TrapSchedule

__all__ = ["ComState", "ComTrajectory", "integrate_com", "com_trajectory",
           "action_s_k", "lagrangian_com"]


@dataclass(frozen=True)
class ComState:
    """Snapshot of the center-of-mass degrees of freedom at time t."""

    t: float
    r_com: np.ndarray
    p_com: np.ndarray
    s1: float = 0.0
    s2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "r_com", np.atleast_1d(np.asarray(self.r_com, float)))
        object.__setattr__(self, "p_com", np.atleast_1d(np.asarray(self.p_com, float)))
        if self.r_com.shape != self.p_com.shape:
            raise ValueError("r_com and p_com must have the same shape")

    @classmethod
    def at_rest(cls, d: int, t: float = 0.0) -> "ComState":
        return cls(t=t, r_com=np.zeros(d), p_com=np.zeros(d))


@dataclass
class ComTrajectory:
    ts: np.ndarray
    r_com: np.ndarray  # (n, d)
    p_com: np.ndarray  # (n, d)
    s1: np.ndarray
    s2: np.ndarray

    def state_at(self, i: int) -> ComState:
        return ComState(t=float(self.ts[i]), r_com=self.r_com[i],
                        p_com=self.p_com[i], s1=float(self.s1[i]),
                        s2=float(self.s2[i]))


def lagrangian_com(schedule: TrapSchedule, t: float, r: np.ndarray,
                   p: np.ndarray) -> float:
    """Classical Lagrangian along the trap's quadratic expansion."""
    mass = schedule.cfg.mass
    dr = r - schedule.rho(t)
    w2 = schedule.omega_sq(t)
    return (float(p @ p) / (2.0 * mass) - schedule.v0(t)
            + float(schedule.force(t) @ dr)
            - 0.5 * mass * float(dr @ w2 @ dr))


def _com_rhs(schedule: TrapSchedule, d: int):
    mass = schedule.cfg.mass

    def rhs(t, y):
        r, p = y[:d], y[d:2 * d]
        p_dot = -mass * (schedule.omega_sq(t) @ (r - schedule.rho(t))) + schedule.force(t)
        lag = lagrangian_com(schedule, t, r, p)
        # d(R.P)/dt expanded through the equations of motion
        rp_dot = float(p @ p) / mass + float(r @ p_dot)
        return np.concatenate([p / mass, p_dot,
                               [lag - 0.5 * rp_dot, lag - rp_dot]])

    return rhs


def _check_step(schedule: TrapSchedule, t: float, dt: float) -> None:
    w2 = schedule.omega_sq(t)
    omega_max = float(np.sqrt(max(np.max(np.linalg.eigvalsh(w2)), 0.0)))
    if dt * omega_max > 0.5:
        raise ValueError(f"time step too coarse: dt*omega = {dt * omega_max:.3g} > 0.5")


def integrate_com(state: ComState, schedule: TrapSchedule, dt: float,
                  n_steps: int) -> ComState:
    """Advance the center of mass by n_steps RK4 steps of size dt."""
    traj = com_trajectory(state, schedule, dt, n_steps, stride=max(n_steps, 1))
    return traj.state_at(-1)


def com_trajectory(state: ComState, schedule: TrapSchedule, dt: float,
                   n_steps: int, stride: int = 1) -> ComTrajectory:
    """Like integrate_com but recording every stride-th step (and the last)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    d = state.r_com.size
    rhs = _com_rhs(schedule, d)
    y = np.concatenate([state.r_com, state.p_com, [state.s1, state.s2]])
    t = state.t
    ts, rs, ps, s1s, s2s = [t], [y[:d].copy()], [y[d:2 * d].copy()], [y[-2]], [y[-1]]
    for i in range(n_steps):
        _check_step(schedule, t, dt)
        y = rk4_step(rhs, t, y, dt)
        t = state.t + (i + 1) * dt
        if (i + 1) % stride == 0 or i == n_steps - 1:
            ts.append(t)
            rs.append(y[:d].copy())
            ps.append(y[d:2 * d].copy())
            s1s.append(y[-2])
            s2s.append(y[-1])
    return ComTrajectory(ts=np.array(ts), r_com=np.array(rs), p_com=np.array(ps),
                         s1=np.array(s1s), s2=np.array(s2s))


def action_s_k(state: ComState, k: int) -> float:
    """Accumulated action phase S_k, k = 1 or 2."""
    if k == 1:
        return state.s1
    if k == 2:
        return state.s2
    raise ValueError("k must be 1 or 2")
