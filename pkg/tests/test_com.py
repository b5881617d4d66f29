"""Tests for the classical center-of-mass motion and its action phases.

The augmented stepper carries (R, P, S1, S2) together. Closed forms used as
oracles: free flight (S1 vanishes identically), the displaced harmonic
oscillation (S2 = (m omega x0^2/4) sin 2 omega t), and an independent
solve_ivp + trapezoid quadrature of the Lagrangian for a driven trap.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from becaffine.com import (
    ComState,
    action_s_k,
    com_trajectory,
    integrate_com,
    lagrangian_com,
)
from becaffine.trap import TrapConfig, TrapSchedule, classical_trajectory_rho


def _cfg2d(epsilon=1.5):
    return TrapConfig.two_dimensional(epsilon=epsilon, g_n=100.0)


def test_free_flight_closed_form():
    """R advances linearly and S1 is identically zero for a free particle."""
    sched = TrapSchedule.released(_cfg2d(), t_off=0.0)
    start = ComState(t=0.0, r_com=np.array([0.2, -0.1]),
                     p_com=np.array([0.5, 0.3]))
    end = integrate_com(start, sched, dt=1e-3, n_steps=3000)
    t = 3.0
    assert end.r_com == pytest.approx(start.r_com + start.p_com * t, abs=1e-12)
    assert end.p_com == pytest.approx(start.p_com, abs=1e-14)
    p_sq = float(start.p_com @ start.p_com)
    # S1 = p^2 t / 2m - (1/2)[R(t).P - R(0).P] = 0, S2 subtracts the term twice
    assert end.s1 == pytest.approx(0.0, abs=1e-12)
    assert end.s2 == pytest.approx(-0.5 * p_sq * t, abs=1e-11)


def test_rest_state_in_static_trap_stays_put():
    sched = TrapSchedule.static(_cfg2d())
    end = integrate_com(ComState.at_rest(2), sched, dt=1e-2, n_steps=500)
    assert np.max(np.abs(end.r_com)) == 0.0
    assert np.max(np.abs(end.p_com)) == 0.0
    assert end.s1 == 0.0 and end.s2 == 0.0


def test_displaced_oscillation_closed_form():
    """x(t) = x0 cos t, and S1 cancels exactly while S2 = (x0^2/4) sin 2t."""
    x0 = 0.7
    sched = TrapSchedule.static(_cfg2d())
    start = ComState(t=0.0, r_com=np.array([x0, 0.0]), p_com=np.zeros(2))
    traj = com_trajectory(start, sched, dt=1e-3, n_steps=12000, stride=400)
    ts = traj.ts
    assert traj.r_com[:, 0] == pytest.approx(x0 * np.cos(ts), abs=1e-9)
    assert traj.p_com[:, 0] == pytest.approx(-x0 * np.sin(ts), abs=1e-9)
    assert traj.s1 == pytest.approx(np.zeros_like(ts), abs=1e-9)
    assert traj.s2 == pytest.approx(0.25 * x0 ** 2 * np.sin(2.0 * ts), abs=1e-9)


def test_s2_minus_s1_equals_surface_term():
    """S2 - S1 = -(1/2)[R.P - R(0).P(0)] along any trajectory."""
    from becaffine.trap import RotationSchedule
    cfg = _cfg2d()
    sched = TrapSchedule.rotating(cfg, RotationSchedule(rate_end=0.4, t_end=10.0))
    start = ComState(t=0.0, r_com=np.array([0.9, -0.4]),
                     p_com=np.array([-0.3, 0.6]))
    traj = com_trajectory(start, sched, dt=1e-3, n_steps=15000, stride=500)
    rp0 = float(start.r_com @ start.p_com)
    rp = np.einsum("ij,ij->i", traj.r_com, traj.p_com)
    assert traj.s2 - traj.s1 == pytest.approx(-0.5 * (rp - rp0), abs=1e-10)


def test_action_against_independent_quadrature():
    """Driven trap: S1 from the stepper vs solve_ivp + trapezoid of L."""
    cfg = _cfg2d()
    sched = TrapSchedule(
        cfg=cfg,
        rho_of=lambda t: np.array([0.2 * math.sin(t), 0.0]),
        force_of=lambda t: np.array([0.3 * math.sin(t), 0.3 * math.cos(2.0 * t)]),
    )
    r0 = np.array([0.1, 0.2])
    p0 = np.array([0.4, -0.1])
    t_end = 2.0

    def rhs(t, y):
        r, p = y[:2], y[2:]
        acc = -cfg.omega_sq0 @ (r - sched.rho(t)) + sched.force(t)
        return np.concatenate([p, acc])

    dense = np.linspace(0.0, t_end, 20001)
    sol = solve_ivp(rhs, (0.0, t_end), np.concatenate([r0, p0]),
                    t_eval=dense, rtol=1e-12, atol=1e-13, method="DOP853")
    lag = np.array([0.5 * float(p @ p) - sched.potential(t, r)
                    for t, r, p in zip(sol.t, sol.y[:2].T, sol.y[2:].T)])
    integral = np.trapezoid(lag, dense)
    rp_end = float(sol.y[:2, -1] @ sol.y[2:, -1])
    want_s1 = integral - 0.5 * (rp_end - float(r0 @ p0))

    end = integrate_com(ComState(t=0.0, r_com=r0, p_com=p0), sched,
                        dt=2e-4, n_steps=10000)
    assert end.s1 == pytest.approx(want_s1, abs=1e-7)
    assert end.r_com == pytest.approx(sol.y[:2, -1], abs=1e-9)
    assert end.p_com == pytest.approx(sol.y[2:, -1], abs=1e-9)


def test_matches_semiclassical_reference_path():
    """Same ODE and stepper as the semiclassical reference trajectory."""
    cfg = _cfg2d()
    sched = TrapSchedule(cfg=cfg,
                         force_of=lambda t: np.array([0.2, -0.1 * math.sin(t)]))
    taus = np.arange(0.0, 5.0 + 1e-12, 1e-3)
    rho, rho_dot = classical_trajectory_rho(
        sched, "semiclassical", taus,
        rho0=np.array([0.5, 0.0]), rho_dot0=np.array([0.0, 0.3]))
    traj = com_trajectory(ComState(t=0.0, r_com=np.array([0.5, 0.0]),
                                   p_com=np.array([0.0, 0.3])),
                          sched, dt=1e-3, n_steps=5000, stride=1000)
    for i, j in ((1, 1000), (5, 5000)):
        assert traj.r_com[i] == pytest.approx(rho[j], abs=1e-13)
        assert traj.p_com[i] == pytest.approx(rho_dot[j], abs=1e-13)


def test_momentum_flip_reverses_trajectory():
    """Static trap: flip P, integrate the same span, flip back, recover start."""
    sched = TrapSchedule.static(_cfg2d())
    start = ComState(t=0.0, r_com=np.array([0.6, -0.2]),
                     p_com=np.array([0.1, 0.5]))
    fwd = integrate_com(start, sched, dt=1e-3, n_steps=2000)
    flipped = ComState(t=0.0, r_com=fwd.r_com, p_com=-fwd.p_com)
    back = integrate_com(flipped, sched, dt=1e-3, n_steps=2000)
    assert back.r_com == pytest.approx(start.r_com, abs=1e-9)
    assert -back.p_com == pytest.approx(start.p_com, abs=1e-9)


def test_step_guard_rejects_coarse_dt():
    sched = TrapSchedule.static(_cfg2d(epsilon=1.5))
    with pytest.raises(ValueError):
        integrate_com(ComState.at_rest(2), sched, dt=0.4, n_steps=1)


def test_action_accessor():
    state = ComState(t=0.0, r_com=np.zeros(2), p_com=np.zeros(2),
                     s1=1.5, s2=-0.25)
    assert action_s_k(state, 1) == 1.5
    assert action_s_k(state, 2) == -0.25
    with pytest.raises(ValueError):
        action_s_k(state, 3)
    fresh = ComState.at_rest(2)
    assert action_s_k(fresh, 1) == 0.0 and action_s_k(fresh, 2) == 0.0


def test_trajectory_records_stride_and_final_step():
    sched = TrapSchedule.static(_cfg2d())
    traj = com_trajectory(ComState.at_rest(2), sched, dt=1e-2, n_steps=25,
                          stride=7)
    # samples at 0, 7, 14, 21 and the forced final step 25
    assert traj.ts == pytest.approx(np.array([0.0, 0.07, 0.14, 0.21, 0.25]))
    assert traj.state_at(-1).t == pytest.approx(0.25)


def test_lagrangian_value():
    cfg = _cfg2d()
    sched = TrapSchedule.static(cfg)
    r = np.array([0.5, 0.5])
    p = np.array([1.0, 0.0])
    want = 0.5 - sched.potential(0.0, r)
    assert lagrangian_com(sched, 0.0, r, p) == pytest.approx(want, rel=1e-14)
