"""Tests for the grid mean-field propagation in the adapted frame.

Oracles:
- analytic Gaussians for the warped Laplacian, observables, momentum
  density and Bures distance.
- the noninteracting harmonic ground-state energy.
- frame-change round trips and exact identity maps.
"""

import math

import numpy as np
import pytest

from becaffine.affine import AdaptiveState
from becaffine.com import ComState
from becaffine.gpe import (
    FieldState,
    Grid2D,
    SplitStepKernel,
    bures_distance,
    energy_terms_grid,
    from_lab_frame,
    grid_observables,
    ground_state_imaginary_time,
    moment_principal_angle,
    momentum_distribution,
    principal_angle,
    propagate_real,
    residual_metric,
    to_lab_frame,
    unwrap_principal_angles,
    warped_laplacian,
)
from becaffine.trap import TrapConfig, TrapSchedule

GRID = Grid2D(n=112, length=13.0)


@pytest.fixture(scope="module")
def headline_cfg():
    return TrapConfig.two_dimensional(epsilon=1.5, g_n=100.0)


@pytest.fixture(scope="module")
def ground(headline_cfg):
    return ground_state_imaginary_time(GRID, headline_cfg)


@pytest.fixture(scope="module")
def static_run(ground, headline_cfg):
    sched = TrapSchedule.static(headline_cfg)
    return propagate_real(ground, AdaptiveState.identity(2), sched,
                          dt=4e-3, n_steps=3142, stride=300)


@pytest.fixture(scope="module")
def release_run(ground, headline_cfg):
    sched = TrapSchedule.released(headline_cfg, t_off=0.0)
    return propagate_real(ground, AdaptiveState.identity(2), sched,
                          dt=4e-3, n_steps=750, stride=250,
                          snapshot_stride=250)


def _gaussian(grid, sigma=1.0):
    xx, yy = grid.mesh()
    amps = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2)).astype(complex)
    return amps / (math.sqrt(math.pi) * sigma)


# ---------------------------------------------------------------------------
# grid and kernel plumbing
# ---------------------------------------------------------------------------

def test_grid_properties():
    g = Grid2D(n=8, length=4.0)
    assert g.dx == pytest.approx(0.5)
    assert g.axis[0] == pytest.approx(-2.0)
    assert g.axis[-1] == pytest.approx(2.0 - 0.5)
    assert g.cell_volume == pytest.approx(0.25)
    assert np.max(np.abs(g.k_axis)) == pytest.approx(math.pi / 0.5)
    with pytest.raises(ValueError):
        Grid2D(n=3, length=4.0)
    with pytest.raises(ValueError):
        Grid2D(n=8, length=0.0)


def test_field_and_kernel_validation():
    g = Grid2D(n=8, length=4.0)
    with pytest.raises(ValueError):
        FieldState(grid=g, amps=np.zeros((4, 4), complex), tau=0.0, mu=0.0)
    with pytest.raises(ValueError):
        SplitStepKernel(g, np.eye(3), g=1.0)


def test_warped_laplacian_against_analytic_gaussian():
    # envelope chosen so the field is periodic to machine precision
    grid = Grid2D(n=192, length=20.0)
    xx, yy = grid.mesh()
    q = -(0.50 * xx ** 2 + 0.35 * yy ** 2 + 0.06 * xx * yy) \
        + 1j * 0.03 * (xx ** 2 - yy ** 2)
    psi = np.exp(q)
    rng = np.random.default_rng(12)
    lam = np.eye(2) + 0.2 * rng.normal(size=(2, 2))
    lam_inv = np.linalg.inv(lam)
    m_mat = lam_inv @ lam_inv.T
    qx = -(2 * 0.50 * xx + 0.06 * yy) + 1j * 0.06 * xx
    qy = -(2 * 0.35 * yy + 0.06 * xx) - 1j * 0.06 * yy
    hess = np.array([[-1.00 + 0.06j, -0.06], [-0.06, -0.70 - 0.06j]])
    want = psi * (m_mat[0, 0] * qx ** 2 + 2 * m_mat[0, 1] * qx * qy
                  + m_mat[1, 1] * qy ** 2
                  + m_mat[0, 0] * hess[0, 0] + 2 * m_mat[0, 1] * hess[0, 1]
                  + m_mat[1, 1] * hess[1, 1])
    got = warped_laplacian(grid, psi, m_mat)
    assert np.max(np.abs(got - want)) < 1e-10


# ---------------------------------------------------------------------------
# ground states
# ---------------------------------------------------------------------------

def test_noninteracting_isotropic_ground_state_energy():
    grid = Grid2D(n=128, length=16.0)
    cfg = TrapConfig(d=2, omega0=(1.0, 1.0), g=0.0)
    state = ground_state_imaginary_time(grid, cfg)
    kernel = SplitStepKernel(grid, cfg.omega_sq0, 0.0)
    terms = energy_terms_grid(grid, state.amps, kernel.v0, 0.0)
    assert terms["total"] == pytest.approx(1.0, abs=1e-4)
    assert terms["kinetic"] == pytest.approx(0.5, abs=1e-4)
    assert terms["potential"] == pytest.approx(0.5, abs=1e-4)
    assert state.mu == pytest.approx(1.0, abs=1e-4)


def test_noninteracting_anisotropic_ground_state_energy():
    grid = Grid2D(n=128, length=16.0)
    cfg = TrapConfig(d=2, omega0=(1.0, 1.5), g=0.0)
    state = ground_state_imaginary_time(grid, cfg)
    kernel = SplitStepKernel(grid, cfg.omega_sq0, 0.0)
    terms = energy_terms_grid(grid, state.amps, kernel.v0, 0.0)
    assert terms["total"] == pytest.approx(1.25, abs=2e-4)


def test_interacting_ground_state(ground, headline_cfg):
    assert ground.norm == pytest.approx(1.0, rel=1e-12)
    assert ground.boundary_mass < 1e-8
    # strong coupling: mu close to the parabola value 6.9099
    assert abs(ground.mu - 6.90988298942671) / 6.90988298942671 < 0.04
    obs = grid_observables(GRID, ground.amps)
    assert obs["r_mean"] == pytest.approx(np.zeros(2), abs=1e-9)
    assert obs["p_mean"] == pytest.approx(np.zeros(2), abs=1e-9)
    # the cloud is wider along the soft x axis
    assert obs["second_moment"][0, 0] > 1.8 * obs["second_moment"][1, 1]


def test_ground_state_rejects_non_planar_configs():
    cfg = TrapConfig(d=3, omega0=(1.0, 1.5, 2.0), g=1.0)
    with pytest.raises(ValueError):
        ground_state_imaginary_time(Grid2D(n=16, length=8.0), cfg)


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def test_stationary_gaussian_stays_put():
    """g = 0: the sampled oscillator ground state is held to sub-1e-6 per
    trap period, so the propagator adds no spurious dynamics of its own."""
    cfg = TrapConfig(d=2, omega0=(1.0, 1.5), g=0.0)
    grid = Grid2D(n=96, length=14.0)
    xx, yy = grid.mesh()
    amps = np.exp(-0.5 * (xx ** 2 + 1.5 * yy ** 2)).astype(complex)
    amps /= math.sqrt(float(np.sum(np.abs(amps) ** 2)) * grid.cell_volume)
    field = FieldState(grid=grid, amps=amps, tau=0.0, mu=1.25)
    log = propagate_real(field, AdaptiveState.identity(2),
                         TrapSchedule.static(cfg), dt=2e-3, n_steps=3142,
                         stride=400)
    assert np.max(log.residual_l2) < 2e-6
    assert np.max(log.bures_vs_ref) < 2e-6
    assert np.max(np.abs(log.norms - log.norms[0])) < 1e-11


def test_static_trap_is_stationary(static_run, ground, headline_cfg):
    """The small density breathing left over is set by the relaxation step
    of the ground state, not by the real-time propagation."""
    assert np.max(static_run.residual_l2) < 1e-2
    assert np.max(static_run.bures_vs_ref) < 1e-2
    sched = TrapSchedule.static(headline_cfg)
    finer = propagate_real(ground, AdaptiveState.identity(2), sched,
                           dt=1e-3, n_steps=6000, stride=1200)
    # same sampling comb (every 1.2 time units) as the coarse fixture run
    coarse = static_run.residual_l2[static_run.ts <= 6.0 + 1e-9]
    assert abs(np.max(finer.residual_l2) - np.max(coarse)) < 1e-5


def test_norm_conserved(static_run):
    assert np.max(np.abs(static_run.norms - static_run.norms[0])) < 1e-10


def test_energy_conserved_in_static_trap(static_run):
    e = static_run.e_total
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-8


def test_static_map_stays_identity(static_run):
    assert static_run.lams[-1] == pytest.approx(np.eye(2), abs=1e-12)
    assert np.max(static_run.boundary_mass) < 1e-8
    assert static_run.max_irrot_residual < 1e-12
    assert static_run.adaptive_final.t == pytest.approx(static_run.field_final.tau)


def test_propagation_guards(ground, headline_cfg):
    sched = TrapSchedule.static(headline_cfg)
    ident = AdaptiveState.identity(2)
    with pytest.raises(ValueError):
        propagate_real(ground, ident, sched, dt=1e-2, n_steps=5)  # phase > pi
    with pytest.raises(ValueError):
        propagate_real(ground, ident, sched, dt=4e-3, n_steps=0)
    with pytest.raises(ValueError):
        propagate_real(ground, ident, sched, dt=-4e-3, n_steps=5)
    with pytest.raises(ValueError):
        propagate_real(ground, ident, sched, dt=4e-3, n_steps=5, stride=0)
    with pytest.raises(ValueError):
        propagate_real(ground, AdaptiveState.identity(2, t=1.0), sched,
                       dt=4e-3, n_steps=5)
    cfg3 = TrapConfig(d=3, omega0=(1.0, 1.5, 2.0), g=1.0)
    with pytest.raises(ValueError):
        propagate_real(ground, ident, TrapSchedule.static(cfg3),
                       dt=4e-3, n_steps=5)
    flipped = AdaptiveState(t=0.0, lam=np.diag([-1.0, 1.0]),
                            lam_dot=np.zeros((2, 2)))
    with pytest.raises(FloatingPointError):
        propagate_real(ground, flipped, sched, dt=4e-3, n_steps=5)


def test_log_recording_layout(ground, headline_cfg):
    sched = TrapSchedule.static(headline_cfg)
    log = propagate_real(ground, AdaptiveState.identity(2), sched,
                         dt=4e-3, n_steps=205, stride=50, snapshot_stride=100)
    # samples at 0, 50, 100, 150, 200 and the final step 205
    assert log.ts == pytest.approx(4e-3 * np.array([0, 50, 100, 150, 200, 205]))
    assert log.norms.shape == log.ts.shape == log.det_lams.shape
    assert log.e_total.shape == log.ts.shape
    # snapshots at 0, 100, 200 and the forced final one
    taus = [s.tau for s in log.snapshots]
    assert taus == pytest.approx([0.0, 0.4, 0.8, 0.82])
    rebuilt = log.snapshots[-1].adaptive_state()
    assert rebuilt.t == pytest.approx(0.82)
    assert rebuilt.lam == pytest.approx(log.lams[-1])
    log2 = propagate_real(ground, AdaptiveState.identity(2), sched,
                          dt=4e-3, n_steps=10, record_energy=False)
    assert log2.e_total.size == 0
    assert log2.ts.size == 2


def test_free_expansion_stays_on_the_adapted_grid(release_run, ground,
                                                  headline_cfg):
    """The adapted field stays compact while the lab cloud outgrows a
    same-sized box; that is the point of propagating in the scaled frame."""
    from scipy.integrate import solve_ivp

    assert np.max(release_run.boundary_mass) < 1e-8
    # the map integrated alongside the field matches an independent solver
    w0 = headline_cfg.omega_sq0

    def rhs(t, y):
        lam = y[:4].reshape(2, 2)
        acc = np.linalg.solve(lam.T, w0) / np.linalg.det(lam)
        return np.concatenate([y[4:], acc.ravel()])

    y0 = np.concatenate([np.eye(2).ravel(), np.zeros(4)])
    sol = solve_ivp(rhs, (0.0, 3.0), y0, rtol=1e-12, atol=1e-13,
                    method="DOP853")
    det_want = float(np.linalg.det(sol.y[:4, -1].reshape(2, 2)))
    assert release_run.det_lams[-1] == pytest.approx(det_want, rel=1e-9)
    snap = release_run.snapshots[-1]
    com = ComState.at_rest(2, t=snap.tau)
    with pytest.raises(ValueError):
        to_lab_frame(FieldState(grid=GRID, amps=snap.amps, tau=snap.tau,
                                mu=ground.mu),
                     snap.adaptive_state(), com, GRID)
    big = Grid2D(n=320, length=36.0)
    lab = to_lab_frame(FieldState(grid=GRID, amps=snap.amps, tau=snap.tau,
                                  mu=ground.mu),
                       snap.adaptive_state(), com, big)
    # bilinear resampling smooths the cloud edge at the few-1e-3 level
    assert lab.norm == pytest.approx(1.0, abs=5e-3)


def test_lab_frame_identity_map(ground):
    com = ComState.at_rest(2)
    out = to_lab_frame(ground, AdaptiveState.identity(2), com, GRID)
    assert np.max(np.abs(out.amps - ground.amps)) < 1e-13
    back = from_lab_frame(out, AdaptiveState.identity(2), com, GRID)
    assert np.max(np.abs(back.amps - ground.amps)) < 1e-13


def test_lab_frame_round_trip(release_run, ground):
    snap = release_run.snapshots[1]
    assert snap.tau == pytest.approx(1.0)
    field = FieldState(grid=GRID, amps=snap.amps, tau=snap.tau, mu=ground.mu)
    com = ComState.at_rest(2, t=snap.tau)
    lab = to_lab_frame(field, snap.adaptive_state(), com,
                       Grid2D(n=256, length=22.0))
    assert lab.norm == pytest.approx(field.norm, rel=3e-3)
    back = from_lab_frame(lab, snap.adaptive_state(), com, GRID)
    num = float(np.sum(np.abs(back.amps - field.amps) ** 2))
    den = float(np.sum(np.abs(field.amps) ** 2))
    assert math.sqrt(num / den) < 1.5e-3


def test_frame_change_guards(ground):
    com = ComState.at_rest(2)
    with pytest.raises(ValueError):
        to_lab_frame(ground, AdaptiveState.identity(2),
                     ComState.at_rest(2, t=0.5), GRID)
    # a field pushed against its boundary is rejected before resampling
    bad = FieldState(grid=Grid2D(n=16, length=2.0),
                     amps=np.ones((16, 16), complex), tau=0.0, mu=0.0)
    with pytest.raises(ValueError):
        to_lab_frame(bad, AdaptiveState.identity(2), com, GRID)
    with pytest.raises(ValueError):
        from_lab_frame(bad, AdaptiveState.identity(2), com, GRID)
    shrunk = AdaptiveState(t=0.0, lam=np.diag([-0.5, 0.5]),
                           lam_dot=np.zeros((2, 2)))
    with pytest.raises(FloatingPointError):
        to_lab_frame(ground, shrunk, com, GRID)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_bures_distance_limits():
    grid = Grid2D(n=64, length=12.0)
    psi = _gaussian(grid)
    assert bures_distance(grid, psi, psi) == 0.0
    assert bures_distance(grid, psi, 3.7 * psi) == 0.0  # scale-free
    xx, _ = grid.mesh()
    odd = xx * psi  # opposite parity, exactly orthogonal
    assert bures_distance(grid, psi, odd) == pytest.approx(math.sqrt(2.0),
                                                           abs=1e-12)
    with pytest.raises(ValueError):
        bures_distance(grid, psi, np.zeros_like(psi))


def test_bures_distance_gaussian_width_value():
    grid = Grid2D(n=128, length=16.0)
    sigma = 1.1
    got = bures_distance(grid, _gaussian(grid, 1.0), _gaussian(grid, sigma))
    want = math.sqrt(2.0 - 4.0 * sigma / (sigma ** 2 + 1.0))
    assert got == pytest.approx(want, abs=1e-8)
    assert want == pytest.approx(0.0951303, abs=1e-7)


def test_residual_metric_localizes_the_mismatch():
    grid = Grid2D(n=64, length=12.0)
    psi = _gaussian(grid)
    met0 = residual_metric(grid, psi, psi)
    assert met0.l2 == 0.0 and met0.max_value == 0.0
    bumped = psi.copy()
    delta = 0.05
    bumped[40, 22] += delta * np.exp(1j * np.angle(bumped[40, 22]))
    met = residual_metric(grid, bumped, psi)
    assert met.max_location == (pytest.approx(grid.axis[40]),
                                pytest.approx(grid.axis[22]))
    assert met.max_value == pytest.approx(delta ** 2, rel=1e-12)
    norm_ref = float(np.sum(np.abs(psi) ** 2)) * grid.cell_volume
    want_l2 = math.sqrt(delta ** 2 * grid.cell_volume / norm_ref)
    assert met.l2 == pytest.approx(want_l2, rel=1e-12)
    # larger mismatch moves both metrics the same way
    bumped2 = psi.copy()
    bumped2[40, 22] += 2 * delta * np.exp(1j * np.angle(bumped2[40, 22]))
    met2 = residual_metric(grid, bumped2, psi)
    assert met2.l2 > met.l2
    assert bures_distance(grid, bumped2, psi) > bures_distance(grid, bumped, psi)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def test_observables_of_an_analytic_gaussian():
    grid = Grid2D(n=96, length=11.0)
    sigma = 1.0
    psi = _gaussian(grid, sigma)
    obs = grid_observables(grid, psi)
    assert obs["norm"] == pytest.approx(1.0, rel=1e-12)
    assert obs["r_mean"] == pytest.approx(np.zeros(2), abs=1e-12)
    assert obs["p_mean"] == pytest.approx(np.zeros(2), abs=1e-12)
    assert obs["second_moment"] == pytest.approx(0.5 * sigma ** 2 * np.eye(2),
                                                 abs=1e-9)
    with pytest.raises(ValueError):
        grid_observables(grid, np.zeros_like(psi))


def test_plane_wave_boost_shifts_momentum_exactly():
    grid = Grid2D(n=96, length=11.0)
    psi = _gaussian(grid)
    k0 = 2.0 * math.pi / grid.length * np.array([3.0, -2.0])
    xx, yy = grid.mesh()
    boosted = psi * np.exp(1j * (k0[0] * xx + k0[1] * yy))
    obs = grid_observables(grid, boosted)
    assert obs["p_mean"] == pytest.approx(k0, abs=1e-10)  # hbar = 1
    assert obs["r_mean"] == pytest.approx(np.zeros(2), abs=1e-12)


def test_momentum_distribution_quadrature_and_shape():
    grid = Grid2D(n=128, length=16.0)
    sigma = 1.0
    psi = _gaussian(grid, sigma)
    p_axis, dist = momentum_distribution(grid, psi)
    dp = p_axis[1] - p_axis[0]
    assert float(dist.sum()) * dp ** 2 == pytest.approx(1.0, rel=1e-10)
    # |psi~(p)|^2 = (sigma^2/pi) exp(-p^2 sigma^2) for this Gaussian
    i0 = np.argmin(np.abs(p_axis))
    assert p_axis[i0] == pytest.approx(0.0, abs=1e-12)
    want0 = sigma ** 2 / math.pi
    assert dist[i0, i0] == pytest.approx(want0, rel=1e-6)
    i1 = i0 + 4
    p1 = p_axis[i1]
    want1 = sigma ** 2 / math.pi * math.exp(-(p1 ** 2) * sigma ** 2)
    assert dist[i0, i1] == pytest.approx(want1, rel=1e-6)


def test_principal_angle_of_synthetic_clouds():
    grid = Grid2D(n=128, length=16.0)
    xx, yy = grid.mesh()
    for theta in (0.0, 0.3, 2.8):
        c, s = math.cos(theta), math.sin(theta)
        u = c * xx + s * yy
        v = -s * xx + c * yy
        psi = np.exp(-(u ** 2 / 8.0 + v ** 2) / 2.0).astype(complex)
        got = principal_angle(grid, psi)
        assert got == pytest.approx(theta % math.pi, abs=1e-3)
    with pytest.raises(ValueError):
        principal_angle(grid, _gaussian(grid))


def test_moment_principal_angle_direct():
    theta = 1.0
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, -s], [s, c]])
    mom = r @ np.diag([4.0, 1.0]) @ r.T
    assert moment_principal_angle(mom) == pytest.approx(theta, abs=1e-12)


def test_unwrap_principal_angles():
    wrapped = np.array([2.9, 3.05, (3.2 % math.pi), (3.35 % math.pi), 0.5])
    out = unwrap_principal_angles(wrapped)
    assert out == pytest.approx([2.9, 3.05, 3.2, 3.35, 0.5 + math.pi],
                                abs=1e-12)
    assert np.max(np.abs(np.diff(out))) < math.pi / 2.0
