import math

import numpy as np
import pytest
from scipy.linalg import expm

from npgt.dynamics import (
    DivergenceError,
    IntegratorConfig,
    NPGTState,
    Trajectory,
    initial_state,
    lyapunov,
    rhs,
    simulate,
    step,
    tracking_conservation_error,
)
from npgt.graph import DirectedWeightedGraph, SwitchingSchedule, build_laplacian, generate_er_wb
from npgt.nonlinearity import LinkNonlinearity
from npgt.objectives import (
    LocalObjective,
    NodeCostSuite,
    NonconvexSuite,
    Optimum,
    RegressionSuite,
    generate_nonconvex_coefficients,
    generate_regression_data,
)
from npgt.spectral import assemble

IDENTITY = LinkNonlinearity.identity()
SINGLE = DirectedWeightedGraph([[0.0]])


def shifted_quadratic(c=3.0):
    return NodeCostSuite([LocalObjective(1, lambda x: float((x[0] - c)**2 / 2), lambda x: x - c,
                                         lambda x: np.array([[1.0]]))])


def closed_form(x0, t, c=3.0):
    return c + (x0 - c) * math.exp(-t)


def single_run(method, dt, horizon=1.0, x0=0.0):
    cfg = IntegratorConfig(method=method, dt=dt, horizon=horizon, eta=1.0, record_every=10**9)
    return simulate(shifted_quadratic(), SINGLE, IDENTITY, cfg, x0=[[x0]])


# -- rhs ---------------------------------------------------------------------

def test_rhs_single_node():
    suite = NonconvexSuite(generate_nonconvex_coefficients(1, 4, seed=0))
    x, y, eta = np.array([[0.4]]), np.array([[-1.3]]), 0.7
    xdot, ydot = rhs(NPGTState(0.0, x, y), SINGLE, LinkNonlinearity.log_quantize(0.1), suite, eta)
    assert xdot[0, 0] == pytest.approx(-eta * y[0, 0])
    assert ydot[0, 0] == pytest.approx(suite.hess(x)[0, 0, 0] * -eta * y[0, 0])


def test_consensus_term_vanishes_at_consensus():
    g = generate_er_wb(6, 0.5, seed=1)
    suite = RegressionSuite(generate_regression_data(n=6, seed=0))
    x = np.tile([0.3, -1.0, 2.0], (6, 1))
    y = np.random.default_rng(0).normal(size=(6, 3))
    xdot, _ = rhs(NPGTState(0.0, x, y), g, IDENTITY, suite, 2.0)
    np.testing.assert_allclose(xdot, -2.0 * y, atol=1e-15)


@pytest.mark.parametrize("h", [IDENTITY, LinkNonlinearity.log_quantize(1 / 256)])
def test_equilibrium_is_stationary(h):
    for suite in (RegressionSuite(generate_regression_data(seed=2)),
                  NonconvexSuite(generate_nonconvex_coefficients(10, 40, seed=2))):
        g = generate_er_wb(suite.n, 0.3, seed=3)
        x = np.tile(suite.optimum.x, (suite.n, 1))
        xdot, ydot = rhs(NPGTState(0.0, x, np.zeros_like(x)), g, h, suite, 2.0)
        assert max(np.abs(xdot).max(), np.abs(ydot).max()) <= 1e-10


def test_rhs_accepts_laplacian():
    g = generate_er_wb(5, 0.6, seed=0)
    suite = NonconvexSuite(generate_nonconvex_coefficients(5, 3, seed=0))
    s = NPGTState(0.0, np.arange(5.0)[:, None], np.ones((5, 1)))
    a = rhs(s, g, IDENTITY, suite, 1.0)
    b = rhs(s, build_laplacian(g), IDENTITY, suite, 1.0)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_rhs_reports_non_finite_node():
    bad = LocalObjective(1, lambda x: 0.0, lambda x: np.zeros(1), lambda x: np.array([[np.nan]]))
    good = LocalObjective(1, lambda x: 0.0, lambda x: np.zeros(1), lambda x: np.array([[1.0]]))
    suite = NodeCostSuite([good, bad])
    g = DirectedWeightedGraph([[0, 0.5], [0.5, 0]])
    with pytest.raises(DivergenceError) as info:
        rhs(NPGTState(2.5, np.ones((2, 1)), np.ones((2, 1))), g, IDENTITY, suite, 1.0)
    assert info.value.node == 1 and info.value.t == 2.5


# -- integration -------------------------------------------------------------

def test_rk4_matches_closed_form():
    traj = single_run("rk4", 1e-3, x0=-2.0)
    assert traj.x[-1, 0, 0] == pytest.approx(closed_form(-2.0, 1.0), abs=1e-9)
    assert traj.t[-1] == pytest.approx(1.0)


@pytest.mark.parametrize("method, dts, ratio", [("euler", (0.02, 0.01), 2.0), ("rk4", (0.1, 0.05), 16.0)])
def test_order_of_accuracy(method, dts, ratio):
    errs = [abs(single_run(method, dt, x0=-2.0).x[-1, 0, 0] - closed_form(-2.0, 1.0)) for dt in dts]
    assert errs[0] / errs[1] == pytest.approx(ratio, rel=0.08)


def test_step_matches_simulate():
    suite, cfg = shifted_quadratic(), IntegratorConfig(dt=0.01, horizon=0.05, eta=1.0, record_every=1)
    traj = simulate(suite, SINGLE, IDENTITY, cfg, x0=[[1.0]])
    s = initial_state(suite, cfg, x0=[[1.0]])
    for _ in range(5):
        s = step(s, cfg, SINGLE, IDENTITY, suite)
    np.testing.assert_array_equal(s.x, traj.x[-1])
    assert s.t == pytest.approx(0.05)


def test_zero_dynamics_leave_state_unchanged():
    flat = LocalObjective(1, lambda x: 1.0, lambda x: np.zeros(1), lambda x: np.zeros((1, 1)))
    suite = NodeCostSuite([flat] * 4)
    g = generate_er_wb(4, 1.0, seed=0)
    s = NPGTState(0.0, np.full((4, 1), 0.7), np.zeros((4, 1)))
    s2 = step(s, IntegratorConfig(), g, LinkNonlinearity.log_quantize(0.1), suite)
    np.testing.assert_array_equal(s2.x, s.x)
    np.testing.assert_array_equal(s2.y, s.y)


def test_linear_case_matches_matrix_exponential():
    suite = RegressionSuite(generate_regression_data(n=5, m=40, m_i=20, seed=1))
    g = generate_er_wb(5, 0.6, seed=2)
    eta, T = 2.0, 2.0
    cfg = IntegratorConfig(dt=1e-3, horizon=T, eta=eta, record_every=500)
    traj = simulate(suite, g, IDENTITY, cfg, rng_seed=4)
    A = assemble(build_laplacian(g), suite.hess(traj.x[0]), None, eta).A
    delta0 = np.concatenate([(traj.x[0] - suite.optimum.x).ravel(), traj.y[0].ravel()])
    for k, t in enumerate(traj.t):
        ref = expm(A * t) @ delta0
        got = np.concatenate([(traj.x[k] - suite.optimum.x).ravel(), traj.y[k].ravel()])
        np.testing.assert_allclose(got, ref, atol=1e-8, rtol=0)


def test_simulate_is_reproducible():
    suite = NonconvexSuite(generate_nonconvex_coefficients(6, 5, seed=1))
    sched = SwitchingSchedule.periodic(0.5, seed=3, n=6, link_prob=0.5)
    cfg = IntegratorConfig(dt=1e-2, horizon=3.0, eta=1.0)
    a = simulate(suite, sched, LinkNonlinearity.log_quantize(1 / 64), cfg, rng_seed=9)
    b = simulate(suite, sched, LinkNonlinearity.log_quantize(1 / 64), cfg, rng_seed=9)
    assert a.to_csv() == b.to_csv()


def test_trajectory_channels_and_switch_markers():
    suite = NonconvexSuite(generate_nonconvex_coefficients(6, 5, seed=1))
    sched = SwitchingSchedule.periodic(0.5, seed=3, n=6, link_prob=0.5)
    cfg = IntegratorConfig(dt=1e-2, horizon=2.0, eta=1.0, record_every=5)
    traj = simulate(suite, sched, IDENTITY, cfg, rng_seed=0)
    assert traj.t[0] == 0.0 and np.all(np.diff(traj.t) > 0)
    assert traj.tracking_err[0] == 0.0
    np.testing.assert_allclose(traj.switch_times, [0.55, 1.05, 1.55])
    header, first = traj.to_csv().splitlines()[:2]
    assert header == "t,gap,consensus_err,tracking_err,lyapunov,topology_id"
    assert first.startswith("0.0,") and first.endswith(",0")


def test_initial_state_off_consensus_line():
    suite = NonconvexSuite(generate_nonconvex_coefficients(4, 3, seed=0))
    s = initial_state(suite, IntegratorConfig(), rng_seed=5)
    assert np.all(np.abs(s.x) <= 5) and np.ptp(s.x) > 1e-6
    np.testing.assert_array_equal(s.y, suite.grad(s.x))
    z = initial_state(suite, IntegratorConfig(y_init="paper-zero"), rng_seed=5)
    np.testing.assert_array_equal(z.y, 0.0)


def test_tracking_channel_definitions():
    suite = RegressionSuite(generate_regression_data(seed=0))
    s = initial_state(suite, IntegratorConfig(), rng_seed=1)
    assert tracking_conservation_error(s, suite) == 0.0
    z = initial_state(suite, IntegratorConfig(y_init="zero"), rng_seed=1)
    c0 = -suite.grad(z.x).sum(axis=0)
    assert tracking_conservation_error(z, suite, c0) == 0.0
    assert tracking_conservation_error(z, suite) == pytest.approx(np.abs(c0).max())


def conservation_drift(method, dt, h, horizon=3.0):
    suite = NonconvexSuite(generate_nonconvex_coefficients(8, 10, seed=4))
    sched = SwitchingSchedule.periodic(1.0, seed=2, n=8, link_prob=0.4)
    cfg = IntegratorConfig(method=method, dt=dt, horizon=horizon, eta=1.0, record_every=1)
    return simulate(suite, sched, h, cfg, rng_seed=3).tracking_err.max()


@pytest.mark.parametrize("method, dts, order", [("euler", (4e-3, 2e-3), 1), ("rk4", (2e-2, 1e-2), 4)])
def test_conservation_drift_order(method, dts, order):
    # non-quadratic costs and switching graphs; the drift is pure integration error
    coarse, fine = (conservation_drift(method, dt, IDENTITY) for dt in dts)
    assert 0.85 * 2**order <= coarse / fine <= 1.5 * 2**order


def test_conservation_with_quantized_links():
    h = LinkNonlinearity.log_quantize(1 / 64)
    assert conservation_drift("rk4", 1e-3, h) <= 1e-6
    assert conservation_drift("rk4", 1e-3, h) > conservation_drift("rk4", 5e-4, h)


def test_quadratic_costs_conserve_to_roundoff():
    # the tracked quantity is linear in the state for quadratic costs, which RK stages preserve exactly
    suite = RegressionSuite(generate_regression_data(seed=3))
    g = generate_er_wb(10, 0.25, seed=3)
    cfg = IntegratorConfig(dt=1e-2, horizon=5.0, eta=2.0, record_every=1)
    assert simulate(suite, g, LinkNonlinearity.log_quantize(1 / 256), cfg, rng_seed=0).tracking_err.max() < 1e-12


def test_zero_init_keeps_bias():
    suite = RegressionSuite(generate_regression_data(n=5, m=40, m_i=20, seed=1))
    g = generate_er_wb(5, 0.8, seed=0)
    cfg = IntegratorConfig(dt=1e-2, horizon=40.0, eta=2.0, y_init="zero", record_every=100)
    traj = simulate(suite, g, IDENTITY, cfg, rng_seed=2)
    # the tracker never absorbs the initial gradient sum, so the limit is not the optimum
    assert np.abs(traj.x[-1].mean(axis=0) - suite.optimum.x).max() > 1e-3
    assert traj.tracking_err.max() < 1e-9


class ConcaveSuite(NodeCostSuite):
    """Two nodes with f = -x^2; no minimizer, so the reference point is pinned at 0."""

    def __init__(self):
        concave = LocalObjective(1, lambda x: float(-x[0]**2), lambda x: -2 * x, lambda x: np.array([[-2.0]]))
        super().__init__([concave] * 2)

    def _optimum(self):
        return Optimum(np.zeros(1), 0.0)


def test_divergence_guard():
    g = DirectedWeightedGraph([[0, 0.5], [0.5, 0]])
    cfg = IntegratorConfig(dt=0.05, horizon=100.0, eta=5.0)
    with pytest.raises(DivergenceError) as info:
        simulate(ConcaveSuite(), g, IDENTITY, cfg, x0=[[1.0], [2.0]])
    assert info.value.t is not None


def test_gap_floor_stops_early():
    cfg = IntegratorConfig(dt=1e-2, horizon=50.0, eta=1.0, record_every=1, gap_floor=1e-6)
    traj = simulate(shifted_quadratic(), SINGLE, IDENTITY, cfg, x0=[[0.0]])
    assert traj.gap[-1] < 1e-6 and traj.t[-1] < 50.0


def test_dt_longer_than_dwell_rejected():
    sched = SwitchingSchedule.periodic(0.01, seed=0, n=3, link_prob=1.0)
    suite = NonconvexSuite(generate_nonconvex_coefficients(3, 2, seed=0))
    with pytest.raises(ValueError):
        simulate(suite, sched, IDENTITY, IntegratorConfig(dt=0.02, horizon=1.0))


@pytest.mark.parametrize("kwargs", [dict(method="midpoint"), dict(dt=0.0), dict(y_init="random"),
                                    dict(record_every=0)])
def test_integrator_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_lyapunov_definition():
    s = NPGTState(0.0, np.array([[1.0], [3.0]]), np.array([[2.0], [0.0]]))
    assert lyapunov(s, np.array([1.0])) == pytest.approx(0.5 * (4 + 4))


def test_csv_roundtrip_precision(tmp_path):
    traj = single_run("rk4", 0.1, x0=1.0)
    path = tmp_path / "trace.csv"
    traj.write_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], traj.gap)
    assert isinstance(traj, Trajectory)
