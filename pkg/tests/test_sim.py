import numpy as np
import pytest

from gridpriv import Scenario, simulate, solve_kkt
from gridpriv.errors import ConfigurationError, DivergenceError
from gridpriv.schemes import (
    EXTENDED_PRIMAL_DUAL,
    INTEGRAL,
    PRIMAL_DUAL,
    PRIVACY_PRESERVING,
)
from gridpriv.sim import (
    SETTLE_THRESHOLD,
    Disturbance,
    Trajectory,
    marginal_costs,
    steady_state_metrics,
)
from tests.conftest import ALL_KINDS, make_scenario


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_all_schemes_run_and_restore_frequency(scenario_factory, kind):
    traj = simulate(scenario_factory(kind, t_end=30.0))
    assert np.isfinite(traj.omega).all()
    assert np.abs(traj.omega[-1]).max() < SETTLE_THRESHOLD


def test_starts_at_equilibrium_before_disturbance(scenario_factory):
    traj = simulate(scenario_factory(EXTENDED_PRIMAL_DUAL, t_end=5.0,
                                     disturbances=((2.0, 0, 0.2),)))
    pre = traj.times < 2.0 - 1e-9
    assert np.abs(traj.omega[pre]).max() < 1e-10
    # commands sit at the pre-disturbance optimum and only move after the step
    assert np.abs(traj.p_c[pre] - traj.p_c[0]).max() < 1e-10
    assert np.abs(traj.p_c[-1] - traj.p_c[0]).max() > 1e-3


@pytest.mark.parametrize("kind", [EXTENDED_PRIMAL_DUAL, PRIMAL_DUAL])
def test_converges_to_dispatch_optimum(scenario_factory, kind, devices4):
    sc = scenario_factory(kind, t_end=60.0)
    traj = simulate(sc)
    p_load = devices4.p_load.copy()
    p_load[0] += 0.2
    kkt = solve_kkt(devices4, p_load)
    np.testing.assert_allclose(traj.p_c[-1], -kkt.lam, rtol=0.0, atol=1e-3)
    mc = marginal_costs(traj, devices4)[-1]
    np.testing.assert_allclose(mc, abs(kkt.lam), rtol=0.0, atol=1e-3)


def test_determinism(scenario_factory):
    a = simulate(scenario_factory(PRIVACY_PRESERVING, seed=5, t_end=5.0))
    b = simulate(scenario_factory(PRIVACY_PRESERVING, seed=5, t_end=5.0))
    for name in ("omega", "p_c", "psi", "xi", "n_f", "s_tilde", "lyapunov"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = simulate(scenario_factory(PRIVACY_PRESERVING, seed=6, t_end=5.0))
    assert not np.array_equal(a.n_f, c.n_f)


def test_dt_refinement_fourth_order(model3, devices4, comm4):
    """Halving the step shrinks the error ~16x (fourth-order integrator)."""
    def run(dt):
        return simulate(make_scenario(model3, devices4, comm4,
                                      EXTENDED_PRIMAL_DUAL, t_end=5.0, dt=dt))
    ref = run(0.00125)
    err = {}
    for dt, stride in ((0.01, 8), (0.005, 4)):
        traj = run(dt)
        err[dt] = np.abs(traj.p_c - ref.p_c[::stride]).max()
    ratio = err[0.01] / err[0.005]
    assert 10.0 < ratio < 22.0
    scale = 1.0 + np.abs(ref.p_c).max()
    assert err[0.005] / scale < 1e-4


def test_recorded_reconstruction_identity(scenario_factory, comm4):
    """Recorded columns satisfy (gamma + xi) pc_dot = s - H psi + n_f exactly."""
    sc = scenario_factory(PRIVACY_PRESERVING, t_end=5.0)
    traj = simulate(sc)
    H = comm4.incidence
    lhs = (sc.scheme.gamma + traj.xi) * traj.pc_dot
    rhs = traj.s_tilde - traj.psi @ H.T + traj.n_f
    assert np.abs(lhs - rhs).max() < 1e-10
    np.testing.assert_allclose(traj.n_d, -traj.xi * traj.pc_dot, atol=1e-12)


def test_privacy_reduces_to_plain_scheme_bitwise(scenario_factory):
    """beta = beta_hat = 0 privacy runs match the plain scheme bit for bit."""
    plain = simulate(scenario_factory(EXTENDED_PRIMAL_DUAL, seed=3, t_end=5.0))
    degenerate = simulate(scenario_factory(
        PRIVACY_PRESERVING, seed=3, t_end=5.0,
        beta=np.zeros(4), beta_hat=np.zeros(4), xi_max=0.0))
    for name in ("omega", "eta", "x", "p_c", "psi", "s_tilde", "pc_dot", "lyapunov"):
        np.testing.assert_array_equal(getattr(plain, name), getattr(degenerate, name))
    assert np.all(degenerate.xi == 0.0)
    assert np.all(degenerate.n_f == 0.0)


def test_lyapunov_monotone(scenario_factory):
    traj = simulate(scenario_factory(EXTENDED_PRIMAL_DUAL, t_end=20.0))
    v = traj.lyapunov
    tol = 1e-7 * (1.0 + v[0])
    # ignore the jump where the disturbance moves the reference-relative state
    after = traj.times >= 1.0
    dv = np.diff(v[after])
    assert np.all(dv <= tol)
    assert v[after][-1] < 1e-3 * v[after][0]


def test_lyapunov_absent_for_bus_level_scheme(scenario_factory):
    traj = simulate(scenario_factory(PRIMAL_DUAL, t_end=2.0))
    assert traj.lyapunov is None


def test_privacy_signal_columns_within_bounds(scenario_factory):
    sc = scenario_factory(PRIVACY_PRESERVING, t_end=10.0)
    traj = simulate(sc)
    beta = sc.scheme.privacy.beta
    beta_hat = sc.scheme.privacy.beta_hat
    omega_at_unit = np.abs(traj.omega[:, sc.devices.bus])
    ok = (np.abs(traj.n_f) < beta * omega_at_unit) | (traj.n_f == 0.0)
    assert ok.all()
    assert (traj.xi >= 0.0).all()
    dxi = np.abs(np.diff(traj.xi, axis=0)) / sc.dt
    assert np.all((dxi < beta_hat) | (dxi == 0.0))


def test_csv_round_trip(tmp_path, scenario_factory):
    traj = simulate(scenario_factory(PRIVACY_PRESERVING, t_end=2.0))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    back = Trajectory.from_csv(path)
    np.testing.assert_array_equal(back.times, traj.times)
    for name in ("omega", "p_c", "psi", "x", "s_tilde", "xi", "n_f", "lyapunov"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "t"
    assert "omega_0" in header and "pc_0" in header and "psi_0" in header
    assert "x_0" in header and "s_tilde_0" in header
    assert "xi_0" in header and "nf_0" in header and "lyapunov" in header


def test_record_stride(model3, devices4, comm4):
    dense = simulate(make_scenario(model3, devices4, comm4,
                                   EXTENDED_PRIMAL_DUAL, t_end=2.0, dt=0.01))
    sc = make_scenario(model3, devices4, comm4, EXTENDED_PRIMAL_DUAL,
                       t_end=2.0, dt=0.01)
    sc.record_stride = 10
    sparse = simulate(sc)
    assert len(sparse.times) == 21
    np.testing.assert_array_equal(sparse.omega, dense.omega[::10])


def test_divergence_raises(model3, devices4, comm4):
    sc = make_scenario(model3, devices4, comm4, EXTENDED_PRIMAL_DUAL,
                       t_end=2000.0, dt=10.0, disturbances=((0.0, 0, 0.5),))
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        simulate(sc)


def test_steady_state_metrics(scenario_factory, devices4):
    traj = simulate(scenario_factory(EXTENDED_PRIMAL_DUAL, t_end=30.0))
    m = steady_state_metrics(traj, window=3.0, devices=devices4)
    assert m["max_abs_omega_end"] < SETTLE_THRESHOLD
    assert m["settle_time"] is not None
    assert m["p_c_spread_end"] < 1e-3
    assert m["marginal_cost_spread_end"] < 1e-2
    with pytest.raises(ConfigurationError):
        steady_state_metrics(traj, window=0.0)
    with pytest.raises(ConfigurationError):
        steady_state_metrics(traj, window=1e9)


def test_scenario_validation(model3, devices4, comm4, scenario_factory):
    with pytest.raises(ConfigurationError):
        make_scenario(model3, devices4, comm4, EXTENDED_PRIMAL_DUAL, dt=0.0)
    with pytest.raises(ConfigurationError):
        make_scenario(model3, devices4, comm4, EXTENDED_PRIMAL_DUAL,
                      disturbances=((1.0, 99, 0.1),))
