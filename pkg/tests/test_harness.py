import numpy as np
import pytest

from coldstart.dynamics import BrusselatorParams, Trajectory, integrate_and_sample
from coldstart.harness import (
    aligned_prediction,
    long_horizon_mse,
    phase_error,
    state_manifold_report,
    sync_error_demo,
    write_csv,
)

PARAMS = BrusselatorParams()


def test_phase_error_sanity():
    t = np.arange(50)
    u = np.sin(2 * np.pi * t / 32) + 0.1 * np.cos(2 * np.pi * t / 16)
    assert phase_error(u, u) == 0
    for k in (1, 5, 15, -9):
        assert phase_error(np.roll(u, k), u) == k


def test_long_horizon_mse_masks_prefix():
    u = np.zeros(101)
    pred = aligned_prediction(101, np.full(96, 2.0), 5)
    # only samples >= 20 count
    assert long_horizon_mse(pred, u, start=20) == 4.0
    pred[:50] = np.nan
    assert long_horizon_mse(pred, u, start=20) == 4.0
    with pytest.raises(ValueError):
        long_horizon_mse(np.full(101, np.nan), u)


def test_sync_demo_matches_quadrature_oracle():
    traj = integrate_and_sample(PARAMS, (0.8, 1.7), t_end=10.0, dt_sample=0.02)
    res = sync_error_demo(PARAMS, traj.v[0] - 1.0, traj)
    # independent oracle: cumulative trapezoid of the interpolated forcing
    from scipy.integrate import cumulative_trapezoid
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(traj.times, traj.u)
    fine = np.linspace(0.0, 10.0, 20001)
    integral = cumulative_trapezoid(spline(fine) ** 2, fine, initial=0.0)
    formula = abs(res.e1[0]) * np.exp(-np.interp(traj.times, fine, integral))
    assert np.max(np.abs(np.abs(res.e1) - formula)) <= 0.01 * abs(res.e1[0])
    # pointwise relative agreement also holds on this configuration
    assert np.max(np.abs(np.abs(res.e1) - formula) / formula) <= 0.01


def test_sync_demo_monotone_decay():
    traj = integrate_and_sample(PARAMS, (1.3, 0.4), t_end=10.0, dt_sample=0.02)
    res = sync_error_demo(PARAMS, traj.v[0] + 0.5, traj)
    assert np.all(np.diff(np.abs(res.e1)) <= 0.0)


def test_sync_demo_zero_forcing_constant_error():
    traj = Trajectory(dt=0.1, u=np.zeros(40), v=np.full(40, 2.5))
    res = sync_error_demo(PARAMS, 1.0, traj)
    assert np.max(np.abs(res.e1 - 1.5)) <= 1e-12


def test_sync_demo_requires_hidden_variable():
    traj = Trajectory(dt=0.1, u=np.linspace(0, 1, 20))
    with pytest.raises(ValueError):
        sync_error_demo(PARAMS, 0.0, traj)


def test_state_manifold_report_shapes(random_model, small_dataset):
    rng = np.random.default_rng(0)
    cloud = rng.normal(size=(500, 4))
    rep = state_manifold_report(random_model, small_dataset.train, cloud, n_rollouts=3)
    T = len(small_dataset.train[0].u)
    assert rep.states_c.shape == (3, T, 4)
    assert rep.dist_to_cloud.shape == (3, T)
    assert rep.dist_median.shape == (T,)
    # t = 0 row is the shared zero initialization
    assert np.all(rep.states_c[:, 0] == 0.0)
    assert np.all(rep.states_h[:, 0] == 0.0)


def test_write_csv_formats(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(path, ["a", "b"], [(1, 0.5), ("x", np.float64(0.25))])
    assert path.read_text() == "a,b\n1,0.5\nx,0.25\n"
