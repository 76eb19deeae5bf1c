import numpy as np
import pytest

from granfin.fin import fin_preset
from granfin.fitting import (OptimizationFailure, StrokeSetup, damping_objective, fit_damping,
                             optimize_gait, synthesize_logs)
from granfin.io import ExperimentalLog
from granfin.scenarios import DEG, GaitParams, RobotSpec, run_swim

B_TRUE = 0.02


@pytest.fixture(scope="module")
def soft_fin():
    return fin_preset("soft-2.5mm")


@pytest.fixture(scope="module")
def logs(soft_fin, medium):
    return synthesize_logs(soft_fin.with_damping(B_TRUE), medium)


def test_synthetic_logs_layout(logs):
    assert [log.speed for log in logs] == [0.010, 0.020, 0.030, 0.040, 0.050]
    for log in logs:
        assert log.gamma.shape == (len(log.t), 3)
        assert log.t[-1] == pytest.approx(0.060 / log.speed)


def test_objective_minimum_is_local(soft_fin, medium, logs):
    energy, _ = damping_objective(soft_fin, medium, logs)
    e0 = energy(B_TRUE)
    assert e0 < 1e-20
    assert e0 <= energy(2 * B_TRUE)
    assert e0 <= energy(0.5 * B_TRUE)


def test_objective_is_reproducible(soft_fin, medium, logs):
    e1, _ = damping_objective(soft_fin, medium, logs)
    e2, _ = damping_objective(soft_fin, medium, logs)
    assert e1(0.035) == e2(0.035)


def test_objective_is_mean_over_speeds(soft_fin, medium, logs):
    energy, breakdown = damping_objective(soft_fin, medium, logs)
    per_speed, per_joint = breakdown(0.035)
    assert set(per_speed) == {log.speed for log in logs}
    assert all(v >= 0 for v in per_speed.values())
    assert energy(0.035) == pytest.approx(sum(per_speed.values()) / 5, rel=1e-15)
    for v, mse in per_speed.items():
        assert mse == pytest.approx(np.mean(per_joint[v]))


def test_single_speed_is_flagged(soft_fin, medium):
    setup = StrokeSetup(sample_dt=0.02)
    one = synthesize_logs(soft_fin.with_damping(B_TRUE), medium, speeds=(0.03,), stroke=0.03, setup=setup)
    res = fit_damping(soft_fin, medium, one, budget=24, setup=setup)
    assert res.extras["single_speed"]
    assert "warning" in res.extras
    assert list(res.per_speed_mse) == [0.03]
    assert 0.0 <= res.x[0] <= 0.5
    assert res.n_evals <= 24


def test_fit_errors(soft_fin, medium):
    with pytest.raises(ValueError, match="at least one"):
        fit_damping(soft_fin, medium, [])
    bad = ExperimentalLog(np.array([0.0, 1.0]), np.zeros((2, 3)), 0.03)
    bad.speed = -0.03  # bypass the log's own validation
    with pytest.raises(ValueError, match="positive"):
        fit_damping(soft_fin, medium, [bad])


def test_collapsed_gait_bounds(medium, origami):
    robot = RobotSpec(origami)
    point = {"theta1": (60 * DEG, 60 * DEG), "theta2": (-90 * DEG, -90 * DEG),
             "arm_length": (0.065, 0.065)}
    res = optimize_gait(robot, medium, bounds=point)
    assert res.n_evals == 1
    assert res.message == "fixed point"
    assert np.allclose(res.x, [60 * DEG, -90 * DEG, 0.065])
    direct = run_swim(robot, medium, GaitParams(60 * DEG, -90 * DEG, arm_length=0.065))
    assert res.extras["eta_best"] == pytest.approx(direct.eta, rel=1e-12)


def test_all_undefined_is_failure(medium, origami):
    point = {"theta1": (0.0, 0.0), "theta2": (0.0, 0.0), "arm_length": (0.065, 0.065)}
    with pytest.raises(OptimizationFailure):
        optimize_gait(RobotSpec(origami), medium, bounds=point)


def test_gait_search_respects_bounds(medium, origami):
    bounds = {"theta1": (30 * DEG, 60 * DEG), "theta2": (-60 * DEG, -30 * DEG),
              "arm_length": (0.060, 0.070)}
    res = optimize_gait(RobotSpec(origami), medium, bounds=bounds, budget=30, seed=1)
    for e in res.evaluations:
        for value, name in zip(e.params, ("theta1", "theta2", "arm_length")):
            lo, hi = bounds[name]
            assert lo - 1e-12 <= value <= hi + 1e-12
    assert np.all(np.diff(res.history) <= 0)
    assert res.extras["gait"].theta1 == res.x[0]


@pytest.mark.slow
def test_rigid_fin_landscape_is_flat(medium, rigid, origami):
    res = optimize_gait(RobotSpec(rigid), medium, budget=30, seed=0)
    assert res.extras["flat_landscape"]
    assert abs(res.extras["eta_best"]) < 0.02
    sym = run_swim(RobotSpec(origami), medium, GaitParams(30 * DEG, -30 * DEG))
    assert res.extras["eta_best"] < abs(sym.eta)
