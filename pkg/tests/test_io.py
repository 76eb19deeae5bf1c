import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from granfin.cmaes import Evaluation
from granfin.integrate import TrajectoryRecord
from granfin.io import (ExperimentalLog, forward_markers, ingest_log, read_eval_log, read_record,
                        record_columns, to_jsonable, write_eval_log, write_log, write_record,
                        write_summary)
from granfin.scenarios import DragProtocol, run_drag

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def records(draw):
    n = draw(st.integers(1, 6))
    J = draw(st.integers(0, 4))
    col = lambda *shape: draw(arrays(float, shape, elements=finite))  # noqa: E731
    t = np.cumsum(np.abs(col(n))) + np.arange(n)
    return TrajectoryRecord(t, col(n, J + 3), col(n, J + 3), col(n, 3), col(n, J), col(n, 4), col(n),
                            col(n), {"note": "x"})


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(records())
def test_record_round_trip(tmp_path, rec):
    path = tmp_path / "rec.csv"
    write_record(path, rec, {"seed": 3})
    back = read_record(path)
    for name in ("t", "q", "qd", "reaction", "joint_torque", "work", "kinetic", "potential"):
        assert np.array_equal(getattr(back, name), getattr(rec, name)), name
    assert back.meta["seed"] == "3"


def test_record_header_order(tmp_path, medium, origami):
    rec = run_drag(origami, medium, DragProtocol(0.01, 0.03, cycles=1)).record
    path = tmp_path / "rec.csv"
    write_record(path, rec)
    header = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")][0].split(",")
    core, _ = record_columns(3)
    assert header[:len(core)] == ["t", "x0", "y0", "theta_p", "gamma_1", "gamma_2", "gamma_3",
                                  "dgamma_1", "dgamma_2", "dgamma_3", "Fx", "Fy", "Tz"]


def test_simulated_record_becomes_log(tmp_path, medium, origami):
    rec = run_drag(origami, medium, DragProtocol(0.03, 0.03, cycles=1)).record
    path = tmp_path / "rec.csv"
    write_record(path, rec)
    log = ingest_log(path)
    assert np.array_equal(log.t, rec.t)
    assert np.array_equal(log.gamma, rec.gamma)
    assert log.speed == pytest.approx(0.03)


def test_log_write_ingest(tmp_path):
    t = np.linspace(0, 1, 11)
    log = ExperimentalLog(t, np.column_stack([t, t ** 2, -t]), 0.02)
    path = tmp_path / "log.csv"
    write_log(path, log)
    back = ingest_log(path)
    assert back.speed == 0.02
    assert np.array_equal(back.gamma, log.gamma)


def test_marker_log_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    T = 50
    lengths = np.array([0.005, 0.02, 0.02, 0.02])
    t = np.linspace(0.0, 2.0, T)
    gamma = np.column_stack([0.6 * np.sin(t), 0.3 * np.sin(2 * t), 0.1 * t])
    base = np.column_stack([np.zeros(T), 0.03 * t])
    first = np.pi + rng.normal(0, 0.01, T)
    pts = forward_markers(base, first, gamma, lengths)
    names = ["t"] + [f"m{a}_{i}" for i in range(5) for a in "xy"]
    body = np.column_stack([t, pts.reshape(T, -1)])
    text = "# speed: 0.03\n" + ",".join(names) + "\n" + "\n".join(",".join("%.17g" % v for v in r) for r in body)
    path = tmp_path / "markers.csv"
    path.write_text(text)
    log = ingest_log(path, lengths=lengths)
    assert np.allclose(log.gamma, gamma, atol=1e-12)
    assert log.meta["marker_residual"] < 1e-6
    assert log.speed == 0.03


def test_resample_uniform_grid():
    log = ExperimentalLog([0.0, 0.3, 1.0], [[0.0], [0.3], [1.0]], 0.01)
    r = log.resample(0.25)
    assert np.allclose(r.t, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(r.gamma[:, 0], r.t)


def test_shuffled_rows_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,gamma_1\n0,0\n2,0.1\n1,0.2\n")
    with pytest.raises(ValueError, match="strictly increasing"):
        ingest_log(path, speed=0.01)


@pytest.mark.parametrize("text, match", [("gamma_1\n0\n1\n", "'t'"), ("t,foo\n0,1\n1,2\n", "gamma_i"),
                                         ("t,gamma_2\n0,1\n1,2\n", "gamma_1"),
                                         ("t,gamma_1\n0,1\n1,2\n", "speed")])
def test_bad_logs(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        ingest_log(path)


def test_missing_record_columns(tmp_path):
    path = tmp_path / "partial.csv"
    path.write_text("t,x0,y0,theta_p\n0,0,0,0\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_record(path)


def test_eval_log_round_trip(tmp_path):
    evals = [Evaluation(0, 0, np.array([0.1, 0.2]), 1.5), Evaluation(0, 1, np.array([0.3, 0.4]), np.inf)]
    path = tmp_path / "eval.csv"
    write_eval_log(path, evals, ["a", "b"], {"config_hash": "abc"})
    names, table, meta = read_eval_log(path)
    assert names == ["iter", "eval_id", "a", "b", "objective"]
    assert table[1, 4] == np.inf
    assert meta["config_hash"] == "abc"


def test_summary_is_strict_json(tmp_path):
    path = tmp_path / "s.json"
    write_summary(path, {"eta": np.float64(np.nan), "d": np.arange(3), "ok": True})
    data = json.loads(path.read_text())
    assert data == {"eta": None, "d": [0, 1, 2], "ok": True}
    assert to_jsonable({"x": float("inf")}) == {"x": None}
