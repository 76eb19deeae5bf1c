import json

import numpy as np
import pytest

from granfin import io
from granfin.cli import main
from granfin.fin import fin_preset
from granfin.fitting import StrokeSetup, synthesize_logs
from granfin.rft import MediumModel
from granfin.scenarios import DEG, DragProtocol, run_drag

MEDIUM = "medium: {sigma_perp: 1400, sigma_par: 300, mode: sine}\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def data_cycles(path):
    names, table, meta = io._read_table(path)
    return names, table, meta


def test_drag_outputs(tmp_path, capsys):
    cfg = write(tmp_path, "drag.yaml", MEDIUM + "fin: {preset: origami-2.0mm}\n"
                "drag: {amplitude: 0.03, cycles: 3}\nintegrator: {decimation: 10}\n")
    code, summary, _ = run(capsys, "drag", cfg, "--out", tmp_path / "out")
    assert code == 0
    assert summary["drag"]["steady_power"] > summary["drag"]["steady_recovery"]
    out = tmp_path / "out"
    names, table, meta = data_cycles(out / "force_displacement.dat")
    assert names == ["cycle", "branch", "y_m", "Fy_N"]
    assert set(table[:, 0]) == {2.0, 3.0}
    for f in out.iterdir():
        text = f.read_text()
        assert summary["config_hash"] in text, f.name
        assert "seed" in text, f.name
    assert io.read_record(out / "record.csv").n_joints == 3
    assert (out / "gamma_position.dat").exists()


def test_rotate_outputs(tmp_path, capsys):
    cfg = write(tmp_path, "rot.yaml", MEDIUM + "fin: {preset: rigid}\n"
                "rotate: {sweep_deg: 30, cycles: 2}\n")
    code, summary, _ = run(capsys, "rotate", cfg, "--out", tmp_path / "out")
    assert code == 0
    names, _, _ = data_cycles(tmp_path / "out" / "torque_angle.dat")
    assert names == ["cycle", "branch", "angle_rad", "Tz_Nm"]


def test_swim_summary(tmp_path, capsys):
    cfg = write(tmp_path, "swim.yaml", MEDIUM + "fin: {preset: origami-2.0mm}\n"
                "gait: {theta1_deg: 60, theta2_deg: -90, arm_length: 0.065}\n")
    code, summary, _ = run(capsys, "swim", cfg, "--out", tmp_path / "out")
    assert code == 0
    s = summary["swim"]
    for key in ("D1", "D2", "eta", "net_speed"):
        assert key in s
    assert len(s["D1"]) == 4
    assert s["eta"] > 0.1
    names, _, _ = data_cycles(tmp_path / "out" / "trajectory.dat")
    assert names == ["t_s", "x_body_m", "servo_angle_rad"]


def test_classify(tmp_path, capsys):
    cfg = write(tmp_path, "flap.yaml", MEDIUM + "fin: {preset: origami-2.0mm}\n"
                "flapping: {amplitudes: [0.0, 0.1], cycles: 2}\nintegrator: {decimation: 20}\n")
    code, summary, _ = run(capsys, "classify", cfg, "--out", tmp_path / "out")
    assert code == 0
    f = summary["flapping"]
    assert 0 < f["d_f1"] < 0.1
    assert [r["regime"] for r in f["regimes"]] == ["small", "large"]


def test_optimize_gait_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, "opt.yaml", MEDIUM + "seed: 11\nfin: {preset: origami-2.0mm}\n"
                "gait: {theta1_deg: 45, theta2_deg: -45, arm_length: 0.065, cycles: 2}\n"
                "optimizer: {budget: 30, theta1_bounds_deg: [30, 60], theta2_bounds_deg: [-60, -30],"
                " arm_length_bounds: [0.06, 0.07]}\n")
    summaries = []
    for k in range(2):
        code, summary, _ = run(capsys, "optimize-gait", cfg, "--out", tmp_path / f"out{k}")
        assert code == 0
        summary.pop("output_dir")
        summaries.append(summary)
    assert summaries[0] == summaries[1]
    logs = [(tmp_path / f"out{k}" / "eval_log.csv").read_text() for k in range(2)]
    assert logs[0] == logs[1]
    names, table, _ = data_cycles(tmp_path / "out0" / "incumbent.dat")
    assert np.all(np.diff(table[:, 1]) <= 0)


def test_fit_damping_command(tmp_path, capsys):
    fin = fin_preset("soft-2.5mm")
    medium = MediumModel(1400, 300, mode="sine")
    setup = StrokeSetup(sample_dt=0.02)
    paths = []
    for log in synthesize_logs(fin.with_damping(0.02), medium, speeds=(0.02, 0.04), stroke=0.03,
                               setup=setup):
        p = tmp_path / f"log_{log.speed:g}.csv"
        io.write_log(p, log)
        paths.append(p)
    cfg = write(tmp_path, "fit.yaml", MEDIUM + "fin: {preset: soft-2.5mm}\ndrag: {}\n"
                "optimizer: {budget: 20, damping_bounds: [0.0, 0.1], stroke_sample_dt: 0.02}\n")
    code, summary, _ = run(capsys, "fit-damping", cfg, *paths, "--out", tmp_path / "out")
    assert code == 0
    fit = summary["fit_damping"]
    assert 0.0 <= fit["b"] <= 0.1
    assert set(fit["per_speed_mse"]) == {"0.02", "0.04"}
    assert fit["n_evals"] <= 20
    names, _, _ = data_cycles(tmp_path / "out" / "mse_per_speed.dat")
    assert names == ["speed_m_s", "mse_rad2"]


def test_calibrate_medium_command(tmp_path, capsys):
    truth = MediumModel(1400, 300, mode="sine")
    rigid = fin_preset("rigid")
    paths = []
    for deg in (30, 60, 90):
        rec = run_drag(rigid, truth, DragProtocol(0.03, 0.03, deg * DEG, cycles=2)).record
        p = tmp_path / f"rigid_{deg}.csv"
        io.write_record(p, rec)
        paths.append(p)
    cfg = write(tmp_path, "cal.yaml", "medium: {sigma_perp: 1, sigma_par: 1, mode: sine}\n"
                "fin: {preset: rigid}\ndrag: {}\n")
    code, summary, _ = run(capsys, "calibrate-medium", cfg, *paths, "--out", tmp_path / "out")
    assert code == 0
    cal = summary["calibrate_medium"]
    assert cal["sigma_perp"] == pytest.approx(1400, rel=0.01)
    assert cal["sigma_par"] == pytest.approx(300, rel=0.05)


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", MEDIUM + "fin: {preset: origami-2.0mm}\n"
                "gait: {theta2_deg: 10}\n")
    code, _, err = run(capsys, "swim", cfg, "--out", tmp_path / "out")
    assert code == 2
    e = json.loads(err)
    assert e["error"] == "ConfigError" and e["field"] == "gait.theta2_deg"


def test_wrong_protocol_for_command(tmp_path, capsys):
    cfg = write(tmp_path, "drag.yaml", MEDIUM + "fin: {preset: rigid}\ndrag: {}\n")
    code, _, err = run(capsys, "swim", cfg, "--out", tmp_path / "out")
    assert code == 2
    assert json.loads(err)["field"] == "gait"


def test_missing_logs_exit(tmp_path, capsys):
    cfg = write(tmp_path, "drag.yaml", MEDIUM + "fin: {preset: rigid}\ndrag: {}\n")
    code, _, err = run(capsys, "fit-damping", cfg, "--out", tmp_path / "out")
    assert code == 1
    assert "log" in json.loads(err)["message"]


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "drag", tmp_path / "nope.yaml")
    assert code == 1
    assert json.loads(err)["error"] == "FileNotFoundError"
