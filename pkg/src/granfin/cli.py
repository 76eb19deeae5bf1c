"""Command-line entry point: ``granfin <command> <config> [logs...]``.

Each command writes into the configured output directory (or ``--out``): a
``summary.json``, the effective configuration, CSV records and plain
columnar plot data. Failures exit nonzero and print a JSON error object on
stderr.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, dump_config, load_config
from .fitting import OptimizationFailure, StrokeSetup, fit_damping, optimize_gait
from .rft import calibrate_coefficients, steady_drag_from_record
from .scenarios import (DEG, classify_flapping, run_drag, run_rotate, run_swim)


def _require(cfg, kind, command):
    if cfg.protocol_kind != kind:
        raise ConfigError(kind, f"'{command}' needs a '{kind}' section, config has "
                                f"'{cfg.protocol_kind}'")


class Outputs:
    """Output directory stamped with the producing config hash and seed."""

    def __init__(self, cfg, command, out=None):
        self.dir = Path(out or cfg.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.meta = {"command": command, "config_hash": cfg.config_hash, "seed": cfg.seed}
        (self.dir / "effective_config.yaml").write_text(
            f"# config_hash: {cfg.config_hash}\n# seed: {cfg.seed}\n" + dump_config(cfg))

    def path(self, name):
        return self.dir / name

    def record(self, name, record):
        io.write_record(self.path(name), record, self.meta)

    def columns(self, name, names, cols):
        io.write_columns(self.path(name), names, cols, self.meta)

    def summary(self, data):
        data = {**self.meta, **data}
        io.write_summary(self.path("summary.json"), data)
        return data


def _curve_table(result, kept_only=True):
    rows = []
    discard = result.protocol.discard_first and result.protocol.cycles > 1
    for c in result.curves:
        if kept_only and discard and c.cycle == 1:
            continue
        b = 0.0 if c.branch == "recovery" else 1.0
        for i in range(len(c.t)):
            rows.append([c.cycle, b, c.position[i], c.load[i], *c.gamma[i]])
    return np.array(rows)


def _cycle_summary(result):
    return {"steady_power": result.steady_power, "steady_recovery": result.steady_recovery,
            "asymmetry": result.asymmetry, "recovery_gamma": result.recovery_gamma,
            "power_gamma": result.power_gamma, "cycle_spread": result.cycle_spread,
            "cycles": result.protocol.cycles, "discard_first": result.protocol.discard_first}


def cmd_drag(cfg, args, out):
    _require(cfg, "drag", "drag")
    res = run_drag(cfg.fin, cfg.medium, cfg.protocol, cfg.integrator)
    out.record("record.csv", res.record)
    tab = _curve_table(res)
    J = res.record.n_joints
    out.columns("force_displacement.dat", ["cycle", "branch", "y_m", "Fy_N"], tab[:, :4].T)
    out.columns("gamma_position.dat", ["cycle", "branch", "y_m"] + [f"gamma_{i}" for i in range(1, J + 1)],
                np.delete(tab, 3, axis=1).T)
    return out.summary({"drag": _cycle_summary(res)})


def cmd_rotate(cfg, args, out):
    _require(cfg, "rotate", "rotate")
    res = run_rotate(cfg.fin, cfg.medium, cfg.protocol, cfg.integrator)
    out.record("record.csv", res.record)
    tab = _curve_table(res)
    if tab.size:
        out.columns("torque_angle.dat", ["cycle", "branch", "angle_rad", "Tz_Nm"], tab[:, :4].T)
    return out.summary({"rotate": _cycle_summary(res)})


def cmd_classify(cfg, args, out):
    _require(cfg, "flapping", "classify")
    p = cfg.protocol
    res = classify_flapping(cfg.fin, cfg.medium, p["amplitudes"], p["speed"], p["attack_angle"],
                            p["cycles"], p["plateau_tol"], p["flat_tol"], cfg.integrator)
    out.record("probe_record.csv", res.probe.record)
    rec = res.probe.branch("recovery")[0]
    J = rec.gamma.shape[1]
    out.columns("gamma_position.dat", ["y_m", "Fy_N"] + [f"gamma_{i}" for i in range(1, J + 1)],
                [rec.position, rec.load, *rec.gamma.T])
    regimes = [{"amplitude": r.amplitude, "regime": r.regime, "net_impulse": r.net_impulse,
                "stroke_impulse": r.stroke_impulse, "peak_deflection": r.peak_deflection}
               for r in res.regimes]
    return out.summary({"flapping": {"d_f1": res.d_f1, "d_f1_r": res.d_f1_r, "regimes": regimes}})


def _swim_summary(sw):
    return {"theta1_deg": sw.gait.theta1 / DEG, "theta2_deg": sw.gait.theta2 / DEG,
            "arm_length": sw.gait.arm_length, "omega_deg": sw.gait.omega / DEG,
            "D1": sw.d1, "D2": sw.d2, "eta_cycles": sw.eta_cycles, "eta": sw.eta,
            "eta_defined": sw.defined, "net_speed": sw.net_speed, "converged": sw.converged}


def cmd_swim(cfg, args, out):
    _require(cfg, "gait", "swim")
    sw = run_swim(cfg.robot, cfg.medium, cfg.protocol, cfg.integrator)
    if sw.record is not None:
        out.record("record.csv", sw.record)
        r = sw.record
        out.columns("trajectory.dat", ["t_s", "x_body_m", "servo_angle_rad"], [r.t, r.x0, -r.theta_p])
    return out.summary({"swim": _swim_summary(sw)})


def cmd_fit_damping(cfg, args, out):
    _require(cfg, "drag", "fit-damping")
    if not args.logs:
        raise ValueError("fit-damping needs at least one log file")
    o = cfg.optimizer
    logs = [io.ingest_log(p, lengths=args.lengths) for p in args.logs]
    setup = StrokeSetup(cfg.protocol.attack_angle, o.stroke_sample_dt)
    lo, hi = o.damping_bounds
    res = fit_damping(cfg.fin, cfg.medium, logs, bounds=o.damping_bounds,
                      sigma0=min(0.25 * (hi - lo), o.sigma0) if hi > lo else o.sigma0,
                      budget=o.budget, seed=cfg.seed, setup=setup, integrator=cfg.integrator)
    io.write_eval_log(out.path("eval_log.csv"), res.evaluations, ["b"], out.meta)
    out.columns("mse_per_speed.dat", ["speed_m_s", "mse_rad2"],
                [list(res.per_speed_mse), list(res.per_speed_mse.values())])
    return out.summary({"fit_damping": {
        "b": float(res.x[0]), "E": res.fun, "n_evals": res.n_evals, "converged": res.converged,
        "stop": res.message, "per_speed_mse": res.per_speed_mse, **res.extras}})


def cmd_calibrate(cfg, args, out):
    _require(cfg, "drag", "calibrate-medium")
    if not args.logs:
        raise ValueError("calibrate-medium needs rigid-plate drag records")
    samples = [steady_drag_from_record(io.read_record(p), cfg.fin.area) for p in args.logs]
    m = cfg.medium
    cal = calibrate_coefficients(samples, m.mode, m.v_eps, grain_diameter=m.grain_diameter,
                                 depth=m.depth, elements_per_segment=m.elements_per_segment)
    out.columns("steady_drag.dat", ["attack_angle_rad", "resistive_N", "residual_N"],
                [[s.attack_angle for s in samples], [s.resistive for s in samples], cal.residuals])
    return out.summary({"calibrate_medium": {
        "sigma_perp": cal.medium.sigma_perp, "sigma_par": cal.medium.sigma_par,
        "mode": cal.medium.mode, "rms_residual": cal.rms_residual, "residuals": cal.residuals}})


def cmd_optimize_gait(cfg, args, out):
    _require(cfg, "gait", "optimize-gait")
    g = cfg.protocol
    o = cfg.optimizer
    res = optimize_gait(cfg.robot, cfg.medium, bounds=o.gait_bounds,
                        x0=(g.theta1, g.theta2, g.arm_length), sigma0=o.sigma0, budget=o.budget,
                        seed=cfg.seed, omega=g.omega, cycles=g.cycles, integrator=cfg.integrator)
    io.write_eval_log(out.path("eval_log.csv"), res.evaluations, ["theta1_rad", "theta2_rad", "arm_length_m"],
                      out.meta)
    out.columns("incumbent.dat", ["generation", "best_one_minus_eta"],
                [np.arange(len(res.history)), res.history])
    best = res.extras["gait"]
    return out.summary({"optimize_gait": {
        "theta1_deg": best.theta1 / DEG, "theta2_deg": best.theta2 / DEG,
        "arm_length": best.arm_length, "eta_best": res.extras["eta_best"],
        "objective": res.fun, "n_evals": res.n_evals, "stop": res.message,
        "converged": res.converged, "eta_range": res.extras["eta_range"],
        "flat_landscape": res.extras["flat_landscape"]}})


COMMANDS = {
    "drag": (cmd_drag, "linear drag protocol"),
    "rotate": (cmd_rotate, "rotation protocol"),
    "classify": (cmd_classify, "flapping regimes over an amplitude sweep"),
    "swim": (cmd_swim, "two-fin robot swimming with one gait"),
    "fit-damping": (cmd_fit_damping, "fit hinge damping to joint-angle logs"),
    "calibrate-medium": (cmd_calibrate, "fit RFT coefficients to rigid-plate drag records"),
    "optimize-gait": (cmd_optimize_gait, "CMA-ES search for the most efficient gait"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="granfin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML run configuration")
        if name in ("fit-damping", "calibrate-medium"):
            p.add_argument("logs", nargs="*", help="CSV logs or records")
        if name == "fit-damping":
            p.add_argument("--lengths", type=float, nargs="+", default=None,
                           help="link lengths (m) for marker logs, base to tip")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Outputs(cfg, args.command, args.out)
        summary = COMMANDS[args.command][0](cfg, args, out)
    except ConfigError as exc:
        err = {"error": "ConfigError", "field": exc.path, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, OptimizationFailure) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(io.to_jsonable({"output_dir": str(out.dir), **summary}), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
