"""Damping identification from joint-angle records and swimming-gait search."""
from dataclasses import dataclass, replace

import numpy as np

from .chain import ForceSet, assemble_chain
from .cmaes import ObjectiveSpec, cmaes_minimize
from .fin import build_fin_chain
from .integrate import IntegratorConfig, MotionProtocol, run_trajectory
from .scenarios import GAIT_BOUNDS, GaitParams, run_swim

DAMPING_BOUNDS = (0.0, 0.5)  # N*m*s/rad


class OptimizationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class StrokeSetup:
    """Recovery stroke used for damping fits: flat fin, face-on, moving +y."""

    attack_angle: float = 0.5 * np.pi
    sample_dt: float = 0.01


def simulate_stroke(fin, medium, speed, duration, setup=StrokeSetup(), integrator=None):
    """Joint angles of a fin dragged from rest at ``speed`` for ``duration``."""
    model = assemble_chain(build_fin_chain(fin, "prescribed-translation"))
    motion = MotionProtocol((0.0, duration),
                            ((0.0, 0.0, setup.attack_angle), (0.0, speed * duration, setup.attack_angle)))
    cfg = integrator or IntegratorConfig()
    dec = max(1, int(round(setup.sample_dt / cfg.dt)))
    cfg = replace(cfg, decimation=dec)
    return run_trajectory(model, motion, forces=ForceSet(medium), config=cfg)


def synthesize_logs(fin, medium, speeds=(0.010, 0.020, 0.030, 0.040, 0.050), stroke=0.060,
                    setup=StrokeSetup(), integrator=None):
    """Simulated joint-angle logs, one per speed, for round-trip tests."""
    from .io import ExperimentalLog

    logs = []
    for v in speeds:
        rec = simulate_stroke(fin, medium, v, stroke / v, setup, integrator)
        logs.append(ExperimentalLog(rec.t.copy(), rec.gamma.copy(), v))
    return logs


def _check_logs(logs):
    logs = list(logs)
    if not logs:
        raise ValueError("fit_damping needs at least one trajectory")
    for log in logs:
        if not log.speed > 0:
            raise ValueError(f"trajectory speed label must be positive, got {log.speed}")
    return logs


def damping_objective(fin, medium, logs, setup=StrokeSetup(), integrator=None):
    """Return ``E(b)`` and a function giving its per-speed, per-joint breakdown.

    E is the mean over speeds of the mean squared joint-angle error over
    time and joints.
    """
    logs = _check_logs(logs)

    def breakdown(b):
        f = fin.with_damping(float(b))
        per_speed, per_joint = {}, {}
        for log in logs:
            rec = simulate_stroke(f, medium, log.speed, float(log.t[-1]), setup, integrator)
            sim = np.column_stack([np.interp(log.t, rec.t, rec.gamma[:, j])
                                   for j in range(rec.n_joints)])
            err2 = (sim - log.gamma) ** 2
            per_speed[log.speed] = float(np.mean(err2))
            per_joint[log.speed] = np.mean(err2, axis=0)
        return per_speed, per_joint

    def energy(b):
        b = float(np.atleast_1d(b)[0])
        per_speed, _ = breakdown(b)
        return sum(per_speed.values()) / len(per_speed)

    return energy, breakdown


def fit_damping(fin, medium, logs, bounds=DAMPING_BOUNDS, b0=None, sigma0=None, budget=400,
                tolx=1e-5, seed=0, setup=StrokeSetup(), integrator=None, map_fn=map):
    """Fit the hinge damping ``b`` shared by all joints by 1-D CMA-ES.

    Returns a :class:`FitResult` whose ``per_speed_mse`` maps speed to MSE
    at the optimum; ``extras`` carries the per-joint split, a
    ``single_speed`` flag and the curvature of E at the optimum (small
    values mean poor identifiability).
    """
    logs = _check_logs(logs)
    energy, breakdown = damping_objective(fin, medium, logs, setup, integrator)
    lo, hi = bounds
    b0 = 0.5 * (lo + hi) if b0 is None else b0
    sigma0 = 0.25 * (hi - lo) if sigma0 is None else sigma0
    spec = ObjectiveSpec((b0,), sigma0, (lo,), (hi,), budget=budget, tolx=tolx, seed=seed)
    res = cmaes_minimize(energy, spec, map_fn=map_fn)
    b = float(res.x[0])
    per_speed, per_joint = breakdown(b)
    h = max(0.05 * max(b, 1e-3), 1e-5)
    e_plus, e_minus = energy(b + h), energy(max(b - h, lo))
    curvature = (e_plus + e_minus - 2 * res.fun) / h ** 2
    speeds = sorted({log.speed for log in logs})
    res.per_speed_mse = per_speed
    res.extras.update(per_joint_mse={v: per_joint[v].tolist() for v in per_joint},
                      single_speed=len(speeds) == 1, curvature=float(curvature),
                      speeds=speeds)
    if len(speeds) == 1:
        res.extras["warning"] = "single speed: damping is weakly identifiable"
    return res


GAIT_NAMES = ("theta1", "theta2", "arm_length")


def optimize_gait(robot, medium, bounds=GAIT_BOUNDS, x0=None, sigma0=0.3, budget=300, seed=0,
                  omega=GaitParams.omega, cycles=GaitParams.cycles, integrator=None, map_fn=map,
                  flat_tolerance=0.05):
    """Maximize swimming efficiency, i.e. minimize ``1 - eta``, over the gait box.

    The search runs in box-normalized coordinates. Gaits whose efficiency is
    undefined score +inf. ``x0`` is a physical starting gait (box center by
    default). ``extras["flat_landscape"]`` is set when the evaluated
    efficiencies span less than ``flat_tolerance``.
    """
    lo = np.array([bounds[k][0] for k in GAIT_NAMES], dtype=float)
    hi = np.array([bounds[k][1] for k in GAIT_NAMES], dtype=float)
    if np.any(hi < lo):
        raise ValueError("gait bounds need lower <= upper")
    width = np.where(hi > lo, hi - lo, 1.0)
    u0 = np.full(3, 0.5) if x0 is None else (np.asarray(x0, dtype=float) - lo) / width
    u_hi = np.where(hi > lo, 1.0, 0.0)

    def to_gait(u):
        th1, th2, la = lo + np.asarray(u) * width
        return GaitParams(th1, th2, omega, la, cycles)

    def objective(u):
        sw = run_swim(robot, medium, to_gait(u), integrator, check_bounds=False)
        return np.inf if sw.eta is None else 1.0 - sw.eta

    spec = ObjectiveSpec(tuple(np.clip(u0, 0, u_hi)), sigma0, (0.0,) * 3, tuple(u_hi), budget=budget,
                         tolx=1e-4, seed=seed)
    res = cmaes_minimize(objective, spec, map_fn=map_fn)
    finite = [e.objective for e in res.evaluations if np.isfinite(e.objective)]
    if not finite:
        raise OptimizationFailure("every evaluated gait gave undefined efficiency (no forward travel)")
    best = to_gait(res.x)
    for e in res.evaluations:
        e.params = lo + e.params * width
    etas = 1.0 - np.array(finite)
    res.x = np.array([best.theta1, best.theta2, best.arm_length])
    res.extras.update(gait=best, eta_best=1.0 - res.fun, eta_range=float(etas.max() - etas.min()),
                      flat_landscape=bool(etas.max() - etas.min() < flat_tolerance),
                      names=GAIT_NAMES)
    return res
