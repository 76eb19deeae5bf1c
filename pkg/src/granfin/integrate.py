"""Time integration of chains under prescribed base motion.

Two fixed-step methods are available. ``rk4`` is classical Runge-Kutta; it
is explicit, so the stiff joint stops limit its step. ``sdirk2`` is a
two-stage, L-stable, stiffly accurate diagonally implicit scheme that stays
stable at the default step for any stop stiffness. Both accumulate the work
done by the medium, the dampers, the prescribed-motion constraint and
external loads with the same quadrature as the state.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .chain import ChainState, ForceSet, joint_positions

METHODS = ("sdirk2", "rk4")


class IntegrationError(RuntimeError):
    pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    ``stop_smoothing`` rounds the stop kink of every joint law over this many
    radians inside the integrator so Newton iterations see a C1 torque.
    """

    dt: float = 1.0e-3
    method: str = "sdirk2"
    constraint_tolerance: float = 1.0e-12
    newton_rtol: float = 1.0e-6
    newton_atol: float = 1.0e-8
    stop_smoothing: float = 1.0e-6
    decimation: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("IntegratorConfig.dt must be > 0")
        if self.method not in METHODS:
            raise ValueError(f"IntegratorConfig.method must be one of {METHODS}")
        if self.decimation < 1 or int(self.decimation) != self.decimation:
            raise ValueError("IntegratorConfig.decimation must be a positive integer")
        if not (self.newton_rtol > 0 and self.newton_atol > 0):
            raise ValueError("Newton tolerances must be > 0")
        if self.stop_smoothing < 0:
            raise ValueError("IntegratorConfig.stop_smoothing must be >= 0")

    @property
    def method_code(self):
        return 0 if self.method == "rk4" else 1


def check_step_size(model, config):
    """Reject explicit steps that cannot resolve the stiffest joint."""
    if config.method != "rk4":
        return
    k_max = max([law.k_stop for law in model.spec.joint_laws] + [0.0])
    if k_max == 0.0:
        return
    limit = 0.1 * math.sqrt(model.min_pivot_inertia() / k_max)
    if not config.dt < limit:
        raise StepSizeError(f"rk4 step {config.dt:g} s exceeds the stability bound {limit:.3g} s "
                            f"set by the stiffest joint (k = {k_max:g}); use method 'sdirk2'")


@dataclass(frozen=True)
class MotionProtocol:
    """Piecewise-linear base pose (x0, y0, theta_p) through time knots."""

    times: np.ndarray
    poses: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.poses, dtype=float).reshape(len(t), 3)
        if t.size < 1 or t[0] != 0.0:
            raise ValueError("protocol knots must start at t = 0")
        if np.any(np.diff(t) < 0) or not np.all(np.isfinite(t)) or not np.all(np.isfinite(p)):
            raise ValueError("protocol knots must be finite and nondecreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "poses", p)

    @classmethod
    def hold(cls, pose=(0.0, 0.0, 0.5 * np.pi), duration=0.0):
        return cls([0.0, duration], [pose, pose])

    @classmethod
    def triangle(cls, axis, amplitude, half_period, cycles, start=(0.0, 0.0, 0.5 * np.pi)):
        """Out-and-back excursions of ``amplitude`` along one base coordinate.

        Each cycle goes from the start value to start + amplitude and back,
        taking ``half_period`` seconds each way.
        """
        if axis not in (0, 1, 2):
            raise ValueError("axis must be 0 (x0), 1 (y0) or 2 (theta_p)")
        if cycles < 1 or half_period <= 0:
            raise ValueError("triangle protocol needs cycles >= 1 and half_period > 0")
        start = np.asarray(start, dtype=float)
        peak = start.copy()
        peak[axis] += amplitude
        times = np.arange(2 * cycles + 1) * half_period
        poses = [start if i % 2 == 0 else peak for i in range(2 * cycles + 1)]
        return cls(times, poses)

    @property
    def duration(self):
        return float(self.times[-1])

    def at(self, t):
        """Pose and rate at time ``t`` (rate of the segment starting at t)."""
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1))
        if i >= len(self.times) - 1:
            return self.poses[-1].copy(), np.zeros(3)
        dt = self.times[i + 1] - self.times[i]
        rate = (self.poses[i + 1] - self.poses[i]) / dt
        return self.poses[i] + rate * (t - self.times[i]), rate

    def segments(self, duration=None):
        """(t0, t1, pose0, rate) for every nonempty segment up to ``duration``."""
        end = self.duration if duration is None else duration
        out = []
        for i in range(len(self.times) - 1):
            t0, t1 = self.times[i], min(self.times[i + 1], end)
            if t1 > t0:
                rate = (self.poses[i + 1] - self.poses[i]) / (self.times[i + 1] - self.times[i])
                out.append((t0, t1, self.poses[i], rate))
        if end > self.duration:
            out.append((self.duration, end, self.poses[-1], np.zeros(3)))
        return out

    def moves(self, coord):
        return bool(np.ptp(self.poses[:, coord]) > 0)


def _check_protocol(model, protocol):
    mode = model.spec.base_mode
    for c in model.free_base:
        if protocol.moves(c):
            raise ValueError(f"protocol moves base coordinate {c}, which is free in {mode} mode")
    if mode == "prescribed-translation" and protocol.moves(2):
        raise ValueError("prescribed-translation mode keeps theta_p fixed")
    if mode == "prescribed-rotation" and (protocol.moves(0) or protocol.moves(1)):
        raise ValueError("prescribed-rotation mode keeps the base point fixed")


def _seg_array(t0, pose, rate):
    return np.array([t0, pose[0], pose[1], pose[2], rate[0], rate[1], rate[2]])


WORK_NAMES = ("W_rft", "W_damp", "W_cons", "W_ext")


@dataclass
class TrajectoryRecord:
    """Sampled trajectory of a chain.

    ``reaction`` is the load the chain exerts on whatever prescribes its base
    (Fx, Fy, Tz); it is zero on free base coordinates. ``joint_torque`` is
    the spring+damper torque at each pin joint and ``work`` the accumulated
    work of the medium, dampers, base constraint and external loads.
    """

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    reaction: np.ndarray
    joint_torque: np.ndarray
    work: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_joints(self):
        return self.q.shape[1] - 3

    def __len__(self):
        return self.t.size

    x0 = property(lambda self: self.q[:, 0])
    y0 = property(lambda self: self.q[:, 1])
    theta_p = property(lambda self: self.q[:, 2])
    gamma = property(lambda self: self.q[:, 3:])
    dgamma = property(lambda self: self.qd[:, 3:])
    Fx = property(lambda self: self.reaction[:, 0])
    Fy = property(lambda self: self.reaction[:, 1])
    Tz = property(lambda self: self.reaction[:, 2])

    def state(self, i=-1):
        return ChainState(self.q[i].copy(), self.qd[i].copy(), float(self.t[i]))

    def slice(self, mask):
        return TrajectoryRecord(self.t[mask], self.q[mask], self.qd[mask], self.reaction[mask],
                                self.joint_torque[mask], self.work[mask], self.kinetic[mask],
                                self.potential[mask], dict(self.meta))

    def energy_residual(self):
        """Work done minus energy change, at the last sample.

        Returns (residual, dissipated) where dissipated is the energy taken
        out by the medium and the dampers.
        """
        w = self.work[-1] - self.work[0]
        stored = (self.kinetic[-1] - self.kinetic[0]) + (self.potential[-1] - self.potential[0])
        return float(w.sum() - stored), float(-(w[0] + w[1]))


def _record_from_rows(rows, model, meta):
    nq = model.n_coords
    L = model.n_links
    rows = np.asarray(rows)
    o = 1 + 3 * nq
    lam = rows[:, o:o + 3]
    reaction = -lam
    reaction[:, model.free_base] = 0.0
    tau = rows[:, o + 3 + 1:o + 3 + L]
    o2 = o + 3 + L
    return TrajectoryRecord(
        t=rows[:, 0].copy(),
        q=rows[:, 1:1 + nq].copy(),
        qd=rows[:, 1 + nq:1 + 2 * nq].copy(),
        reaction=reaction,
        joint_torque=tau.copy(),
        work=rows[:, o2:o2 + _kernels.N_POW].copy(),
        kinetic=rows[:, o2 + _kernels.N_POW].copy(),
        potential=rows[:, o2 + _kernels.N_POW + 1].copy(),
        meta=meta,
    )


def _initial_y(model, protocol, initial):
    f = model.free
    if initial is None:
        q = np.zeros(model.n_coords)
        qd = np.zeros(model.n_coords)
        q[:3] = protocol.poses[0]
    else:
        q = initial.q
        qd = initial.qd
    return np.concatenate([q[f], qd[f]])


def run_trajectory(model, protocol, duration=None, forces=None, config=None, initial=None,
                   meta=None):
    """Integrate ``model`` while its prescribed base follows ``protocol``.

    Segment corners of the protocol always fall on step boundaries: each
    segment gets ``ceil(T / dt)`` equal steps. Samples are taken every
    ``config.decimation`` steps counted from the start of each segment and
    at every protocol corner, so repeated strokes share one sampling grid.
    """
    config = config or IntegratorConfig()
    forces = forces or ForceSet()
    check_step_size(model, config)
    _check_protocol(model, protocol)
    duration = protocol.duration if duration is None else float(duration)
    if duration < 0:
        raise ValueError("duration must be >= 0")
    system = model.packed(forces, config.stop_smoothing)
    y = _initial_y(model, protocol, initial)
    w = np.zeros(_kernels.N_POW)
    segs = protocol.segments(duration)
    first = segs[0] if segs else (0.0, 0.0, protocol.poses[0], np.zeros(3))
    rows = [_kernels.sample_row(0.0, y, system, _seg_array(first[0], first[2], first[3]), w)]
    for t0, t1, pose, rate in segs:
        seg = _seg_array(t0, pose, rate)
        n = max(1, int(math.ceil((t1 - t0) / config.dt - 1e-9)))
        y, out, status = _kernels.integrate_segment(
            y, w, t0, t1, n, config.decimation, 0, system, seg, config.method_code,
            config.newton_rtol, config.newton_atol)
        if status:
            reason = "non-finite state" if status == 1 else "implicit solve failed to converge"
            t_fail = out[-1, 0] if len(out) else t0
            raise IntegrationError(f"{reason} after t = {t_fail:.6g} s")
        if len(out):
            rows.extend(out)
        if n % config.decimation:
            # protocol corners are always sampled
            rows.append(_kernels.sample_row(t1, y, system, seg, w))
    info = {"base_mode": model.spec.base_mode, "method": config.method, "dt": config.dt}
    if forces.medium is not None:
        info["medium_mode"] = forces.medium.mode
    info.update(meta or {})
    return _record_from_rows(rows, model, info)


def step(model, state, forces_fn=None, dt=None, protocol=None, config=None):
    """Advance ``state`` by one step.

    ``forces_fn(t, state)`` returns the :class:`ForceSet` held over the step.
    Prescribed base coordinates follow ``protocol`` (or stay put without one).
    """
    config = config or IntegratorConfig()
    dt = config.dt if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be > 0")
    check_step_size(model, IntegratorConfig(dt=dt, method=config.method))
    forces = forces_fn(state.t, state) if forces_fn is not None else None
    system = model.packed(forces, config.stop_smoothing)
    if protocol is None:
        pose, rate = state.q[:3].copy(), np.zeros(3)
    else:
        pose, rate = protocol.at(state.t)
    seg = _seg_array(state.t, pose, rate)
    f = model.free
    y = np.concatenate([state.q[f], state.qd[f]])
    w = np.zeros(_kernels.N_POW)
    if config.method == "rk4":
        y = _kernels.rk4_step(state.t, y, dt, system, seg, w)
    else:
        g = 1.0 - math.sqrt(0.5)
        it_mat = _kernels._iteration_matrix(state.t, y, dt * g, system, seg)
        y, ok = _kernels._implicit_interval(state.t, y, dt, system, seg, w, it_mat,
                                            config.newton_rtol, config.newton_atol)
        if not ok:
            raise IntegrationError(f"implicit solve failed at t = {state.t:.6g} s")
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"non-finite state after t = {state.t:.6g} s")
    t1 = state.t + dt
    q, qd = _kernels.unpack(t1, y, system, seg)
    return ChainState(q, qd, t1)


def length_residual(model, record):
    """Largest relative link-length error over the samples of a record."""
    lengths = model.geom[:, 0]
    worst = 0.0
    for i in range(len(record)):
        p = joint_positions(model, record.state(i))
        d = np.hypot(*np.diff(p, axis=0).T)
        worst = max(worst, float(np.max(np.abs(d - lengths) / lengths)))
    return worst
