"""Experiment protocols: linear drag, rotation, flapping regimes and swimming.

Sign conventions. In drag the fin hangs from a base point moving along y
with the plate extending toward -x (base angle 90 deg). Moving toward +y
bends the hinges open (the recovery stroke), moving back toward -y presses
them onto their stops (the power stroke). In rotation the soft direction is
clockwise. The swimming robot is simulated as one half: a fin on a servo arm
whose angle Theta is measured from the lateral direction toward the front,
with the body free to slide along +x (forward).
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import ForceSet, assemble_chain
from .fin import build_fin_chain
from .integrate import IntegratorConfig, MotionProtocol, run_trajectory
from .rft import MediumModel

DEG = math.pi / 180.0


@dataclass(frozen=True)
class DragProtocol:
    amplitude: float = 0.200
    speed: float = 0.030
    attack_angle: float = 90 * DEG
    cycles: int = 5
    discard_first: bool = True
    steady_fraction: float = 0.2

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("DragProtocol.amplitude must be > 0")
        if not self.speed > 0:
            raise ValueError("DragProtocol.speed must be > 0")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValueError("DragProtocol.cycles must be an integer >= 1")
        if not 0 < self.steady_fraction <= 1:
            raise ValueError("DragProtocol.steady_fraction must be in (0, 1]")

    @property
    def half_period(self):
        return self.amplitude / self.speed

    def motion(self):
        return MotionProtocol.triangle(1, self.amplitude, self.half_period, self.cycles,
                                       start=(0.0, 0.0, self.attack_angle))


@dataclass(frozen=True)
class RotateProtocol:
    sweep: float = 120 * DEG
    angular_speed: float = 60 * DEG
    cycles: int = 5
    arm_offset: float = 0.005
    discard_first: bool = True
    steady_fraction: float = 0.2

    def __post_init__(self):
        if not self.sweep >= 0:
            raise ValueError("RotateProtocol.sweep must be >= 0")
        if not self.angular_speed > 0:
            raise ValueError("RotateProtocol.angular_speed must be > 0")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValueError("RotateProtocol.cycles must be an integer >= 1")
        if not self.arm_offset > 0:
            raise ValueError("RotateProtocol.arm_offset must be > 0")

    @property
    def half_period(self):
        return self.sweep / self.angular_speed

    def motion(self, start=90 * DEG):
        # clockwise first: the soft direction
        return MotionProtocol.triangle(2, -self.sweep, self.half_period, self.cycles,
                                       start=(0.0, 0.0, start))


GAIT_BOUNDS = {
    "theta1": (0.0, 90 * DEG),
    "theta2": (-90 * DEG, 0.0),
    "arm_length": (0.060, 0.085),
}


@dataclass(frozen=True)
class GaitParams:
    """Servo gait: power stroke from theta1 down to theta2 and back."""

    theta1: float = 60 * DEG
    theta2: float = -90 * DEG
    omega: float = 60 * DEG
    arm_length: float = 0.065
    cycles: int = 4

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("GaitParams.omega must be > 0")
        if not self.arm_length > 0:
            raise ValueError("GaitParams.arm_length must be > 0")
        if int(self.cycles) != self.cycles or self.cycles < 2:
            raise ValueError("GaitParams.cycles must be an integer >= 2")
        if not self.theta1 >= self.theta2:
            raise ValueError("GaitParams needs theta1 >= theta2 (power stroke sweeps backward)")

    def check_bounds(self, bounds=GAIT_BOUNDS):
        for name, (lo, hi) in bounds.items():
            v = getattr(self, name)
            if not lo - 1e-12 <= v <= hi + 1e-12:
                raise ValueError(f"gait.{name} = {v:.6g} outside [{lo:.6g}, {hi:.6g}]")

    @property
    def half_period(self):
        return (self.theta1 - self.theta2) / self.omega


@dataclass(frozen=True)
class RobotSpec:
    """Two-fin robot on a cart; only one half is simulated."""

    fin: object
    body_mass: float = 0.220
    cart_mass: float = 0.160
    height: float = 0.045
    width: float = 0.055
    length: float = 0.075
    body_medium: MediumModel = None

    def __post_init__(self):
        for name in ("body_mass", "height", "width", "length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RobotSpec.{name} must be > 0")
        if self.cart_mass < 0:
            raise ValueError("RobotSpec.cart_mass must be >= 0")

    def half_mass(self):
        return 0.5 * (self.body_mass + self.cart_mass)

    def half_drag(self, medium):
        body = self.body_medium or medium
        return 0.5 * body.sigma_perp * self.height * self.width


@dataclass
class StrokeCurve:
    """One stroke of one cycle: coordinate, mount load and twists versus time."""

    cycle: int
    branch: str
    t: np.ndarray
    position: np.ndarray
    load: np.ndarray
    gamma: np.ndarray


@dataclass
class CycleResult:
    """Per-protocol summary shared by drag and rotation runs.

    Steady loads are magnitudes averaged over the tail of every kept stroke.
    """

    record: object
    curves: list
    steady_power: float
    steady_recovery: float
    recovery_gamma: np.ndarray
    power_gamma: np.ndarray
    cycle_spread: float
    protocol: object = None

    @property
    def asymmetry(self):
        return self.steady_power - self.steady_recovery

    def branch(self, name):
        return [c for c in self.curves if c.branch == name]


def _strokes(record, protocol, coordinate, load, discard_first):
    T = protocol.half_period
    curves = []
    t = record.t
    for c in range(protocol.cycles):
        for k, branch in enumerate(("recovery", "power")):
            a, b = (2 * c + k) * T, (2 * c + k + 1) * T
            m = (t >= a - 1e-9) & (t <= b + 1e-9)
            curves.append(StrokeCurve(c + 1, branch, t[m] - a, coordinate[m], load[m],
                                      record.gamma[m]))
    kept = [cv for cv in curves if not (discard_first and cv.cycle == 1 and protocol.cycles > 1)]
    return curves, kept


def _summarize(record, protocol, coordinate, load):
    curves, kept = _strokes(record, protocol, coordinate, load, protocol.discard_first)
    frac = protocol.steady_fraction

    def tail(cv, arr):
        n = len(cv.t)
        return arr[max(0, n - max(2, int(round(frac * n)))):]

    power = [np.mean(np.abs(tail(c, c.load))) for c in kept if c.branch == "power"]
    recov = [np.mean(np.abs(tail(c, c.load))) for c in kept if c.branch == "recovery"]
    g_rec = np.mean([c.gamma[-1] for c in kept if c.branch == "recovery"], axis=0)
    g_pow = np.mean([c.gamma[-1] for c in kept if c.branch == "power"], axis=0)
    spread = 0.0
    ref = {c.branch: c for c in kept if c.cycle == kept[0].cycle}
    for c in kept:
        r = ref[c.branch]
        n = min(len(r.load), len(c.load))
        scale = max(np.max(np.abs(r.load)), 1e-300)
        spread = max(spread, float(np.max(np.abs(c.load[:n] - r.load[:n])) / scale))
    return CycleResult(record, curves, float(np.mean(power)), float(np.mean(recov)), g_rec, g_pow,
                       spread, protocol)


def run_drag(fin, medium, protocol=DragProtocol(), integrator=None):
    """Drag a fin back and forth along y at constant speed.

    Returns a :class:`CycleResult` whose loads are the y-force the fin exerts
    on its mount and whose positions are the base displacement.
    """
    model = assemble_chain(build_fin_chain(fin, "prescribed-translation"))
    rec = run_trajectory(model, protocol.motion(), forces=ForceSet(medium), config=integrator,
                         meta={"protocol": "drag"})
    return _summarize(rec, protocol, rec.y0 - rec.y0[0], rec.Fy)


def run_rotate(fin, medium, protocol=RotateProtocol(), integrator=None):
    """Sweep a fin about a pivot ``arm_offset`` behind its root.

    Loads are the torque on the pivot and positions the swept angle.
    """
    spec = build_fin_chain(fin, "prescribed-rotation", rod_length=protocol.arm_offset)
    model = assemble_chain(spec)
    if protocol.sweep == 0:
        motion = MotionProtocol.hold((0.0, 0.0, 90 * DEG), 1.0)
        rec = run_trajectory(model, motion, forces=ForceSet(medium), config=integrator,
                             meta={"protocol": "rotate"})
        zero = np.zeros(1)
        curve = StrokeCurve(1, "recovery", rec.t, zero, rec.Tz, rec.gamma)
        return CycleResult(rec, [curve], 0.0, 0.0, rec.gamma[-1], rec.gamma[-1], 0.0, protocol)
    rec = run_trajectory(model, protocol.motion(), forces=ForceSet(medium), config=integrator,
                         meta={"protocol": "rotate"})
    return _summarize(rec, protocol, rec.theta_p[0] - rec.theta_p, rec.Tz)


@dataclass
class AmplitudeRegime:
    amplitude: float
    regime: str
    net_impulse: float
    stroke_impulse: float
    peak_deflection: float


@dataclass
class FlappingResult:
    d_f1: float
    d_f1_r: float
    regimes: list
    probe: object = field(default=None, repr=False)


def _plateau_start(s, series, tol_per_m):
    """First position after which every relative slope stays under ``tol_per_m``."""
    ok = np.ones(len(s) - 1, dtype=bool)
    for y in series:
        scale = np.maximum(np.abs(y[1:]), 1e-12)
        slope = np.abs(np.diff(y) / np.diff(s)) / scale
        ok &= slope < tol_per_m
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(s[0])
    if bad[-1] + 1 >= len(s) - 1:
        return None
    return float(s[bad[-1] + 1])


def _cycle_impulses(record, protocol):
    T = protocol.half_period
    c = protocol.cycles - 1
    t = record.t
    m = (t >= 2 * c * T - 1e-9)
    tt, fy = t[m], record.Fy[m]
    net = float(np.trapezoid(fy, tt))
    mp = tt >= (2 * c + 1) * T - 1e-9
    stroke = float(np.trapezoid(np.abs(fy[mp]), tt[mp]))
    peak = float(np.max(np.abs(record.gamma[m]))) if record.n_joints else 0.0
    return net, stroke, peak


def classify_flapping(fin, medium, amplitudes, speed=0.030, attack_angle=90 * DEG, cycles=3,
                      plateau_tol=0.005, flat_tol=0.5 * DEG, integrator=None):
    """Find D_f1 and D_f1_r and label each amplitude small or large.

    D_f1 is where, during a stroke in the soft direction, the force magnitude
    and the largest hinge deflection both stop changing by more than
    ``plateau_tol`` (relative, per mm). D_f1_r is the return distance after
    which every hinge is within ``flat_tol`` of flat. Net impulse is the
    y-impulse delivered to the mount over the last cycle; positive values
    point along the power-stroke thrust.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.ndim != 1 or amplitudes.size == 0:
        raise ValueError("amplitudes must be a non-empty 1-D sequence")
    if np.any(amplitudes < 0) or np.any(np.diff(amplitudes) <= 0):
        raise ValueError("amplitudes must be nonnegative and strictly increasing")
    integrator = integrator or IntegratorConfig()
    a_max = float(amplitudes[-1])
    if a_max < 5 * speed * integrator.dt:
        raise ValueError("amplitude sweep is entirely below the sampling resolution")
    probe_protocol = DragProtocol(a_max, speed, attack_angle, cycles=1, discard_first=False)
    probe = run_drag(fin, medium, probe_protocol, integrator)
    rec_curve = probe.branch("recovery")[0]
    pow_curve = probe.branch("power")[0]
    s = rec_curve.position
    deflection = np.max(np.abs(rec_curve.gamma), axis=1)
    d_f1 = _plateau_start(s, [np.abs(rec_curve.load), deflection], plateau_tol * 1e3)
    back = a_max - pow_curve.position
    flat = np.max(np.abs(pow_curve.gamma), axis=1) < flat_tol
    d_f1_r = None
    if flat[-1]:
        idx = np.flatnonzero(~flat)
        d_f1_r = float(back[idx[-1] + 1]) if idx.size else 0.0

    regimes = []
    for a in amplitudes:
        if a == 0:
            regimes.append(AmplitudeRegime(0.0, "small", 0.0, 0.0, 0.0))
            continue
        proto = DragProtocol(float(a), speed, attack_angle, cycles=cycles)
        rec = run_drag(fin, medium, proto, integrator).record
        net, stroke, peak = _cycle_impulses(rec, proto)
        label = "large" if d_f1 is not None and a > d_f1 else "small"
        regimes.append(AmplitudeRegime(float(a), label, net, stroke, peak))
    return FlappingResult(d_f1, d_f1_r, regimes, probe)


@dataclass
class SwimResult:
    """Per-cycle forward (D1) and backward (D2) body travel.

    ``eta`` averages the steady cycles (all but the first); it is None when
    the power stroke makes no forward progress.
    """

    gait: GaitParams
    d1: np.ndarray
    d2: np.ndarray
    eta_cycles: np.ndarray
    eta: float
    net_speed: float
    converged: bool
    record: object = field(default=None, repr=False)

    @property
    def defined(self):
        return self.eta is not None


D1_MIN = 1e-9  # m; below this eta is undefined


def run_swim(robot, medium, gait=GaitParams(), integrator=None, check_bounds=True,
             decimation=20):
    """Simulate one half of the two-fin robot over ``gait.cycles`` cycles.

    The servo turns the arm from theta1 to theta2 (power) and back
    (recovery) at ``gait.omega``. The body plus half the cart slides along x
    against saturating body drag.
    """
    if check_bounds:
        gait.check_bounds()
    n = gait.cycles
    if gait.theta1 == gait.theta2:
        z = np.zeros(n)
        return SwimResult(gait, z, z, np.full(n, np.nan), None, 0.0, True, None)
    spec = build_fin_chain(robot.fin, "cart", rod_length=gait.arm_length,
                           base_mass=robot.half_mass(), base_drag=robot.half_drag(medium))
    model = assemble_chain(spec)
    # the chain's base angle turns the opposite way to the servo angle
    motion = MotionProtocol.triangle(2, gait.theta1 - gait.theta2, gait.half_period, n,
                                     start=(0.0, 0.0, -gait.theta1))
    cfg = integrator or IntegratorConfig()
    if cfg.decimation == 1 and decimation > 1:
        cfg = replace(cfg, decimation=decimation)
    rec = run_trajectory(model, motion, forces=ForceSet(medium), config=cfg,
                         meta={"protocol": "swim"})
    knots = motion.times
    idx = [int(np.argmin(np.abs(rec.t - tk))) for tk in knots]
    x = rec.x0[idx]
    d1 = x[1::2] - x[0:-1:2]
    d2 = x[1::2] - x[2::2]
    with np.errstate(divide="ignore", invalid="ignore"):
        eta_c = np.where(d1 > D1_MIN, (d1 - d2) / np.where(d1 > D1_MIN, d1, 1.0), np.nan)
    steady = slice(1, n)
    if np.all(d1[steady] > D1_MIN):
        eta = float(np.mean(eta_c[steady]))
    else:
        eta = None
    period = 2 * gait.half_period
    net_speed = float(np.mean(d1[steady] - d2[steady]) / period)
    scale = max(abs(d1[-1]), abs(d2[-1]), D1_MIN)
    converged = bool(abs(d1[-1] - d1[-2]) <= 0.01 * scale and abs(d2[-1] - d2[-2]) <= 0.01 * scale)
    return SwimResult(gait, d1, d2, eta_c, eta, net_speed, converged, rec)
