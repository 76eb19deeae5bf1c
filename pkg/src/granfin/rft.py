"""Granular resistive force theory for flat plate elements.

A plate element of area ``A`` with unit tangent ``t`` and normal ``n = z x t``
moving at velocity ``v`` feels

    F = -sigma_perp * A * s(v.n) * n - sigma_par * A * s(v.t) * t

with ``s(u) = tanh(u / v_eps)``. The sine-scaled mode multiplies the two terms
by |sin| and |cos| of the attack angle.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MODES = ("constant", "sine")


@dataclass(frozen=True)
class MediumModel:
    """RFT coefficients of a granular bed.

    ``sigma_perp`` and ``sigma_par`` are stresses (N/m^2) so the same model
    serves plates of any size. ``grain_diameter`` and ``depth`` are carried as
    metadata only. ``elements_per_segment`` sets how many RFT points each
    chain link is split into (1 evaluates at the segment center).
    """

    sigma_perp: float
    sigma_par: float
    v_eps: float = 1.0e-3
    mode: str = "constant"
    grain_diameter: float = 0.004
    depth: float = 0.01
    elements_per_segment: int = 1

    def __post_init__(self):
        for name in ("sigma_perp", "sigma_par", "v_eps", "grain_diameter", "depth"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"MediumModel.{name} must be finite")
        if self.sigma_perp <= 0:
            raise ValueError("MediumModel.sigma_perp must be > 0")
        if self.sigma_par < 0:
            raise ValueError("MediumModel.sigma_par must be >= 0")
        if self.v_eps <= 0:
            raise ValueError("MediumModel.v_eps must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"MediumModel.mode must be one of {MODES}, got {self.mode!r}")
        if int(self.elements_per_segment) != self.elements_per_segment or self.elements_per_segment < 1:
            raise ValueError("MediumModel.elements_per_segment must be a positive integer")

    @property
    def mode_code(self):
        return MODES.index(self.mode)

    def packed(self):
        return np.array([self.sigma_perp, self.sigma_par, self.v_eps, float(self.mode_code), 1.0,
                         float(self.elements_per_segment)])


@dataclass(frozen=True)
class SegmentKinematics:
    """Pose and velocity of one plate element."""

    center: np.ndarray
    tangent: np.ndarray
    velocity: np.ndarray
    area: float

    def __post_init__(self):
        t = np.asarray(self.tangent, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        norm = np.hypot(*t)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("segment tangent must be a finite nonzero vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("segment velocity must be finite")
        if not self.area > 0:
            raise ValueError("segment area must be > 0")
        object.__setattr__(self, "tangent", t / norm)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def normal(self):
        return np.array([-self.tangent[1], self.tangent[0]])

    @property
    def attack_angle(self):
        """Angle between tangent and velocity in [0, pi]; nan at zero speed."""
        speed = np.hypot(*self.velocity)
        if speed == 0.0:
            return float("nan")
        c = np.clip(self.velocity @ self.tangent / speed, -1.0, 1.0)
        return float(np.arccos(c))


def _sine_factors(vn, vt, v_eps):
    speed = np.sqrt(vn * vn + vt * vt + (_kernels.SPEED_FLOOR * v_eps) ** 2)
    return np.abs(vn) / speed, np.abs(vt) / speed


def segment_force(medium, kin):
    """Force on one element and its torque about the element center.

    The torque is always zero because the force acts at the center; lever
    arms to the joints are handled by the chain Jacobians.
    """
    n = kin.normal
    t = kin.tangent
    vn = kin.velocity @ n
    vt = kin.velocity @ t
    fn = medium.sigma_perp * kin.area * np.tanh(vn / medium.v_eps)
    ft = medium.sigma_par * kin.area * np.tanh(vt / medium.v_eps)
    if medium.mode == "sine":
        sn, ct = _sine_factors(vn, vt, medium.v_eps)
        fn *= sn
        ft *= ct
    return -fn * n - ft * t, 0.0


@dataclass(frozen=True)
class PlateLoad:
    """Net RFT load on a rigid plate: force and torque about its proximal edge."""

    force: np.ndarray
    torque: float


def plate_integral_force(medium, length, height, base_point, tangent, velocity,
                         omega=0.0, n_elements=40):
    """Integrate RFT over a rigid plate hinged at ``base_point``.

    The plate extends a distance ``length`` from ``base_point`` along
    ``tangent``; the base point moves at ``velocity`` and the plate spins at
    ``omega`` about it. Uses midpoint quadrature with ``n_elements`` >= 20.
    """
    if not (length > 0 and height > 0):
        raise ValueError("plate length and height must be > 0")
    if n_elements < 20:
        raise ValueError("plate quadrature needs at least 20 elements")
    t = np.asarray(tangent, dtype=float)
    norm = np.hypot(*t)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("plate tangent must be a finite nonzero vector")
    t = t / norm
    v0 = np.asarray(velocity, dtype=float)
    if not (np.all(np.isfinite(v0)) and np.isfinite(omega)):
        raise ValueError("plate motion must be finite")
    base_point = np.asarray(base_point, dtype=float)
    ds = length / n_elements
    force = np.zeros(2)
    torque = 0.0
    for i in range(n_elements):
        s = (i + 0.5) * ds
        r = s * t
        v = v0 + omega * np.array([-r[1], r[0]])
        f, _ = segment_force(medium, SegmentKinematics(base_point + r, t, v, ds * height))
        force += f
        torque += r[0] * f[1] - r[1] * f[0]
    return PlateLoad(force, float(torque))


@dataclass(frozen=True)
class SteadyDrag:
    """Steady force on a rigid plate translating at a fixed attack angle.

    ``resistive`` is the force component opposing the motion (positive).
    """

    attack_angle: float
    resistive: float
    area: float


@dataclass(frozen=True)
class Calibration:
    medium: MediumModel
    residuals: np.ndarray = field(repr=False)

    @property
    def rms_residual(self):
        return float(np.sqrt(np.mean(self.residuals ** 2)))


def _regressors(theta, area, mode):
    s = np.abs(np.sin(theta))
    c = np.abs(np.cos(theta))
    if mode == "sine":
        return np.column_stack([area * s * s, area * c * c])
    return np.column_stack([area * s, area * c])


def calibrate_coefficients(samples, mode="constant", v_eps=1.0e-3, **metadata):
    """Least-squares fit of sigma_perp and sigma_par to steady drag samples.

    The resistive force of a rigid plate at attack angle theta is linear in
    the two coefficients: A*(sigma_perp*|sin| + sigma_par*|cos|) in constant
    mode, with squared factors in sine mode.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    samples = list(samples)
    theta = np.array([s.attack_angle for s in samples], dtype=float)
    area = np.array([s.area for s in samples], dtype=float)
    y = np.array([s.resistive for s in samples], dtype=float)
    if len(np.unique(np.round(theta, 9))) < 2:
        raise ValueError("calibration needs at least two distinct attack angles")
    X = _regressors(theta, area, mode)
    if np.linalg.matrix_rank(X, tol=1e-9 * np.abs(X).max()) < 2:
        raise ValueError("attack angles do not separate normal and tangential coefficients "
                         "(include angles near 90 and near 0 deg)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    sigma_perp, sigma_par = coef
    if sigma_perp <= 0:
        raise ValueError(f"fitted sigma_perp = {sigma_perp:.4g} is not positive")
    medium = MediumModel(sigma_perp=float(sigma_perp), sigma_par=float(max(sigma_par, 0.0)),
                         v_eps=v_eps, mode=mode, **metadata)
    return Calibration(medium, y - X @ np.array([medium.sigma_perp, medium.sigma_par]))


def steady_drag_from_record(record, area, fraction=0.25, skip_cycles=1):
    """Steady resistive force from a rigid-plate drag record.

    Averages the mount reaction along the motion direction over the last
    ``fraction`` of every stroke, skipping the first ``skip_cycles`` cycles.
    The attack angle is read from the base angle column.
    """
    t = record.t
    vy = np.gradient(record.y0, t)
    vx = np.gradient(record.x0, t)
    speed = np.hypot(vx, vy)
    moving = speed > 0.5 * np.median(speed[speed > 0])
    # stroke boundaries: sign flips of the dominant velocity component
    v = vy if np.abs(vy).sum() >= np.abs(vx).sum() else vx
    sgn = np.sign(v)
    edges = np.flatnonzero(np.diff(sgn) != 0) + 1
    bounds = np.concatenate([[0], edges, [len(t)]])
    strokes = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b - a > 4]
    strokes = strokes[2 * skip_cycles:] or strokes
    values = []
    for a, b in strokes:
        k0 = b - max(2, int(fraction * (b - a)))
        idx = np.arange(k0, b)
        idx = idx[moving[idx]]
        if idx.size == 0:
            continue
        dirx = vx[idx] / speed[idx]
        diry = vy[idx] / speed[idx]
        # the reaction is the force of the plate on its mount, i.e. the drag itself
        values.append(np.mean(-(record.Fx[idx] * dirx + record.Fy[idx] * diry)))
    if not values:
        raise ValueError("record has no steady moving samples")
    theta = float(np.mean(record.theta_p))
    return SteadyDrag(attack_angle=abs(theta), resistive=float(np.mean(values)), area=area)
