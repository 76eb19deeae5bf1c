"""Planar serial chains of rigid links in reduced coordinates.

Generalized coordinates are ``q = (x0, y0, theta_p, gamma_1, ..., gamma_J)``:
the base point, the base angle and the relative twist at each pin joint. The
first link points along world angle ``theta_p + pi/2``, so ``theta_p = 90 deg``
puts a chain that is flat face-on to motion along +y. Prescribed base
coordinates are imposed exactly at the position level; the force the
prescription needs is recovered from the equations of motion.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .joint import JointLaw
from .rft import MediumModel

BASE_MODES = ("prescribed-translation", "prescribed-rotation", "free-body", "pinned", "cart")

# which of (x0, y0, theta_p) are integrated rather than prescribed
_FREE_BASE = {
    "prescribed-translation": (),
    "prescribed-rotation": (),
    "free-body": (0, 1, 2),
    "pinned": (2,),
    "cart": (0,),
}

COND_LIMIT = 1e12


class SingularMassMatrix(np.linalg.LinAlgError):
    def __init__(self, cond):
        super().__init__(f"mass matrix is singular (condition estimate {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class LinkSpec:
    """One rigid link: length, out-of-plane height, mass and central inertia."""

    length: float
    height: float
    mass: float
    inertia: float
    drag_active: bool = True

    def __post_init__(self):
        vals = (self.length, self.height, self.mass, self.inertia)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("LinkSpec fields must be finite")
        if self.length <= 0 or self.height <= 0:
            raise ValueError("LinkSpec length and height must be > 0")
        if self.mass < 0 or self.inertia < 0:
            raise ValueError("LinkSpec mass and inertia must be >= 0")

    @classmethod
    def plate(cls, length, height, thickness, density, drag_active=True):
        """Uniform rectangular plate seen edge-on."""
        m = density * length * height * thickness
        return cls(length, height, m, m * (length ** 2 + thickness ** 2) / 12.0, drag_active)

    @classmethod
    def rod(cls, length, linear_density, height=None, drag_active=False):
        m = linear_density * length
        return cls(length, height if height is not None else length, m, m * length ** 2 / 12.0,
                   drag_active)


@dataclass(frozen=True)
class ChainSpec:
    """An open serial chain and its base.

    ``joint_laws`` has one entry per pin joint, preceded by one for the base
    rotation when that coordinate is free. ``base_mass`` and ``base_inertia``
    are lumped at the base point (a robot body, a cart); ``base_drag`` is a
    saturating resistance on base translation, in newtons.
    """

    links: tuple
    joint_laws: tuple
    base_mode: str = "prescribed-translation"
    base_mass: float = 0.0
    base_inertia: float = 0.0
    base_drag: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joint_laws", tuple(self.joint_laws))
        if not self.links:
            raise ValueError("chain needs at least one link")
        if self.base_mode not in BASE_MODES:
            raise ValueError(f"base_mode must be one of {BASE_MODES}, got {self.base_mode!r}")
        expected = len(self.links) - 1 + (1 if self.rotation_free else 0)
        if len(self.joint_laws) != expected:
            raise ValueError(f"expected {expected} joint laws for {len(self.links)} links "
                             f"in {self.base_mode} mode, got {len(self.joint_laws)}")
        for v in (self.base_mass, self.base_inertia, self.base_drag):
            if not (np.isfinite(v) and v >= 0):
                raise ValueError("base mass, inertia and drag must be finite and >= 0")

    @property
    def rotation_free(self):
        return 2 in _FREE_BASE[self.base_mode]


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Assembled, immutable chain with packed arrays for the compiled kernels."""

    spec: ChainSpec
    free: np.ndarray = field(repr=False)
    prescribed: np.ndarray = field(repr=False)
    geom: np.ndarray = field(repr=False)
    base: np.ndarray = field(repr=False)

    @property
    def n_links(self):
        return len(self.spec.links)

    @property
    def n_joints(self):
        return self.n_links - 1

    @property
    def n_coords(self):
        return self.n_links + 2

    @property
    def n_dof(self):
        return self.free.size

    @property
    def free_base(self):
        return tuple(int(i) for i in self.free if i < 3)

    def laws(self, smoothing=0.0):
        rows = np.zeros((self.n_links, 6))
        laws = list(self.spec.joint_laws)
        if self.spec.rotation_free:
            rows[0] = laws.pop(0).as_row(smoothing)
        for k, law in enumerate(laws):
            rows[k + 1] = law.as_row(smoothing)
        return rows

    def packed(self, forces=None, smoothing=0.0):
        """System tuple for :mod:`granfin._kernels`."""
        forces = forces or ForceSet()
        lf, lt, lj, lb = forces.arrays(self)
        medium = forces.medium.packed() if forces.medium is not None else np.zeros(6)
        if forces.medium is None:
            medium[2] = 1e-3
            medium[5] = 1.0
        return (self.geom, self.laws(smoothing), self.base, medium, self.free, self.prescribed,
                lf, lt, lj, lb)

    def min_pivot_inertia(self):
        """Smallest inertia of a link about its proximal joint."""
        g = self.geom
        return float(np.min(g[:, 2] + g[:, 1] * (0.5 * g[:, 0]) ** 2))


def assemble_chain(spec):
    """Pack a :class:`ChainSpec` into a :class:`ChainModel`."""
    free_base = _FREE_BASE[spec.base_mode]
    n = len(spec.links)
    free = np.array(list(free_base) + list(range(3, n + 2)), dtype=np.int64)
    prescribed = np.array([i for i in range(3) if i not in free_base], dtype=np.int64)
    geom = np.array([[lk.length, lk.mass, lk.inertia, lk.height, 1.0 if lk.drag_active else 0.0]
                     for lk in spec.links])
    base = np.array([spec.base_mass, spec.base_inertia, spec.base_drag,
                     1.0 if spec.rotation_free else 0.0])
    return ChainModel(spec, free, prescribed, geom, base)


@dataclass(frozen=True)
class ForceSet:
    """Loads acting on a chain besides its joint laws.

    ``link_forces`` (L, 2) act at link centers, ``link_torques`` (L,) on
    links, ``joint_torques`` (J,) at pin joints and ``base_force`` (3,) on
    (x0, y0, theta_p). ``medium`` switches on RFT for drag-active links.
    """

    medium: MediumModel = None
    link_forces: np.ndarray = None
    link_torques: np.ndarray = None
    joint_torques: np.ndarray = None
    base_force: np.ndarray = None

    def arrays(self, model):
        L = model.n_links

        def take(value, shape, name):
            if value is None:
                return np.zeros(shape)
            arr = np.array(value, dtype=float).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in applied {name}")
            return arr

        lf = take(self.link_forces, (L, 2), "link_forces")
        lt = take(self.link_torques, (L,), "link_torques")
        lj = np.zeros(L)
        lj[1:] = take(self.joint_torques, (L - 1,), "joint_torques")
        lb = take(self.base_force, (3,), "base_force")
        return lf, lt, lj, lb


@dataclass
class ChainState:
    """Generalized coordinates and velocities at time ``t``."""

    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.qd = np.array(self.qd, dtype=float)
        if self.q.shape != self.qd.shape or self.q.ndim != 1 or self.q.size < 3:
            raise ValueError("q and qd must be 1-D arrays of equal length >= 3")

    @classmethod
    def rest(cls, model, base=(0.0, 0.0, 0.5 * np.pi), t=0.0):
        q = np.zeros(model.n_coords)
        q[:3] = base
        return cls(q, np.zeros(model.n_coords), t)

    @property
    def x0(self):
        return self.q[0]

    @property
    def y0(self):
        return self.q[1]

    @property
    def theta_p(self):
        return self.q[2]

    @property
    def gamma(self):
        return self.q[3:]

    @property
    def dgamma(self):
        return self.qd[3:]

    def copy(self):
        return ChainState(self.q.copy(), self.qd.copy(), self.t)


def _check_state(model, state):
    if state.q.size != model.n_coords:
        raise ValueError(f"state has {state.q.size} coordinates, model needs {model.n_coords}")
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qd))):
        raise ValueError("state contains non-finite values")


def mass_matrix(model, state):
    M, *_ = _kernels.assemble(state.q, state.qd, model.packed())
    return M


def compute_accelerations(model, state, applied=None, prescribed_accel=None):
    """Generalized accelerations of all coordinates.

    Free coordinates solve ``M q'' = Q``; prescribed base coordinates take
    ``prescribed_accel`` (default zero).
    """
    _check_state(model, state)
    system = model.packed(applied)
    M, Q, *_ = _kernels.assemble(state.q, state.qd, system)
    qdd = np.zeros(model.n_coords)
    p = model.prescribed
    if p.size:
        qdd[p] = 0.0 if prescribed_accel is None else np.asarray(prescribed_accel, dtype=float)
    f = model.free
    if f.size == 0:
        return qdd
    A = M[np.ix_(f, f)]
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMassMatrix(cond)
    qdd[f] = np.linalg.solve(A, Q[f] - M[np.ix_(f, p)] @ qdd[p])
    return qdd


def link_angles(model, state):
    """World angle of every link."""
    return state.q[2] + 0.5 * np.pi + np.concatenate([[0.0], np.cumsum(state.q[3:])])


def joint_positions(model, state):
    """Positions of the base point, every joint and the tip, shape (L+1, 2)."""
    a = link_angles(model, state)
    lengths = model.geom[:, 0]
    steps = lengths[:, None] * np.column_stack([np.cos(a), np.sin(a)])
    return np.vstack([state.q[:2], state.q[:2] + np.cumsum(steps, axis=0)])


def segment_kinematics(model, state):
    """Centers, unit tangents and center velocities of all links."""
    a = link_angles(model, state)
    w = state.qd[2] + np.concatenate([[0.0], np.cumsum(state.qd[3:])])
    u = np.column_stack([np.cos(a), np.sin(a)])
    lengths = model.geom[:, 0]
    vel = np.empty((model.n_links, 2))
    centers = np.empty((model.n_links, 2))
    p = state.q[:2].copy()
    v = state.qd[:2].copy()
    for k in range(model.n_links):
        perp = np.array([-u[k, 1], u[k, 0]])
        centers[k] = p + 0.5 * lengths[k] * u[k]
        vel[k] = v + 0.5 * lengths[k] * w[k] * perp
        p = p + lengths[k] * u[k]
        v = v + lengths[k] * w[k] * perp
    return centers, u, vel


def attack_angles(model, state, direction):
    """Angle between each link tangent and ``direction``, in [0, pi]."""
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    _, u, _ = segment_kinematics(model, state)
    return np.arccos(np.clip(u @ d, -1.0, 1.0))


def energies(model, state):
    """(kinetic, spring potential) energy of a state."""
    _, _, _, _, ke, pe = _kernels.assemble(state.q, state.qd, model.packed())
    return ke, pe
