"""Asymmetric torsional spring-damper law with a one-sided stop."""
from dataclasses import dataclass

import numpy as np

DEFAULT_K_STOP = 1.0e4  # N*m/rad


@dataclass(frozen=True)
class JointLaw:
    """Spring-damper-stop law at one pin joint.

    Positive twist bends away from the stop (the soft direction). Below
    ``stop_angle`` the stiffness switches from ``k_soft`` to ``k_stop``.
    ``mirrored`` flips the law so the stop sits on the positive side.
    """

    k_soft: float
    k_stop: float = DEFAULT_K_STOP
    damping: float = 0.0
    stop_angle: float = 0.0
    mirrored: bool = False

    def __post_init__(self):
        for name in ("k_soft", "k_stop", "damping", "stop_angle"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"JointLaw.{name} must be finite")
        if self.k_soft < 0:
            raise ValueError("JointLaw.k_soft must be >= 0")
        if self.k_stop < self.k_soft:
            raise ValueError("JointLaw.k_stop must be >= k_soft")
        if self.damping < 0:
            raise ValueError("JointLaw.damping must be >= 0")

    @classmethod
    def free(cls):
        """A joint with no stiffness and no damping."""
        return cls(k_soft=0.0, k_stop=0.0)

    @classmethod
    def linear(cls, k, damping=0.0):
        """Symmetric linear spring (no stop)."""
        return cls(k_soft=k, k_stop=k, damping=damping)

    @property
    def sign(self):
        return -1.0 if self.mirrored else 1.0

    @property
    def is_symmetric(self):
        return self.k_soft == self.k_stop

    def as_row(self, smoothing=0.0):
        """Packed row used by the compiled dynamics."""
        return [self.k_soft, self.k_stop, self.damping, self.stop_angle, self.sign, smoothing]


def joint_torque(law, gamma, dgamma=0.0):
    """Restoring torque of ``law`` at twist ``gamma`` and rate ``dgamma``.

    Works elementwise on arrays.
    """
    s = law.sign
    g = s * np.asarray(gamma, dtype=float)
    gd = s * np.asarray(dgamma, dtype=float)
    stop = law.stop_angle
    soft = -law.k_soft * g
    stopped = -law.k_soft * stop - law.k_stop * (g - stop)
    tau = np.where(g >= stop, soft, stopped) - law.damping * gd
    tau = s * tau
    return float(tau) if tau.ndim == 0 else tau


def spring_energy(law, gamma):
    """Potential energy stored by the spring branches (zero at gamma = 0 for stop 0)."""
    g = law.sign * np.asarray(gamma, dtype=float)
    e = 0.5 * law.k_soft * g * g
    e = e + 0.5 * (law.k_stop - law.k_soft) * np.maximum(law.stop_angle - g, 0.0) ** 2
    return float(e) if e.ndim == 0 else e
