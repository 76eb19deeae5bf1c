"""Fin geometry, hinge laws and conversion into chains."""
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import yaml

from .chain import ChainSpec, LinkSpec
from .joint import DEFAULT_K_STOP, JointLaw, joint_torque, spring_energy

__all__ = ["FinSpec", "JointLaw", "joint_torque", "spring_energy", "build_fin_chain",
           "fin_preset", "load_presets", "FIN_KINDS"]

FIN_KINDS = ("rigid", "soft", "origami")
DENSITY_TPU = 1200.0
DENSITY_NYLON = 1100.0


@dataclass(frozen=True)
class FinSpec:
    """A flat fin of ``n_segments`` equal links behind an extension rod.

    ``joint_laws`` holds one law per hinge: the first sits between the rod
    and segment 1.
    """

    joint_laws: tuple
    n_segments: int = 3
    length: float = 0.060
    height: float = 0.055
    thickness: float = 0.002
    density: float = DENSITY_NYLON
    kind: str = "origami"
    rod_length: float = 0.005
    rod_linear_density: float = 0.05

    def __post_init__(self):
        laws = self.joint_laws
        if isinstance(laws, JointLaw):
            laws = (laws,) * self.n_segments
        object.__setattr__(self, "joint_laws", tuple(laws))
        if int(self.n_segments) != self.n_segments or self.n_segments < 1:
            raise ValueError("FinSpec.n_segments must be a positive integer")
        if len(self.joint_laws) != self.n_segments:
            raise ValueError(f"FinSpec needs {self.n_segments} joint laws, got {len(self.joint_laws)}")
        for name in ("length", "height", "thickness", "density", "rod_length"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"FinSpec.{name} must be > 0")
        if self.rod_linear_density < 0:
            raise ValueError("FinSpec.rod_linear_density must be >= 0")
        if self.kind not in FIN_KINDS:
            raise ValueError(f"FinSpec.kind must be one of {FIN_KINDS}, got {self.kind!r}")
        for law in self.joint_laws:
            if self.kind in ("rigid", "soft") and law.k_soft != law.k_stop:
                raise ValueError(f"{self.kind} fins bend symmetrically: k_soft must equal k_stop")
            if self.kind == "origami" and not law.k_soft < law.k_stop:
                raise ValueError("origami fins need k_soft < k_stop (one-sided stop)")

    @classmethod
    def uniform(cls, kind, k_soft, k_stop=DEFAULT_K_STOP, damping=0.0, n_segments=3, **kw):
        if kind in ("rigid", "soft"):
            k_stop = k_soft
        law = JointLaw(k_soft=k_soft, k_stop=k_stop, damping=damping)
        return cls(joint_laws=(law,) * n_segments, n_segments=n_segments, kind=kind, **kw)

    @property
    def segment_length(self):
        return self.length / self.n_segments

    @property
    def segment_area(self):
        return self.segment_length * self.height

    @property
    def area(self):
        return self.length * self.height

    def with_damping(self, b):
        return replace(self, joint_laws=tuple(replace(law, damping=b) for law in self.joint_laws))


def build_fin_chain(fin, base_mode="prescribed-translation", rod_length=None, base_mass=0.0,
                    base_inertia=0.0, base_drag=0.0):
    """Chain of the extension rod followed by the fin segments.

    The rod carries no RFT load. When the base rotation is free a torque-free
    base joint is prepended to the joint laws.
    """
    rod_length = fin.rod_length if rod_length is None else rod_length
    rod = LinkSpec.rod(rod_length, fin.rod_linear_density, height=fin.height)
    seg = LinkSpec.plate(fin.segment_length, fin.height, fin.thickness, fin.density)
    links = (rod,) + (seg,) * fin.n_segments
    laws = fin.joint_laws
    if base_mode in ("free-body", "pinned"):
        laws = (JointLaw.free(),) + laws
    return ChainSpec(links, laws, base_mode, base_mass, base_inertia, base_drag)


def load_presets(path=None):
    """Read fin presets from YAML (the packaged file by default)."""
    if path is None:
        text = resources.files("granfin").joinpath("data/presets.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return yaml.safe_load(text)


_PRESET_KEYS = {"kind", "thickness", "density", "k_soft", "k_stop", "damping", "stop_angle",
                "n_segments", "length", "height", "rod_length", "rod_linear_density"}


def fin_preset(name, presets=None, **overrides):
    """Build a :class:`FinSpec` from a named preset, with field overrides."""
    presets = presets if presets is not None else load_presets()
    if name not in presets:
        raise KeyError(f"unknown fin preset {name!r}; known: {sorted(presets)}")
    values = dict(presets[name])
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - _PRESET_KEYS
    if unknown:
        raise ValueError(f"unknown fin fields: {sorted(unknown)}")
    n = int(values.pop("n_segments", 3))
    law = JointLaw(k_soft=float(values.pop("k_soft")), k_stop=float(values.pop("k_stop", DEFAULT_K_STOP)),
                   damping=float(values.pop("damping", 0.0)),
                   stop_angle=float(values.pop("stop_angle", 0.0)))
    return FinSpec(joint_laws=(law,) * n, n_segments=n, **{k: (v if k == "kind" else float(v))
                                                           for k, v in values.items()})
