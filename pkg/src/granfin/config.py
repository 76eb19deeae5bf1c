"""YAML run configuration.

Angles are given in degrees under keys ending in ``_deg`` and converted to
radians when the run objects are built. Unknown keys are errors. The
resolved document (all defaults filled) is kept as ``RunConfig.effective``;
dumping and re-parsing it reproduces the same configuration.
"""
import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import yaml

from .fin import FinSpec, JointLaw, load_presets
from .integrate import IntegratorConfig
from .rft import MediumModel
from .scenarios import GAIT_BOUNDS, DragProtocol, GaitParams, RobotSpec, RotateProtocol

PROTOCOLS = ("drag", "rotate", "flapping", "gait")
DEG = math.pi / 180.0

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "medium": {"v_eps": 1e-3, "mode": "constant", "grain_diameter": 0.004, "depth": 0.01,
               "elements_per_segment": 1},
    "fin": {"kind": "origami", "n_segments": 3, "length": 0.060, "height": 0.055,
            "thickness": 0.002, "density": 1100.0, "rod_length": 0.005,
            "rod_linear_density": 0.05, "k_stop": 1e4, "damping": 0.0, "stop_angle_deg": 0.0},
    "robot": {"body_mass": 0.220, "cart_mass": 0.160, "height": 0.045, "width": 0.055,
              "length": 0.075},
    "integrator": {"dt": 1e-3, "method": "sdirk2", "newton_rtol": 1e-6, "newton_atol": 1e-8,
                   "stop_smoothing_deg": 1e-6 / DEG, "decimation": 1},
    "drag": {"amplitude": 0.200, "speed": 0.030, "attack_angle_deg": 90.0, "cycles": 5,
             "discard_first": True, "steady_fraction": 0.2},
    "rotate": {"sweep_deg": 120.0, "angular_speed_deg": 60.0, "cycles": 5, "arm_offset": 0.005,
               "discard_first": True, "steady_fraction": 0.2},
    "flapping": {"speed": 0.030, "attack_angle_deg": 90.0, "cycles": 3,
                 "plateau_tol_per_mm": 0.005, "flat_tol_deg": 0.5},
    "gait": {"theta1_deg": 60.0, "theta2_deg": -90.0, "omega_deg": 60.0, "arm_length": 0.065,
             "cycles": 4},
    "optimizer": {"budget": 300, "sigma0": 0.3, "tolx": 1e-4, "damping_bounds": [0.0, 0.5],
                  "theta1_bounds_deg": [0.0, 90.0], "theta2_bounds_deg": [-90.0, 0.0],
                  "arm_length_bounds": [0.060, 0.085], "stroke_sample_dt": 0.01},
}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-3``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def load_schema():
    return json.loads(resources.files("granfin").joinpath("data/config.schema.json").read_text())


@dataclass(frozen=True)
class OptimizerConfig:
    budget: int
    sigma0: float
    tolx: float
    damping_bounds: tuple
    gait_bounds: dict
    stroke_sample_dt: float


@dataclass(frozen=True, eq=False)
class RunConfig:
    medium: MediumModel
    fin: FinSpec
    robot: RobotSpec
    protocol_kind: str
    protocol: object
    integrator: IntegratorConfig
    optimizer: OptimizerConfig
    seed: int
    output_dir: str
    effective: dict = field(repr=False)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.effective == other.effective

    def __hash__(self):
        return hash(self.config_hash)

    @property
    def config_hash(self):
        return config_hash(self.effective)


def config_hash(effective):
    text = json.dumps(effective, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _build(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _resolve_fin(given):
    given = dict(given)
    preset = given.pop("preset", None)
    base = dict(DEFAULTS["fin"])
    if preset is not None:
        presets = load_presets()
        if preset not in presets:
            raise ConfigError("fin.preset", f"unknown preset {preset!r}; known: {sorted(presets)}")
        p = dict(presets[preset])
        if "stop_angle" in p:
            p["stop_angle_deg"] = p.pop("stop_angle") / DEG
        base.update(p)
        base["preset"] = preset
    base.update(given)
    if "k_soft" not in base:
        raise ConfigError("fin.k_soft", "required (or give a preset)")
    if base["kind"] in ("rigid", "soft") and "k_stop" not in given and not preset:
        base["k_stop"] = base["k_soft"]
    return base


def resolve(doc):
    """Validate a raw document against the schema and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a mapping")
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        raise ConfigError(path, exc.message) from None
    present = [k for k in PROTOCOLS if k in doc]
    if len(present) != 1:
        raise ConfigError("", f"exactly one protocol section is required among {PROTOCOLS}, "
                              f"found {present or 'none'}")
    eff = {"seed": doc.get("seed", DEFAULTS["seed"]),
           "output_dir": doc.get("output_dir", DEFAULTS["output_dir"])}
    eff["medium"] = _merge(DEFAULTS["medium"], doc["medium"])
    eff["fin"] = _resolve_fin(doc["fin"])
    for key in ("robot", "integrator", "optimizer"):
        eff[key] = _merge(DEFAULTS[key], doc.get(key, {}))
    kind = present[0]
    eff[kind] = _merge(DEFAULTS.get(kind, {}), doc[kind])
    return eff


def _bounds(path, pair, scale=1.0):
    lo, hi = (float(v) * scale for v in pair)
    if not lo <= hi:
        raise ConfigError(path, "lower bound exceeds upper bound")
    return lo, hi


def build(eff):
    """Turn a resolved document into run objects."""
    medium = _build("medium", MediumModel, **eff["medium"])
    f = dict(eff["fin"])
    f.pop("preset", None)
    law = _build("fin", JointLaw, k_soft=float(f.pop("k_soft")), k_stop=float(f.pop("k_stop")),
                 damping=float(f.pop("damping")), stop_angle=float(f.pop("stop_angle_deg")) * DEG)
    n = int(f.pop("n_segments"))
    fin = _build("fin", FinSpec, joint_laws=(law,) * n, n_segments=n, **f)
    robot = _build("robot", RobotSpec, fin=fin, **eff["robot"])
    ig = dict(eff["integrator"])
    ig["stop_smoothing"] = ig.pop("stop_smoothing_deg") * DEG
    integrator = _build("integrator", IntegratorConfig, **ig)

    kind = next(k for k in PROTOCOLS if k in eff)
    p = eff[kind]
    if kind == "drag":
        protocol = _build("drag", DragProtocol, p["amplitude"], p["speed"], p["attack_angle_deg"] * DEG,
                          p["cycles"], p["discard_first"], p["steady_fraction"])
    elif kind == "rotate":
        protocol = _build("rotate", RotateProtocol, p["sweep_deg"] * DEG, p["angular_speed_deg"] * DEG,
                          p["cycles"], p["arm_offset"], p["discard_first"], p["steady_fraction"])
    elif kind == "flapping":
        protocol = dict(amplitudes=list(p["amplitudes"]), speed=p["speed"],
                        attack_angle=p["attack_angle_deg"] * DEG, cycles=p["cycles"],
                        plateau_tol=p["plateau_tol_per_mm"], flat_tol=p["flat_tol_deg"] * DEG)
        amps = protocol["amplitudes"]
        if any(a < 0 for a in amps) or any(b <= a for a, b in zip(amps, amps[1:])):
            raise ConfigError("flapping.amplitudes", "must be nonnegative and strictly increasing")
        if not protocol["speed"] > 0:
            raise ConfigError("flapping.speed", "must be > 0")
    else:
        for name, key in (("theta1", "theta1_deg"), ("theta2", "theta2_deg"),
                          ("arm_length", "arm_length")):
            lo, hi = GAIT_BOUNDS[name]
            v = p[key] * (DEG if key.endswith("_deg") else 1.0)
            if not lo - 1e-12 <= v <= hi + 1e-12:
                scale = 1 / DEG if key.endswith("_deg") else 1.0
                raise ConfigError(f"gait.{key}", f"{p[key]:g} outside the allowed range "
                                                 f"[{lo * scale:g}, {hi * scale:g}]")
        protocol = _build("gait", GaitParams, p["theta1_deg"] * DEG, p["theta2_deg"] * DEG,
                          p["omega_deg"] * DEG, p["arm_length"], p["cycles"])

    o = eff["optimizer"]
    if o["budget"] < 10:
        raise ConfigError("optimizer.budget", "must be >= 10")
    if not o["sigma0"] > 0:
        raise ConfigError("optimizer.sigma0", "must be > 0")
    gait_bounds = {"theta1": _bounds("optimizer.theta1_bounds_deg", o["theta1_bounds_deg"], DEG),
                   "theta2": _bounds("optimizer.theta2_bounds_deg", o["theta2_bounds_deg"], DEG),
                   "arm_length": _bounds("optimizer.arm_length_bounds", o["arm_length_bounds"])}
    damping_bounds = _bounds("optimizer.damping_bounds", o["damping_bounds"])
    if damping_bounds[0] < 0:
        raise ConfigError("optimizer.damping_bounds", "damping must be >= 0")
    optimizer = OptimizerConfig(o["budget"], o["sigma0"], o["tolx"], damping_bounds, gait_bounds,
                                o["stroke_sample_dt"])
    return RunConfig(medium, fin, robot, kind, protocol, integrator, optimizer, int(eff["seed"]),
                     eff["output_dir"], eff)


def parse_config(text):
    """Parse YAML text into a validated :class:`RunConfig`."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    return build(resolve(doc))


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    """Effective configuration as YAML text (re-parses to an equal config)."""
    return yaml.safe_dump(cfg.effective, sort_keys=True)
