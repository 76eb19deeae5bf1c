"""Record files, experimental joint-angle logs and result summaries.

Every text file starts with ``# key: value`` comment lines (units, config
hash, seed, free-form metadata) followed by a CSV header row. Floats are
written with 17 significant digits so files round-trip exactly.
"""
import csv
import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .integrate import WORK_NAMES, TrajectoryRecord

FLOAT_FMT = "%.17g"
UNITS = "SI: m, s, rad, N, N*m, J"


def record_columns(n_joints):
    g = [f"gamma_{i}" for i in range(1, n_joints + 1)]
    dg = [f"dgamma_{i}" for i in range(1, n_joints + 1)]
    tau = [f"tau_{i}" for i in range(1, n_joints + 1)]
    head = ["t", "x0", "y0", "theta_p"] + g + dg + ["Fx", "Fy", "Tz"]
    extra = ["dx0", "dy0", "dtheta_p"] + tau + list(WORK_NAMES) + ["KE", "PE"]
    return head, extra


def _header_lines(meta):
    lines = []
    for k, v in meta.items():
        if isinstance(v, (dict, list, tuple)):
            v = json.dumps(v, default=_json_default, sort_keys=True)
        lines.append(f"# {k}: {v}\n")
    return lines


def _write_table(path, names, table, meta):
    table = np.asarray(table, dtype=float).reshape(-1, len(names))
    with open(path, "w", newline="") as fh:
        fh.writelines(_header_lines(meta))
        fh.write(",".join(names) + "\n")
        for row in table:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def _read_table(source):
    """Parse comment metadata, the header row and the numeric body."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    else:
        text = source
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError("file has no header row")
    rows = list(csv.reader(_io.StringIO("\n".join(body))))
    names = [c.strip() for c in rows[0]]
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric entry: {exc}") from None
    table = table.reshape(-1, len(names))
    return names, table, meta


def write_record(path, record, meta=None):
    """Write a :class:`TrajectoryRecord` as CSV (core columns, then extras)."""
    J = record.n_joints
    head, extra = record_columns(J)
    cols = [record.t[:, None], record.q, record.qd[:, 3:], record.reaction, record.qd[:, :3],
            record.joint_torque, record.work, record.kinetic[:, None], record.potential[:, None]]
    info = {"units": UNITS}
    info.update(record.meta)
    info.update(meta or {})
    _write_table(path, head + extra, np.hstack(cols), info)


def read_record(path):
    """Inverse of :func:`write_record`."""
    names, table, meta = _read_table(path)
    J = sum(1 for n in names if n.startswith("gamma_"))
    head, extra = record_columns(J)
    if names != head + extra:
        missing = [n for n in head + extra if n not in names]
        raise ValueError(f"not a full trajectory record; missing columns {missing}")
    col = {n: table[:, i] for i, n in enumerate(names)}
    stack = lambda keys: np.column_stack([col[k] for k in keys]) if keys else np.zeros((len(table), 0))
    q = stack(["x0", "y0", "theta_p"] + [f"gamma_{i}" for i in range(1, J + 1)])
    qd = stack(["dx0", "dy0", "dtheta_p"] + [f"dgamma_{i}" for i in range(1, J + 1)])
    meta.pop("units", None)
    return TrajectoryRecord(col["t"].copy(), q, qd, stack(["Fx", "Fy", "Tz"]),
                            stack([f"tau_{i}" for i in range(1, J + 1)]), stack(list(WORK_NAMES)),
                            col["KE"].copy(), col["PE"].copy(), meta)


@dataclass
class ExperimentalLog:
    """Joint angles over time for one drag speed (m/s)."""

    t: np.ndarray
    gamma: np.ndarray
    speed: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim == 1:
            self.gamma = self.gamma[:, None]
        if self.t.ndim != 1 or self.gamma.shape[0] != self.t.size or self.t.size < 2:
            raise ValueError("log needs at least two samples with one angle row per time")
        if not np.all(np.diff(self.t) > 0):
            raise ValueError("log time stamps must be strictly increasing")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.gamma))):
            raise ValueError("log contains non-finite values")
        if not (np.isfinite(self.speed) and self.speed > 0):
            raise ValueError(f"log speed label must be positive, got {self.speed}")

    @property
    def n_joints(self):
        return self.gamma.shape[1]

    def resample(self, dt):
        """Linear interpolation onto a uniform grid from the first sample."""
        n = int(math.floor((self.t[-1] - self.t[0]) / dt + 1e-9)) + 1
        grid = self.t[0] + dt * np.arange(n)
        g = np.column_stack([np.interp(grid, self.t, self.gamma[:, j]) for j in range(self.n_joints)])
        return ExperimentalLog(grid, g, self.speed, dict(self.meta))


def markers_to_angles(points):
    """Joint twists from marker positions of shape (T, P, 2).

    Markers sit at the base, every joint and the tip, so P - 1 links give
    P - 2 twists.
    """
    points = np.asarray(points, dtype=float)
    d = np.diff(points, axis=1)
    a = np.unwrap(np.arctan2(d[..., 1], d[..., 0]), axis=0)
    return np.diff(a, axis=1), a


def forward_markers(base, first_angle, gamma, lengths):
    """Marker positions implied by a base point, first link angle and twists."""
    a = first_angle[:, None] + np.concatenate([np.zeros((len(gamma), 1)), np.cumsum(gamma, axis=1)],
                                              axis=1)
    steps = lengths[None, :, None] * np.stack([np.cos(a), np.sin(a)], axis=-1)
    return np.concatenate([base[:, None, :], base[:, None, :] + np.cumsum(steps, axis=1)], axis=1)


def _speed_from(names, table, meta, speed):
    if speed is not None:
        return float(speed)
    if "speed" in meta:
        return float(meta["speed"])
    if "v" in names:
        return float(np.median(table[:, names.index("v")]))
    if "y0" in names and len(table) > 1:
        t = table[:, 0]
        v = np.abs(np.diff(table[:, names.index("y0")]) / np.diff(t))
        if np.any(v > 0):
            return float(np.median(v[v > 0]))
    raise ValueError("no speed label: pass speed=, add a '# speed: <m/s>' line or a 'v' column")


def ingest_log(source, speed=None, lengths=None, sample_dt=None):
    """Read an experimental log as joint angles.

    Accepts joint-angle CSVs (``t, gamma_1..``, e.g. simulator records) or
    marker CSVs (``t, mx_0, my_0, ..., mx_P, my_P``; base, joints, tip).
    Marker logs are converted with the link geometry in ``lengths`` when
    given, and the forward-kinematics residual is stored in ``meta``.
    """
    names, table, meta = _read_table(source)
    if "t" not in names:
        raise ValueError("log is missing the 't' column")
    t = table[:, names.index("t")]
    if not np.all(np.diff(t) > 0):
        raise ValueError("log time stamps are not strictly increasing")
    gcols = [n for n in names if n.startswith("gamma_")]
    if gcols:
        expected = [f"gamma_{i}" for i in range(1, len(gcols) + 1)]
        if gcols != expected:
            raise ValueError(f"joint-angle columns must be {expected}")
        gamma = table[:, [names.index(c) for c in gcols]]
    else:
        P = sum(1 for n in names if n.startswith("mx_"))
        need = [c for i in range(P) for c in (f"mx_{i}", f"my_{i}")]
        if P < 3 or any(c not in names for c in need):
            raise ValueError("log needs gamma_i columns or mx_i/my_i marker columns (>= 3 markers)")
        pts = np.stack([np.column_stack([table[:, names.index(f"mx_{i}")],
                                         table[:, names.index(f"my_{i}")]]) for i in range(P)], axis=1)
        gamma, a = markers_to_angles(pts)
        if lengths is not None:
            lengths = np.asarray(lengths, dtype=float)
            if lengths.size != P - 1:
                raise ValueError(f"marker log has {P - 1} links, geometry has {lengths.size}")
            rebuilt = forward_markers(pts[:, 0], a[:, 0], gamma, lengths)
            meta["marker_residual"] = float(np.max(np.abs(rebuilt - pts)))
    log = ExperimentalLog(t.copy(), gamma.copy(), _speed_from(names, table, meta, speed), meta)
    return log.resample(sample_dt) if sample_dt else log


def write_log(path, log, meta=None):
    names = ["t"] + [f"gamma_{i}" for i in range(1, log.n_joints + 1)]
    info = {"units": UNITS, "speed": FLOAT_FMT % log.speed}
    info.update(meta or {})
    _write_table(path, names, np.column_stack([log.t, log.gamma]), info)


def write_eval_log(path, evaluations, names, meta=None):
    """Optimizer evaluation log: ``iter,eval_id,<params>,objective``."""
    cols = ["iter", "eval_id"] + list(names) + ["objective"]
    table = [[e.iteration, e.eval_id, *np.atleast_1d(e.params), e.objective] for e in evaluations]
    _write_table(path, cols, table, meta or {})


def read_eval_log(path):
    names, table, meta = _read_table(path)
    return names, table, meta


def write_columns(path, names, columns, meta=None):
    """Plain columnar plot data; columns may differ in nothing but values."""
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    _write_table(path, list(names), table, meta or {})


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(obj):
    """Replace non-finite floats by None so summaries stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def to_jsonable(obj):
    return _finite(json.loads(json.dumps(obj, default=_json_default)))


def write_summary(path, summary):
    Path(path).write_text(json.dumps(to_jsonable(summary), indent=2, sort_keys=True) + "\n")
