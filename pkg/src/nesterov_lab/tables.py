"""Tab-separated trajectory tables.

Three files describe a run:

* orbit   ``x1  x2``                          samples plus path-length checkpoints, in time order
* series  ``time  f_value  arclength``        the plotted curves
* diag    ``time x1 x2 v1 v2 arclength torque_integral weighted_f weighted_v2 J t3J energy kinetic segment``

Radial-disk event markers go to a fourth file ``time  kind``.  Numbers are
written with 12 significant digits and LF line endings, so identical runs
give identical bytes.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .flow import Marker, Trajectory
from .potential import value

ORBIT_COLUMNS = ("x1", "x2")
SERIES_COLUMNS = ("time", "f_value", "arclength")
DIAG_COLUMNS = ("time", "x1", "x2", "v1", "v2", "arclength", "torque_integral", "weighted_f",
                "weighted_v2", "J", "t3J", "energy", "kinetic", "segment")
MARKER_COLUMNS = ("time", "kind")


class SchemaError(ValueError):
    """A table's header does not match the expected columns."""


def fmt(x):
    return f"{float(x):.11e}"


def _write(path, header, rows):
    text = "\t".join(header) + "\n" + "".join("\t".join(r) + "\n" for r in rows)
    Path(path).write_bytes(text.encode("ascii"))


def orbit_rows(traj):
    """Sample positions merged with path-length checkpoints, ordered by time.

    Flows that start from rest at a known point get that point as the first
    row, so the curve begins exactly at ``X(0)``.
    """
    t = np.concatenate([traj.t, traj.orbit_t])
    X = np.concatenate([traj.X[:, :2], traj.orbit_X[:, :2]]) if traj.orbit_t.size else traj.X[:, :2]
    order = np.argsort(t, kind="stable")
    X = X[order]
    start = traj.info.get("X0")
    if start is not None and traj.t[0] > 0:
        X = np.vstack([np.asarray(start, dtype=float)[:2], X])
    return X


def write_orbit(path, traj):
    _write(path, ORBIT_COLUMNS, ([fmt(a), fmt(b)] for a, b in orbit_rows(traj)))


def write_series(path, traj, spec):
    f = value(spec, traj.X)
    _write(path, SERIES_COLUMNS, ([fmt(t), fmt(v), fmt(s)] for t, v, s in zip(traj.t, f, traj.arclength)))


def diag_columns(traj, spec):
    """Numeric columns of the diag table as a dict of arrays."""
    t, X, V = traj.t, traj.X, traj.V
    J = X[:, 0] * V[:, 1] - X[:, 1] * V[:, 0]
    f = value(spec, X)
    w = 2.0 * X + t[:, None] * V
    speed2 = np.sum(V * V, axis=1)
    return {
        "time": t, "x1": X[:, 0], "x2": X[:, 1], "v1": V[:, 0], "v2": V[:, 1],
        "arclength": traj.arclength, "torque_integral": traj.torque_integral,
        "weighted_f": traj.weighted_f, "weighted_v2": traj.weighted_v2,
        "J": J, "t3J": t ** 3 * J,
        "energy": t * t * f + 0.5 * np.sum(w * w, axis=1),
        "kinetic": t * t * (f + 0.5 * speed2),
    }


def write_diag(path, traj, spec):
    if traj.X.shape[1] != 2:
        raise SchemaError("diag tables are defined for planar trajectories")
    cols = diag_columns(traj, spec)
    numeric = DIAG_COLUMNS[:-1]
    rows = ([fmt(cols[c][i]) for c in numeric] + [str(traj.segment[i])] for i in range(len(traj)))
    _write(path, DIAG_COLUMNS, rows)


def write_markers(path, traj):
    _write(path, MARKER_COLUMNS, ([fmt(m.time), m.kind] for m in traj.markers))


def _read(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = tuple(lines[0].split("\t"))
    body = [ln.split("\t") for ln in lines[1:] if ln]
    return header, body


def read_table(path):
    """Return ``(kind, columns)`` where kind is ``orbit``, ``series`` or ``diag``."""
    header, body = _read(path)
    for kind, cols in (("diag", DIAG_COLUMNS), ("series", SERIES_COLUMNS), ("orbit", ORBIT_COLUMNS)):
        if header == cols:
            break
    else:
        raise SchemaError(f"{path}: unrecognised header {header!r}")
    out = {}
    for j, c in enumerate(cols):
        raw = [row[j] for row in body]
        if c == "segment":
            out[c] = np.array(raw, dtype=object)
        else:
            try:
                out[c] = np.array([float(x) for x in raw])
            except ValueError as exc:
                raise SchemaError(f"{path}: bad number in column {c}") from exc
    if any(len(row) != len(cols) for row in body):
        raise SchemaError(f"{path}: ragged rows")
    return kind, out


def read_markers(path):
    header, body = _read(path)
    if header != MARKER_COLUMNS:
        raise SchemaError(f"{path}: unrecognised header {header!r}")
    return [Marker(float(t), k) for t, k in body]


def trajectory_from_diag(cols, markers=()):
    """Rebuild a :class:`Trajectory` from the columns of a diag table."""
    X = np.column_stack([cols["x1"], cols["x2"]])
    V = np.column_stack([cols["v1"], cols["v2"]])
    return Trajectory(cols["time"], X, V, cols["arclength"], cols["torque_integral"],
                      cols["weighted_f"], cols["weighted_v2"], markers=list(markers),
                      segment=cols["segment"])


def rounded(traj):
    """Copy of ``traj`` with every sample rounded the way the tables store it."""
    r = np.vectorize(lambda x: float(fmt(x)), otypes=[float])
    markers = [Marker(float(fmt(m.time)), m.kind) for m in traj.markers]
    out = Trajectory(r(traj.t), r(traj.X), r(traj.V), r(traj.arclength), r(traj.torque_integral),
                     r(traj.weighted_f), r(traj.weighted_v2), markers=markers,
                     segment=traj.segment.copy(), info=dict(traj.info))
    return out


def sibling(path, suffix):
    """``series.tsv`` -> ``series<suffix>.tsv``."""
    p = Path(path)
    return p.with_name(p.stem + suffix + (p.suffix or ".tsv"))


def finite_or_nan(x):
    return x if math.isfinite(x) else math.nan
