"""File formats: trajectory CSV, episode logs, estimate traces and reports.

Every file is UTF-8 with ``\\n`` line ends. Floats are written with
``repr`` (shortest round-trip form) and parsed with ``float``, neither of
which depends on the process locale.
"""
import csv
import json
import math
import os

import numpy as np

from .sim import LOG_COLUMNS
from .trajectories import Demonstration

TRAJECTORY_COLUMNS = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"]
TRAJECTORY_RATE_COLUMNS = ["vx", "vy", "vz", "wx", "wy", "wz"]
TRAJECTORY_UNITS = "s, m, unit quaternion (w first), m/s, rad/s"
TRACE_COLUMNS = ["t", "pg_x", "pg_y", "pg_z", "tau_p", "qg_x", "qg_y", "qg_z", "tau_o",
                 "P_norm_p", "P_norm_o", "active_mask"]
QUAT_NORM_TOL = 1e-6


class TrajectoryFormatError(ValueError):
    """A trajectory file could not be parsed or violates its invariants."""


def _fmt(x):
    return repr(float(x))


def read_trajectory(path):
    """Parse a trajectory CSV into a :class:`Demonstration`.

    Lines starting with ``#`` are comments. The first other line is the
    header and must be ``t,px,py,pz,qw,qx,qy,qz`` optionally followed by
    ``vx,vy,vz,wx,wy,wz``.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except (OSError, UnicodeDecodeError) as exc:
        raise TrajectoryFormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise TrajectoryFormatError(f"{path}: no header or data")
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    if header not in (TRAJECTORY_COLUMNS, TRAJECTORY_COLUMNS + TRAJECTORY_RATE_COLUMNS):
        raise TrajectoryFormatError(f"{path}: unexpected header {','.join(header)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise TrajectoryFormatError(f"{path}: non-numeric field ({exc})") from exc
    if data.ndim != 2 or len(data) < 10 or data.shape[1] != len(header):
        raise TrajectoryFormatError(
            f"{path}: need at least 10 complete rows of {len(header)} fields")
    if not np.all(np.isfinite(data)):
        raise TrajectoryFormatError(f"{path}: non-finite values")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0.0):
        raise TrajectoryFormatError(f"{path}: timestamps must be strictly increasing")
    Q = data[:, 4:8]
    bad = np.abs(np.linalg.norm(Q, axis=1) - 1.0) > QUAT_NORM_TOL
    if bad.any():
        raise TrajectoryFormatError(
            f"{path}: quaternion not unit norm at row {int(np.argmax(bad)) + 1}")
    Q = Q / np.linalg.norm(Q, axis=1, keepdims=True)
    vel = omega = None
    if data.shape[1] == 14:
        vel, omega = data[:, 8:11], data[:, 11:14]
    return Demonstration(t, data[:, 1:4], Q, velocities=vel, angular_velocities=omega)


def write_trajectory(path, demo, with_rates=None):
    """Write ``demo`` in the trajectory CSV layout."""
    if with_rates is None:
        with_rates = demo.velocities is not None and demo.angular_velocities is not None
    header = TRAJECTORY_COLUMNS + (TRAJECTORY_RATE_COLUMNS if with_rates else [])
    cols = [demo.t[:, None], demo.positions, demo.orientations]
    if with_rates:
        cols += [demo.velocities, demo.angular_velocities]
    data = np.hstack(cols)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# units: {TRAJECTORY_UNITS}\n")
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


_INT_LOG_COLUMNS = {LOG_COLUMNS.index("active_p"), LOG_COLUMNS.index("active_o")}


def write_episode_csv(path, result):
    """One row per simulation step, columns as :data:`sim.LOG_COLUMNS`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in result.log:
            fh.write(",".join(str(int(v)) if j in _INT_LOG_COLUMNS else _fmt(v)
                              for j, v in enumerate(row)) + "\n")


def read_episode_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if [h.strip() for h in rows[0]] != LOG_COLUMNS:
        raise ValueError(f"{path}: not an episode log")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


def write_estimate_trace(path, result):
    """Per-step estimates, covariance norms and the active-constraint mask.

    ``active_mask`` packs the position filter's 8 constraint bits (upper
    bounds first) in bits 0-7 and the orientation filter's in bits 8-15.
    """
    col = {name: i for i, name in enumerate(LOG_COLUMNS)}
    est = [col[c] for c in TRACE_COLUMNS[:11]]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in result.log:
            mask = int(row[col["active_p"]]) | (int(row[col["active_o"]]) << 8)
            fh.write(",".join(_fmt(row[j]) for j in est) + f",{mask}\n")


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def write_report(path, results):
    """JSON list with one summary object per episode."""
    payload = [{k: _json_safe(v) for k, v in r.summary().items()} for r in results]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def comparison_table(results):
    """Plain-text table of work, mean force and mean torque per scenario
    and mode, plus the observed range per mode."""
    lines = [f"{'scenario':<12} {'mode':<11} {'work_J':>9} {'mean_force_N':>13} "
             f"{'mean_torque_Nm':>15} {'settled':>8}"]
    for r in results:
        lines.append(f"{r.scenario_id:<12} {r.mode:<11} {r.work_J:9.3f} {r.mean_force_N:13.3f} "
                     f"{r.mean_torque_Nm:15.3f} {str(r.settled):>8}")
    lines.append("")
    for mode in sorted({r.mode for r in results}):
        rs = [r for r in results if r.mode == mode]
        rng = lambda vals: f"[{min(vals):.2f}, {max(vals):.2f}]"
        lines.append(f"{mode}: work {rng([r.work_J for r in rs])} J, "
                     f"force {rng([r.mean_force_N for r in rs])} N, "
                     f"torque {rng([r.mean_torque_Nm for r in rs])} N m")
    return "\n".join(lines) + "\n"


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
