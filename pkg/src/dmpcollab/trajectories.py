"""Minimum-jerk profiles and synthetic demonstrations."""
from dataclasses import dataclass

import numpy as np

from . import quat


def min_jerk(t, duration):
    """Normalized minimum-jerk path ``s(t)`` and its first two derivatives.

    ``s`` goes from 0 to 1 over ``[0, duration]`` and is clamped outside.
    """
    if isinstance(t, float):
        tau = min(max(t / duration, 0.0), 1.0)
        return (tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau),
                30.0 * tau * tau * (1.0 - tau) ** 2 / duration,
                60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / duration ** 2)
    tau = np.clip(np.asarray(t, dtype=float) / duration, 0.0, 1.0)
    s = tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)
    ds = 30.0 * tau ** 2 * (1.0 - tau) ** 2 / duration
    dds = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / duration ** 2
    return s, ds, dds


@dataclass
class Demonstration:
    t: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    velocities: np.ndarray | None = None
    accelerations: np.ndarray | None = None
    angular_velocities: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.orientations = np.asarray(self.orientations, dtype=float)
        if self.t.ndim != 1 or len(self.t) < 10:
            raise ValueError("a demonstration needs at least 10 samples")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("demonstration timestamps must be strictly increasing")
        n = len(self.t)
        if self.positions.shape != (n, 3) or self.orientations.shape != (n, 4):
            raise ValueError("positions must be (n, 3) and orientations (n, 4)")

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])


def synthetic_demo(p0=(0.0, 0.0, 0.3), p_g=(0.3, 0.25, 0.45),
                   Q0=quat.IDENTITY, rot=(0.3, -0.4, 0.8),
                   duration=4.7, dt=0.002):
    """Straight-line minimum-jerk translation and geodesic minimum-jerk
    rotation by rotation vector ``rot`` (spatial frame) from ``Q0``.
    """
    p0 = np.asarray(p0, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    rot = np.asarray(rot, dtype=float)
    n = int(round(duration / dt)) + 1
    t = np.linspace(0.0, duration, n)
    s, ds, dds = min_jerk(t, duration)
    positions = p0 + np.outer(s, p_g - p0)
    velocities = np.outer(ds, p_g - p0)
    accelerations = np.outer(dds, p_g - p0)
    orientations = np.array([quat.quat_product(quat.quat_exp(si * rot), Q0) for si in s])
    omegas = np.outer(ds, rot)
    return Demonstration(t, positions, orientations, velocities, accelerations, omegas)


def geodesic_min_jerk(t, duration, Q_start, Q_goal, axis_angle=None):
    """Orientation, angular velocity and angular acceleration along the
    geodesic from ``Q_start`` to ``Q_goal`` with a minimum-jerk angle profile.
    """
    if axis_angle is None:
        axis_angle = quat.quat_log(quat.relative(Q_goal, Q_start))
    s, ds, dds = min_jerk(t, duration)
    Q = quat.quat_product(quat.quat_exp(float(s) * axis_angle), Q_start)
    return Q, float(ds) * axis_angle, float(dds) * axis_angle


def differentiate(y, dt):
    """Five-point central difference along axis 0, second order at the ends."""
    y = np.asarray(y, dtype=float)
    d = np.gradient(y, dt, axis=0, edge_order=2)
    if len(y) >= 5:
        d[2:-2] = (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * dt)
    return d

