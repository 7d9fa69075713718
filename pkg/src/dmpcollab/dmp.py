"""Point-to-point DMPs for position and anchored orientation.

Both DMPs share one second-order form on anchored coordinates ``y``
(``p - p0`` for position, ``log(Q * conj(Q0))`` for orientation)::

    tau^2 y'' = a_z b_z (g - y) - a_z tau y' + g_f(x) diag(g) f(x),  x = t / tau

where ``g`` is the anchored goal. Learned weights are stored divided by
the demonstrated displacement per axis, so ``diag(g) f`` reproduces the
demonstration exactly when ``g`` equals the demonstrated goal.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .trajectories import Demonstration, differentiate

DEGENERATE_TOL = 1e-6


class DegenerateDemoError(ValueError):
    """The demonstration has no usable displacement to learn from."""


@dataclass(frozen=True)
class DmpModel:
    kind: str
    centers: np.ndarray
    widths: np.ndarray
    weights: np.ndarray  # (3, N)
    alpha_z: float = 40.0
    beta_z: float = 10.0
    a_g: float = 30.0
    c_g: float = 0.99
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    demo_goal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    demo_duration: float = 1.0

    def __post_init__(self):
        if self.kind not in ("position", "orientation"):
            raise ValueError(f"unknown DMP kind {self.kind!r}")
        if len(self.centers) < 2 or np.any(np.diff(self.centers) <= 0.0):
            raise ValueError("need at least 2 strictly increasing kernel centers")
        if np.any(np.asarray(self.widths) <= 0.0):
            raise ValueError("kernel widths must be positive")
        if self.alpha_z <= 0.0 or self.beta_z <= 0.0:
            raise ValueError("alpha_z and beta_z must be positive")
        if self.a_g <= 0.0:
            raise ValueError("gating slope a_g must be positive")

    @property
    def n_kernels(self):
        return len(self.centers)

    def to_dict(self):
        return {
            "kind": self.kind,
            "N": self.n_kernels,
            "centers": np.asarray(self.centers).tolist(),
            "widths": np.asarray(self.widths).tolist(),
            "weights": np.asarray(self.weights).ravel().tolist(),
            "alpha_z": self.alpha_z,
            "beta_z": self.beta_z,
            "a_g": self.a_g,
            "c_g": self.c_g,
            "anchor": np.asarray(self.anchor).tolist(),
            "demo_goal": np.asarray(self.demo_goal).tolist(),
            "demo_duration": self.demo_duration,
        }

    @classmethod
    def from_dict(cls, d):
        n = int(d["N"])
        return cls(
            kind=d["kind"],
            centers=np.asarray(d["centers"], dtype=float),
            widths=np.asarray(d["widths"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float).reshape(3, n),
            alpha_z=float(d["alpha_z"]),
            beta_z=float(d["beta_z"]),
            a_g=float(d["a_g"]),
            c_g=float(d["c_g"]),
            anchor=np.asarray(d["anchor"], dtype=float),
            demo_goal=np.asarray(d["demo_goal"], dtype=float),
            demo_duration=float(d["demo_duration"]),
        )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return DmpModel.from_dict(json.load(fh))


def default_kernels(n):
    centers = np.linspace(0.0, 1.0, n)
    spacing = np.diff(centers)
    widths = np.empty(n)
    widths[:-1] = 1.0 / (2.0 * spacing ** 2)
    widths[-1] = widths[-2]
    return centers, widths


def phase(t, tau):
    return t / tau


def gating(model, x):
    z = model.a_g * (x - model.c_g)
    if z > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def gating_derivative(model, x):
    g = gating(model, x)
    return -model.a_g * g * (1.0 - g)


def basis(model, x):
    """Normalized kernel activations, shifted in log space so the
    denominator never underflows for x far outside [0, 1]."""
    e = -model.widths * (x - model.centers) ** 2
    psi = np.exp(e - e.max())
    return psi / psi.sum()


def basis_with_derivative(model, x):
    d = x - model.centers
    e = -model.widths * d * d
    psi = np.exp(e - e.max())
    S = psi.sum()
    dpsi = -2.0 * model.widths * d * psi
    phi = psi / S
    dphi = (dpsi - phi * dpsi.sum()) / S
    return phi, dphi


def forcing_term(model, x):
    return model.weights @ basis(model, x)


def gated_forcing(model, x):
    """``g_f(x) f(x)`` and its derivative with respect to ``x``."""
    phi, dphi = basis_with_derivative(model, x)
    g = gating(model, x)
    dg = -model.a_g * g * (1.0 - g)
    f = model.weights @ phi
    df = model.weights @ dphi
    return g * f, dg * f + g * df


def anchored_accel(model, y, ydot, t, goal, tau):
    """Acceleration of the anchored coordinates for anchored goal ``goal``."""
    x = t / tau
    forcing = gating(model, x) * goal * forcing_term(model, x)
    az, bz = model.alpha_z, model.beta_z
    return (az * bz * (goal - y) - az * tau * ydot + forcing) / (tau * tau)


def pos_accel(model, p, pdot, t, p_g, tau, p0=None):
    """Position DMP acceleration; ``p0`` defaults to the model's anchor."""
    p0 = model.anchor if p0 is None else np.asarray(p0, dtype=float)
    return anchored_accel(model, np.asarray(p) - p0, pdot, t, np.asarray(p_g) - p0, tau)


def orient_accel(model, q_prime, q_prime_dot, t, q_prime_g, tau):
    return anchored_accel(model, q_prime, q_prime_dot, t, np.asarray(q_prime_g, dtype=float), tau)


def _fit_axes(y, ydot, yddot, x, tau, goal, alpha_z, beta_z, centers, widths, a_g, c_g):
    # forcing target implied by inverting the DMP along the demonstration
    F = tau * tau * yddot - alpha_z * beta_z * (goal - y) + alpha_z * tau * ydot
    g = 1.0 / (1.0 + np.exp(a_g * (x - c_g)))
    psi = np.exp(-widths[:, None] * (x[None, :] - centers[:, None]) ** 2)  # (N, T)
    weights = np.zeros((3, len(centers)))
    for j in range(3):
        if abs(goal[j]) < DEGENERATE_TOL:
            continue
        target = F[:, j] / goal[j]
        weights[j] = (psi @ (g * target)) / (psi @ (g * g))
    return weights


def train_lwr(demo: Demonstration, n_kernels=30, alpha_z=40.0, beta_z=10.0,
              a_g=30.0, c_g=0.99):
    """Train position and orientation DMPs from one demonstration.

    Returns ``(position_model, orientation_model)``.
    """
    if n_kernels < 2:
        raise ValueError("need at least 2 kernels")
    t = demo.t - demo.t[0]
    tau = demo.duration
    dt = tau / (len(t) - 1)
    x = t / tau
    centers, widths = default_kernels(n_kernels)

    p0 = demo.positions[0]
    y = demo.positions - p0
    ydot = demo.velocities if demo.velocities is not None else differentiate(demo.positions, dt)
    yddot = demo.accelerations if demo.accelerations is not None else differentiate(ydot, dt)
    goal = y[-1]
    if np.all(np.abs(goal) < DEGENERATE_TOL):
        raise DegenerateDemoError("demonstrated position displacement is zero on every axis")
    w_p = _fit_axes(y, ydot, yddot, x, tau, goal, alpha_z, beta_z, centers, widths, a_g, c_g)
    pos_model = DmpModel("position", centers, widths, w_p, alpha_z, beta_z, a_g, c_g,
                         anchor=p0.copy(), demo_goal=demo.positions[-1].copy(), demo_duration=tau)

    Q0 = demo.orientations[0]
    rel = [quat.relative(Q, Q0) for Q in demo.orientations]
    qp = np.array([quat.quat_log(Q) for Q in rel])
    if demo.angular_velocities is not None:
        qp_dot = np.array([quat.qdot_from_omega(Q, w, q) for Q, w, q
                           in zip(rel, demo.angular_velocities, qp)])
    else:
        qp_dot = differentiate(qp, dt)
    qp_ddot = differentiate(qp_dot, dt)
    goal_o = qp[-1]
    if np.all(np.abs(goal_o) < DEGENERATE_TOL):
        raise DegenerateDemoError("demonstrated rotation is zero on every axis")
    w_o = _fit_axes(qp, qp_dot, qp_ddot, x, tau, goal_o, alpha_z, beta_z, centers, widths, a_g, c_g)
    ori_model = DmpModel("orientation", centers, widths, w_o, alpha_z, beta_z, a_g, c_g,
                         anchor=Q0.copy(), demo_goal=demo.orientations[-1].copy(),
                         demo_duration=tau)
    return pos_model, ori_model


@dataclass
class Rollout:
    t: np.ndarray
    p: np.ndarray
    pdot: np.ndarray
    Q: np.ndarray
    omega: np.ndarray
    q_prime: np.ndarray
    q_prime_dot: np.ndarray


def rollout(pos_model, ori_model, p0, Q0, p_g, Q_g, tau_p, tau_o, dt=0.002, duration=None):
    """Semi-implicit Euler integration of both DMPs from rest."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if duration is None:
        duration = 1.5 * max(tau_p, tau_o)
    n = int(round(duration / dt)) + 1
    p0 = np.asarray(p0, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    goal_p = np.asarray(p_g, dtype=float) - p0
    goal_o = quat.quat_log(quat.relative(np.asarray(Q_g, dtype=float), Q0))

    y, ydot = np.zeros(3), np.zeros(3)
    q, qdot = np.zeros(3), np.zeros(3)
    out = Rollout(np.arange(n) * dt, np.empty((n, 3)), np.empty((n, 3)), np.empty((n, 4)),
                  np.empty((n, 3)), np.empty((n, 3)), np.empty((n, 3)))
    for k in range(n):
        t = k * dt
        Qp = quat.quat_exp(q)
        out.p[k] = p0 + y
        out.pdot[k] = ydot
        out.Q[k] = quat.quat_product(Qp, Q0)
        out.omega[k] = quat.omega_from_qdot(Qp, qdot, q)
        out.q_prime[k] = q
        out.q_prime_dot[k] = qdot
        ydot = ydot + dt * anchored_accel(pos_model, y, ydot, t, goal_p, tau_p)
        y = y + dt * ydot
        qdot = qdot + dt * anchored_accel(ori_model, q, qdot, t, goal_o, tau_o)
        q = q + dt * qdot
    return out
