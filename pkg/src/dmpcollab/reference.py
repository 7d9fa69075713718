"""Force-shaped DMP reference model.

The robot pose follows the DMP prediction computed with the current target
and time-scaling estimates, plus the human wrench filtered through a
virtual inertia::

    p''    = p''_hat + M_p^-1 f_ext
    omega' = omega'_hat + M_o^-1 tau_ext
"""
from dataclasses import dataclass, field

import numpy as np

from . import dmp, quat
from .quat import ConsistencyError


@dataclass
class InertiaParams:
    M_p: np.ndarray = field(default_factory=lambda: np.full(3, 2.0))
    M_o: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))

    def __post_init__(self):
        self.M_p = _diag(self.M_p)
        self.M_o = _diag(self.M_o)
        if np.any(self.M_p <= 0.0) or np.any(self.M_o <= 0.0):
            raise ValueError("reference inertias must be positive")

    @property
    def M_p_inv(self):
        return np.diag(1.0 / self.M_p)

    @property
    def M_o_inv(self):
        return np.diag(1.0 / self.M_o)


def _diag(m):
    m = np.asarray(m, dtype=float)
    if m.ndim == 2:
        m = np.diag(m).copy()
    return np.broadcast_to(m, (3,)).astype(float)


@dataclass
class ReferenceState:
    p: np.ndarray
    pdot: np.ndarray
    Q: np.ndarray
    omega: np.ndarray
    q_prime: np.ndarray
    q_prime_dot: np.ndarray
    p0: np.ndarray
    Q0: np.ndarray
    t_clock: float = 0.0

    @classmethod
    def at_rest(cls, p0, Q0):
        p0 = np.asarray(p0, dtype=float)
        Q0 = quat.normalize(Q0)
        return cls(p0.copy(), np.zeros(3), Q0.copy(), np.zeros(3),
                   np.zeros(3), np.zeros(3), p0.copy(), Q0.copy())

    @property
    def Q_prime(self):
        return quat.quat_exp(self.q_prime)

    def check(self, tol=1e-6):
        q = quat.quat_log(quat.relative(self.Q, self.Q0))
        if np.max(np.abs(q - self.q_prime)) > tol:
            raise ConsistencyError("cached q' drifted from log(Q * conj(Q0))")


def ref_pos_step(state, model, theta_p, f_ext, dt, inertia, pddot_hat=None):
    """Returns ``(p, pdot, pddot)`` after one semi-implicit Euler step.

    ``pddot_hat`` may pass in the DMP acceleration if already evaluated at
    this state and ``theta_p``."""
    if pddot_hat is None:
        pddot_hat = dmp.pos_accel(model, state.p, state.pdot, state.t_clock,
                                  theta_p[:3], theta_p[3], state.p0)
    pddot = pddot_hat + f_ext / inertia.M_p
    pdot = state.pdot + dt * pddot
    p = state.p + dt * pdot
    return p, pdot, pddot


def ref_orient_step(state, model, theta_o, tau_ext, dt, inertia, check=False,
                    omegadot_hat=None):
    """Returns ``(Q, omega, q_prime, q_prime_dot, omegadot)`` after one step.

    With ``check`` the update is verified against the equivalent dynamics
    in log coordinates, ``q'' - q''_hat = 0.5 J_Q (T_ext * Q')``.
    """
    if check:
        state.check()
    qp, qp_dot = state.q_prime, state.q_prime_dot
    Qp = quat.quat_exp(qp)
    if omegadot_hat is None or check:
        qddot_hat = dmp.orient_accel(model, qp, qp_dot, state.t_clock, theta_o[:3], theta_o[3])
        omegadot_hat = quat.omegadot_from_qddot(Qp, qp_dot, qddot_hat, state.omega, qp)
    torque_acc = tau_ext / inertia.M_o
    omegadot = omegadot_hat + torque_acc
    if check:
        qddot = quat.qddot_from_omegadot(Qp, qp_dot, state.omega, omegadot, qp)
        T_ext = np.concatenate(([0.0], torque_acc))
        expected = 0.5 * quat.jacobian_JQ(qp) @ quat.qmul(T_ext, Qp)
        if np.max(np.abs(qddot - qddot_hat - expected)) > 1e-8:
            raise ConsistencyError("orientation step violates the log-coordinate identity")
    omega = state.omega + dt * omegadot
    Q = quat.quat_product(quat.quat_exp(dt * omega), state.Q)
    Qp_new = quat.relative(Q, state.Q0)
    qp_new = quat.quat_log(Qp_new)
    qp_dot_new = quat.qdot_from_omega(Qp_new, omega, qp_new)
    return Q, omega, qp_new, qp_dot_new, omegadot


class ReferenceModel:
    """Stateful wrapper stepping both the position and orientation parts."""

    def __init__(self, pos_model, ori_model, p0, Q0, inertia=None):
        self.pos_model = pos_model
        self.ori_model = ori_model
        self.inertia = inertia or InertiaParams()
        self.state = ReferenceState.at_rest(p0, Q0)

    def accel_hat(self, theta_p, theta_o):
        """DMP-predicted ``(pddot_hat, omegadot_hat)`` at the current state."""
        s = self.state
        pddot_hat = dmp.pos_accel(self.pos_model, s.p, s.pdot, s.t_clock,
                                  theta_p[:3], theta_p[3], s.p0)
        qddot_hat = dmp.orient_accel(self.ori_model, s.q_prime, s.q_prime_dot, s.t_clock,
                                     theta_o[:3], theta_o[3])
        omegadot_hat = quat.omegadot_from_qddot(s.Q_prime, s.q_prime_dot, qddot_hat,
                                                s.omega, s.q_prime)
        return pddot_hat, omegadot_hat

    def step(self, theta_p, theta_o, f_ext, tau_ext, dt, advance_clock=True, check=False,
             accel_hat=None):
        """Advance one step; returns the accelerations ``(pddot, omegadot)``
        that were applied. ``accel_hat`` optionally supplies the DMP
        accelerations already evaluated at this state and estimate."""
        s = self.state
        a_p, a_o = (None, None) if accel_hat is None else accel_hat
        p, pdot, pddot = ref_pos_step(s, self.pos_model, theta_p, f_ext, dt, self.inertia, a_p)
        Q, omega, qp, qp_dot, omegadot = ref_orient_step(
            s, self.ori_model, theta_o, tau_ext, dt, self.inertia, check=check, omegadot_hat=a_o)
        s.p, s.pdot = p, pdot
        s.Q, s.omega, s.q_prime, s.q_prime_dot = Q, omega, qp, qp_dot
        if advance_clock:
            s.t_clock += dt
        return pddot, omegadot


def target_orientation(theta_o, Q0):
    """Reconstruct the target orientation estimate from its anchored log."""
    return quat.quat_product(quat.quat_exp(theta_o[:3]), Q0)
