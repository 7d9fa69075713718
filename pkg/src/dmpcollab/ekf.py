"""Constrained fading-memory EKF estimating a DMP target and time scaling.

The estimated parameter is ``theta = [g (3), tau]`` where ``g`` is the
target position (position filter) or the anchored target log
``log(Q_g * conj(Q0))`` (orientation filter). The measurement is the
acceleration of the reference model; since the reference model adds the
human wrench through a known inertia, the innovation is available directly
as ``M^-1 nu``.

Discrete realization
--------------------
The filter runs once per control sample. ``R``, ``Qn`` and ``a_p`` are used
as per-sample quantities of a discrete fading-memory EKF::

    P_pred = a_p**2 P + Qn
    G      = P_pred Cb^T (Cb P_pred Cb^T + R)^-1
    K      = N G                    (N from the constraints active for G nu)
    theta <- clamp(theta + K M^-1 nu / c_n)
    P_new  = (I - K Cb) P_pred (I - K Cb)^T + K R K^T

The Joseph form keeps ``P`` symmetric PSD. If ``|P_new|_2 > rho2`` the
covariance is frozen for that step. Since ``Cb P Cb^T + R >= R``, the gain
obeys ``|K| <= |P| |R^-1|``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import dmp, quat

TWO_PI = 2.0 * math.pi


class NumericalError(ArithmeticError):
    """The covariance lost positive semidefiniteness."""


def _pos_defaults():
    return np.array([0.75, 0.7, 0.95, 60.0]), np.array([-0.75, -0.7, -0.2, 1.0])


def _ori_defaults():
    return (np.array([TWO_PI, TWO_PI, TWO_PI, 60.0]),
            np.array([-TWO_PI, -TWO_PI, -TWO_PI, 1.0]))


@dataclass
class ObserverConfig:
    R: np.ndarray = field(default_factory=lambda: 2000.0 * np.eye(3))
    Qn: np.ndarray = field(default_factory=lambda: 0.001 * np.eye(4))
    P0: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1.0, 10.0]))
    a_p: float = 1.001
    rho2: float = 10000.0
    theta_upper: np.ndarray = field(default_factory=lambda: _pos_defaults()[0])
    theta_lower: np.ndarray = field(default_factory=lambda: _pos_defaults()[1])

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.Qn = np.asarray(self.Qn, dtype=float)
        self.P0 = np.asarray(self.P0, dtype=float)
        self.theta_upper = np.asarray(self.theta_upper, dtype=float)
        self.theta_lower = np.asarray(self.theta_lower, dtype=float)
        for name, m in (("R", self.R), ("Qn", self.Qn), ("P0", self.P0)):
            if not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() <= 0.0:
                raise ValueError(f"{name} must be symmetric positive definite")
        if self.a_p <= 0.0 or self.rho2 <= 0.0:
            raise ValueError("a_p and rho2 must be positive")
        if np.any(self.theta_lower >= self.theta_upper):
            raise ValueError("theta_lower must be below theta_upper")
        if self.theta_lower[3] <= 0.0:
            raise ValueError("time scaling bounds must be positive")
        if np.linalg.norm(self.P0, 2) > self.rho2:
            raise ValueError("initial covariance exceeds rho2")
        self.R_inv = np.linalg.inv(self.R)
        self.fading = self.a_p * self.a_p

    @classmethod
    def position(cls, **kw):
        return cls(**kw)

    @classmethod
    def orientation(cls, **kw):
        upper, lower = _ori_defaults()
        kw.setdefault("theta_upper", upper)
        kw.setdefault("theta_lower", lower)
        return cls(**kw)


@dataclass
class ObserverState:
    theta_hat: np.ndarray
    P: np.ndarray
    last_C_bar: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    last_c_n: float = 1.0
    active: int = 0  # bitmask over the 8 box constraints, upper bounds first
    frozen: bool = False
    last_gain: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    P_norm: float = float("nan")


# -- measurement model ------------------------------------------------------

def _anchored_accel_and_jacobian(model, y, ydot, t, theta, origin=None):
    """Anchored DMP acceleration and its 3x4 derivative w.r.t. ``theta``."""
    g = theta[:3] if origin is None else theta[:3] - origin
    tau = theta[3]
    x = t / tau
    F, dF = dmp.gated_forcing(model, x)
    ab = model.alpha_z * model.beta_z
    inv2 = 1.0 / (tau * tau)
    spring = ab * (g - y) + g * F
    acc = (spring - model.alpha_z * tau * ydot) * inv2
    J = np.empty((3, 4))
    J[:, :3] = _I3 * ((ab + F) * inv2)
    J[:, 3] = -2.0 * spring * inv2 / tau + model.alpha_z * ydot * inv2 - g * dF * t * inv2 * inv2
    return acc, J


def _omega_map(Q_prime, q_prime):
    """Matrix of the linear map ``a -> vec{2 (J_q a) * conj(Q')}``."""
    w, x, y, z = Q_prime.tolist()
    # right multiplication by conj(Q'): A * conj(Q') = Rm @ A
    Rm = np.array([
        [w, x, y, z],
        [-x, w, -z, y],
        [-y, z, w, -x],
        [-z, -y, x, w],
    ])
    return 2.0 * (Rm @ quat.jacobian_Jq(q_prime))[1:]


def measurement_fn_p(model, theta_p, p, pdot, t, p0):
    """Predicted linear acceleration for target/time-scaling ``theta_p``."""
    return dmp.pos_accel(model, p, pdot, t, theta_p[:3], theta_p[3], p0)


def measurement_fn_o(model, theta_o, Q_prime, omega, t, q_prime=None, q_prime_dot=None):
    """Predicted angular acceleration for ``theta_o``."""
    if q_prime is None:
        q_prime = quat.quat_log(Q_prime)
    if q_prime_dot is None:
        q_prime_dot = quat.qdot_from_omega(Q_prime, omega, q_prime)
    qddot = dmp.orient_accel(model, q_prime, q_prime_dot, t, theta_o[:3], theta_o[3])
    return quat.omegadot_from_qddot(Q_prime, q_prime_dot, qddot, omega, q_prime)


def analytic_jacobian(kind, model, theta, s, t, p0=None):
    """``dh/dtheta`` at ``theta`` for state ``s``.

    ``s`` is ``(p, pdot)`` for ``kind="position"`` and ``(Q_prime, omega)``
    for ``kind="orientation"``. Returns ``(h, C)``.
    """
    if kind == "position":
        p, pdot = s
        p0 = model.anchor if p0 is None else p0
        return _anchored_accel_and_jacobian(model, p - p0, pdot, t, theta, p0)
    Q_prime, omega = s[0], s[1]
    q = s[2] if len(s) > 2 else quat.quat_log(Q_prime)
    qdot = s[3] if len(s) > 3 else quat.qdot_from_omega(Q_prime, omega, q)
    qddot, J = _anchored_accel_and_jacobian(model, q, qdot, t, theta)
    L = _omega_map(Q_prime, q)
    bias = 2.0 * quat.qmul(quat.jacobian_Jq_dot_qdot(q, qdot), quat.quat_conjugate(Q_prime))[1:]
    return bias + L @ qddot, L @ J


# -- filter algebra -----------------------------------------------------------

def normalization(C):
    """``(C_bar, c_n)`` with ``c_n = sqrt(1 + lambda_max(C C^T))``."""
    lam = np.linalg.eigvalsh(C @ C.T)[-1]
    c_n = math.sqrt(1.0 + max(lam, 0.0))
    return C / c_n, c_n


_I3 = np.eye(3)
_I4 = np.eye(4)
_NONE_ACTIVE = np.zeros(8, dtype=bool)
_NONE_ACTIVE.flags.writeable = False
_D = np.vstack((_I4, -_I4))


def active_constraints(theta, rate, upper, lower, tol=1e-9):
    """Boolean mask over the rows of ``D = [I; -I]``."""
    if ((theta - lower).min() > tol) and ((upper - theta).min() > tol):
        return _NONE_ACTIVE
    on_upper = (np.abs(theta - upper) <= tol) & (rate > 0.0)
    on_lower = (np.abs(theta - lower) <= tol) & (rate < 0.0)
    return np.concatenate((on_upper, on_lower))


def projection_matrix(theta, rate, upper, lower, tol=1e-9):
    """Least-squares projector removing update components that would push
    an estimate through an active bound."""
    N = _projector(active_constraints(theta, rate, upper, lower, tol))
    return _I4.copy() if N is None else N


def _projector(mask):
    if not mask.any():
        return None
    D = _D[mask]
    return _I4 - D.T @ np.linalg.solve(D @ D.T, D)


_BITS = 1 << np.arange(8)


def _bitmask(mask):
    return int(_BITS[mask].sum())


def _inv_sym3(S):
    """Inverse of a symmetric positive definite 3x3 matrix by cofactors."""
    (a, d, e), (_, b, f), (_, _, c) = S.tolist()
    A = b * c - f * f
    B = e * f - d * c
    C = d * f - b * e
    det = a * A + d * B + e * C
    r = 1.0 / det
    E, F = (d * e - a * f) * r, (a * c - e * e) * r
    A, B, C = A * r, B * r, C * r
    return np.array([[A, B, C], [B, F, E], [C, E, (a * b - d * d) * r]])


def ekf_step(state, config, nu, M_inv, C, dt=None, strict=False):
    """One observer update given the measurement Jacobian ``C`` at the
    current estimate. Returns a new :class:`ObserverState`.

    ``dt`` is accepted for interface symmetry; the discrete filter works
    per sample and the fading factor ``a_p`` is a per-step factor.
    """
    C_bar, c_n = normalization(C)
    innov = (M_inv @ nu) * (1.0 / c_n)
    P_pred = config.fading * state.P + config.Qn
    PCt = P_pred @ C_bar.T
    S = C_bar @ PCt + config.R
    gain = PCt @ (_inv_sym3(S) if S.shape == (3, 3) else np.linalg.inv(S))
    rate_free = gain @ innov
    mask = active_constraints(state.theta_hat, rate_free, config.theta_upper, config.theta_lower)
    N = _projector(mask)
    K = gain if N is None else N @ gain
    step = K @ innov
    theta = np.minimum(np.maximum(state.theta_hat + step, config.theta_lower), config.theta_upper)

    A = _I4 - K @ C_bar
    P_new = A @ P_pred @ A.T + K @ config.R @ K.T
    P_new += P_new.T
    P_new *= 0.5
    evals = np.linalg.eigvalsh(P_new)
    if evals[0] < -1e-10:
        if strict:
            raise NumericalError(f"covariance eigenvalue {evals[0]:.3g} < 0")
        w, V = np.linalg.eigh(P_new)
        evals = np.maximum(w, 0.0)
        P_new = (V * evals) @ V.T
    frozen = evals[-1] > config.rho2
    if frozen:
        P, P_norm = state.P, state.P_norm
        if P_norm != P_norm:
            P_norm = float(np.linalg.norm(P, 2))
    else:
        P, P_norm = P_new, float(evals[-1])
    active = 0 if N is None else _bitmask(mask)
    return ObserverState(theta, P, C_bar, c_n, active, bool(frozen), K, P_norm)


class TargetObserver:
    """Position or orientation EKF bound to a trained DMP."""

    def __init__(self, kind, model, config, theta0, p0=None):
        if kind not in ("position", "orientation"):
            raise ValueError(f"unknown observer kind {kind!r}")
        self.kind = kind
        self.model = model
        self.config = config
        self.p0 = p0
        theta0 = np.clip(np.asarray(theta0, dtype=float), config.theta_lower, config.theta_upper)
        self.state = ObserverState(theta0, config.P0.copy(),
                                   P_norm=float(np.linalg.norm(config.P0, 2)))

    def predict(self, s, t):
        h, _ = analytic_jacobian(self.kind, self.model, self.state.theta_hat, s, t, self.p0)
        return h

    def step(self, nu, M_inv, s, t, dt):
        """Update the estimate; returns the predicted measurement ``z_hat``
        at the pre-update estimate."""
        h, C = analytic_jacobian(self.kind, self.model, self.state.theta_hat, s, t, self.p0)
        self.state = ekf_step(self.state, self.config, nu, M_inv, C, dt)
        return h
