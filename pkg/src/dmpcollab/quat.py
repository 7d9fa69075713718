"""Unit quaternion algebra, log/exp maps and the rate relations between the
log coordinates ``q`` and the (spatial) angular velocity/acceleration.

Quaternions are plain ``ndarray`` of shape (4,), Hamilton convention,
scalar first ``[w, x, y, z]``. Rotation vectors ``q = log(Q)`` are shape (3,)
and carry the full rotation angle, i.e. ``exp(q)`` rotates by ``|q|``.

Throughout, ``theta = |q| / 2`` is the half angle and the trigonometric
ratios are expressed through

    s(theta) = sin(theta) / theta
    u(theta) = (theta cos(theta) - sin(theta)) / theta**3

which both have finite limits at zero and are evaluated by series there.
"""
import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
_I3 = np.eye(3)

_SINGULAR_TOL = 1e-8


class DomainError(ValueError):
    """Argument outside the one-to-one domain of log/exp."""


class ConsistencyError(ArithmeticError):
    """A derived quantity violates an algebraic identity it must satisfy."""


def normalize(Q):
    Q = np.asarray(Q, dtype=float)
    return Q / math.sqrt(Q @ Q)


def _floats(a):
    # Python floats make the scalar arithmetic below several times faster
    return a.tolist() if isinstance(a, np.ndarray) else [float(v) for v in a]


def quat_product(Q1, Q2):
    w1, x1, y1, z1 = _floats(Q1)
    w2, x2, y2, z2 = _floats(Q2)
    out = np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + w2 * x1 + y1 * z2 - z1 * y2,
        w1 * y2 + w2 * y1 + z1 * x2 - x1 * z2,
        w1 * z2 + w2 * z1 + x1 * y2 - y1 * x2,
    ])
    return out / math.sqrt(out @ out)


def qmul(A, B):
    # Hamilton product of arbitrary (non-unit) quaternions, no renormalization.
    w1, x1, y1, z1 = _floats(A)
    w2, x2, y2, z2 = _floats(B)
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + w2 * x1 + y1 * z2 - z1 * y2,
        w1 * y2 + w2 * y1 + z1 * x2 - x1 * z2,
        w1 * z2 + w2 * z1 + x1 * y2 - y1 * x2,
    ])


def quat_conjugate(Q):
    return np.array([Q[0], -Q[1], -Q[2], -Q[3]])


def canonical(Q):
    """Return ``Q`` or ``-Q``, whichever has a non-negative scalar part."""
    return -Q if Q[0] < 0.0 else Q


def relative(Q, Q_ref):
    """``Q * conj(Q_ref)`` flipped into the ``w >= 0`` hemisphere."""
    return canonical(quat_product(Q, quat_conjugate(Q_ref)))


def quat_log(Q):
    w = Q[0]
    v = np.asarray(Q[1:], dtype=float)
    nv = math.sqrt(v @ v)
    if nv < _SINGULAR_TOL:
        if w < 0.0:
            raise DomainError("log is undefined at Q = -1")
        # acos(w) / |v| -> 1 + |v|^2 / 6
        return 2.0 * v * (1.0 + nv * nv / 6.0)
    # atan2 is the accurate form of acos(w) for unit quaternions
    return 2.0 * math.atan2(nv, w) * v / nv


def quat_exp(q):
    q = np.asarray(q, dtype=float)
    nq = math.sqrt(q @ q)
    if nq >= 2.0 * math.pi:
        raise DomainError(f"|q| = {nq:.6g} is outside the one-to-one domain |q| < 2 pi")
    theta = 0.5 * nq
    if nq < _SINGULAR_TOL:
        c = 0.5 * (1.0 - theta * theta / 6.0)
    else:
        c = math.sin(theta) / nq
    return np.array([math.cos(theta), c * q[0], c * q[1], c * q[2]])


def _s(theta):
    if theta < 1e-4:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return math.sin(theta) / theta


def _u(theta):
    if theta < 0.05:
        t2 = theta * theta
        return -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0 + t2 ** 3 / 45360.0
    return (theta * math.cos(theta) - math.sin(theta)) / theta ** 3


def _du_over_theta(theta):
    # (du/dtheta) / theta
    if theta < 0.1:
        t2 = theta * theta
        return 1.0 / 15.0 - t2 / 210.0 + t2 * t2 / 7560.0
    st, ct = math.sin(theta), math.cos(theta)
    return (3.0 * st - 3.0 * theta * ct - theta * theta * st) / theta ** 5


def jacobian_Jq(q):
    """4x3 derivative of ``exp`` at ``q``: dQ = J_q dq."""
    q = np.asarray(q, dtype=float)
    theta = 0.5 * math.sqrt(q @ q)
    s, u = _s(theta), _u(theta)
    J = np.empty((4, 3))
    J[0] = -0.25 * s * q
    J[1:] = (0.5 * s) * _I3 + (0.125 * u) * (q[:, None] * q)
    return J


def jacobian_JQ(q):
    """3x4 left inverse of :func:`jacobian_Jq` (J_Q J_q = I)."""
    q = np.asarray(q, dtype=float)
    theta = 0.5 * math.sqrt(q @ q)
    s, u = _s(theta), _u(theta)
    J = np.zeros((3, 4))
    J[:, 0] = (u / (s * s)) * q
    J[:, 1:] = (2.0 / s) * _I3
    return J


def jacobian_Jq_dot(q, qdot):
    """Time derivative of ``J_q(q(t))`` given ``q`` and ``qdot``."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    theta = 0.5 * math.sqrt(q @ q)
    s, u, du = _s(theta), _u(theta), _du_over_theta(theta)
    sigma = q @ qdot
    J = np.empty((4, 3))
    J[0] = -(u * sigma / 16.0) * q - 0.25 * s * qdot
    qq = q[:, None] * q
    dq = qdot[:, None] * q
    J[1:] = ((u * sigma / 8.0) * _I3 + (du * sigma / 32.0) * qq
             + (0.125 * u) * (dq + dq.T))
    return J


def jacobian_Jq_dot_qdot(q, qdot):
    """``jacobian_Jq_dot(q, qdot) @ qdot`` without forming the matrix."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    theta = 0.5 * math.sqrt(q @ q)
    s, u, du = _s(theta), _u(theta), _du_over_theta(theta)
    sigma = float(q @ qdot)
    rho = float(qdot @ qdot)
    out = np.empty(4)
    out[0] = -(u * sigma * sigma / 16.0) - 0.25 * s * rho
    out[1:] = ((u * sigma / 4.0) * qdot
               + (du * sigma * sigma / 32.0 + 0.125 * u * rho) * q)
    return out


def _pure(omega):
    return np.array([0.0, omega[0], omega[1], omega[2]])


def qdot_from_omega(Q, omega, q=None):
    """Rate of ``q = log(Q)`` for spatial angular velocity ``omega``.

    ``Qdot = 0.5 * Omega * Q`` so ``qdot = J_Q(q) (0.5 Omega * Q)``.
    """
    if q is None:
        q = quat_log(Q)
    Qdot = 0.5 * qmul(_pure(omega), Q)
    return jacobian_JQ(q) @ Qdot


def omega_from_qdot(Q, qdot, q=None, check=True):
    if q is None:
        q = quat_log(Q)
    Omega = 2.0 * qmul(jacobian_Jq(q) @ qdot, quat_conjugate(Q))
    if check and abs(Omega[0]) > 1e-6:
        raise ConsistencyError(f"scalar part of Omega is {Omega[0]:.3g}, expected 0")
    return Omega[1:]


def omegadot_from_qddot(Q, qdot, qddot, omega, q=None):
    """Spatial angular acceleration from second derivative of ``q = log(Q)``.

    ``Omegadot = 2 (Jq_dot qdot + J_q qddot) * conj(Q) + 0.5 [|omega|^2, 0]``;
    only the vector part is returned. The scalar part of the product term is
    ``-0.5 |omega|^2`` identically, so the vector part does not depend on the
    sign convention of the correction term.
    """
    if q is None:
        q = quat_log(Q)
    Qddot = jacobian_Jq_dot_qdot(q, qdot) + jacobian_Jq(q) @ qddot
    return 2.0 * qmul(Qddot, quat_conjugate(Q))[1:]


def qddot_from_omegadot(Q, qdot, omega, omegadot, q=None):
    """Inverse of :func:`omegadot_from_qddot`."""
    if q is None:
        q = quat_log(Q)
    Omega = _pure(omega)
    Qddot = (0.5 * qmul(_pure(omegadot), Q)
             + 0.25 * qmul(qmul(Omega, Omega), Q))
    return jacobian_JQ(q) @ (Qddot - jacobian_Jq_dot_qdot(q, qdot))


def angle_between(Q1, Q2):
    """Geodesic rotation angle (rad) between two orientations."""
    # atan2 of the relative rotation keeps resolution for tiny angles
    r = qmul(np.asarray(Q1, dtype=float), quat_conjugate(Q2))
    return 2.0 * math.atan2(math.sqrt(r[1:] @ r[1:]), abs(r[0]))
