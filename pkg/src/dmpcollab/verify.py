"""Invariant suites run by ``dmpcollab verify``.

Each check yields a :class:`Check`; a suite passes iff all its checks do.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import quat
from .dmp import train_lwr
from .ekf import ObserverConfig, analytic_jacobian
from .sim import boundedness_suite, default_wrench_profiles
from .trajectories import synthetic_demo

SUITES = ("quat", "jacobian", "boundedness")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}: {self.name} ({self.detail})"


def default_models():
    """Position and orientation DMPs trained on the synthetic demonstration."""
    return train_lwr(synthetic_demo())


def random_unit_quaternions(rng, n):
    Q = rng.standard_normal((n, 4))
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    Q[Q[:, 0] < 0.0] *= -1.0
    return Q


def random_rotation_vectors(rng, n, lo, hi):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(lo, hi, size=(n, 1))


# -- quaternion suite ---------------------------------------------------------

def _trajectory(t, a, b, c):
    """Smooth rotation-vector path with its first two derivatives."""
    q = a + b * math.sin(t) + c * t * t
    return q, b * math.cos(t) + 2.0 * c * t, -b * math.sin(t) + 2.0 * c


def quat_checks(n=1000, seed=0, n_traj=50, h=1e-5, rel_tol=1e-4):
    rng = np.random.default_rng(seed)
    out = []
    Q = random_unit_quaternions(rng, n)
    err = max(float(np.abs(quat.quat_exp(quat.quat_log(Qi)) - Qi).max()) for Qi in Q)
    out.append(Check("quat", "exp(log(Q)) = Q", err < 1e-12, f"max err {err:.2e}"))
    qs = random_rotation_vectors(rng, n, 1e-6, math.pi - 1e-6)
    err = max(float(np.abs(quat.quat_log(quat.quat_exp(q)) - q).max()) for q in qs)
    out.append(Check("quat", "log(exp(q)) = q", err < 1e-12, f"max err {err:.2e}"))
    qs = random_rotation_vectors(rng, n, 1e-3, math.pi)
    err = max(float(np.linalg.norm(quat.jacobian_JQ(q) @ quat.jacobian_Jq(q) - np.eye(3)))
              for q in qs)
    out.append(Check("quat", "J_Q J_q = I", err < 1e-9, f"max Frobenius err {err:.2e}"))

    # rate relations against central differences of the trajectory itself
    worst = {"omega": 0.0, "qdot": 0.0, "omegadot": 0.0}
    for _ in range(n_traj):
        a = random_rotation_vectors(rng, 1, 0.2, 1.5)[0]
        b, c = 0.5 * rng.standard_normal(3), 0.2 * rng.standard_normal(3)
        t = rng.uniform(0.0, 1.0)
        q, qd, qdd = _trajectory(t, a, b, c)
        Q = quat.quat_exp(q)
        Qp, Qm = quat.quat_exp(_trajectory(t + h, a, b, c)[0]), quat.quat_exp(_trajectory(t - h, a, b, c)[0])
        w_fd = 2.0 * quat.qmul((Qp - Qm) / (2.0 * h), quat.quat_conjugate(Q))[1:]
        w = quat.omega_from_qdot(Q, qd, q)
        worst["omega"] = max(worst["omega"], _rel(w, w_fd))
        worst["qdot"] = max(worst["qdot"], _rel(quat.qdot_from_omega(Q, w_fd, q), qd))

        def omega_at(tt):
            qq, qqd, _ = _trajectory(tt, a, b, c)
            return quat.omega_from_qdot(quat.quat_exp(qq), qqd, qq)
        wd_fd = (omega_at(t + h) - omega_at(t - h)) / (2.0 * h)
        wd = quat.omegadot_from_qddot(Q, qd, qdd, w, q)
        worst["omegadot"] = max(worst["omegadot"], _rel(wd, wd_fd))
        back = quat.qddot_from_omegadot(Q, qd, w, wd, q)
        worst["omegadot"] = max(worst["omegadot"], _rel(back, qdd))
    for key, label in (("omega", "omega from qdot vs FD"), ("qdot", "qdot from omega vs FD"),
                       ("omegadot", "omegadot from qddot vs FD and back")):
        out.append(Check("quat", label, worst[key] < rel_tol, f"max rel err {worst[key]:.2e}"))
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


# -- observer Jacobian suite --------------------------------------------------

def random_observer_state(kind, model, config, rng):
    """A state reachable during normal operation: pose and rate inside the
    workspace, estimate inside the box, clock within 1.5 time scalings."""
    lo, hi = config.theta_lower, config.theta_upper
    theta = rng.uniform(lo, hi)
    if kind == "orientation":
        theta[:3] = random_rotation_vectors(rng, 1, 0.0, 2.5)[0]
    theta[3] = rng.uniform(1.0, 20.0)
    t = rng.uniform(0.0, 1.5 * theta[3])
    if kind == "position":
        p0 = rng.uniform(lo[:3], hi[:3])
        s = (rng.uniform(lo[:3], hi[:3]), 0.3 * rng.standard_normal(3))
        return theta, s, t, p0
    q = random_rotation_vectors(rng, 1, 0.0, 2.5)[0]
    Qp = quat.quat_exp(q)
    omega = 0.5 * rng.standard_normal(3)
    return theta, (Qp, omega, q, quat.qdot_from_omega(Qp, omega, q)), t, None


def fd_jacobian(kind, model, theta, s, t, p0=None, rel_step=1e-6):
    C = np.empty((3, 4))
    for j in range(4):
        h = rel_step * max(abs(theta[j]), 1.0)
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        C[:, j] = (analytic_jacobian(kind, model, tp, s, t, p0)[0]
                   - analytic_jacobian(kind, model, tm, s, t, p0)[0]) / (2.0 * h)
    return C


def column_rel_error(C, C_fd, floor=1e-6):
    """Worst per-column relative error; columns smaller than ``floor`` times
    the largest column are compared against that scale instead."""
    scale = max(float(np.linalg.norm(C_fd, axis=0).max()), 1e-300)
    denom = np.maximum(np.linalg.norm(C_fd, axis=0), floor * scale)
    return float((np.linalg.norm(C - C_fd, axis=0) / denom).max())


def jacobian_checks(models=None, n=100, seed=0, tol=1e-4):
    pos_model, ori_model = models or default_models()
    rng = np.random.default_rng(seed)
    out = []
    for kind, model, cfg in (("position", pos_model, ObserverConfig.position()),
                             ("orientation", ori_model, ObserverConfig.orientation())):
        worst = 0.0
        for _ in range(n):
            theta, s, t, p0 = random_observer_state(kind, model, cfg, rng)
            C = analytic_jacobian(kind, model, theta, s, t, p0)[1]
            worst = max(worst, column_rel_error(C, fd_jacobian(kind, model, theta, s, t, p0)))
        out.append(Check("jacobian", f"{kind} C vs central FD ({n} states)", worst < tol,
                         f"max rel err {worst:.2e}"))
    return out


# -- boundedness suite --------------------------------------------------------

def boundedness_checks(models=None, config=None):
    pos_model, ori_model = models or default_models()
    out = []
    for r in boundedness_suite(default_wrench_profiles(), pos_model, ori_model, config):
        detail = (f"sup ratios p {r['sup_ratio']['p']:.2f} pdot {r['sup_ratio']['pdot']:.2f} "
                  f"omega {r['sup_ratio']['omega']:.2f}, final err {r['final_pos_err_m']:.1e} m "
                  f"{r['final_ori_err_rad']:.1e} rad, tau rate {r['tau_rate']:.1e}")
        out.append(Check("boundedness", r["profile"], r["passed"], detail))
    return out


def run_suite(name, models=None):
    if name == "quat":
        return quat_checks()
    if name == "jacobian":
        return jacobian_checks(models)
    if name == "boundedness":
        return boundedness_checks(models)
    raise ValueError(f"unknown suite {name!r}")
