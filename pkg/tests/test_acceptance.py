"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Oracles are computed here from first principles (finite differences,
closed-form rotations, quantities recomputed from the logged series) rather
than by calling the package's own checking helpers.
"""
import math
import os
import tempfile
import time

import numpy as np
import pytest

from dmpcollab import dmp, ekf, quat, sim
from dmpcollab.ekf import ObserverConfig, ObserverState, ekf_step
from dmpcollab.io import write_episode_csv
from dmpcollab.reference import target_orientation
from dmpcollab.trajectories import synthetic_demo

N_SCENARIOS = 20
SCENARIO_SEED = 0


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    return _report


def _unit_quats(rng, n):
    Q = rng.standard_normal((n, 4))
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    Q[Q[:, 0] < 0] *= -1.0
    return Q


def _rotvecs(rng, n, lo, hi):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(lo, hi, (n, 1))


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_quaternion_suite(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    Q = _unit_quats(rng, 1000)
    err_Q = max(np.abs(quat.quat_exp(quat.quat_log(x)) - x).max() for x in Q)
    # the same draws as rotation vectors, |q| < pi inside the canonical hemisphere
    qs = np.array([quat.quat_log(x) for x in Q])
    err_q = max(np.abs(quat.quat_log(quat.quat_exp(q)) - q).max() for q in qs)
    qj = _rotvecs(rng, 1000, 1e-3, math.pi)
    err_J = max(np.linalg.norm(quat.jacobian_JQ(q) @ quat.jacobian_Jq(q) - np.eye(3)) for q in qj)
    elapsed = time.perf_counter() - t0
    ok = err_Q < 1e-12 and err_q < 1e-12 and err_J < 1e-9 and elapsed < 1.0
    report(1, "quaternion suite", ok,
           f"exp(log) {err_Q:.1e}, log(exp) {err_q:.1e}, |J_Q J_q - I|_F {err_J:.1e}, "
           f"{elapsed:.2f} s")
    assert err_Q < 1e-12 and err_q < 1e-12
    assert err_J < 1e-9
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------

def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def test_criterion_02_derivative_relations(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    h = 1e-4  # second differences lose ~eps/h**2; 1e-5 would be roundoff dominated
    worst = 0.0
    for _ in range(200):
        # fixed-axis rotation Q(t) = exp(phi(t) k) Q0: omega = phi' k, omegadot = phi'' k
        k = _rotvecs(rng, 1, 1.0, 1.0)[0]
        Q0 = quat.quat_exp(_rotvecs(rng, 1, 0.0, 1.0)[0])
        a, b, c = rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5), rng.uniform(-0.3, 0.3)
        phi = lambda t: a + b * math.sin(t) + c * t * t
        dphi = lambda t: b * math.cos(t) + 2 * c * t
        ddphi = lambda t: -b * math.sin(t) + 2 * c
        Qt = lambda t: quat.quat_product(quat.quat_exp(phi(t) * k), Q0)
        qt = lambda t: quat.quat_log(quat.canonical(Qt(t)))
        t = rng.uniform(0.0, 1.0)
        Q, q = quat.canonical(Qt(t)), qt(t)
        if np.linalg.norm(q) > 3.0:
            continue  # keep away from the log cut at pi
        qd_fd = (qt(t + h) - qt(t - h)) / (2 * h)
        qdd_fd = (qt(t + h) - 2 * q + qt(t - h)) / (h * h)
        omega, omegadot = dphi(t) * k, ddphi(t) * k
        worst = max(worst,
                    _rel(quat.omega_from_qdot(Q, qd_fd, q), omega),
                    _rel(quat.qdot_from_omega(Q, omega, q), qd_fd),
                    _rel(quat.omegadot_from_qddot(Q, qd_fd, qdd_fd, omega, q), omegadot),
                    _rel(quat.qddot_from_omegadot(Q, qd_fd, omega, omegadot, q), qdd_fd))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 5.0
    report(2, "derivative relations vs central FD", ok,
           f"max rel err {worst:.1e}, {elapsed:.2f} s")
    assert worst < 1e-4
    assert elapsed < 5.0


# -- 3 ------------------------------------------------------------------------

def test_criterion_03_dmp_fidelity(report):
    t0 = time.perf_counter()
    demo = synthetic_demo(duration=4.7)
    pm, om = dmp.train_lwr(demo, n_kernels=30, alpha_z=40.0, beta_z=10.0)
    T = demo.duration
    r = dmp.rollout(pm, om, demo.positions[0], demo.orientations[0], demo.positions[-1],
                    demo.orientations[-1], T, T, dt=0.002, duration=T)
    rmse_p = np.sqrt(((r.p - demo.positions) ** 2).mean(0)) / np.ptp(demo.positions, axis=0)
    qp = np.array([quat.quat_log(quat.relative(Q, demo.orientations[0])) for Q in demo.orientations])
    rmse_o = np.sqrt(((r.q_prime - qp) ** 2).mean(0)) / np.ptp(qp, axis=0)
    p_g = demo.positions[-1] + np.array([-0.12, 0.08, 0.1])
    Q_g = quat.quat_product(quat.quat_exp([0.25, -0.2, 0.3]), demo.orientations[-1])
    g = dmp.rollout(pm, om, demo.positions[0], demo.orientations[0], p_g, Q_g, T, T,
                    dt=0.002, duration=1.5 * T)
    e_p = float(np.linalg.norm(g.p[-1] - p_g))
    e_o = quat.angle_between(g.Q[-1], Q_g)
    elapsed = time.perf_counter() - t0
    worst = max(rmse_p.max(), rmse_o.max())
    ok = worst < 0.01 and e_p < 1e-3 and e_o < math.radians(0.5) and elapsed < 2.0
    report(3, "DMP fidelity", ok,
           f"RMSE {100 * worst:.2f}% of range, shifted-target error {1e3 * e_p:.3f} mm / "
           f"{math.degrees(e_o):.4f} deg at 1.5 tau, {elapsed:.2f} s")
    assert worst < 0.01
    assert e_p < 1e-3 and e_o < math.radians(0.5)
    assert elapsed < 2.0


# -- 4 ------------------------------------------------------------------------

def _fd_jacobian(fun, theta):
    C = np.empty((3, 4))
    for j in range(4):
        h = 1e-6 * max(abs(theta[j]), 1.0)
        e = np.zeros(4)
        e[j] = h
        C[:, j] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return C


def _column_rel(C, fd):
    norms = np.linalg.norm(fd, axis=0)
    denom = np.maximum(norms, 1e-6 * norms.max())
    return float((np.linalg.norm(C - fd, axis=0) / denom).max())


def test_criterion_04_ekf_jacobian(models, report):
    pm, om = models
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = {"position": 0.0, "orientation": 0.0}
    cp, co = ObserverConfig.position(), ObserverConfig.orientation()
    for _ in range(100):
        theta = np.r_[rng.uniform(cp.theta_lower[:3], cp.theta_upper[:3]), rng.uniform(1.0, 20.0)]
        p0 = rng.uniform(cp.theta_lower[:3], cp.theta_upper[:3])
        p, pdot = rng.uniform(cp.theta_lower[:3], cp.theta_upper[:3]), 0.3 * rng.standard_normal(3)
        t = rng.uniform(0.0, 1.5 * theta[3])
        C = ekf.analytic_jacobian("position", pm, theta, (p, pdot), t, p0)[1]
        fd = _fd_jacobian(lambda th: dmp.pos_accel(pm, p, pdot, t, th[:3], th[3], p0), theta)
        worst["position"] = max(worst["position"], _column_rel(C, fd))

        theta = np.r_[_rotvecs(rng, 1, 0.0, 2.5)[0], rng.uniform(1.0, 20.0)]
        q = _rotvecs(rng, 1, 0.0, 2.5)[0]
        Qp, omega = quat.quat_exp(q), 0.5 * rng.standard_normal(3)
        t = rng.uniform(0.0, 1.5 * theta[3])
        C = ekf.analytic_jacobian("orientation", om, theta, (Qp, omega), t)[1]
        qd = quat.qdot_from_omega(Qp, omega, q)

        def h_o(th):
            qdd = dmp.orient_accel(om, q, qd, t, th[:3], th[3])
            return quat.omegadot_from_qddot(Qp, qd, qdd, omega, q)
        worst["orientation"] = max(worst["orientation"], _column_rel(C, _fd_jacobian(h_o, theta)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 2.0
    report(4, "EKF Jacobian vs central FD", ok,
           f"position {worst['position']:.1e}, orientation {worst['orientation']:.1e}, "
           f"{elapsed:.2f} s")
    assert max(worst.values()) < 1e-4
    assert elapsed < 2.0


# -- 5 ------------------------------------------------------------------------

def test_criterion_05_constraint_covariance_invariants(report):
    rng = np.random.default_rng(5)
    seqs, length = 20, 5000  # 1e5 steps
    cfgs = (ObserverConfig.position(), ObserverConfig.orientation())
    assert cfgs[0].rho2 == 10000.0
    theta = np.empty((seqs, length, 4))
    P = np.empty((seqs, length, 4, 4))
    frozen = active = 0
    t0 = time.perf_counter()
    for i in range(seqs):
        cfg = cfgs[i % 2]
        st = ObserverState(rng.uniform(cfg.theta_lower, cfg.theta_upper), cfg.P0.copy(),
                           P_norm=float(np.linalg.norm(cfg.P0, 2)))
        # half of the sequences are weakly excited so the covariance grows to rho2
        lo = -7.0 if i % 4 < 2 else -3.0
        Cs = 10.0 ** rng.uniform(lo, lo + 4.0, (length, 1, 1)) * rng.standard_normal((length, 3, 4))
        nus = 10.0 ** rng.uniform(-1.0, 4.0, (length, 1)) * rng.standard_normal((length, 3))
        M_inv = np.eye(3) * rng.uniform(0.5, 10.0)
        th_i, P_i = theta[i], P[i]
        for k in range(length):
            st = ekf_step(st, cfg, nus[k], M_inv, Cs[k])
            th_i[k] = st.theta_hat
            P_i[k] = st.P
            frozen += st.frozen
            active += st.active != 0
    elapsed = time.perf_counter() - t0
    lo_b = np.array([cfgs[i % 2].theta_lower for i in range(seqs)])[:, None, :]
    hi_b = np.array([cfgs[i % 2].theta_upper for i in range(seqs)])[:, None, :]
    box_viol = int(np.any((theta < lo_b) | (theta > hi_b), axis=2).sum())
    ev = np.linalg.eigvalsh(P)
    norm_viol = int((ev[..., -1] > 10000.0).sum())
    psd_viol = int((ev[..., 0] < -1e-9).sum())
    ok = box_viol == 0 and norm_viol == 0 and psd_viol == 0 and elapsed < 10.0
    report(5, "constraint/covariance invariants", ok,
           f"{seqs * length} steps, violations box {box_viol} norm {norm_viol} psd {psd_viol}, "
           f"max |P| {ev[..., -1].max():.1f}, {frozen} frozen and {active} constrained steps, "
           f"{elapsed:.2f} s")
    assert box_viol == 0 and norm_viol == 0 and psd_viol == 0
    assert frozen > 0 and active > 0  # both mechanisms were exercised
    assert elapsed < 10.0


# -- paired episodes shared by 6, 8, 9, 10 -----------------------------------

@pytest.fixture(scope="module")
def paired(models):
    scenarios = sim.random_scenarios(N_SCENARIOS, seed=SCENARIO_SEED)
    t0 = time.perf_counter()
    results = {}
    for i, sc in enumerate(scenarios):
        for mode in sim.MODES:
            try:
                results[(sc.scenario_id, mode)] = sim.run_episode(mode, sc, *models, seed=i)
            except sim.EpisodeTimeout as exc:
                results[(sc.scenario_id, mode)] = exc.result
    return scenarios, results, time.perf_counter() - t0


def _recomputed_innovation_residual(result, scenario, models, cfg):
    """max |(z - zhat) - M^-1 nu| rebuilt from the logged series: z from the
    velocity increments, zhat by re-evaluating the DMP at the logged state and
    pre-update estimates."""
    pm, om = models
    log, dt = result.log, result.dt
    f = log[:, 14:17]
    tq = log[:, 17:20]
    ks = int(np.argmax(np.linalg.norm(f, axis=1) > cfg.start_threshold))
    Q0, p0 = scenario.Q_start, scenario.p_start
    worst = 0.0
    for k in range(ks, len(log) - 1):
        tc = (k - ks) * dt
        p, v, Q, w = log[k, 1:4], log[k, 8:11], log[k, 4:8], log[k, 11:14]
        th_p, th_o = log[k, 20:24], log[k, 24:28]
        z_p = (log[k + 1, 8:11] - v) / dt
        z_o = (log[k + 1, 11:14] - w) / dt
        zhat_p = dmp.pos_accel(pm, p, v, tc, th_p[:3], th_p[3], p0)
        Qp = quat.relative(Q, Q0)
        qp = quat.quat_log(Qp)
        qpd = quat.qdot_from_omega(Qp, w, qp)
        zhat_o = quat.omegadot_from_qddot(Qp, qpd, dmp.orient_accel(om, qp, qpd, tc, th_o[:3], th_o[3]),
                                          w, qp)
        worst = max(worst, np.abs(z_p - zhat_p - f[k] / cfg.inertia.M_p).max(),
                    np.abs(z_o - zhat_o - tq[k] / cfg.inertia.M_o).max())
    return float(worst)


# -- 6 ------------------------------------------------------------------------

def test_criterion_06_innovation_identity(paired, models, report):
    scenarios, results, _ = paired
    cfg = sim.SimConfig()
    internal = max(results[(s.scenario_id, "dmp_ekf")].max_innovation_residual for s in scenarios)
    rebuilt = max(_recomputed_innovation_residual(results[(s.scenario_id, "dmp_ekf")], s, models, cfg)
                  for s in scenarios)
    ok = internal < 1e-8 and rebuilt < 1e-8
    report(6, "closed-loop innovation identity", ok,
           f"{len(scenarios)} episodes, max residual in-loop {internal:.1e}, "
           f"rebuilt from logs {rebuilt:.1e}")
    assert internal < 1e-8
    assert rebuilt < 1e-8


# -- 7 ------------------------------------------------------------------------

def test_criterion_07_empirical_boundedness(models, report):
    t0 = time.perf_counter()
    profiles = sim.default_wrench_profiles()
    failures, worst_ratio, worst_p, worst_o = [], 0.0, 0.0, 0.0
    for prof in profiles:
        # square integrable: zero after the profile duration
        assert np.all(prof(1.5 * prof.duration) == 0.0)
        run = sim.drive_open_loop(prof, *models, horizon=10.0 * prof.duration)
        driven = run["t"] <= prof.duration
        ok_prof = True
        for series in (np.linalg.norm(run["p"] - run["p"][0], axis=1),
                       np.linalg.norm(run["pdot"], axis=1), np.linalg.norm(run["omega"], axis=1)):
            peak, sup = series[driven].max(), series.max()
            if peak > 0:
                worst_ratio = max(worst_ratio, sup / peak)
                ok_prof &= sup <= 10.0 * peak
            else:
                ok_prof &= sup == 0.0
        e_p = float(np.linalg.norm(run["p"][-1] - run["theta_p"][-1, :3]))
        e_o = quat.angle_between(run["Q"][-1], target_orientation(run["theta_o"][-1], run["Q"][0]))
        worst_p, worst_o = max(worst_p, e_p), max(worst_o, e_o)
        if not (ok_prof and e_p < 1e-4 and e_o < 1e-3):
            failures.append(prof.name)
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30.0
    report(7, "empirical boundedness", ok,
           f"{len(profiles)} profiles, worst sup/peak {worst_ratio:.2f}, final error "
           f"{worst_p:.1e} m / {worst_o:.1e} rad, failures {failures or 'none'}, {elapsed:.1f} s")
    assert not failures
    assert elapsed < 30.0


# -- 8 ------------------------------------------------------------------------

def test_criterion_08_effort_reduction(paired, report):
    scenarios, results, elapsed = paired
    ratios = np.array([results[(s.scenario_id, "dmp_ekf")].work_J
                       / results[(s.scenario_id, "admittance")].work_J for s in scenarios])
    med = float(np.median(ratios))
    ok = len(scenarios) >= 20 and med <= 1.0 / 3.0 and np.all(ratios < 1.0) and elapsed < 60.0
    w_d = [results[(s.scenario_id, "dmp_ekf")].work_J for s in scenarios]
    w_a = [results[(s.scenario_id, "admittance")].work_J for s in scenarios]
    report(8, "effort reduction", ok,
           f"{len(scenarios)} pairs, median work ratio {med:.3f} (need <= 0.333), max "
           f"{ratios.max():.3f} (need < 1), work dmp_ekf [{min(w_d):.2f}, {max(w_d):.2f}] J "
           f"vs admittance [{min(w_a):.2f}, {max(w_a):.2f}] J, {elapsed:.1f} s")
    assert len(scenarios) >= 20
    assert np.all(ratios < 1.0)
    assert elapsed < 60.0
    assert med <= 1.0 / 3.0


# -- 9 ------------------------------------------------------------------------

def test_criterion_09_estimation_convergence(paired, report):
    scenarios, results, _ = paired
    good = 0
    worst = (0.0, 0.0, 0.0)
    for s in scenarios:
        r = results[(s.scenario_id, "dmp_ekf")]
        log, dt = r.log, r.dt
        e_p = float(np.linalg.norm(log[-1, 20:23] - s.p_target))
        e_o = quat.angle_between(target_orientation(log[-1, 24:28], s.Q_start), s.Q_target)
        last = log[:, 0] >= log[-1, 0] - 1.0
        rate = max(np.abs(np.diff(log[last, 23])).max(), np.abs(np.diff(log[last, 27])).max()) / dt
        worst = (max(worst[0], e_p), max(worst[1], e_o), max(worst[2], rate))
        good += e_p < 0.02 and e_o < math.radians(5.0) and rate < 1e-3 and r.settled
    frac = good / len(scenarios)
    ok = frac >= 0.95
    report(9, "estimation convergence", ok,
           f"{good}/{len(scenarios)} converged, worst {100 * worst[0]:.2f} cm / "
           f"{math.degrees(worst[1]):.2f} deg, max final-second |dtau/dt| {worst[2]:.1e}")
    assert frac >= 0.95


def test_estimates_move_toward_target_by_motion_end(paired):
    # supporting property: at the human's motion end the target estimate is
    # closer to the truth than the initial estimate in >= 95% of scenarios
    scenarios, results, _ = paired
    better = 0
    for s in scenarios:
        log = results[(s.scenario_id, "dmp_ekf")].log
        k = int(np.argmin(np.abs(log[:, 0] - s.duration)))
        better += np.linalg.norm(log[k, 20:23] - s.p_target) < np.linalg.norm(s.p_start - s.p_target)
    assert better / len(scenarios) >= 0.95


# -- 10 -----------------------------------------------------------------------

def _csv_bytes(result):
    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        write_episode_csv(path, result)
        with open(path, "rb") as fh:
            return fh.read()
    finally:
        os.remove(path)


def test_criterion_10_determinism(paired, models, report):
    scenarios, results, _ = paired
    same = []
    for i in (0, 7):
        s = scenarios[i]
        for mode in sim.MODES:
            again = sim.run_episode(mode, s, *models, seed=i)
            same.append(_csv_bytes(again) == _csv_bytes(results[(s.scenario_id, mode)]))
    # with sensor noise the seed drives the only random stream
    noisy = sim.SimConfig(wrench_noise=0.05, t_max=3.0)
    logs = []
    for _ in range(2):
        try:
            logs.append(sim.run_episode("dmp_ekf", scenarios[3], *models, noisy, seed=11))
        except sim.EpisodeTimeout as exc:  # noise can keep it from settling
            logs.append(exc.result)
    same.append(_csv_bytes(logs[0]) == _csv_bytes(logs[1]))
    ok = all(same)
    report(10, "determinism", ok, f"{sum(same)}/{len(same)} reruns byte-identical")
    assert ok
