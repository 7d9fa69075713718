"""Closed-loop simulation of a collaborative object transfer.

A simulated human drags the object towards a hidden target with a
minimum-jerk intention, through a spring-damper coupling. The robot runs
either the DMP reference model with both target observers, or a plain
admittance controller.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .ekf import ObserverConfig, TargetObserver
from .reference import InertiaParams, ReferenceModel, target_orientation
from .trajectories import geodesic_min_jerk, min_jerk

MODES = ("dmp_ekf", "admittance")


class EpisodeTimeout(TimeoutError):
    """Episode reached ``t_max`` without settling; ``result`` holds the log."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class HumanParams:
    K_h: np.ndarray = field(default_factory=lambda: np.r_[np.full(3, 500.0), np.full(3, 20.0)])
    D_h: np.ndarray = field(default_factory=lambda: np.r_[np.full(3, 40.0), np.full(3, 2.0)])
    force_cap: float = 30.0
    torque_cap: float = 3.0

    def __post_init__(self):
        self.K_h = np.broadcast_to(np.asarray(self.K_h, dtype=float), (6,)).copy()
        self.D_h = np.broadcast_to(np.asarray(self.D_h, dtype=float), (6,)).copy()
        if np.any(self.K_h <= 0.0) or np.any(self.D_h <= 0.0):
            raise ValueError("human gains must be positive")
        if self.force_cap <= 0.0 or self.torque_cap <= 0.0:
            raise ValueError("human wrench caps must be positive")


@dataclass
class Scenario:
    scenario_id: str
    p_start: np.ndarray
    Q_start: np.ndarray
    p_target: np.ndarray
    Q_target: np.ndarray
    duration: float

    def __post_init__(self):
        self.p_start = np.asarray(self.p_start, dtype=float)
        self.p_target = np.asarray(self.p_target, dtype=float)
        self.Q_start = quat.normalize(self.Q_start)
        self.Q_target = quat.normalize(self.Q_target)
        if self.duration <= 0.0:
            raise ValueError("scenario duration must be positive")


# inner box for start poses and targets, kept inside the default observer bounds
WORKSPACE_LOW = np.array([-0.65, -0.6, -0.1])
WORKSPACE_HIGH = np.array([0.65, 0.6, 0.85])


def random_scenarios(n, seed=0, duration_range=(3.0, 10.0), speed_range=(0.2, 0.3),
                     angle_range=(0.3, 1.2), low=WORKSPACE_LOW, high=WORKSPACE_HIGH):
    """Draw ``n`` transfer scenarios.

    The distance is the duration times a mean speed drawn from
    ``speed_range``, which puts the admittance interaction force near the
    few-newton level of a human carrying a box; it is shortened when the
    straight path would leave the workspace box.
    """
    rng = np.random.default_rng(seed)
    low, high = np.asarray(low, dtype=float), np.asarray(high, dtype=float)
    out = []
    for i in range(n):
        T = rng.uniform(*duration_range)
        want = rng.uniform(*speed_range) * T
        best = None
        for _ in range(200):
            p0 = rng.uniform(low, high)
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            # longest feasible step along d inside the box
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hi = np.where(d > 0, (high - p0) / d, np.where(d < 0, (low - p0) / d, np.inf))
            reach = float(t_hi.min())
            if best is None or reach > best[2]:
                best = (p0, d, reach)
            if reach >= want:
                break
        p0, d, reach = best
        L = min(want, reach)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        Q0 = quat.quat_exp(0.3 * rng.standard_normal(3))
        Qg = quat.quat_product(quat.quat_exp(rng.uniform(*angle_range) * axis), Q0)
        out.append(Scenario(f"s{i:03d}", p0, Q0, p0 + L * d, Qg, T))
    return out


@dataclass
class HumanModel:
    params: HumanParams
    start_p: np.ndarray
    start_Q: np.ndarray
    intended_p: np.ndarray
    intended_Q: np.ndarray
    intended_duration: float

    def __post_init__(self):
        self._disp = self.intended_p - self.start_p
        self._axis_angle = quat.quat_log(quat.relative(self.intended_Q, self.start_Q))

    @classmethod
    def for_scenario(cls, scenario, params=None):
        return cls(params or HumanParams(), scenario.p_start, scenario.Q_start,
                   scenario.p_target, scenario.Q_target, scenario.duration)

    def reference(self, t):
        s, ds, _ = min_jerk(float(t), self.intended_duration)
        d = self._disp
        Q_ref, w_ref, _ = geodesic_min_jerk(float(t), self.intended_duration, self.start_Q,
                                            self.intended_Q, self._axis_angle)
        return self.start_p + s * d, ds * d, Q_ref, w_ref


def _saturate(v, cap):
    n = math.sqrt(v @ v)
    return v * (cap / n) if n > cap else v


def human_wrench(model: HumanModel, t, p, Q, v, w):
    """Spring-damper pull towards the human's intended pose at time ``t``."""
    p_ref, v_ref, Q_ref, w_ref = model.reference(t)
    K, D = model.params.K_h, model.params.D_h
    rot_err = quat.quat_log(quat.relative(Q_ref, Q))
    f = K[:3] * (p_ref - p) + D[:3] * (v_ref - v)
    tau = K[3:] * rot_err + D[3:] * (w_ref - w)
    return np.concatenate((_saturate(f, model.params.force_cap),
                           _saturate(tau, model.params.torque_cap)))


@dataclass
class AdmittanceParams:
    M: np.ndarray = field(default_factory=lambda: np.r_[np.full(3, 1.3), np.full(3, 0.08)])
    D: np.ndarray = field(default_factory=lambda: np.r_[np.full(3, 25.0), np.full(3, 0.6)])

    def __post_init__(self):
        self.M = np.broadcast_to(np.asarray(self.M, dtype=float), (6,)).copy()
        self.D = np.broadcast_to(np.asarray(self.D, dtype=float), (6,)).copy()
        if np.any(self.M <= 0.0) or np.any(self.D <= 0.0):
            raise ValueError("admittance parameters must be positive")


def admittance_step(params, p, Q, V, wrench, dt):
    """``M V' + D V = F`` integrated semi-implicitly; returns ``(p, Q, V)``."""
    V = V + dt * (wrench - params.D * V) / params.M
    p = p + dt * V[:3]
    Q = quat.quat_product(quat.quat_exp(dt * V[3:]), Q)
    return p, Q, V


def power_metric(wrench, twist):
    """Absolute mechanical power ``|f . v| + |tau . omega|``."""
    return abs(float(wrench[:3] @ twist[:3])) + abs(float(wrench[3:] @ twist[3:]))


@dataclass
class SimConfig:
    dt: float = 0.002
    t_max: float = 30.0
    start_threshold: float = 1.0
    settle_force: float = 0.1
    settle_torque: float = 0.01
    settle_time: float = 0.5
    tau_settle_rate: float = 1e-3
    tau_settle_window: float = 1.0
    tau0: float = 6.0
    inertia: InertiaParams = field(default_factory=InertiaParams)
    observer_p: ObserverConfig = field(default_factory=ObserverConfig.position)
    observer_o: ObserverConfig = field(default_factory=ObserverConfig.orientation)
    human: HumanParams = field(default_factory=HumanParams)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    wrench_noise: float = 0.0
    check_invariants: bool = True

    def __post_init__(self):
        for name in ("dt", "t_max", "settle_time", "tau0", "tau_settle_rate",
                     "tau_settle_window"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("start_threshold", "settle_force", "settle_torque", "wrench_noise"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        for obs in (self.observer_p, self.observer_o):
            if not obs.theta_lower[3] <= self.tau0 <= obs.theta_upper[3]:
                raise ValueError("tau0 lies outside the time-scaling bounds")


LOG_COLUMNS = (
    ["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz",
     "fx", "fy", "fz", "tx", "ty", "tz",
     "pg_x", "pg_y", "pg_z", "tau_p", "qg_x", "qg_y", "qg_z", "tau_o",
     "P_norm_p", "P_norm_o", "active_p", "active_o", "power"]
)


@dataclass
class EpisodeResult:
    mode: str
    scenario_id: str
    log: np.ndarray  # rows follow LOG_COLUMNS
    dt: float
    settled: bool
    start_time: float
    release_time: float  # end of the interaction phase, nan if never reached
    work_J: float
    mean_force_N: float
    mean_torque_Nm: float
    est_err_pos_m: float
    est_err_ori_rad: float
    est_err_pos_motion_end_m: float
    est_err_ori_motion_end_rad: float
    initial_est_err_pos_m: float
    max_innovation_residual: float
    invariant_violations: int

    def column(self, name):
        return self.log[:, LOG_COLUMNS.index(name)]

    def summary(self):
        return {
            "mode": self.mode,
            "scenario_id": self.scenario_id,
            "work_J": self.work_J,
            "mean_force_N": self.mean_force_N,
            "mean_torque_Nm": self.mean_torque_Nm,
            "est_err_pos_m": self.est_err_pos_m,
            "est_err_ori_rad": self.est_err_ori_rad,
            "settled": self.settled,
        }


def _observer_invariants_ok(obs):
    st, cfg = obs.state, obs.config
    th = st.theta_hat
    return bool((th >= cfg.theta_lower).all() and (th <= cfg.theta_upper).all()
                and st.P_norm <= cfg.rho2)


def run_episode(mode, scenario, pos_model, ori_model, config=None, seed=0,
                theta0=None, freeze=False):
    """Simulate one transfer; raises :class:`EpisodeTimeout` if the
    interaction has not settled by ``config.t_max``.

    The interaction phase ends once the motion time has passed and the
    wrench has stayed below the settle thresholds for ``settle_time``; the
    effort metrics cover this phase only. In ``dmp_ekf`` mode the episode then
    continues, with the human holding, until both time-scaling estimates
    have moved slower than ``tau_settle_rate`` for ``tau_settle_window``.

    ``theta0`` optionally overrides the initial ``(theta_p, theta_o)``
    estimates; ``freeze`` keeps them constant (observers only predict).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = config or SimConfig()
    rng = np.random.default_rng(seed)
    dt = cfg.dt
    n_max = int(round(cfg.t_max / dt)) + 1
    human = HumanModel.for_scenario(scenario, cfg.human)
    log = np.zeros((n_max, len(LOG_COLUMNS)))

    p0, Q0 = scenario.p_start, scenario.Q_start
    theta_p = np.r_[p0, cfg.tau0]
    theta_o = np.r_[np.zeros(3), cfg.tau0]
    if theta0 is not None:
        theta_p, theta_o = (np.asarray(th, dtype=float) for th in theta0)
    if mode == "dmp_ekf":
        ref = ReferenceModel(pos_model, ori_model, p0, Q0, cfg.inertia)
        obs_p = TargetObserver("position", pos_model, cfg.observer_p, theta_p, p0=p0)
        obs_o = TargetObserver("orientation", ori_model, cfg.observer_o, theta_o)
        M_p_inv, M_o_inv = cfg.inertia.M_p_inv, cfg.inertia.M_o_inv
    p, Q, V = p0.copy(), Q0.copy(), np.zeros(6)

    started = mode == "admittance"
    start_time = 0.0 if started else float("nan")
    calm_steps = 0
    settle_steps = int(round(cfg.settle_time / dt))
    tau_window_steps = int(round(cfg.tau_settle_window / dt))
    tau_step_tol = cfg.tau_settle_rate * dt
    tau_prev = None
    tau_quiet = 0
    release_k = None
    motion_end_k = min(int(round(scenario.duration / dt)), n_max - 1)
    max_resid = 0.0
    violations = 0
    settled = False
    err_motion_end = (float("nan"), float("nan"))
    k = 0
    for k in range(n_max):
        t = k * dt
        wrench = human_wrench(human, t, p, Q, V[:3], V[3:])
        if cfg.wrench_noise > 0.0:
            wrench = wrench + cfg.wrench_noise * rng.standard_normal(6)
        f, tq = wrench[:3], wrench[3:]

        if mode == "dmp_ekf":
            if not started and math.sqrt(f @ f) > cfg.start_threshold:
                started = True
                start_time = t
            s = ref.state
            P_norms = (obs_p.state.P_norm, obs_o.state.P_norm)
            active = (obs_p.state.active, obs_o.state.active)
            est = (obs_p.state.theta_hat, obs_o.state.theta_hat)
        else:
            P_norms, active, est = (0.0, 0.0), (0, 0), (theta_p, theta_o)

        power = power_metric(wrench, V)
        log[k] = np.concatenate(([t], p, Q, V, wrench, est[0], est[1],
                                 P_norms, active, [power]))
        if k == motion_end_k:
            err_motion_end = _estimate_errors(est, scenario)

        calm = math.sqrt(f @ f) < cfg.settle_force and math.sqrt(tq @ tq) < cfg.settle_torque
        calm_steps = calm_steps + 1 if (calm and t >= scenario.duration) else 0
        if mode == "dmp_ekf":
            taus = (est[0][3], est[1][3])
            if tau_prev is not None and max(abs(taus[0] - tau_prev[0]),
                                            abs(taus[1] - tau_prev[1])) < tau_step_tol:
                tau_quiet += 1
            else:
                tau_quiet = 0
            tau_prev = taus
        if release_k is None and calm_steps >= settle_steps:
            release_k = k
        if release_k is not None and (mode == "admittance" or tau_quiet >= tau_window_steps):
            settled = True
            break
        if k == n_max - 1:
            break

        if mode == "admittance":
            p, Q, V = admittance_step(cfg.admittance, p, Q, V, wrench, dt)
            continue
        if not started:
            continue
        tc = s.t_clock
        s_p = (s.p, s.pdot)
        Qp = quat.quat_exp(s.q_prime)
        s_o = (Qp, s.omega, s.q_prime, s.q_prime_dot)
        th_p, th_o = obs_p.state.theta_hat, obs_o.state.theta_hat
        if freeze:
            zhat_p, zhat_o = obs_p.predict(s_p, tc), obs_o.predict(s_o, tc)
        else:
            zhat_p = obs_p.step(f, M_p_inv, s_p, tc, dt)
            zhat_o = obs_o.step(tq, M_o_inv, s_o, tc, dt)
        # z_hat is the DMP acceleration at this state and pre-update estimate
        pddot, omegadot = ref.step(th_p, th_o, f, tq, dt, accel_hat=(zhat_p, zhat_o))
        resid = max(np.abs((pddot - zhat_p) - M_p_inv @ f).max(),
                    np.abs((omegadot - zhat_o) - M_o_inv @ tq).max())
        max_resid = max(max_resid, float(resid))
        if cfg.check_invariants and not (_observer_invariants_ok(obs_p)
                                         and _observer_invariants_ok(obs_o)):
            violations += 1
        p, Q = s.p.copy(), s.Q.copy()
        V = np.concatenate((s.pdot, s.omega))

    log = log[:k + 1]
    if math.isnan(err_motion_end[0]):
        err_motion_end = _estimate_errors((log[-1, 20:24], log[-1, 24:28]), scenario)
    final_est = (log[-1, 20:24], log[-1, 24:28])
    err_pos, err_ori = _estimate_errors(final_est, scenario)
    if mode == "admittance":
        # no estimator runs in this mode
        err_pos = err_ori = float("nan")
        err_motion_end = (float("nan"), float("nan"))
    phase = log if release_k is None else log[:release_k + 1]
    forces = np.linalg.norm(phase[:, 14:17], axis=1)
    torques = np.linalg.norm(phase[:, 17:20], axis=1)
    result = EpisodeResult(
        mode=mode,
        scenario_id=scenario.scenario_id,
        log=log,
        dt=dt,
        settled=settled,
        start_time=start_time,
        release_time=float("nan") if release_k is None else release_k * dt,
        work_J=float(phase[:, -1].sum() * dt),
        mean_force_N=float(forces.mean()),
        mean_torque_Nm=float(torques.mean()),
        est_err_pos_m=err_pos,
        est_err_ori_rad=err_ori,
        est_err_pos_motion_end_m=err_motion_end[0],
        est_err_ori_motion_end_rad=err_motion_end[1],
        initial_est_err_pos_m=float(np.linalg.norm(scenario.p_start - scenario.p_target)),
        max_innovation_residual=max_resid,
        invariant_violations=violations,
    )
    if not settled:
        raise EpisodeTimeout(f"scenario {scenario.scenario_id} ({mode}) did not settle "
                             f"within {cfg.t_max} s", result)
    return result


def _estimate_errors(est, scenario):
    theta_p, theta_o = est
    e_p = float(np.linalg.norm(theta_p[:3] - scenario.p_target))
    Q_hat = target_orientation(theta_o, scenario.Q_start)
    e_o = quat.angle_between(Q_hat, scenario.Q_target)
    return e_p, e_o


# -- open-loop boundedness suite ----------------------------------------------

@dataclass
class WrenchProfile:
    """Prescribed external wrench, zero outside ``[0, duration]``."""
    name: str
    duration: float
    samples: np.ndarray  # (n, 6) on the simulation grid over [0, duration]
    dt: float

    def __call__(self, t):
        k = int(round(t / self.dt))
        if k < 0 or k >= len(self.samples):
            return np.zeros(6)
        return self.samples[k]


def default_wrench_profiles(dt=0.002, duration=1.0, seed=0):
    """Ten bounded, square-integrable wrench profiles: no wrench, 5 N /
    0.5 s pulses per axis, a pure torque pulse, a push-pull pair, decaying
    sinusoids and two low-pass filtered noise bursts, all zero after
    ``duration``."""
    t = np.arange(int(round(duration / dt)) + 1) * dt
    n = len(t)
    profiles = [WrenchProfile("zero", duration, np.zeros((n, 6)), dt)]
    pulse = ((t >= 0.2) & (t < 0.7)).astype(float)
    for j, axis in enumerate("xyz"):
        w = np.zeros((n, 6))
        w[:, j] = 5.0 * pulse
        w[:, 3 + j] = 0.3 * pulse
        profiles.append(WrenchProfile(f"pulse_{axis}", duration, w, dt))
    w = np.zeros((n, 6))
    w[:, 3:] = 0.4 * pulse[:, None] * np.array([0.6, -0.8, 0.0])
    profiles.append(WrenchProfile("torque_pulse", duration, w, dt))
    w = np.zeros((n, 6))
    w[:, 0] = 5.0 * (((t >= 0.1) & (t < 0.4)).astype(float) - ((t >= 0.5) & (t < 0.8)))
    w[:, 5] = 0.3 * w[:, 0] / 5.0
    profiles.append(WrenchProfile("push_pull", duration, w, dt))
    for k, (f_hz, decay, direction) in enumerate(((0.5, 0.8, (1.0, 1.0, 0.0)),
                                                  (1.0, 1.5, (0.0, 1.0, -1.0)))):
        d = np.asarray(direction) / np.linalg.norm(direction)
        s = np.exp(-t / decay) * np.sin(2.0 * np.pi * f_hz * t)
        w = np.zeros((n, 6))
        w[:, :3] = 6.0 * s[:, None] * d
        w[:, 3:] = 0.4 * s[:, None] * d[::-1]
        profiles.append(WrenchProfile(f"decaying_sine_{k}", duration, w, dt))
    rng = np.random.default_rng(seed)
    for k in range(2):
        raw = rng.standard_normal((n, 6))
        w = np.zeros((n, 6))
        a = dt / 0.1  # first-order low pass, 0.1 s time constant
        for i in range(1, n):
            w[i] = w[i - 1] + a * (raw[i] - w[i - 1])
        w *= np.r_[np.full(3, 8.0), np.full(3, 0.5)]
        profiles.append(WrenchProfile(f"noise_{k}", duration, w, dt))
    return profiles


def drive_open_loop(profile, pos_model, ori_model, config=None, horizon=None,
                    p0=np.zeros(3), Q0=quat.IDENTITY):
    """Drive the reference model and both observers with ``profile``.

    The DMP clock runs from ``t = 0``. Returns a dict of time series
    (``t, p, pdot, Q, omega, theta_p, theta_o``)."""
    cfg = config or SimConfig()
    dt = cfg.dt
    horizon = 10.0 * profile.duration if horizon is None else horizon
    n = int(round(horizon / dt)) + 1
    ref = ReferenceModel(pos_model, ori_model, p0, Q0, cfg.inertia)
    obs_p = TargetObserver("position", pos_model, cfg.observer_p, np.r_[p0, cfg.tau0], p0=p0)
    obs_o = TargetObserver("orientation", ori_model, cfg.observer_o,
                           np.r_[np.zeros(3), cfg.tau0])
    M_p_inv, M_o_inv = cfg.inertia.M_p_inv, cfg.inertia.M_o_inv
    out = {key: np.empty((n, m)) for key, m in
           (("p", 3), ("pdot", 3), ("Q", 4), ("omega", 3), ("theta_p", 4), ("theta_o", 4))}
    out["t"] = np.arange(n) * dt
    s = ref.state
    for k in range(n):
        t = k * dt
        out["p"][k], out["pdot"][k], out["Q"][k], out["omega"][k] = s.p, s.pdot, s.Q, s.omega
        out["theta_p"][k] = obs_p.state.theta_hat
        out["theta_o"][k] = obs_o.state.theta_hat
        wrench = profile(t)
        f, tq = wrench[:3], wrench[3:]
        th_p, th_o = obs_p.state.theta_hat, obs_o.state.theta_hat
        tc = s.t_clock
        zhat_p = obs_p.step(f, M_p_inv, (s.p, s.pdot), tc, dt)
        zhat_o = obs_o.step(tq, M_o_inv, (quat.quat_exp(s.q_prime), s.omega, s.q_prime,
                                          s.q_prime_dot), tc, dt)
        ref.step(th_p, th_o, f, tq, dt, accel_hat=(zhat_p, zhat_o))
    return out


def boundedness_suite(profiles, pos_model, ori_model, config=None, growth=10.0,
                      pos_tol=1e-4, ori_tol=1e-3, rate_tol=1e-3):
    """Empirical boundedness and convergence report, one dict per profile.

    For each profile the sup-norms of ``|p - p0|``, ``|pdot|`` and
    ``|omega|`` over ``growth`` times the profile duration must stay below
    ``growth`` times their peak values while the wrench is applied; at the
    end the pose must sit on the final target estimate and the time-scaling
    estimates must have settled over the final second.
    """
    cfg = config or SimConfig()
    report = []
    for prof in profiles:
        run = drive_open_loop(prof, pos_model, ori_model, cfg, growth * prof.duration)
        t = run["t"]
        driven = t <= prof.duration
        p_dev = np.linalg.norm(run["p"] - run["p"][0], axis=1)
        norms = {"p": p_dev, "pdot": np.linalg.norm(run["pdot"], axis=1),
                 "omega": np.linalg.norm(run["omega"], axis=1)}
        sup_ratio = {}
        ok = True
        for key, v in norms.items():
            peak = float(v[driven].max())
            sup = float(v.max())
            # undriven signals must stay at rest
            sup_ratio[key] = sup / peak if peak > 0.0 else (0.0 if sup < 1e-12 else np.inf)
            ok &= sup <= growth * peak or sup < 1e-12
        last = len(t) - 1
        p_err = float(np.linalg.norm(run["p"][last] - run["theta_p"][last, :3]))
        Q_hat = target_orientation(run["theta_o"][last], run["Q"][0])
        o_err = quat.angle_between(run["Q"][last], Q_hat)
        one_s = t >= t[-1] - 1.0
        rates = []
        for th in (run["theta_p"], run["theta_o"]):
            tau = th[one_s, 3]
            rates.append(float(np.abs(np.diff(tau)).max() / cfg.dt) if len(tau) > 1 else 0.0)
        converged = p_err < pos_tol and o_err < ori_tol
        settled = max(rates) < rate_tol
        report.append({
            "profile": prof.name,
            "bounded": bool(ok),
            "sup_ratio": sup_ratio,
            "final_pos_err_m": p_err,
            "final_ori_err_rad": o_err,
            "converged": bool(converged),
            "tau_rate": max(rates),
            "tau_settled": bool(settled),
            "passed": bool(ok and converged and settled),
        })
    return report
