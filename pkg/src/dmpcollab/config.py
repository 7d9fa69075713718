"""Experiment configuration stored as YAML.

Every key is optional; a missing key takes the default shown by
``ExperimentConfig().to_dict()``. Unknown keys are rejected so typos do not
silently fall back to defaults. Layout::

    models: {position: null, orientation: null}   # model JSON paths
    dt: 0.002
    seed: 0
    t_max: 30.0
    tau0: 6.0
    start_threshold: 1.0
    settle: {force: 0.1, torque: 0.01, time: 0.5, tau_rate: 0.001, tau_window: 1.0}
    wrench_noise: 0.0
    inertia: {M_p: [2, 2, 2], M_o: [0.1, 0.1, 0.1]}
    observer:
      position: {R: 3x3, Qn: 4x4, P0: 4x4, a_p, rho2, theta_upper, theta_lower}
      orientation: {...}
    human: {K_h: [6], D_h: [6], force_cap, torque_cap}
    admittance: {M: [6], D: [6]}
    scenarios: [{id, p_start, Q_start, p_target, Q_target, duration}, ...]
    random_scenarios: {count: 0, seed: 0}

Null model paths mean "train on the built-in synthetic demonstration".
Relative model paths are resolved against the config file's directory.
"""
import copy
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import quat
from .ekf import ObserverConfig
from .reference import InertiaParams
from .sim import AdmittanceParams, HumanParams, Scenario, SimConfig, random_scenarios


class ConfigError(ValueError):
    """Configuration file is unreadable, malformed or violates an invariant."""


def _list(a):
    return np.asarray(a, dtype=float).tolist()


def _observer_to_dict(o: ObserverConfig):
    return {"R": _list(o.R), "Qn": _list(o.Qn), "P0": _list(o.P0), "a_p": float(o.a_p),
            "rho2": float(o.rho2), "theta_upper": _list(o.theta_upper),
            "theta_lower": _list(o.theta_lower)}


def _scenario_to_dict(s: Scenario):
    return {"id": s.scenario_id, "p_start": _list(s.p_start), "Q_start": _list(s.Q_start),
            "p_target": _list(s.p_target), "Q_target": _list(s.Q_target),
            "duration": float(s.duration)}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(map(str, extra)))}")


def _merge(defaults, given, where):
    """Recursive overlay of ``given`` onto ``defaults`` (mappings only)."""
    if given is None:
        return copy.deepcopy(defaults)
    _check_keys(given, defaults, where)
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(defaults[k], dict) and k not in ("models",):
            out[k] = _merge(defaults[k], v, f"{where}.{k}" if where else k)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    model_paths: dict = field(default_factory=lambda: {"position": None, "orientation": None})
    seed: int = 0
    scenarios: list = field(default_factory=list)
    random_count: int = 0
    random_seed: int = 0
    base_dir: str = "."

    def __post_init__(self):
        self.validate()

    # -- invariants ----------------------------------------------------------
    def validate(self):
        if self.random_count < 0:
            raise ConfigError("random_scenarios.count must be non-negative")
        ids = [s.scenario_id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ConfigError("scenario ids must be unique")
        op, oo = self.sim.observer_p, self.sim.observer_o
        for s in self.scenarios:
            if np.any(s.p_target > op.theta_upper[:3]) or np.any(s.p_target < op.theta_lower[:3]):
                raise ConfigError(f"scenario {s.scenario_id}: target position outside "
                                  "the position observer bounds")
            qg = quat.quat_log(quat.relative(s.Q_target, s.Q_start))
            if np.any(qg > oo.theta_upper[:3]) or np.any(qg < oo.theta_lower[:3]):
                raise ConfigError(f"scenario {s.scenario_id}: target orientation outside "
                                  "the orientation observer bounds")

    def all_scenarios(self):
        """Listed scenarios followed by the randomly generated ones."""
        extra = random_scenarios(self.random_count, seed=self.random_seed) if self.random_count else []
        return list(self.scenarios) + extra

    def resolved_model_paths(self):
        return {k: (None if v is None else os.path.normpath(os.path.join(self.base_dir, v)))
                for k, v in self.model_paths.items()}

    # -- serialization -------------------------------------------------------
    def to_dict(self):
        c = self.sim
        return {
            "models": dict(self.model_paths),
            "dt": float(c.dt),
            "seed": int(self.seed),
            "t_max": float(c.t_max),
            "tau0": float(c.tau0),
            "start_threshold": float(c.start_threshold),
            "settle": {"force": float(c.settle_force), "torque": float(c.settle_torque),
                       "time": float(c.settle_time), "tau_rate": float(c.tau_settle_rate),
                       "tau_window": float(c.tau_settle_window)},
            "wrench_noise": float(c.wrench_noise),
            "inertia": {"M_p": _list(c.inertia.M_p), "M_o": _list(c.inertia.M_o)},
            "observer": {"position": _observer_to_dict(c.observer_p),
                         "orientation": _observer_to_dict(c.observer_o)},
            "human": {"K_h": _list(c.human.K_h), "D_h": _list(c.human.D_h),
                      "force_cap": float(c.human.force_cap),
                      "torque_cap": float(c.human.torque_cap)},
            "admittance": {"M": _list(c.admittance.M), "D": _list(c.admittance.D)},
            "scenarios": [_scenario_to_dict(s) for s in self.scenarios],
            "random_scenarios": {"count": int(self.random_count), "seed": int(self.random_seed)},
        }

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = _merge(ExperimentConfig().to_dict(), d or {}, "")
        try:
            models = d["models"]
            _check_keys(models, ("position", "orientation"), "models")
            models = {"position": models.get("position"), "orientation": models.get("orientation")}
            obs = {}
            for kind, ctor in (("position", ObserverConfig.position),
                               ("orientation", ObserverConfig.orientation)):
                o = d["observer"][kind]
                obs[kind] = ctor(R=o["R"], Qn=o["Qn"], P0=o["P0"], a_p=float(o["a_p"]),
                                 rho2=float(o["rho2"]), theta_upper=o["theta_upper"],
                                 theta_lower=o["theta_lower"])
                if obs[kind].R.shape != (3, 3) or obs[kind].Qn.shape != (4, 4) \
                        or obs[kind].P0.shape != (4, 4) or obs[kind].theta_upper.shape != (4,) \
                        or obs[kind].theta_lower.shape != (4,):
                    raise ConfigError(f"observer.{kind}: R must be 3x3, Qn and P0 4x4, "
                                      "bounds 4-vectors")
            h, a = d["human"], d["admittance"]
            sim = SimConfig(
                dt=float(d["dt"]), t_max=float(d["t_max"]), tau0=float(d["tau0"]),
                start_threshold=float(d["start_threshold"]),
                settle_force=float(d["settle"]["force"]),
                settle_torque=float(d["settle"]["torque"]),
                settle_time=float(d["settle"]["time"]),
                tau_settle_rate=float(d["settle"]["tau_rate"]),
                tau_settle_window=float(d["settle"]["tau_window"]),
                wrench_noise=float(d["wrench_noise"]),
                inertia=InertiaParams(d["inertia"]["M_p"], d["inertia"]["M_o"]),
                observer_p=obs["position"], observer_o=obs["orientation"],
                human=HumanParams(h["K_h"], h["D_h"], float(h["force_cap"]),
                                  float(h["torque_cap"])),
                admittance=AdmittanceParams(a["M"], a["D"]),
            )
            scenarios = []
            for i, s in enumerate(d["scenarios"] or []):
                _check_keys(s, ("id", "p_start", "Q_start", "p_target", "Q_target", "duration"),
                            f"scenarios[{i}]")
                Q_start = s.get("Q_start", [1.0, 0.0, 0.0, 0.0])
                scenarios.append(Scenario(str(s.get("id", f"c{i:03d}")),
                                          _vec(s["p_start"], 3), _vec(Q_start, 4),
                                          _vec(s["p_target"], 3),
                                          _vec(s.get("Q_target", Q_start), 4),
                                          float(s["duration"])))
            rs = d["random_scenarios"]
            return cls(sim=sim, model_paths=models, seed=int(d["seed"]), scenarios=scenarios,
                       random_count=int(rs["count"]), random_seed=int(rs["seed"]),
                       base_dir=base_dir)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.to_dict() == other.to_dict()


def _vec(v, n):
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ConfigError(f"expected a {n}-vector, got {v!r}")
    return a


def dumps(config):
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)


def loads(text, base_dir="."):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(data, base_dir=base_dir)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text, base_dir=os.path.dirname(os.path.abspath(path)))


def save_config(config, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(config))
