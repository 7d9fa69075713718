"""``dmpcollab`` command line: train, simulate, verify, make-demo.

Exit codes: 0 success, 1 verification failure, 2 bad input (arguments,
demo file, config or model files), 3 degenerate demonstration, 4 at least
one episode timed out (all results are still written).
"""
import argparse
import dataclasses
import os
import sys

import numpy as np

from . import io, quat, verify
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .dmp import DegenerateDemoError, load_model, rollout, save_model, train_lwr
from .sim import MODES, EpisodeTimeout, run_episode
from .trajectories import synthetic_demo

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_DEGENERATE, EXIT_TIMEOUT = 0, 1, 2, 3, 4


def _err(msg):
    print(f"dmpcollab: error: {msg}", file=sys.stderr)


def reproduction_rmse(demo, pos_model, ori_model):
    """Per-axis rollout RMSE as a fraction of each axis's demonstrated range,
    for position and anchored orientation. Axes without motion report 0."""
    n = len(demo.t)
    t = demo.t - demo.t[0]
    dt = demo.duration / (n - 1)
    roll = rollout(pos_model, ori_model, demo.positions[0], demo.orientations[0],
                   demo.positions[-1], demo.orientations[-1], demo.duration, demo.duration,
                   dt=dt, duration=demo.duration)
    Q0 = demo.orientations[0]
    qp = np.array([quat.quat_log(quat.relative(Q, Q0)) for Q in demo.orientations])
    out = {}
    for name, ref, sim in (("position", demo.positions, roll.p), ("orientation", qp, roll.q_prime)):
        sim = np.column_stack([np.interp(t, roll.t, sim[:, j]) for j in range(3)])
        rng = ref.max(axis=0) - ref.min(axis=0)
        rmse = np.sqrt(((sim - ref) ** 2).mean(axis=0))
        out[name] = np.where(rng > 1e-9, rmse / np.where(rng > 1e-9, rng, 1.0), 0.0)
    return out


def cmd_train(args):
    try:
        demo = io.read_trajectory(args.demo)
    except io.TrajectoryFormatError as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        pos_model, ori_model = train_lwr(demo, args.n_kernels, args.alpha_z, args.beta_z)
    except DegenerateDemoError as exc:
        _err(f"degenerate demonstration: {exc}")
        return EXIT_DEGENERATE
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    save_model(pos_model, os.path.join(args.out, "position.json"))
    save_model(ori_model, os.path.join(args.out, "orientation.json"))
    rmse = reproduction_rmse(demo, pos_model, ori_model)
    for name, r in rmse.items():
        axes = " ".join(f"{100.0 * v:.4f}%" for v in r)
        print(f"{name} reproduction RMSE (of axis range): {axes}")
    print(f"wrote {os.path.join(args.out, 'position.json')} and "
          f"{os.path.join(args.out, 'orientation.json')}")
    return EXIT_OK


def _load_models(cfg):
    paths = cfg.resolved_model_paths()
    if paths["position"] is None or paths["orientation"] is None:
        default = verify.default_models()
    models = []
    for i, kind in enumerate(("position", "orientation")):
        if paths[kind] is None:
            models.append(default[i])
            continue
        m = load_model(paths[kind])
        if m.kind != kind:
            raise ValueError(f"{paths[kind]} holds a {m.kind} model, expected {kind}")
        models.append(m)
    return models


def cmd_simulate(args):
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.dt is not None:
            cfg.sim = dataclasses.replace(cfg.sim, dt=args.dt)
    except (ConfigError, ValueError) as exc:
        _err(f"invalid config: {exc}")
        return EXIT_INPUT
    scenarios = cfg.all_scenarios()
    if not scenarios:
        _err("config lists no scenarios (add 'scenarios' or 'random_scenarios.count')")
        return EXIT_INPUT
    try:
        pos_model, ori_model = _load_models(cfg)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot load models: {exc}")
        return EXIT_INPUT

    modes = MODES if args.mode == "both" else (args.mode,)
    ep_dir, tr_dir = os.path.join(args.out, "episodes"), os.path.join(args.out, "traces")
    os.makedirs(ep_dir, exist_ok=True)
    os.makedirs(tr_dir, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "effective_config.yaml"))
    results, timeouts = [], 0
    for i, sc in enumerate(scenarios):
        for mode in modes:
            try:
                res = run_episode(mode, sc, pos_model, ori_model, cfg.sim, seed=cfg.seed + i)
            except EpisodeTimeout as exc:
                res = exc.result
                timeouts += 1
                _err(str(exc))
            results.append(res)
            stem = f"{sc.scenario_id}_{mode}.csv"
            io.write_episode_csv(os.path.join(ep_dir, stem), res)
            if mode == "dmp_ekf":
                io.write_estimate_trace(os.path.join(tr_dir, stem), res)
            print(f"{sc.scenario_id} {mode}: work {res.work_J:.3f} J, mean force "
                  f"{res.mean_force_N:.3f} N, settled {res.settled}")
    io.write_report(os.path.join(args.out, "report.json"), results)
    table = io.comparison_table(results)
    io.write_text(os.path.join(args.out, "comparison.md"), table)
    print(table, end="")
    return EXIT_TIMEOUT if timeouts else EXIT_OK


def cmd_verify(args):
    suites = verify.SUITES if args.suite == "all" else (args.suite,)
    models = verify.default_models() if any(s != "quat" for s in suites) else None
    failed = 0
    for name in suites:
        for check in verify.run_suite(name, models):
            print(check.line())
            failed += not check.passed
    print(f"{failed} check(s) failed" if failed else "all checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_make_demo(args):
    demo = synthetic_demo(duration=args.duration, dt=args.dt)
    io.write_trajectory(args.out, demo)
    print(f"wrote {args.out} ({len(demo.t)} samples)")
    return EXIT_OK


def _positive(x):
    v = float(x)
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {x}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="dmpcollab",
                                description="DMP reference model with EKF target estimation "
                                            "for collaborative object transfer")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train position and orientation DMPs from a demo CSV")
    t.add_argument("demo", help="trajectory CSV (t,px,py,pz,qw,qx,qy,qz[,vx,vy,vz,wx,wy,wz])")
    t.add_argument("--out", required=True, help="output directory for the model JSON files")
    t.add_argument("--n-kernels", type=int, default=30)
    t.add_argument("--alpha-z", type=_positive, default=40.0)
    t.add_argument("--beta-z", type=_positive, default=10.0)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="run paired collaborative transfer episodes")
    s.add_argument("--config", help="YAML experiment config (defaults when omitted)")
    s.add_argument("--mode", choices=("dmp_ekf", "admittance", "both"), default="both")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--dt", type=_positive, help="override the config time step")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("suite", nargs="?", default="all", choices=verify.SUITES + ("all",))
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("make-demo", help="write the synthetic demonstration CSV")
    d.add_argument("out")
    d.add_argument("--duration", type=_positive, default=4.7)
    d.add_argument("--dt", type=_positive, default=0.002)
    d.set_defaults(func=cmd_make_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
