"""Command-line entry point.

Verbs: train, benchmark, ablate-window, ablate-inputs, stress, replay,
write-config. Exit codes: 0 success, 2 usage error, 3 missing
checkpoint/log data, 4 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baselines import CascadePid, PidGains
from .checkpoint import load_actor
from .config import BenchConfig, limits, load_config, nominal_params, write_default_config
from .env import ALL_NAMES, HoverEnv, parse_name
from .errors import DivergedTrainingError, MissingArtifactError
from .evaluation import (FrozenHoverController, PolicyController, TeleportOracle,
                         run_episode, stress_test)
from .reports import (ResultStore, benchmark_tables, curve_csv, merged_curve_csv,
                      metrics_from_logs, scenario_spec, stress_tables)
from .sac import TrainSchedule, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4

WINDOW_SET = (1, 2, 5, 10, 15)
INPUT_ABLATION = ("eW-R-u", "eW-vW-R-u", "eW-q-u")
INPUT_ABLATION_SCENARIOS = ("ellipse", "eight2d", "eight3d")


def _store(cfg: BenchConfig, args) -> ResultStore:
    root = args.out or os.environ.get("QUADBENCH_OUT") or cfg.plan.output_root
    return ResultStore(root)


def _check_obs_name(name: str) -> None:
    if name not in ALL_NAMES:
        raise SystemExit(f"unknown observation config {name!r}; valid names: "
                         + ", ".join(ALL_NAMES))


def _train_one(cfg: BenchConfig, store: ResultStore, obs_name: str, seed: int,
               steps: int, n_envs: int, window: int = None):  # type: ignore[assignment]
    """Train one policy and persist its checkpoint and learning curve."""
    h = window if window is not None else cfg.env.history
    obs = parse_name(obs_name, H=h)

    def factory(i):
        return HoverEnv.from_config(cfg, obs)

    run_name = obs_name if window is None else f"{obs_name}-H{h}"
    ckpt = store.checkpoint_path(run_name, seed)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    schedule = TrainSchedule(total_steps=steps, n_envs=n_envs,
                             eval_every=cfg.plan.eval_every)
    actor, curve = train(factory, obs, cfg.sac, schedule, seed,
                         checkpoint_path=str(ckpt), obs_name=obs_name)
    store.write_text(store.curve_path(run_name, seed), curve_csv(curve))
    return actor, curve


def _train_job(payload):
    """Picklable worker for --jobs fan-out; returns (key, curve rows)."""
    cfg, root, obs_name, seed, steps, n_envs, window = payload
    store = ResultStore(root)
    _, curve = _train_one(cfg, store, obs_name, seed, steps, n_envs, window)
    return (obs_name, seed, window), curve


def _run_training_plan(cfg, store, jobs, payloads):
    """Run (obs, seed, window) trainings inline or across processes."""
    results = {}
    if jobs <= 1 or len(payloads) <= 1:
        for p in payloads:
            key, curve = _train_job(p)
            results[key] = curve
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, curve in pool.map(_train_job, payloads):
                results[key] = curve
    return results


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    _check_obs_name(args.obs)
    store = _store(cfg, args)
    store.write_manifest(cfg)
    steps = args.steps or cfg.plan.train_steps
    _, curve = _train_one(cfg, store, args.obs, args.seed, steps, args.n_envs)
    if curve:
        tail = curve[-max(1, len(curve) // 10):]
        mean_r = float(np.mean([c.cumulative_reward for c in tail]))
        print(f"trained {args.obs} seed {args.seed}: {len(curve)} episodes, "
              f"final mean episode reward {mean_r:.2f}")
    else:
        print(f"trained {args.obs} seed {args.seed}: no completed episodes")
    return EXIT_OK


def _policy_controller(cfg: BenchConfig, store: ResultStore, obs_name: str,
                       seed: int, label: str):
    path = store.checkpoint_path(obs_name, seed)
    actor, header = load_actor(path)
    obs = parse_name(header["obs_config"], H=header["history"])
    return PolicyController(actor, obs, nominal_params(cfg), limits(cfg), name=label)


def _controller_label(obs_name: str, seed: int, seeds) -> str:
    return obs_name if len(seeds) == 1 else f"{obs_name}-s{seed}"


def _simulate_benchmark(cfg, store, controllers, scenarios, randomized: bool):
    rand = None
    if randomized:
        from .env import RandomizationSpec
        rand = RandomizationSpec(fraction=cfg.env.rand_fraction,
                                 g_bias_max=cfg.env.g_bias_max,
                                 delay_range=(0.0, 0.0))
    par, lim = nominal_params(cfg), limits(cfg)
    from .env import RewardConfig
    rcfg = RewardConfig(beta=cfg.reward.beta, k_u=cfg.reward.effort_weight,
                        e_m=cfg.reward.max_distance, c=cfg.reward.crash_penalty)
    for ctrl in controllers:
        for sc in scenarios:
            spec = scenario_spec(cfg, sc)
            for i in range(cfg.plan.runs):
                log = run_episode(ctrl, spec, cfg.plan.eval_duration, seed=i,
                                  nominal=par, limits=lim, reward_cfg=rcfg,
                                  randomization=rand,
                                  ts=cfg.dynamics.control_period)
                store.write_text(store.log_path(ctrl.name, sc, i), log.to_csv())


def _report_from_logs(cfg, store, names, scenarios, report_stem: str) -> None:
    results = {}
    for name in names:
        for sc in scenarios:
            results[(name, sc)] = metrics_from_logs(store, name, sc, cfg.plan.runs)
    csv_text, md_text = benchmark_tables(results, names, scenarios)
    store.write_text(store.report_path(f"{report_stem}.csv"), csv_text)
    store.write_text(store.report_path(f"{report_stem}.md"), md_text)
    print(md_text)


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    store = _store(cfg, args)
    store.write_manifest(cfg)
    seeds = cfg.plan.seeds
    controllers = []
    missing = []
    for obs_name in cfg.plan.configs:
        _check_obs_name(obs_name)
        for seed in seeds:
            path = store.checkpoint_path(obs_name, seed)
            if not path.exists():
                missing.append(str(path))
                continue
            controllers.append(_policy_controller(
                cfg, store, obs_name, seed, _controller_label(obs_name, seed, seeds)))
    if missing:
        print("missing checkpoints:\n  " + "\n  ".join(missing), file=sys.stderr)
        return EXIT_MISSING
    controllers.append(CascadePid(PidGains.from_config(cfg), nominal_params(cfg),
                                  limits(cfg)))
    _simulate_benchmark(cfg, store, controllers, cfg.plan.scenarios, args.randomized)
    _report_from_logs(cfg, store, [c.name for c in controllers],
                      cfg.plan.scenarios, "benchmark")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    store = _store(cfg, args)
    seeds = cfg.plan.seeds
    names = [_controller_label(o, s, seeds) for o in cfg.plan.configs for s in seeds]
    names.append("pid")
    _report_from_logs(cfg, store, names, cfg.plan.scenarios, "benchmark")
    return EXIT_OK


def cmd_ablate_window(args) -> int:
    cfg = load_config(args.config)
    store = _store(cfg, args)
    store.write_manifest(cfg)
    steps = args.steps or cfg.plan.train_steps
    payloads = [(cfg, str(store.root), "eW-R-u", args.seed, steps, args.n_envs, h)
                for h in WINDOW_SET]
    results = _run_training_plan(cfg, store, args.jobs, payloads)
    curves = {h: results[("eW-R-u", args.seed, h)] for h in WINDOW_SET}
    store.write_text(store.report_path("ablate_window.csv"), merged_curve_csv(curves))
    for h in WINDOW_SET:
        tail = curves[h][-max(1, len(curves[h]) // 10):] if curves[h] else []
        mean_r = float(np.mean([c.cumulative_reward for c in tail])) if tail else float("nan")
        print(f"H={h}: {len(curves[h])} episodes, final mean reward {mean_r:.2f}")
    return EXIT_OK


def cmd_ablate_inputs(args) -> int:
    cfg = load_config(args.config)
    store = _store(cfg, args)
    store.write_manifest(cfg)
    steps = args.steps or cfg.plan.train_steps
    payloads = [(cfg, str(store.root), name, args.seed, steps, args.n_envs, None)
                for name in INPUT_ABLATION]
    _run_training_plan(cfg, store, args.jobs, payloads)
    controllers = [_policy_controller(cfg, store, name, args.seed, name)
                   for name in INPUT_ABLATION]
    _simulate_benchmark(cfg, store, controllers, INPUT_ABLATION_SCENARIOS, False)
    _report_from_logs(cfg, store, [c.name for c in controllers],
                      INPUT_ABLATION_SCENARIOS, "ablate_inputs")
    return EXIT_OK


def cmd_stress(args) -> int:
    cfg = load_config(args.config)
    store = _store(cfg, args)
    store.write_manifest(cfg)
    par, lim = nominal_params(cfg), limits(cfg)
    if args.pid:
        ctrl = CascadePid(PidGains.from_config(cfg), par, lim)
    elif args.teleport:
        ctrl = TeleportOracle(par)
    elif args.frozen_hover:
        ctrl = FrozenHoverController(par)
    else:
        actor, header = load_actor(args.checkpoint)
        obs = parse_name(header["obs_config"], H=header["history"])
        ctrl = PolicyController(actor, obs, par, lim,
                                name=header["obs_config"])
    v = stress_test(ctrl, cfg.trajectories.circle_radius, cfg.trajectories.ramp_accel,
                    seed=args.seed, nominal=par, limits=lim,
                    ts=cfg.dynamics.control_period,
                    speed_cap=cfg.plan.stress_speed_cap,
                    center=cfg.trajectories.center)
    rows = []
    path = store.report_path("stress.csv")
    if path.exists():
        for line in path.read_text(encoding="utf-8").strip().splitlines()[1:]:
            name, val = line.split(",")
            rows.append((name, float(val)))
    rows.append((ctrl.name, v))
    csv_text, md_text = stress_tables(rows)
    store.write_text(path, csv_text)
    store.write_text(store.report_path("stress.md"), md_text)
    print(f"{ctrl.name}: max tracked speed "
          + (">= cap" if v == float("inf") else f"{v:.2f} m/s"))
    return EXIT_OK


def cmd_write_config(args) -> int:
    write_default_config(args.path)
    print(f"wrote defaults to {args.path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadbench",
                                description="quadrotor observation-space benchmark")
    p.add_argument("--config", default=None, help="INI config file (defaults built in)")
    p.add_argument("--out", default=None,
                   help="output root (default: $QUADBENCH_OUT or plan.output_root)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one policy")
    t.add_argument("--obs", required=True, help="observation config name")
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--n-envs", type=int, default=1)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("benchmark", help="evaluate planned policies + PID")
    b.add_argument("--randomized", action="store_true",
                   help="evaluate under randomized dynamics")
    b.set_defaults(func=cmd_benchmark)

    r = sub.add_parser("replay", help="regenerate reports from stored logs")
    r.set_defaults(func=cmd_replay)

    w = sub.add_parser("ablate-window", help="train history-length variants")
    w.add_argument("--seed", type=int, default=1)
    w.add_argument("--steps", type=int, default=None)
    w.add_argument("--n-envs", type=int, default=1)
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_ablate_window)

    a = sub.add_parser("ablate-inputs", help="train/evaluate input variants")
    a.add_argument("--seed", type=int, default=1)
    a.add_argument("--steps", type=int, default=None)
    a.add_argument("--n-envs", type=int, default=1)
    a.add_argument("--jobs", type=int, default=1)
    a.set_defaults(func=cmd_ablate_inputs)

    s = sub.add_parser("stress", help="ramping-speed pursuit until failure")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--checkpoint", help="policy checkpoint path")
    g.add_argument("--pid", action="store_true")
    g.add_argument("--teleport", action="store_true")
    g.add_argument("--frozen-hover", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_stress)

    c = sub.add_parser("write-config", help="emit the default config file")
    c.add_argument("path")
    c.set_defaults(func=cmd_write_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DivergedTrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return EXIT_USAGE
        raise


if __name__ == "__main__":
    sys.exit(main())
