"""Command-line entry point: ``crlnav {train,eval,gen-traffic,fit-fuel,export}``.

Every command accepts the shared flags ``--config --seed --scenario
--checkpoint --out --no-curriculum --deterministic --episodes`` after the
command name. Input validation problems print ``error: ...`` to stderr and
exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .diffusion import DiffusionConfig, TrafficGenerator, train_denoiser
from .evaluation import evaluate_policy, export_geojson, summarize, write_metrics
from .fuel import BoostParams, encode_table, fit_ensemble, read_records, regression_metrics, write_records
from .networks import load_checkpoint
from .ppo import TrainConfig, train_crl, with_overrides
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .synthetic import fuel_dataset, random_traffic, toy_scenario_dict
from .tracks import Trajectory, read_trajectories, write_trajectories

TOY = "toy"


class UsageError(ValueError):
    """Bad flag combination or unreadable input; reported without a traceback."""


# helpers


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return doc


def _dataclass_from(cls, doc: dict, what: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UsageError(f"unknown {what} keys: {', '.join(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise UsageError(f"bad {what}: {exc}") from None


def _scenario(args) -> Scenario:
    """``--scenario toy`` selects the built-in open-water transit (1 nm start jitter)."""
    if args.scenario is None:
        raise UsageError("--scenario is required (a scenario JSON file or 'toy')")
    if args.scenario == TOY:
        return parse_scenario(toy_scenario_dict(start_jitter_nm=1.0))
    return load_scenario(args.scenario)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required for this command")
    return value


def _fixed_length(trajs: list[Trajectory], length: int) -> list[Trajectory]:
    """Cut trajectories into non-overlapping windows of exactly ``length`` points."""
    out = []
    for tr in trajs:
        for lo in range(0, len(tr) - length + 1, length):
            out.append(Trajectory(tr.points[lo:lo + length], tr.timestep, f"{tr.traj_id}:{lo}"))
    return out


# commands


def cmd_train(args) -> int:
    scenario = _scenario(args)
    cfg = TrainConfig.from_dict(_read_json(args.config))
    over: dict = {}
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.episodes is not None:
        over["total_episodes"] = args.episodes
    if args.no_curriculum:
        over["curriculum"] = False
    cfg = with_overrides(cfg, **over)
    out = _out_dir(args, "runs/train")
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    t0 = time.time()
    report, _, _ = train_crl(scenario, cfg, checkpoint=ckpt)
    report.write_curve(out / "reward_curve.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    n = len(report.episode_rewards)
    tail = report.reached[-min(n, 100):]
    print(f"trained {n} episodes in {time.time() - t0:.1f}s; final moving average "
          f"{report.moving_average[-1]:.3f}; reach rate over last {len(tail)} episodes "
          f"{np.mean(tail):.2f}")
    print(f"checkpoint: {ckpt}")
    print(f"reward curve: {out / 'reward_curve.csv'}")
    return 0


def _load_policy(args, scenario: Scenario):
    path = _require(args.checkpoint, "--checkpoint")
    if not Path(path).exists():
        raise UsageError(f"{path}: no such checkpoint")
    actor, _, meta = load_checkpoint(path)
    doc = meta.get("config", {})
    cfg = TrainConfig.from_dict(doc) if doc else TrainConfig()
    return actor, cfg


def cmd_eval(args) -> int:
    scenario = _scenario(args)
    actor, cfg = _load_policy(args, scenario)
    episodes = 50 if args.episodes is None else args.episodes
    seed = cfg.seed if args.seed is None else args.seed
    metrics, traces = evaluate_policy(actor, scenario, episodes, args.deterministic, cfg.omega_f, seed,
                                      weights=cfg.reward, safety=cfg.safety)
    out = _out_dir(args, "runs/eval")
    write_metrics(out / "metrics.csv", metrics)
    summary = summarize(metrics)
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    for i, tr in enumerate(traces):
        export_geojson(tr, trace_dir / f"episode_{i:04d}.geojson")
    if metrics:
        for name in ("ar", "afc", "ass", "steps"):
            print(f"{name.upper():5s} {summary[name + '_mean']:.4f} +/- {summary[name + '_std']:.4f}")
        print(f"reach rate {summary['reach_rate']:.3f} over {episodes} episodes")
    else:
        print("no episodes requested")
    return 0


def cmd_export(args) -> int:
    """Roll deterministic episodes and write each trace as GeoJSON."""
    scenario = _scenario(args)
    actor, cfg = _load_policy(args, scenario)
    episodes = 1 if args.episodes is None else args.episodes
    seed = cfg.seed if args.seed is None else args.seed
    _, traces = evaluate_policy(actor, scenario, episodes, True, cfg.omega_f, seed,
                                weights=cfg.reward, safety=cfg.safety)
    out = Path(args.out or "trace.geojson")
    if episodes == 1 and out.suffix in (".geojson", ".json"):
        out.parent.mkdir(parents=True, exist_ok=True)
        export_geojson(traces[0], out)
        print(f"wrote {out}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    for i, tr in enumerate(traces):
        export_geojson(tr, out / f"episode_{i:04d}.geojson")
    print(f"wrote {len(traces)} traces to {out}")
    return 0


def cmd_fit_fuel(args) -> int:
    doc = _read_json(args.config)
    data_path = doc.pop("data", None) if args.data is None else args.data
    samples = int(doc.pop("samples", args.samples))
    params = _dataclass_from(BoostParams, doc, "boosting config")
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng([seed, 5])
    if data_path:
        records = read_records(data_path)
        if any(r.fcr_target is None for r in records):
            raise UsageError(f"{data_path}: every record needs an fcr label for fitting")
    else:
        records = fuel_dataset(samples, rng)
    if len(records) < 10:
        raise UsageError(f"need at least 10 records, got {len(records)}")
    order = rng.permutation(len(records))
    cut = int(round(0.8 * len(records)))
    train = [records[i] for i in order[:cut]]
    test = [records[i] for i in order[cut:]]
    t0 = time.time()
    model = fit_ensemble(train, params)
    fit_s = time.time() - t0
    X, y = encode_table(test)
    m = regression_metrics(model.predict(X), y)
    out = Path(args.out or "fuel_model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    if args.dump_data:
        write_records(args.dump_data, records)
    print(f"fitted {params.n_trees} trees on {len(train)} records in {fit_s:.1f}s")
    print("held-out: " + ", ".join(f"{k}={v:.4f}" for k, v in m.items()))
    print(f"model: {out}")
    return 0


def cmd_gen_traffic(args) -> int:
    doc = _read_json(args.config)
    data_path = doc.pop("data", None) if args.data is None else args.data
    train_tracks = int(doc.pop("train_tracks", 256))
    cfg = _dataclass_from(DiffusionConfig, doc, "diffusion config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    count = 10 if args.episodes is None else args.episodes
    if count < 0:
        raise UsageError("--episodes (number of generated trajectories) must be >= 0")
    if args.checkpoint and Path(args.checkpoint).exists() and not args.retrain:
        gen = TrafficGenerator.load(args.checkpoint)
        print(f"loaded generator {args.checkpoint}")
    else:
        rng = np.random.default_rng([cfg.seed, 8])
        if data_path:
            trajs = _fixed_length(read_trajectories(data_path, cfg.timestep), cfg.length)
            if not trajs:
                raise UsageError(f"{data_path}: no trajectory has {cfg.length} or more points")
        else:
            box = (9.5, 10.5, 64.5, 65.5)
            if args.scenario is not None:
                box = _scenario(args).region
            trajs = [Trajectory(p, cfg.timestep, str(i))
                     for i, p in enumerate(random_traffic(box, train_tracks, cfg.length, cfg.timestep, rng))]
        t0 = time.time()
        gen = train_denoiser(trajs, cfg)
        print(f"trained generator on {len(trajs)} trajectories in {time.time() - t0:.1f}s; "
              f"final loss {np.mean(gen.losses[-20:]):.4f}")
        if args.checkpoint:
            gen.save(args.checkpoint)
            print(f"generator: {args.checkpoint}")
    samples = gen.sample(count, np.random.default_rng([cfg.seed, 9]))
    out = Path(args.out or "traffic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trajectories(out, samples)
    print(f"wrote {len(samples)} trajectories to {out}")
    return 0


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="JSON configuration file for the command")
    g.add_argument("--seed", type=int, help="override the configured random seed")
    g.add_argument("--scenario", help="scenario JSON file, or 'toy' for the built-in transit")
    g.add_argument("--checkpoint", help="policy (train/eval/export) or generator (gen-traffic) file")
    g.add_argument("--out", help="output file or directory")
    g.add_argument("--no-curriculum", action="store_true", help="train at the final goal radius throughout")
    g.add_argument("--deterministic", action="store_true", help="evaluate with the mean action")
    g.add_argument("--episodes", type=int, help="training episodes, eval episodes or generated tracks")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="crlnav", description="Curriculum PPO ship navigation toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a policy").set_defaults(func=cmd_train)
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint").set_defaults(func=cmd_eval)
    sub.add_parser("export", parents=[common], help="write episode traces as GeoJSON").set_defaults(func=cmd_export)
    ff = sub.add_parser("fit-fuel", parents=[common], help="fit the fuel consumption model")
    ff.add_argument("--data", help="operational records CSV (default: synthetic records)")
    ff.add_argument("--samples", type=int, default=20000, help="synthetic record count")
    ff.add_argument("--dump-data", help="also write the records used to this CSV")
    ff.set_defaults(func=cmd_fit_fuel)
    gt = sub.add_parser("gen-traffic", parents=[common], help="train or sample the traffic generator")
    gt.add_argument("--data", help="trajectory CSV for training (default: synthetic great-circle legs)")
    gt.add_argument("--retrain", action="store_true", help="train even if --checkpoint exists")
    gt.set_defaults(func=cmd_gen_traffic)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.episodes is not None and args.episodes < 0:
        print("error: --episodes must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
