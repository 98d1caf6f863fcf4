"""Command-line entry point.

Subcommands: gen, train, evolve, estimate, simulate, sweep-noise, report.
Exit codes: 0 success, 1 usage error, 2 data error. Runs with a fixed seed
and a fixed latency model produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import evolution, predictor
from .config import CliConfig, load_cli_config, render_config
from .errors import MissingArtifacts, OcgaitError, UsageError
from .gait_data import SyntheticGaitConfig, generate_synthetic, load_trajectory, save_trajectory
from .harness import LatencyModel, ReplayConfig, noise_sweep, replay
from .predictor import load_prediction, load_weights, predict_stride, save_weights

_F = "%.9g"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def build_parser() -> _Parser:
    parser = _Parser(prog="ocgait", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic trajectory CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--obstacle-height", type=float, default=None, metavar="MM")
    p.add_argument("--foot-distance", type=float, default=None, metavar="MM")
    p.add_argument("--rate", type=float, default=None, metavar="HZ")
    p.add_argument("--stride-duration", type=float, default=None, metavar="S")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a network on a directory of trajectories")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--spec", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="WEIGHTS")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evolve", help="genetic architecture search")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("estimate", help="stream a trajectory against a reference prediction")
    p.add_argument("--reference", required=True, metavar="FILE")
    p.add_argument("--stream", required=True, metavar="FILE")
    p.add_argument("--rate", type=float, required=True, metavar="HZ")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--latency", default="fixed:5", metavar="MODEL")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="predict and replay one trajectory")
    p.add_argument("--traj", required=True, metavar="FILE")
    p.add_argument("--weights", required=True, metavar="FILE")
    p.add_argument("--rate", type=float, default=100.0, metavar="HZ")
    p.add_argument("--noise-std", type=float, default=0.0, metavar="DEG")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--latency", default="measured", metavar="MODEL")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-noise", help="noise-robustness sweep")
    p.add_argument("--traj", required=True, metavar="FILE")
    p.add_argument("--weights", required=True, metavar="FILE")
    p.add_argument("--rate", type=float, default=100.0, metavar="HZ")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--std-min", type=float, default=0.05)
    p.add_argument("--std-step", type=float, default=0.025)
    p.add_argument("--std-max", type=float, default=3.0)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--latency", default="fixed:5", metavar="MODEL")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate run outputs into a summary table")
    p.add_argument("run_dir", metavar="RUN_DIR")
    p.add_argument("--out", default=None, metavar="JSON")
    p.set_defaults(func=cmd_report)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (OcgaitError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())


# ---------------------------------------------------------------------------
# Command implementations


def _write_snapshot(cfg: CliConfig, extras: dict, out_path: Path, is_dir: bool) -> None:
    target = out_path / "resolved_config.txt" if is_dir else Path(str(out_path) + ".resolved_config.txt")
    target.write_text(render_config(cfg, extras), encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_gen(args) -> int:
    cfg = load_cli_config(args.config)
    overrides = {"seed": args.seed}
    if args.obstacle_height is not None:
        overrides["obstacle_height_mm"] = args.obstacle_height
    if args.foot_distance is not None:
        overrides["foot_distance_mm"] = args.foot_distance
    if args.rate is not None:
        overrides["rate_hz"] = args.rate
    if args.stride_duration is not None:
        overrides["stride_duration_s"] = args.stride_duration
    gen_cfg = dataclasses.replace(cfg.generator, **overrides)
    traj = generate_synthetic(gen_cfg)
    out = Path(args.out)
    save_trajectory(traj, out)
    cfg = dataclasses.replace(cfg, generator=gen_cfg)
    _write_snapshot(cfg, {"command": "gen", "out": str(out)}, out, is_dir=False)
    return 0


def _load_dataset(data_dir: str, trajectory_len: int):
    root = Path(data_dir)
    if not root.is_dir():
        raise MissingArtifacts(f"data directory not found: {root}")
    files = sorted(root.glob("*.csv"))
    if not files:
        raise MissingArtifacts(f"no .csv trajectories in {root}")
    trajs = [load_trajectory(f) for f in files]
    return predictor.build_examples(trajs, trajectory_len=trajectory_len)


def cmd_train(args) -> int:
    cfg = load_cli_config(args.config)
    train_cfg = cfg.train if args.seed is None else dataclasses.replace(cfg.train, rng_seed=args.seed)
    trajectory_len = cfg.estimator.resample_len
    examples = _load_dataset(args.data, trajectory_len)
    spec = predictor.load_spec(args.spec, default_input_width=predictor.input_width())
    net = predictor.init_network(spec, trajectory_len, seed=train_cfg.rng_seed)
    X, Y = predictor.example_arrays(examples)
    net, history = predictor.train(net, (X, Y), train_cfg)
    out = Path(args.out)
    save_weights(net, out)
    cfg = dataclasses.replace(cfg, train=train_cfg)
    _write_snapshot(
        cfg,
        {"command": "train", "data": args.data, "epochs_run": len(history), "out": str(out)},
        out,
        is_dir=False,
    )
    return 0


def cmd_evolve(args) -> int:
    cfg = load_cli_config(args.config)
    ga_cfg = cfg.ga if args.seed is None else dataclasses.replace(cfg.ga, rng_seed=args.seed)
    trajectory_len = cfg.estimator.resample_len
    examples = _load_dataset(args.data, trajectory_len)
    eval_cfg = evolution.EvalConfig(
        train=cfg.train, estimator=cfg.estimator, trajectory_len=trajectory_len
    )
    best, history = evolution.evolve(ga_cfg, examples, eval_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = evolution.decode(best, len(examples[0].features), trajectory_len)
    seed = int(np.random.default_rng([ga_cfg.rng_seed, 2]).integers(2**31))
    net = predictor.init_network(spec, trajectory_len, seed=seed)
    X, Y = predictor.example_arrays(examples)
    net, _ = predictor.train(net, (X, Y), dataclasses.replace(cfg.train, rng_seed=seed))
    save_weights(net, out / "weights.json")
    predictor.save_spec(spec, out / "spec.json")
    _write_csv(
        out / "history.csv",
        "generation,best_total,mean_total,best_error1,best_error2,best_time",
        (
            f"{h.generation},{_F % h.best_total},{_F % h.mean_total},"
            f"{_F % h.best_error1},{_F % h.best_error2},{_F % h.best_time}"
            for h in history
        ),
    )
    cfg = dataclasses.replace(cfg, ga=ga_cfg)
    _write_snapshot(cfg, {"command": "evolve", "data": args.data, "out": str(out)}, out, is_dir=True)
    return 0


def cmd_estimate(args) -> int:
    cfg = load_cli_config(args.config)
    reference, _duration = load_prediction(args.reference)
    traj = load_trajectory(args.stream)
    replay_cfg = ReplayConfig(
        rate_hz=args.rate, noise_std=0.0, rng_seed=0, latency=LatencyModel.parse(args.latency)
    )
    _, steps = replay(traj, reference, replay_cfg, cfg.estimator)
    out = Path(args.out)
    _write_csv(
        out,
        "t,progress_pct,dtw_cost,knee_index,latency_ms",
        (
            f"{_F % s.t_s},{_F % s.progress_pred},{_F % s.dtw_cost},{s.knee_index},{_F % s.latency_ms}"
            for s in steps
        ),
    )
    _write_snapshot(
        cfg,
        {"command": "estimate", "rate_hz": args.rate, "reference": args.reference, "stream": args.stream},
        out,
        is_dir=False,
    )
    return 0


def _simulate_once(args, cfg: CliConfig):
    traj = load_trajectory(args.traj)
    net = load_weights(args.weights)
    pred, _example = predict_stride(net, traj)
    return traj, pred


def cmd_simulate(args) -> int:
    cfg = load_cli_config(args.config)
    traj, pred = _simulate_once(args, cfg)
    replay_cfg = ReplayConfig(
        rate_hz=args.rate,
        noise_std=args.noise_std,
        rng_seed=args.seed,
        latency=LatencyModel.parse(args.latency),
    )
    metrics, steps = replay(traj, pred, replay_cfg, cfg.estimator)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "rate_hz": args.rate,
        "noise_std": args.noise_std,
        "seed": args.seed,
        **metrics.to_dict(),
    }
    _write_json(out / "metrics.json", payload)
    _write_csv(
        out / "steps.csv",
        "t,progress_pred,progress_truth,knee_index,latency_ms",
        (
            f"{_F % s.t_s},{_F % s.progress_pred},{_F % s.progress_truth},{s.knee_index},{_F % s.latency_ms}"
            for s in steps
        ),
    )
    extras = {
        "command": "simulate",
        "traj": args.traj,
        "weights": args.weights,
        "rate_hz": args.rate,
        "noise_std": args.noise_std,
        "seed": args.seed,
        "latency": args.latency,
    }
    _write_snapshot(cfg, extras, out, is_dir=True)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_cli_config(args.config)
    traj, pred = _simulate_once(args, cfg)
    if args.std_step <= 0 or args.std_max < args.std_min:
        raise UsageError("bad noise grid: need std-step > 0 and std-max >= std-min", "")
    count = int(np.floor((args.std_max - args.std_min) / args.std_step + 1e-9)) + 1
    stds = [args.std_min + k * args.std_step for k in range(count)]
    base_cfg = ReplayConfig(
        rate_hz=args.rate,
        noise_std=0.0,
        rng_seed=args.seed,
        latency=LatencyModel.parse(args.latency),
    )
    report = noise_sweep(traj, pred, base_cfg, stds=stds, repeats=args.repeats, est_cfg=cfg.estimator)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "sweep.csv",
        "noise_std,progress_rmse_pct,accuracy",
        (
            f"{_F % r.noise_std},{_F % r.progress_rmse_pct},{_F % r.accuracy}"
            for r in report.rows
        ),
    )
    extras = {
        "command": "sweep-noise",
        "traj": args.traj,
        "weights": args.weights,
        "rate_hz": args.rate,
        "seed": args.seed,
        "std_min": args.std_min,
        "std_step": args.std_step,
        "std_max": args.std_max,
        "repeats": args.repeats,
        "latency": args.latency,
    }
    _write_snapshot(cfg, extras, out, is_dir=True)
    return 0


def cmd_report(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        raise MissingArtifacts(f"run directory not found: {root}")
    metric_files = sorted(root.glob("metrics.json")) + sorted(root.glob("*/metrics.json"))
    sweep_files = sorted(root.glob("sweep.csv")) + sorted(root.glob("*/sweep.csv"))
    if not metric_files and not sweep_files:
        raise MissingArtifacts(f"no metrics.json or sweep.csv under {root}")

    runs = []
    for path in metric_files:
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["_path"] = str(path.parent)
        runs.append(payload)
    runs.sort(key=lambda r: (r.get("rate_hz", 0), r.get("noise_std", 0)))

    lines = []
    if runs:
        header = (
            f"{'rate_hz':>8} {'noise':>6} {'thigh_rmse%':>12} {'knee_rmse%':>11} "
            f"{'r_thigh':>8} {'r_knee':>7} {'prog_rmse%':>11} {'accuracy':>9}"
        )
        lines.append(header)
        for r in runs:
            lines.append(
                f"{r.get('rate_hz', 0):>8g} {r.get('noise_std', 0):>6g} "
                f"{r['thigh_rmse_pct']:>12.3f} {r['knee_rmse_pct']:>11.3f} "
                f"{r['pearson_thigh']:>8.4f} {r['pearson_knee']:>7.4f} "
                f"{r['progress_rmse_pct']:>11.3f} {r['progress_accuracy']:>9.3f}"
            )
    sweeps = []
    for path in sweep_files:
        rows = path.read_text(encoding="utf-8").splitlines()[1:]
        values = [tuple(float(x) for x in row.split(",")) for row in rows if row]
        if not values:
            continue
        sweeps.append(
            {
                "_path": str(path.parent),
                "levels": len(values),
                "max_progress_rmse_pct": max(v[1] for v in values),
                "min_accuracy": min(v[2] for v in values),
            }
        )
        lines.append(
            f"sweep {path.parent.name or '.'}: {len(values)} levels, "
            f"max progress RMSE {sweeps[-1]['max_progress_rmse_pct']:.3f}%, "
            f"min accuracy {sweeps[-1]['min_accuracy']:.3f}"
        )
    print("\n".join(lines))

    summary = {"runs": runs, "sweeps": sweeps}
    out = Path(args.out) if args.out else root / "summary.json"
    _write_json(out, summary)
    return 0


if __name__ == "__main__":
    main()
