"""Command line: ``ctrlbench train | report | evaluate``.

Exit codes: 0 success, 1 configuration or input error, 2 a run failed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config as C
from .harness import RunFailure, RunResult, evaluate_checkpoint, load_checkpoint, run, save_checkpoint
from .metrics import AXES, LearningCurve, interpolate_average, read_curve_csv, smooth, write_curve_csv
from .plot import line_chart

log = logging.getLogger("ctrlbench")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2
AGGREGATE_HEADER = ["algo", "hidden", "grid", "mean", "std", "n_runs"]
AXIS_LABELS = {"env_steps": "environment steps", "wall_ms": "wall time (ms)"}


class InputError(ValueError):
    pass


def _flag_overrides(args) -> Dict[str, object]:
    keys = {"algo": "algo", "env": "env", "hidden": "hidden", "workers": "workers",
            "max_steps": "max_steps", "seeds": "seeds", "out": "out", "window": "window"}
    out = {key: getattr(args, attr) for attr, key in keys.items() if getattr(args, attr, None) is not None}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise C.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if getattr(args, "parallel_seeds", False):
        out["parallel_seeds"] = True
    return out


def manifest_text(cfg: C.ExperimentConfig, runs: Sequence[Tuple[int, str, str]]) -> str:
    """Config echo, its content hash, and one line per seed (seed, curve file, status)."""
    echo = C.dumps(cfg)
    lines = ["# ctrlbench run manifest", f"config_hash = {C.content_hash(echo)}", "", "[config]",
             echo.rstrip("\n"), "", "[runs]"]
    lines += [f"seed {seed}: {path} {status}" for seed, path, status in runs]
    return "\n".join(lines) + "\n"


def _run_one(cfg: C.ExperimentConfig, seed: int) -> Tuple[RunResult, Optional[str]]:
    try:
        return run(cfg, seed), None
    except RunFailure as exc:
        return exc.result, str(exc)


def cmd_train(cfg: C.ExperimentConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.parallel_seeds and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=len(cfg.seeds)) as pool:
            outcomes = list(pool.map(lambda s: _run_one(cfg, s), cfg.seeds))
    else:
        outcomes = [_run_one(cfg, s) for s in cfg.seeds]
    runs, failed = [], 0
    for seed, (result, error) in zip(cfg.seeds, outcomes):
        name = f"{cfg.algo}-{cfg.env}-h{cfg.hidden}-s{seed}"
        write_curve_csv(os.path.join(cfg.out, name + ".csv"), result.curve)
        if error is None:
            save_checkpoint(os.path.join(cfg.out, name + ".npz"), result, cfg.normalize_state)
            status = "ok"
            log.info("seed %d: %d env steps, final eval %.2f", seed, result.total_env_steps,
                     result.curve.points[-1].eval_return if result.curve.points else float("nan"))
        else:
            failed += 1
            status = "failed"
            log.error("seed %d failed: %s", seed, error)
        runs.append((seed, name + ".csv", status))
    with open(os.path.join(cfg.out, "manifest.txt"), "w") as fh:
        fh.write(manifest_text(cfg, runs))
    return EXIT_RUN if failed else EXIT_OK


def _default_window(algo: str) -> int:
    return C.ALGO_DEFAULTS.get(algo, {}).get("window", (1, ""))[0]


def aggregate(curves: Sequence[LearningCurve], axis: str, window: Optional[int] = None,
              grid_size: int = 100):
    """Smooth every curve, then average per (algo, hidden) group.

    Returns ``[(algo, hidden, AveragedCurve)]`` in sorted group order.
    """
    if not curves:
        raise InputError("no curves to report")
    envs = sorted({c.env for c in curves})
    if len(envs) > 1:
        raise InputError(f"curves from several environments in one report: {', '.join(envs)}")
    groups: Dict[Tuple[str, int], List[LearningCurve]] = defaultdict(list)
    for c in curves:
        groups[(c.algo, c.hidden)].append(c)
    out = []
    for (algo, hidden), members in sorted(groups.items()):
        w = window or _default_window(algo)
        smoothed = [smooth(c.sorted(), w) for c in sorted(members, key=lambda c: c.run_id)]
        try:
            out.append((algo, hidden, interpolate_average(smoothed, axis, grid_size)))
        except ValueError as exc:
            raise InputError(f"{algo} h{hidden}: {exc}") from None
    return out


def cmd_report(paths: Sequence[str], axis: str, window: Optional[int], out_prefix: str,
               grid_size: int = 100) -> Tuple[str, str]:
    axis = AXES[axis]
    curves = []
    for p in sorted(paths):
        try:
            curves.extend(read_curve_csv(p))
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from None
    groups = aggregate(curves, axis, window, grid_size)
    csv_path, svg_path = out_prefix + ".csv", out_prefix + ".svg"
    if os.path.dirname(csv_path):
        os.makedirs(os.path.dirname(csv_path), exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for algo, hidden, avg in groups:
            for g, m, s in zip(avg.grid, avg.mean, avg.std):
                w.writerow([algo, hidden, repr(float(g)), repr(float(m)), repr(float(s)), avg.n_runs])
    series = [(f"{algo} h{hidden} (n={avg.n_runs})", avg.grid, avg.mean, hidden < 64)
              for algo, hidden, avg in groups]
    svg = line_chart(series, f"{curves[0].env}: deterministic evaluation return",
                     AXIS_LABELS[axis], "smoothed return", log_x=axis == "wall_ms")
    with open(svg_path, "w") as fh:
        fh.write(svg)
    return csv_path, svg_path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctrlbench", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every configured seed and write curves")
    t.add_argument("--config", help="file of 'key = value' lines; flags override it")
    t.add_argument("--algo", choices=C.ALGOS)
    t.add_argument("--env")
    t.add_argument("--hidden", type=int, choices=(16, 64))
    t.add_argument("--workers", type=int)
    t.add_argument("--max-steps", dest="max_steps")
    t.add_argument("--seeds", help="'0,1,2' or '0-9'")
    t.add_argument("--out")
    t.add_argument("--window", type=int)
    t.add_argument("--parallel-seeds", action="store_true", help="run seeds concurrently")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")

    r = sub.add_parser("report", help="smooth, average and plot curve files")
    r.add_argument("curves", nargs="+")
    r.add_argument("--axis", choices=("steps", "wall"), default="steps")
    r.add_argument("--window", type=int, help="smoothing window (default: per algorithm)")
    r.add_argument("--out", default="report", help="output prefix for .csv and .svg")
    r.add_argument("--grid-size", type=int, default=100)

    e = sub.add_parser("evaluate", help="run deterministic episodes from a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            cfg = C.parse_config(args.config, _flag_overrides(args))
            return cmd_train(cfg)
        if args.command == "report":
            if args.window is not None and args.window < 1:
                raise InputError("--window must be >= 1")
            csv_path, svg_path = cmd_report(args.curves, args.axis, args.window, args.out,
                                            args.grid_size)
            print(csv_path)
            print(svg_path)
            return EXIT_OK
        ckpt = load_checkpoint(args.checkpoint)
        returns = evaluate_checkpoint(ckpt, args.episodes, args.seed)
        print(f"{np.mean(returns):.4f}")
        return EXIT_OK
    except (C.ConfigError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
