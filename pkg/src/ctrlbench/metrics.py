"""Learning curves: containers, CSV round-trips, smoothing and cross-run
averaging by linear interpolation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

CSV_HEADER = ["run_id", "algo", "env", "hidden", "env_steps", "wall_ms", "eval_return"]
AXES = {"env_steps": "env_steps", "steps": "env_steps", "wall_ms": "wall_ms", "wall": "wall_ms"}


@dataclass
class CurvePoint:
    env_steps: int
    wall_ms: int
    eval_return: float


@dataclass
class LearningCurve:
    points: List[CurvePoint] = field(default_factory=list)
    run_id: str = ""
    algo: str = ""
    env: str = ""
    hidden: int = 0

    def append(self, env_steps: int, wall_ms: int, eval_return: float):
        self.points.append(CurvePoint(int(env_steps), int(wall_ms), float(eval_return)))

    def __len__(self):
        return len(self.points)

    def sorted(self) -> "LearningCurve":
        pts = sorted(self.points, key=lambda p: (p.env_steps, p.wall_ms))
        return LearningCurve(pts, self.run_id, self.algo, self.env, self.hidden)

    def column(self, name: str) -> np.ndarray:
        dtype = np.float64 if name == "eval_return" else np.int64
        return np.array([getattr(p, name) for p in self.points], dtype=dtype)

    @property
    def env_steps(self):
        return self.column("env_steps")

    @property
    def wall_ms(self):
        return self.column("wall_ms")

    @property
    def returns(self):
        return self.column("eval_return")


def smooth(curve: LearningCurve, window: int) -> LearningCurve:
    """Trailing moving average of the returns; early points average what exists."""
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    y = curve.returns.tolist()
    ys = [math.fsum(y[max(0, i - window + 1):i + 1]) / (i + 1 - max(0, i - window + 1))
          for i in range(len(y))]
    pts = [CurvePoint(p.env_steps, p.wall_ms, float(v)) for p, v in zip(curve.points, ys)]
    return LearningCurve(pts, curve.run_id, curve.algo, curve.env, curve.hidden)


@dataclass
class AveragedCurve:
    axis: str
    grid: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int


def interpolate_average(curves: Sequence[LearningCurve], axis: str = "env_steps",
                        grid_size: int = 100) -> AveragedCurve:
    """Average K curves on a shared abscissa grid spanning their common range."""
    axis = AXES.get(axis, axis)
    if axis not in ("env_steps", "wall_ms"):
        raise ValueError(f"unknown axis {axis!r}")
    if not curves:
        raise ValueError("interpolate_average needs at least one curve")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    xs, ys = [], []
    for c in curves:
        if len(c) < 2:
            raise ValueError(f"curve {c.run_id!r} has {len(c)} points; need >= 2")
        x = c.column(axis).astype(np.float64)
        order = np.argsort(x, kind="stable")
        xs.append(x[order])
        ys.append(c.returns[order])
    lo = max(x[0] for x in xs)
    hi = min(x[-1] for x in xs)
    if not lo < hi:
        ranges = ", ".join(f"{c.run_id or i}: [{x[0]:g}, {x[-1]:g}]"
                           for i, (c, x) in enumerate(zip(curves, xs)))
        raise ValueError(f"curves share no {axis} range ({ranges})")
    grid = np.linspace(lo, hi, grid_size)
    stacked = np.stack([np.interp(grid, x, y) for x, y in zip(xs, ys)])
    return AveragedCurve(axis, grid, stacked.mean(axis=0), stacked.std(axis=0), len(curves))


def first_crossing(curve: LearningCurve, threshold: float) -> float:
    """Env steps at which the returns first reach ``threshold`` (inf if never)."""
    for p in curve.points:
        if p.eval_return >= threshold:
            return float(p.env_steps)
    return float("inf")


def write_curve_csv(path, curve: LearningCurve) -> None:
    rows = sorted(curve.points, key=lambda p: (p.env_steps, p.wall_ms))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in rows:
            w.writerow([curve.run_id, curve.algo, curve.env, curve.hidden,
                        p.env_steps, p.wall_ms, repr(p.eval_return)])


def read_curve_csv(path) -> List[LearningCurve]:
    curves: Dict[str, LearningCurve] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected curve header {header!r}")
        for row in reader:
            run_id, algo, env, hidden, steps, wall, ret = row
            c = curves.get(run_id)
            if c is None:
                c = curves[run_id] = LearningCurve([], run_id, algo, env, int(hidden))
            c.append(int(steps), int(wall), float(ret))
    return list(curves.values())
