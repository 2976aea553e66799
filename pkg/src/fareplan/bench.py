"""Benchmark harness: the all-algorithm suite and the line-search gap study."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .bayesopt import bo_loop
from .choice import eval_context
from .descent import (
    DescentConfig,
    MemoizedEvaluator,
    bf_cd,
    timed_sos2_cd,
)
from .model import Instance, from_json, to_json
from .sos2 import SearchDirection, generate_anchors, sos2_optimize

SOS2_VARIANTS = {
    "sos2cd": (False, False),
    "sos2cd-r": (True, False),
    "sos2cd-md": (False, True),
    "sos2cd-mdr": (True, True),
}
ALL_ALGORITHMS = ("bo", "bfcd", "sos2cd", "sos2cd-r", "sos2cd-md", "sos2cd-mdr")


@dataclass
class BenchRow:
    algorithm: str
    seed: int
    value: float
    seconds: float
    trajectories: int


def run_algorithm(instance: Instance, algorithm: str, seed: int,
                  time_limit: float | None = None,
                  max_trajectories: int | None = None,
                  ws_time: float = 0.0, ws_proc: str = "uniform",
                  D: int = 11, epsilon: float = 1e-4,
                  component_cap: int = 20,
                  heuristic_fallback: bool = False):
    """Run one optimizer; returns (fares, value, meta)."""
    t0 = time.monotonic()
    if algorithm == "bo":
        eval_budget = None if time_limit is not None else \
            (max_trajectories or 3) * 40
        fares, value, history = bo_loop(
            instance, time_limit=time_limit, eval_budget=eval_budget,
            seed=seed, component_cap=component_cap,
            heuristic_fallback=heuristic_fallback)
        meta = {"evaluations": len(history), "trajectories": 0}
    elif algorithm == "bfcd":
        ctx = eval_context(instance)
        rng = np.random.default_rng(seed)
        lo, hi = ctx.axis_bounds[:, 0], ctx.axis_bounds[:, 1]
        y0 = lo + rng.random(5) * (hi - lo)
        cfg = DescentConfig(epsilon=epsilon, component_cap=component_cap,
                            heuristic_fallback=heuristic_fallback)
        fares, value, log = bf_cd(instance, y0, cfg, time_limit=time_limit)
        meta = {"evaluations": log.evals, "trajectories": 1,
                "passes": log.passes}
    elif algorithm in SOS2_VARIANTS:
        random, multidim = SOS2_VARIANTS[algorithm]
        tau = time_limit if time_limit is not None else 1e12
        rep = timed_sos2_cd(
            instance, tau_ws=ws_time, tau=tau, random=random,
            multidim=multidim, warm_start_procedure=ws_proc, D=D, seed=seed,
            epsilon=epsilon, max_trajectories=max_trajectories,
            component_cap=component_cap, heuristic_fallback=heuristic_fallback)
        fares, value = rep.best_fares, rep.best_value
        meta = {"trajectories": len(rep.trajectories),
                "warm_starts": rep.warm_starts,
                "logs": [t.log for t in rep.trajectories]}
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    meta["seconds"] = time.monotonic() - t0
    return fares, value, meta


_WORKER_INSTANCE = None


def _bench_init(instance_json):
    global _WORKER_INSTANCE
    _WORKER_INSTANCE = from_json(instance_json)


def _bench_task(args):
    algorithm, seed, kwargs = args
    _, value, meta = run_algorithm(_WORKER_INSTANCE, algorithm, seed, **kwargs)
    return BenchRow(algorithm=algorithm, seed=seed, value=value,
                    seconds=meta["seconds"],
                    trajectories=meta.get("trajectories", 0))


def benchmark_suite(instance: Instance, seeds, time_limit: float | None = None,
                    max_trajectories: int | None = None,
                    algorithms=ALL_ALGORITHMS, threads: int = 1,
                    **kwargs) -> list[BenchRow]:
    """All algorithms on shared seeds; rows ordered (algorithm, seed)."""
    tasks = [
        (algo, int(seed),
         dict(time_limit=time_limit, max_trajectories=max_trajectories,
              **kwargs))
        for algo in algorithms for seed in seeds
    ]
    if threads <= 1:
        rows = []
        for t in tasks:
            global _WORKER_INSTANCE
            _WORKER_INSTANCE = instance
            rows.append(_bench_task(t))
        return rows
    import multiprocessing as mp
    with mp.get_context("spawn").Pool(
            threads, initializer=_bench_init,
            initargs=(to_json(instance),)) as pool:
        return pool.map(_bench_task, tasks)


def surplus_table(rows: list[BenchRow]) -> list[dict]:
    """Per-algorithm min/avg/max stated as surplus over the BO average."""
    bo_vals = [r.value for r in rows if r.algorithm == "bo"]
    baseline = float(np.mean(bo_vals)) if bo_vals else 0.0
    out = []
    for algo in dict.fromkeys(r.algorithm for r in rows):
        vals = np.array([r.value for r in rows if r.algorithm == algo])
        out.append({
            "algorithm": algo,
            "trials": len(vals),
            "min_surplus": float(vals.min() - baseline),
            "avg_surplus": float(vals.mean() - baseline),
            "max_surplus": float(vals.max() - baseline),
        })
    return out


def write_bench_csv(path, rows: list[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "seed", "value", "seconds",
                         "trajectories"])
        for r in rows:
            writer.writerow([r.algorithm, r.seed, f"{r.value!r}",
                             f"{r.seconds:.3f}", r.trajectories])


# ----------------------------------------------------------------------
# line-search gap study
# ----------------------------------------------------------------------

@dataclass
class GapRow:
    line: int
    axis: int
    sos2_value: float
    bf_value: float
    gap_pct: float


def _axis_anchor_count(ctx, axis: int, money_spacing: float,
                       discount_spacing: float) -> int:
    lo, hi = ctx.axis_bounds[axis]
    spacing = discount_spacing if axis == 4 else money_spacing
    return max(int(round((hi - lo) / spacing)), 1) + 1


def sos2_gap_study(instance: Instance, n_lines: int, seed: int = 0,
                   money_spacing: float = 1.0, discount_spacing: float = 0.1,
                   bf_money_step: float = 0.1, bf_discount_step: float = 0.01,
                   component_cap: int = 20) -> list[GapRow]:
    """Interpolated line search vs a dense grid scan on random lines.

    For each (point, axis) draw: anchor the interpolation at the coarse
    spacing, take the true objective at its argmax, and compare with the
    best of a fine grid scan along the same line (the scan also sees the
    start point, which the line search always keeps as an anchor).
    """
    ctx = eval_context(instance)
    rng = np.random.default_rng(seed)
    lo, hi = ctx.axis_bounds[:, 0], ctx.axis_bounds[:, 1]
    rows = []
    for line in range(n_lines):
        y0 = lo + rng.random(5) * (hi - lo)
        axis = int(rng.integers(0, 5))
        evaluator = MemoizedEvaluator(instance, component_cap=component_cap)
        direction = SearchDirection(kind="axis", axis=axis)
        D = _axis_anchor_count(ctx, axis, money_spacing, discount_spacing)
        anchors = generate_anchors(y0, direction, D, rng, ctx.axis_bounds)
        anchors.solutions = [evaluator(pt) for pt in anchors.points]
        y_star, _ = sos2_optimize(anchors, ctx, evaluator.weights)
        sos2_true = evaluator(y_star).welfare.total

        step = bf_discount_step if axis == 4 else bf_money_step
        n = max(int(round((hi[axis] - lo[axis]) / step)), 1) + 1
        bf_best = evaluator(y0).welfare.total
        for g in np.linspace(lo[axis], hi[axis], n):
            pt = y0.copy()
            pt[axis] = g
            val = evaluator(pt).welfare.total
            if val > bf_best:
                bf_best = val
        denom = max(abs(bf_best), 1e-12)
        rows.append(GapRow(
            line=line, axis=axis, sos2_value=sos2_true, bf_value=bf_best,
            gap_pct=100.0 * (bf_best - sos2_true) / denom,
        ))
    return rows


def write_gap_csv(path, rows: list[GapRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line", "axis", "sos2_argmax_W", "bf_line_max_W",
                         "gap_pct"])
        for r in rows:
            writer.writerow([r.line, r.axis, f"{r.sos2_value!r}",
                             f"{r.bf_value!r}", f"{r.gap_pct!r}"])
