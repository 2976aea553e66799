"""Coordinate descent drivers: interpolated line search, brute-force line
search, and the timed multi-trajectory runner with warm starts.

Every accepted move strictly improves the true objective, so each
trajectory's accepted-value sequence is nondecreasing; a full pass that
improves by at most ``epsilon`` terminates the trajectory.  Second-stage
evaluations are memoized per trajectory on the fare point quantized at a
1e-9 quantum, since anchors recur across passes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .choice import eval_context
from .model import FareVector, Instance, ObjectiveWeights
from .second_stage import (
    ComponentTooLarge,
    SecondStageSolution,
    solve_exact,
    solve_heuristic,
)
from .sos2 import (
    DegenerateRange,
    LAMBDA_AXIS,
    MOD_PLANE,
    SearchDirection,
    TRANSIT_PLANE,
    generate_anchors,
    sos2_optimize,
)

MEMO_QUANTUM = 1e-9
ALL_AXES = (0, 1, 2, 3, 4)


@dataclass
class DescentConfig:
    D: int = 11
    random: bool = False
    multidim: bool = False
    epsilon: float = 1e-4
    bf_discount_step: float = 0.01
    bf_money_step: float = 0.01
    seed: int | None = None
    component_cap: int = 20
    heuristic_fallback: bool = False
    max_passes: int = 1000
    axes: tuple[int, ...] | None = None  # restrict single-axis directions

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.bf_discount_step <= 0 or self.bf_money_step <= 0:
            raise ValueError("grid steps must be > 0")
        if self.D < 2:
            raise ValueError("need at least two anchors per line")


@dataclass
class TrajectoryLog:
    accepted: list[tuple[np.ndarray, float]] = field(default_factory=list)
    eval_counts: dict[str, int] = field(default_factory=dict)
    pass_seconds: list[float] = field(default_factory=list)
    passes: int = 0
    evals: int = 0
    hit_pass_cap: bool = False


class MemoizedEvaluator:
    """solve_exact wrapper with per-trajectory memoization.

    ``weights`` overrides the instance objective (used by the operator
    game); a heuristic fallback can absorb oversized coupling components.
    """

    def __init__(self, instance: Instance,
                 weights: ObjectiveWeights | None = None,
                 component_cap: int = 20,
                 heuristic_fallback: bool = False,
                 heuristic_seed: int = 0):
        self.instance = instance
        self.ctx = eval_context(instance)
        self.weights = self.ctx.weights if weights is None else weights
        self.component_cap = component_cap
        self.heuristic_fallback = heuristic_fallback
        self.heuristic_seed = heuristic_seed
        self.memo: dict[tuple, SecondStageSolution] = {}
        self.solves = 0

    def key(self, y: np.ndarray) -> tuple:
        return tuple(np.round(np.asarray(y) / MEMO_QUANTUM).astype(np.int64))

    def __call__(self, y: np.ndarray) -> SecondStageSolution:
        k = self.key(y)
        sol = self.memo.get(k)
        if sol is None:
            try:
                sol = solve_exact(self.instance, np.asarray(y, dtype=float),
                                  weights=self.weights,
                                  component_cap=self.component_cap)
            except ComponentTooLarge:
                if not self.heuristic_fallback:
                    raise
                sol = solve_heuristic(self.instance, np.asarray(y, dtype=float),
                                      seed=self.heuristic_seed,
                                      weights=self.weights)
            self.memo[k] = sol
            self.solves += 1
        return sol


def search_directions(random: bool, multidim: bool,
                      rng: np.random.Generator | None = None,
                      axes: tuple[int, ...] | None = None) -> list[SearchDirection]:
    """Ordered directions for one descent pass.

    Axis mode cycles the five fare dimensions; multidimensional mode uses
    the two operator planes plus the discount axis.  ``random`` shuffles
    the order, fresh per call.
    """
    if multidim:
        dirs = [
            SearchDirection(kind="plane", plane=TRANSIT_PLANE),
            SearchDirection(kind="plane", plane=MOD_PLANE),
            SearchDirection(kind="axis", axis=LAMBDA_AXIS),
        ]
    else:
        dirs = [SearchDirection(kind="axis", axis=i)
                for i in (ALL_AXES if axes is None else axes)]
    if random:
        if rng is None:
            raise ValueError("random direction order needs an rng")
        dirs = [dirs[i] for i in rng.permutation(len(dirs))]
    return dirs


def _clip(ctx, y):
    return np.minimum(np.maximum(np.asarray(y, dtype=float),
                                 ctx.axis_bounds[:, 0]), ctx.axis_bounds[:, 1])


def _sos2_cd_vec(instance: Instance, y0: np.ndarray, config: DescentConfig,
                 evaluator: MemoizedEvaluator,
                 rng: np.random.Generator,
                 clock=time.monotonic):
    ctx = evaluator.ctx
    y = _clip(ctx, y0)
    log = TrajectoryLog()
    obj_cur = evaluator(y).welfare.total
    log.accepted.append((y.copy(), obj_cur))
    obj_prev = -np.inf
    while obj_cur - obj_prev > config.epsilon:
        if log.passes >= config.max_passes:
            log.hit_pass_cap = True
            break
        log.passes += 1
        t0 = clock()
        obj_prev = obj_cur
        for direction in search_directions(config.random, config.multidim,
                                           rng, config.axes):
            try:
                anchors = generate_anchors(y, direction, config.D, rng,
                                           ctx.axis_bounds)
            except DegenerateRange:
                continue
            before = evaluator.solves
            anchors.solutions = [evaluator(pt) for pt in anchors.points]
            y_star, _ = sos2_optimize(anchors, ctx, evaluator.weights)
            sol_star = evaluator(y_star)
            label = direction.label()
            log.eval_counts[label] = (log.eval_counts.get(label, 0)
                                       + evaluator.solves - before)
            if sol_star.welfare.total > obj_cur:
                y = _clip(ctx, y_star)
                obj_cur = sol_star.welfare.total
                log.accepted.append((y.copy(), obj_cur))
        log.pass_seconds.append(clock() - t0)
    log.evals = evaluator.solves
    return y, obj_cur, log


def sos2_cd(instance: Instance, y0: FareVector | np.ndarray,
            config: DescentConfig | None = None,
            weights: ObjectiveWeights | None = None,
            rng: np.random.Generator | None = None,
            clock=time.monotonic):
    """One interpolated coordinate-descent trajectory.

    Returns (fares, objective, log).  The trajectory terminates when a
    full direction pass improves the objective by at most epsilon.
    """
    config = config or DescentConfig()
    ctx = eval_context(instance)
    y0v = y0 if isinstance(y0, np.ndarray) else ctx.fares_to_vec(y0)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    evaluator = MemoizedEvaluator(
        instance, weights=weights, component_cap=config.component_cap,
        heuristic_fallback=config.heuristic_fallback,
    )
    y, w, log = _sos2_cd_vec(instance, y0v, config, evaluator, rng, clock)
    return ctx.vec_to_fares(y), w, log


def _axis_grid(ctx, axis: int, config: DescentConfig) -> np.ndarray:
    lo, hi = ctx.axis_bounds[axis]
    step = config.bf_discount_step if axis == LAMBDA_AXIS else config.bf_money_step
    n = max(int(round((hi - lo) / step)), 1) + 1
    return np.linspace(lo, hi, n)


def bf_cd(instance: Instance, y0: FareVector | np.ndarray,
          config: DescentConfig | None = None,
          time_limit: float | None = None,
          weights: ObjectiveWeights | None = None,
          clock=time.monotonic):
    """Brute-force coordinate descent: each line search evaluates the whole
    axis grid at the configured granularity and takes the best anchor.

    Honors ``time_limit`` by returning the best point found so far.
    """
    config = config or DescentConfig()
    ctx = eval_context(instance)
    y = _clip(ctx, y0 if isinstance(y0, np.ndarray) else ctx.fares_to_vec(y0))
    evaluator = MemoizedEvaluator(
        instance, weights=weights, component_cap=config.component_cap,
        heuristic_fallback=config.heuristic_fallback,
    )
    deadline = None if time_limit is None else clock() + time_limit
    log = TrajectoryLog()
    obj_cur = evaluator(y).welfare.total
    log.accepted.append((y.copy(), obj_cur))
    obj_prev = -np.inf
    axes = config.axes if config.axes is not None else ALL_AXES
    expired = False
    while obj_cur - obj_prev > config.epsilon and not expired:
        if log.passes >= config.max_passes:
            log.hit_pass_cap = True
            break
        log.passes += 1
        t0 = clock()
        obj_prev = obj_cur
        for axis in axes:
            best_val, best_pt = -np.inf, None
            for g in _axis_grid(ctx, axis, config):
                if deadline is not None and clock() >= deadline:
                    expired = True
                    break
                pt = y.copy()
                pt[axis] = g
                val = evaluator(pt).welfare.total
                if val > best_val:
                    best_val, best_pt = val, pt
            label = f"axis{axis}"
            log.eval_counts[label] = log.eval_counts.get(label, 0)
            if best_pt is not None and best_val > obj_cur:
                y = best_pt
                obj_cur = best_val
                log.accepted.append((y.copy(), obj_cur))
            if expired:
                break
        log.pass_seconds.append(clock() - t0)
    log.evals = evaluator.solves
    return ctx.vec_to_fares(y), obj_cur, log


@dataclass
class TrajectoryRecord:
    start: np.ndarray
    final: np.ndarray
    value: float
    seconds: float
    counted: bool
    log: TrajectoryLog


@dataclass
class TimedRunReport:
    best_fares: FareVector
    best_value: float
    trajectories: list[TrajectoryRecord]
    warm_starts: int
    elapsed: float


def _uniform_point(ctx, rng) -> np.ndarray:
    lo = ctx.axis_bounds[:, 0]
    hi = ctx.axis_bounds[:, 1]
    return lo + rng.random(5) * (hi - lo)


def timed_sos2_cd(instance: Instance, tau_ws: float, tau: float,
                  random: bool = True, multidim: bool = True,
                  warm_start_procedure: str = "uniform",
                  D: int = 11, seed: int | None = None,
                  epsilon: float = 1e-4,
                  max_trajectories: int | None = None,
                  component_cap: int = 20,
                  heuristic_fallback: bool = False,
                  bo_kappa: float = 2.0,
                  clock=time.monotonic) -> TimedRunReport:
    """Multi-trajectory driver with a warm-start phase and time budgets.

    Phase one draws candidate starts with ``warm_start_procedure``
    ("uniform" or "bo") until ``tau_ws`` elapses; candidates finishing
    after the budget are dropped.  Phase two launches trajectories from
    the best unused warm start (uniform random once exhausted) until
    ``tau`` elapses; a trajectory whose completion overruns the budget is
    discarded rather than truncated.  ``max_trajectories`` optionally
    bounds phase two by count, which makes runs reproducible without a
    deterministic clock.
    """
    if tau_ws < 0 or tau <= 0:
        raise ValueError("need tau_ws >= 0 and tau > 0")
    ctx = eval_context(instance)
    rng = np.random.default_rng(seed)
    config = DescentConfig(D=D, random=random, multidim=multidim,
                           epsilon=epsilon, component_cap=component_cap,
                           heuristic_fallback=heuristic_fallback)

    def solve_at(y):
        ev = MemoizedEvaluator(instance, component_cap=component_cap,
                               heuristic_fallback=heuristic_fallback)
        return ev(y).welfare.total

    t_start = clock()
    # fallback result in case no trajectory finishes inside the budget
    y_best = _uniform_point(ctx, rng)
    w_best = solve_at(y_best)

    pool: list[tuple[float, int, np.ndarray]] = []
    n_ws = 0
    if tau_ws > 0:
        bo_hist_x: list[np.ndarray] = []
        bo_hist_w: list[float] = []
        if warm_start_procedure == "bo":
            from .bayesopt import BOSuggester
            suggester = BOSuggester(ctx.axis_bounds, kappa=bo_kappa,
                                    rng=rng.spawn(1)[0])
        while clock() - t_start < tau_ws:
            if warm_start_procedure == "bo" and bo_hist_x:
                y = suggester.ask(np.array(bo_hist_x), np.array(bo_hist_w))
            else:
                y = _uniform_point(ctx, rng)
            w = solve_at(y)
            if warm_start_procedure == "bo":
                bo_hist_x.append(y)
                bo_hist_w.append(w)
            if clock() - t_start <= tau_ws:
                pool.append((w, n_ws, y))
                n_ws += 1

    records: list[TrajectoryRecord] = []
    remaining = tau
    while remaining > 0:
        if max_trajectories is not None and len(records) >= max_trajectories:
            break
        if pool:
            # consume warm starts in decreasing objective order
            k = max(range(len(pool)), key=lambda i: (pool[i][0], -pool[i][1]))
            _, _, y0 = pool.pop(k)
        else:
            y0 = _uniform_point(ctx, rng)
        t1 = clock()
        evaluator = MemoizedEvaluator(instance, component_cap=component_cap,
                                      heuristic_fallback=heuristic_fallback)
        y_hat, w_hat, log = _sos2_cd_vec(instance, y0, config, evaluator,
                                         rng.spawn(1)[0], clock)
        dt = clock() - t1
        remaining -= dt
        counted = remaining >= 0
        records.append(TrajectoryRecord(start=y0, final=y_hat, value=w_hat,
                                        seconds=dt, counted=counted, log=log))
        if counted and w_hat > w_best:
            y_best, w_best = y_hat, w_hat

    return TimedRunReport(
        best_fares=ctx.vec_to_fares(y_best),
        best_value=w_best,
        trajectories=records,
        warm_starts=n_ws,
        elapsed=clock() - t_start,
    )
