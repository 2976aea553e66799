"""Non-cooperative fare setting and the alliance revenue split.

Without an alliance there are no discounts: each operator controls only
its own base fare and markup, routes sell at full price, and each operator
scores the whole network under its own priority weights.  Equilibria are
computed by iterated best response and certified by exhaustive grid
deviation checks.  The allocation rule splits any revenue surplus evenly
on top of the non-cooperative revenues, which is the two-player Nash
bargaining solution of the induced bargaining problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .choice import eval_context
from .descent import DescentConfig, MemoizedEvaluator, _sos2_cd_vec
from .model import FareVector, Instance, ObjectiveWeights

TRANSIT_AXES = (0, 1)
MOD_AXES = (2, 3)


@dataclass(frozen=True)
class OperatorWeights:
    pax: float
    rev: float
    vmt: float

    def as_objective(self) -> ObjectiveWeights:
        return ObjectiveWeights(pax=self.pax, rev=self.rev, vmt=self.vmt)


@dataclass
class AllocationResult:
    f_nc_transit: float
    f_nc_mod: float
    f_allied: float
    delta: float
    phi_transit: float
    phi_mod: float


@dataclass
class BestResponse:
    base: float
    markup: float
    value: float


@dataclass
class IBRRound:
    round: int
    operator: int
    obj_before: float
    obj_after: float
    base: float
    markup: float


@dataclass
class IBRResult:
    fares: FareVector
    objectives: dict[int, float]
    transcript: list[IBRRound]
    converged: bool
    rounds: int


def _operator_axes(ctx, operator_id: int) -> tuple[int, int]:
    if operator_id == ctx.transit_id:
        return TRANSIT_AXES
    if operator_id == ctx.mod_id:
        return MOD_AXES
    raise KeyError(f"unknown operator {operator_id}")


def _compose(ctx, operator_id, own, other) -> np.ndarray:
    """Joint fare vector from the two operators' (base, markup) pairs.

    The discount multiplier is pinned at its lower bound; it is inert in
    the non-cooperative regime because no discounts are ever activated.
    """
    y = np.empty(5)
    a0, a1 = _operator_axes(ctx, operator_id)
    o0, o1 = MOD_AXES if (a0, a1) == TRANSIT_AXES else TRANSIT_AXES
    y[a0], y[a1] = own
    y[o0], y[o1] = other
    y[4] = ctx.axis_bounds[4, 0]
    return y


def operator_objective(instance: Instance, operator_id: int,
                       own_fares, other_fares,
                       weights: OperatorWeights) -> float:
    """One operator's objective at fixed rival fares, full prices, no
    discounts.  The revenue term uses the full route price even on routes
    the operator only partly serves."""
    ctx = eval_context(instance)
    y = _compose(ctx, operator_id, own_fares, other_fares)
    bits = np.zeros(ctx.n_cats, dtype=np.int64)
    return ctx.evaluate(y, bits, weights.as_objective()).breakdown.total


def _grid_refine(ctx, y: np.ndarray, axes, weights: ObjectiveWeights,
                 money_step: float):
    """Exhaustive axis-grid passes from the incumbent until no grid point
    on either axis improves the objective."""
    y = y.copy()
    cur = float(ctx.batch_totals(y[None, :], weights)[0])
    improved = True
    while improved:
        improved = False
        for ax in axes:
            lo, hi = ctx.axis_bounds[ax]
            n = max(int(round((hi - lo) / money_step)), 1) + 1
            grid = np.linspace(lo, hi, n)
            Y = np.repeat(y[None, :], len(grid), axis=0)
            Y[:, ax] = grid
            vals = ctx.batch_totals(Y, weights)
            k = int(np.argmax(vals))
            if vals[k] > cur:
                y = Y[k]
                cur = float(vals[k])
                improved = True
    return y, cur


def best_response(instance: Instance, operator_id: int, other_fares,
                  weights: OperatorWeights,
                  config: DescentConfig | None = None,
                  seed: int | None = 0) -> BestResponse:
    """Maximize one operator's objective over its own two-axis box.

    Multi-start interpolated descent (3 seeded starts) restricted to the
    operator's axes, then exhaustive grid passes at the brute-force step
    around the incumbent to bound the interpolation error.
    """
    ctx = eval_context(instance)
    axes = _operator_axes(ctx, operator_id)
    w = weights.as_objective()
    cfg = config or DescentConfig()
    cfg_axes = DescentConfig(
        D=cfg.D, random=cfg.random, multidim=False, epsilon=cfg.epsilon,
        bf_money_step=cfg.bf_money_step, bf_discount_step=cfg.bf_discount_step,
        max_passes=cfg.max_passes, axes=axes,
    )
    rng = np.random.default_rng(seed)
    anchor = _compose(ctx, operator_id,
                      (ctx.axis_bounds[axes[0], 0], ctx.axis_bounds[axes[1], 0]),
                      other_fares)
    best_y, best_val = None, -np.inf
    for _ in range(3):
        y0 = anchor.copy()
        for ax in axes:
            lo, hi = ctx.axis_bounds[ax]
            y0[ax] = lo + rng.random() * (hi - lo)
        evaluator = MemoizedEvaluator(instance, weights=w)
        y, val, _ = _sos2_cd_vec(instance, y0, cfg_axes, evaluator,
                                 rng.spawn(1)[0])
        if val > best_val:
            best_y, best_val = y, val
    best_y, best_val = _grid_refine(ctx, best_y, axes, w, cfg.bf_money_step)
    return BestResponse(base=float(best_y[axes[0]]),
                        markup=float(best_y[axes[1]]), value=best_val)


def iterated_best_response(instance: Instance,
                           weights_by_op: dict[int, OperatorWeights],
                           epsilon: float = 1e-4,
                           seed: int | None = 0,
                           max_rounds: int = 50,
                           config: DescentConfig | None = None) -> IBRResult:
    """Alternating best responses until neither operator improves by more
    than epsilon; transit moves first each round.

    Convergence is not guaranteed in general, so the round cap guards
    against oscillation; hitting it returns the last iterate flagged
    ``converged=False``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    ctx = eval_context(instance)
    rng = np.random.default_rng(seed)
    order = (ctx.transit_id, ctx.mod_id)
    fares: dict[int, tuple[float, float]] = {}
    for op in order:
        a0, a1 = _operator_axes(ctx, op)
        fares[op] = (
            float(ctx.axis_bounds[a0, 0] + rng.random()
                  * (ctx.axis_bounds[a0, 1] - ctx.axis_bounds[a0, 0])),
            float(ctx.axis_bounds[a1, 0] + rng.random()
                  * (ctx.axis_bounds[a1, 1] - ctx.axis_bounds[a1, 0])),
        )
    obj_cur = {
        op: operator_objective(instance, op, fares[op], fares[_other(order, op)],
                               weights_by_op[op])
        for op in order
    }
    obj_prev = {op: -np.inf for op in order}
    transcript: list[IBRRound] = []
    rounds = 0
    converged = False
    while rounds < max_rounds:
        rounds += 1
        for op in order:
            obj_prev[op] = obj_cur[op]
            br = best_response(instance, op, fares[_other(order, op)],
                               weights_by_op[op], config=config,
                               seed=int(rng.integers(0, 2**31)))
            before = obj_cur[op]
            if br.value > obj_cur[op]:
                obj_cur[op] = br.value
                fares[op] = (br.base, br.markup)
            transcript.append(IBRRound(
                round=rounds, operator=op, obj_before=before,
                obj_after=obj_cur[op], base=fares[op][0], markup=fares[op][1],
            ))
        if max(obj_cur[op] - obj_prev[op] for op in order) <= epsilon:
            converged = True
            break
    tr, mod = order
    fv = FareVector(
        base={tr: fares[tr][0], mod: fares[mod][0]},
        markup={tr: fares[tr][1], mod: fares[mod][1]},
        discount=float(ctx.axis_bounds[4, 0]),
    )
    return IBRResult(fares=fv, objectives=dict(obj_cur), transcript=transcript,
                     converged=converged, rounds=rounds)


def _other(order, op):
    return order[1] if op == order[0] else order[0]


@dataclass
class NEVerification:
    is_equilibrium: bool
    worst_operator: int | None
    worst_gain: float
    worst_point: tuple[float, float] | None


def verify_ne(instance: Instance, fares: FareVector,
              weights_by_op: dict[int, OperatorWeights],
              grid_step: float = 0.05, epsilon: float = 1e-4) -> NEVerification:
    """Check that no unilateral grid deviation improves either operator's
    objective by more than epsilon."""
    ctx = eval_context(instance)
    worst_gain = -np.inf
    worst_op, worst_pt = None, None
    for op in (ctx.transit_id, ctx.mod_id):
        axes = _operator_axes(ctx, op)
        own = (fares.base[op], fares.markup[op])
        other_id = ctx.mod_id if op == ctx.transit_id else ctx.transit_id
        other = (fares.base[other_id], fares.markup[other_id])
        w = weights_by_op[op].as_objective()
        y = _compose(ctx, op, own, other)
        cur = float(ctx.batch_totals(y[None, :], w)[0])
        g0 = _step_grid(ctx.axis_bounds[axes[0]], grid_step)
        g1 = _step_grid(ctx.axis_bounds[axes[1]], grid_step)
        B0, B1 = np.meshgrid(g0, g1, indexing="ij")
        Y = np.repeat(y[None, :], B0.size, axis=0)
        Y[:, axes[0]] = B0.ravel()
        Y[:, axes[1]] = B1.ravel()
        vals = ctx.batch_totals(Y, w)
        k = int(np.argmax(vals))
        gain = float(vals[k] - cur)
        if gain > worst_gain:
            worst_gain = gain
            worst_op = op
            worst_pt = (float(Y[k, axes[0]]), float(Y[k, axes[1]]))
    return NEVerification(
        is_equilibrium=worst_gain <= epsilon,
        worst_operator=worst_op,
        worst_gain=worst_gain,
        worst_point=worst_pt,
    )


def _step_grid(bounds, step):
    lo, hi = bounds
    n = max(int(round((hi - lo) / step)), 1) + 1
    return np.linspace(lo, hi, n)


def allocate(f_nc_transit: float, f_nc_mod: float,
             f_allied: float) -> AllocationResult:
    """Revenue allocation: split the surplus evenly when the alliance out
    earns non-cooperation, otherwise make the mod operator whole and give
    transit the remainder."""
    if min(f_nc_transit, f_nc_mod, f_allied) < 0:
        raise ValueError("revenues must be non-negative")
    delta = f_allied - (f_nc_transit + f_nc_mod)
    if delta >= 0:
        phi_tr = f_nc_transit + delta / 2
        phi_mod = f_nc_mod + delta / 2
    else:
        phi_mod = f_nc_mod
        phi_tr = f_allied - f_nc_mod
    return AllocationResult(
        f_nc_transit=f_nc_transit, f_nc_mod=f_nc_mod, f_allied=f_allied,
        delta=delta, phi_transit=phi_tr, phi_mod=phi_mod,
    )
