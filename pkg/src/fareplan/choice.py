"""Closed-form prices, logit market shares, welfare and operator revenues.

All operations are pure functions of immutable inputs.  The heavy lifting
goes through an :class:`EvalContext`, a flattened numpy view of an instance
that is built once and cached on the instance.  Axis order everywhere is

    0: transit base fare   1: transit markup
    2: mod base fare       3: mod markup
    4: discount multiplier

Utilities are max-shifted before exponentiation so share normalization
holds to 1e-12 regardless of utility scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import (
    FareVector,
    Instance,
    ObjectiveWeights,
    Operator,
    PassengerType,
    Route,
)

AXIS_NAMES = ("beta0_tr", "betaDelta_tr", "beta0_mod", "betaDelta_mod", "Lambda")


@dataclass
class WelfareBreakdown:
    """The three welfare terms and their weighted total."""

    pax_term: float
    rev_term: float
    vmt_term: float
    total: float


@dataclass
class PriceTable:
    """Customer-facing price per route."""

    route_ids: tuple[int, ...]
    values: np.ndarray

    def __getitem__(self, route_id: int) -> float:
        return float(self.values[self.route_ids.index(route_id)])

    def as_dict(self) -> dict[int, float]:
        return {rid: float(v) for rid, v in zip(self.route_ids, self.values)}


@dataclass
class ShareTable:
    """Market share per (passenger type, route) plus each type's outside share."""

    pairs: tuple[tuple[int, int], ...]  # (type_id, route_id) in flat order
    values: np.ndarray
    outside_type_ids: tuple[int, ...]
    outside: np.ndarray

    def share(self, type_id: int, route_id: int) -> float:
        return float(self.values[self.pairs.index((type_id, route_id))])

    def outside_share(self, type_id: int) -> float:
        return float(self.outside[self.outside_type_ids.index(type_id)])

    def as_dict(self) -> dict:
        return {
            "shares": {f"{t}:{r}": float(v)
                       for (t, r), v in zip(self.pairs, self.values)},
            "outside": {str(t): float(v)
                        for t, v in zip(self.outside_type_ids, self.outside)},
        }


class EvalContext:
    """Flattened numpy arrays for one instance.

    Routes, categories and types are indexed by their position in the
    id-sorted order; options (type, route) pairs are flattened, grouped by
    type, so per-type reductions run as ``reduceat`` calls.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.transit_id = instance.transit_id
        self.mod_id = instance.mod_id

        self.route_ids = tuple(sorted(r.id for r in instance.routes))
        self.route_pos = {rid: i for i, rid in enumerate(self.route_ids)}
        self.cat_ids = tuple(sorted(c.id for c in instance.categories))
        self.cat_pos = {cid: i for i, cid in enumerate(self.cat_ids)}
        self.n_routes = len(self.route_ids)
        self.n_cats = len(self.cat_ids)

        # sigma_r(beta) = route_mat @ (beta0_tr, betaDelta_tr, beta0_mod, betaDelta_mod)
        self.route_mat = np.zeros((self.n_routes, 4))
        self.route_cat = np.full(self.n_routes, -1, dtype=np.int64)
        for rid in self.route_ids:
            r = instance.route_by_id(rid)
            i = self.route_pos[rid]
            if self.transit_id in r.operators_served:
                self.route_mat[i, 0] = 1.0
                self.route_mat[i, 1] = r.distance_by_operator[self.transit_id]
            if self.mod_id in r.operators_served:
                self.route_mat[i, 2] = 1.0
                self.route_mat[i, 3] = r.distance_by_operator[self.mod_id]
            if r.category is not None:
                self.route_cat[i] = self.cat_pos[r.category]

        types = sorted(instance.passenger_types, key=lambda t: t.id)
        self.type_ids = tuple(t.id for t in types)
        self.type_pos = {tid: i for i, tid in enumerate(self.type_ids)}
        self.n_types = len(types)
        self.N = np.array([t.count for t in types])
        self.alpha = np.array([t.price_sensitivity for t in types])
        self.u0 = np.array([t.u_outside for t in types])
        self.d0 = np.array([t.drive_distance for t in types])
        self.towns = tuple(t.town for t in types)

        opt_type, opt_route, opt_u = [], [], []
        starts = [0]
        for ti, t in enumerate(types):
            for rid in sorted(t.route_ids):
                opt_type.append(ti)
                opt_route.append(self.route_pos[rid])
                opt_u.append(t.u_nonmonetary[rid])
            starts.append(len(opt_type))
        self.opt_type = np.array(opt_type, dtype=np.int64)
        self.opt_route = np.array(opt_route, dtype=np.int64)
        self.opt_u = np.array(opt_u)
        self.type_start = np.array(starts, dtype=np.int64)
        self.n_opts = len(opt_type)
        self.opt_alpha = self.alpha[self.opt_type]
        self.opt_N = self.N[self.opt_type]
        self.opt_cat = self.route_cat[self.opt_route]
        self.pairs = tuple(
            (self.type_ids[ti], self.route_ids[ri])
            for ti, ri in zip(opt_type, opt_route)
        )
        # constant part of the PAX term: sum_i N_i (u_i0 + sum_r u_ir)
        self.pax_const = float(self.N @ self.u0 + self.opt_N @ self.opt_u)

        b = instance.bounds
        self.axis_bounds = np.array([
            [b.base_min, b.base_max],
            [b.markup_min, b.markup_max],
            [b.base_min, b.base_max],
            [b.markup_min, b.markup_max],
            [b.discount_min, b.discount_max],
        ])
        self.weights = instance.weights

    # -- fare vector conversions ---------------------------------------

    def fares_to_vec(self, fares: FareVector) -> np.ndarray:
        return np.array([
            fares.base[self.transit_id],
            fares.markup[self.transit_id],
            fares.base[self.mod_id],
            fares.markup[self.mod_id],
            fares.discount,
        ])

    def vec_to_fares(self, y: Sequence[float]) -> FareVector:
        return FareVector(
            base={self.transit_id: float(y[0]), self.mod_id: float(y[2])},
            markup={self.transit_id: float(y[1]), self.mod_id: float(y[3])},
            discount=float(y[4]),
        )

    def activation_bits(self, activations) -> np.ndarray:
        """Normalize a mapping / sequence of activations to a 0-1 array."""
        bits = np.zeros(self.n_cats, dtype=np.int64)
        if activations is None:
            return bits
        if isinstance(activations, Mapping):
            for cid, on in activations.items():
                bits[self.cat_pos[cid]] = 1 if on else 0
            return bits
        arr = np.asarray(activations)
        if arr.shape != (self.n_cats,):
            raise ValueError(
                f"expected {self.n_cats} activation flags, got shape {arr.shape}"
            )
        bits[:] = arr != 0
        return bits

    # -- pricing --------------------------------------------------------

    def sigma(self, y: np.ndarray) -> np.ndarray:
        """Non-discounted route prices; y may be (5,) or (B, 5)."""
        return np.asarray(y)[..., :4] @ self.route_mat.T

    def route_prices(self, y: np.ndarray, bits: np.ndarray) -> np.ndarray:
        sig = self.sigma(y)
        factor = np.ones(self.n_routes)
        de = self.route_cat >= 0
        factor[de] = 1.0 - y[4] * bits[self.route_cat[de]]
        return sig * factor

    # -- shares ----------------------------------------------------------

    def grouped_softmax(self, util_flat: np.ndarray):
        """Per-type logit shares from flat option utilities.

        Returns (s_flat, s0).  Works on (J,) or (B, J) utility arrays.
        """
        starts = self.type_start[:-1]
        m = np.maximum.reduceat(util_flat, starts, axis=-1)
        m = np.maximum(m, self.u0)
        e = np.exp(util_flat - m[..., self.opt_type])
        e0 = np.exp(self.u0 - m)
        denom = e0 + np.add.reduceat(e, starts, axis=-1)
        return e / denom[..., self.opt_type], e0 / denom

    def evaluate(self, y: np.ndarray, bits: np.ndarray,
                 weights: ObjectiveWeights | None = None) -> "Evaluation":
        """Full closed-form evaluation at fares ``y`` and activations ``bits``."""
        w = self.weights if weights is None else weights
        p = self.route_prices(y, bits)
        p_opt = p[self.opt_route]
        util = self.opt_u + self.opt_alpha * p_opt
        s, s0 = self.grouped_softmax(util)
        pax = self.pax_const + float((self.opt_N * self.opt_alpha) @ p_opt)
        rev = float(self.opt_N @ (p_opt * s))
        vmt = float((self.N * self.d0) @ s0)
        total = w.pax * pax + w.rev * rev - w.vmt * vmt
        return Evaluation(
            breakdown=WelfareBreakdown(pax, rev, vmt, total),
            prices=p, shares=s, outside=s0, bits=bits,
        )

    def per_type_totals(self, y: np.ndarray, bits: np.ndarray,
                        weights: ObjectiveWeights | None = None) -> np.ndarray:
        """Each passenger type's weighted objective contribution."""
        w = self.weights if weights is None else weights
        p = self.route_prices(y, bits)[self.opt_route]
        util = self.opt_u + self.opt_alpha * p
        s, s0 = self.grouped_softmax(util)
        starts = self.type_start[:-1]
        per_opt_pax = self.opt_N * self.opt_alpha * p
        per_opt_rev = self.opt_N * p * s
        pax = self.N * self.u0 + np.add.reduceat(
            self.opt_N * self.opt_u + per_opt_pax, starts)
        rev = np.add.reduceat(per_opt_rev, starts)
        vmt = self.N * self.d0 * s0
        return w.pax * pax + w.rev * rev - w.vmt * vmt

    def batch_totals(self, Y: np.ndarray, weights: ObjectiveWeights | None = None,
                     chunk: int = 512) -> np.ndarray:
        """Weighted totals at activations = 0 for a (B, 5) batch of fares.

        Used by grid scans: with no discounts active, prices are just sigma.
        """
        w = self.weights if weights is None else weights
        Y = np.asarray(Y, dtype=float)
        out = np.empty(len(Y))
        wN = self.N * self.d0
        wA = self.opt_N * self.opt_alpha
        for lo in range(0, len(Y), chunk):
            yb = Y[lo:lo + chunk]
            p = self.sigma(yb)[:, self.opt_route]
            util = self.opt_u + self.opt_alpha * p
            s, s0 = self.grouped_softmax(util)
            pax = self.pax_const + p @ wA
            rev = (p * s) @ self.opt_N
            vmt = s0 @ wN
            out[lo:lo + chunk] = w.pax * pax + w.rev * rev - w.vmt * vmt
        return out


@dataclass
class Evaluation:
    breakdown: WelfareBreakdown
    prices: np.ndarray
    shares: np.ndarray
    outside: np.ndarray
    bits: np.ndarray


def eval_context(instance: Instance) -> EvalContext:
    ctx = instance.__dict__.get("_eval_ctx")
    if ctx is None:
        ctx = EvalContext(instance)
        instance.__dict__["_eval_ctx"] = ctx
    return ctx


# ----------------------------------------------------------------------
# public operations on domain objects
# ----------------------------------------------------------------------

def base_price(route: Route, fares: FareVector) -> float:
    """sigma_r: the non-discounted route price."""
    return sum(
        fares.base[k] + route.distance_by_operator[k] * fares.markup[k]
        for k in route.operators_served
    )


def customer_price(route: Route, fares: FareVector,
                   activations: Mapping[int, bool] | None) -> float:
    sigma = base_price(route, fares)
    if route.category is None:
        return sigma
    active = bool(activations and activations.get(route.category, False))
    return (1.0 - fares.discount) * sigma if active else sigma


def shares(ptype: PassengerType, prices: Mapping[int, float]):
    """MNL shares for one passenger type.

    Returns (share per route id, outside share).  Utilities are max-shifted
    before exponentiation.
    """
    rids = sorted(ptype.route_ids)
    util = np.array([
        ptype.u_nonmonetary[r] + ptype.price_sensitivity * prices[r] for r in rids
    ])
    m = max(float(util.max()), ptype.u_outside)
    e = np.exp(util - m)
    e0 = np.exp(ptype.u_outside - m)
    denom = e0 + e.sum()
    return {r: float(v / denom) for r, v in zip(rids, e)}, float(e0 / denom)


def gamma(ptype: PassengerType, route: Route, fares: FareVector,
          discount_applied: bool) -> float:
    """Attractiveness ratio of the outside option to one route."""
    sigma = base_price(route, fares)
    price = (1.0 - fares.discount) * sigma if discount_applied else sigma
    return float(np.exp(
        ptype.u_outside - ptype.u_nonmonetary[route.id]
        - ptype.price_sensitivity * price
    ))


def welfare(instance: Instance, fares: FareVector,
            activations=None,
            weights: ObjectiveWeights | None = None) -> WelfareBreakdown:
    """Objective value at the given fares and discount activations.

    The passenger term sums systematic utilities over every available
    option (no share weighting), matching the objective this library
    optimizes throughout.
    """
    ctx = eval_context(instance)
    bits = ctx.activation_bits(activations)
    return ctx.evaluate(ctx.fares_to_vec(fares), bits, weights).breakdown


def operator_revenue(instance: Instance, fares: FareVector, activations,
                     operator: int | Operator) -> float:
    """Revenue attributed to one operator: its own fare components, with
    any active discount applied pro rata."""
    op_id = operator.id if isinstance(operator, Operator) else operator
    ctx = eval_context(instance)
    bits = ctx.activation_bits(activations)
    y = ctx.fares_to_vec(fares)
    ev = ctx.evaluate(y, bits)
    if op_id == ctx.transit_id:
        comp = ctx.route_mat[:, 0] * y[0] + ctx.route_mat[:, 1] * y[1]
    elif op_id == ctx.mod_id:
        comp = ctx.route_mat[:, 2] * y[2] + ctx.route_mat[:, 3] * y[3]
    else:
        raise KeyError(f"unknown operator {op_id}")
    factor = np.ones(ctx.n_routes)
    de = ctx.route_cat >= 0
    factor[de] = 1.0 - y[4] * bits[ctx.route_cat[de]]
    per_opt = ctx.opt_N * ev.shares * (comp * factor)[ctx.opt_route]
    return float(per_opt.sum())


def price_table(instance: Instance, fares: FareVector, activations=None) -> PriceTable:
    ctx = eval_context(instance)
    bits = ctx.activation_bits(activations)
    return PriceTable(
        route_ids=ctx.route_ids,
        values=ctx.route_prices(ctx.fares_to_vec(fares), bits),
    )


def share_table(instance: Instance, fares: FareVector, activations=None) -> ShareTable:
    ctx = eval_context(instance)
    bits = ctx.activation_bits(activations)
    ev = ctx.evaluate(ctx.fares_to_vec(fares), bits)
    return ShareTable(
        pairs=ctx.pairs,
        values=ev.shares,
        outside_type_ids=ctx.type_ids,
        outside=ev.outside,
    )
