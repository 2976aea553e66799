"""Exact discount-activation optimization for fixed fares.

For fixed fares the objective is additively separable across passenger
types, and a type's term depends only on the activation bits of the
categories its routes touch.  Linking types to categories therefore splits
the activation vector into independent connected components, each of which
is enumerated exhaustively.  This replaces a general MILP solve with exact
closed-form evaluation; an LP-file exporter is provided so the equivalent
big-M model can be handed to an external solver for cross-checking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .choice import (
    EvalContext,
    PriceTable,
    ShareTable,
    WelfareBreakdown,
    base_price,
    eval_context,
    gamma,
)
from .model import FareVector, Instance, ObjectiveWeights

DEFAULT_COMPONENT_CAP = 20
_PATTERN_CHUNK = 4096


class ComponentTooLarge(RuntimeError):
    """A coupling component has more categories than the enumeration cap."""


class TooManyCategories(RuntimeError):
    """Whole-instance enumeration requested above the category cap."""


@dataclass
class CouplingComponent:
    """Categories that must be enumerated jointly, plus the types they touch.

    A component with no categories collects the passenger types whose
    objective term is constant in the activation vector.
    """

    category_ids: tuple[int, ...]
    type_ids: tuple[int, ...]


@dataclass
class SecondStageSolution:
    activations: dict[int, int]
    prices: PriceTable
    shares: ShareTable
    linearized_revenue: dict[tuple[int, int], float]
    welfare: WelfareBreakdown
    exact: bool = True
    # flat arrays, kept for interpolation without table lookups
    y: np.ndarray = field(default=None, repr=False)
    p_vec: np.ndarray = field(default=None, repr=False)
    s_flat: np.ndarray = field(default=None, repr=False)
    s0_vec: np.ndarray = field(default=None, repr=False)
    bits: np.ndarray = field(default=None, repr=False)


@dataclass
class BigMBundle:
    m_share: dict[tuple[int, int], float]
    m_rev: dict[tuple[int, int], float]


def coupling_components(instance: Instance) -> list[CouplingComponent]:
    """Connected components of the type-category incidence graph.

    Components are ordered by their smallest category id; the constant
    component (types with no discount-eligible routes), if nonempty, comes
    last.  Categories touched by no passenger type form singleton
    components.
    """
    ctx = eval_context(instance)
    cached = ctx.__dict__.get("_components")
    if cached is not None:
        return cached
    parent = list(range(ctx.n_cats))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    type_cats: list[list[int]] = []
    for ti in range(ctx.n_types):
        opts = ctx.opt_cat[ctx.type_start[ti]:ctx.type_start[ti + 1]]
        cats = sorted(set(int(c) for c in opts if c >= 0))
        type_cats.append(cats)
        for other in cats[1:]:
            union(cats[0], other)

    groups: dict[int, list[int]] = {}
    for ci in range(ctx.n_cats):
        groups.setdefault(find(ci), []).append(ci)

    members: dict[int, list[int]] = {root: [] for root in groups}
    constant_types: list[int] = []
    for ti, cats in enumerate(type_cats):
        if cats:
            members[find(cats[0])].append(ti)
        else:
            constant_types.append(ti)

    out = []
    for root in sorted(groups):
        out.append(CouplingComponent(
            category_ids=tuple(ctx.cat_ids[c] for c in groups[root]),
            type_ids=tuple(ctx.type_ids[t] for t in members[root]),
        ))
    if constant_types:
        out.append(CouplingComponent(
            category_ids=(),
            type_ids=tuple(ctx.type_ids[t] for t in constant_types),
        ))
    ctx.__dict__["_components"] = out
    return out


def _component_local(ctx: EvalContext, comp: CouplingComponent):
    """Flat-option view of one component, cached on the context."""
    cache = ctx.__dict__.setdefault("_comp_cache", {})
    key = comp.category_ids
    if key in cache:
        return cache[key]
    tis = np.array([ctx.type_pos[tid] for tid in comp.type_ids], dtype=np.int64)
    opt_idx = np.concatenate([
        np.arange(ctx.type_start[ti], ctx.type_start[ti + 1]) for ti in tis
    ]) if len(tis) else np.empty(0, dtype=np.int64)
    counts = ctx.type_start[tis + 1] - ctx.type_start[tis]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    cat_local = np.full(ctx.n_cats, -1, dtype=np.int64)
    for j, cid in enumerate(comp.category_ids):
        cat_local[ctx.cat_pos[cid]] = j
    loc = {
        "tis": tis,
        "opt_idx": opt_idx,
        "starts": starts,
        "opt_cat_local": np.where(
            ctx.opt_cat[opt_idx] >= 0, cat_local[ctx.opt_cat[opt_idx]], -1
        ) if len(opt_idx) else np.empty(0, dtype=np.int64),
    }
    cache[key] = loc
    return loc


def _component_best(ctx: EvalContext, loc, n_cats: int, y: np.ndarray,
                    sigma: np.ndarray, weights: ObjectiveWeights):
    """Best activation pattern for one component by chunked enumeration.

    Patterns are visited in lexicographic order and updated only on strict
    improvement, so ties resolve to the lexicographically smallest pattern.
    """
    opt_idx = loc["opt_idx"]
    tis = loc["tis"]
    starts = loc["starts"]
    u = ctx.opt_u[opt_idx]
    a = ctx.opt_alpha[opt_idx]
    nn = ctx.opt_N[opt_idx]
    sig = sigma[ctx.opt_route[opt_idx]]
    catl = loc["opt_cat_local"]
    N_t = ctx.N[tis]
    u0_t = ctx.u0[tis]
    d0_t = ctx.d0[tis]
    wN = N_t * d0_t
    pax_const = float(N_t @ u0_t + nn @ u)
    lam = y[4]

    best_val = -np.inf
    best_bits = None
    total = 1 << n_cats
    for lo in range(0, total, _PATTERN_CHUNK):
        hi = min(lo + _PATTERN_CHUNK, total)
        codes = np.arange(lo, hi, dtype=np.int64)
        # bit c of the pattern code is category c's flag, code ordered so
        # lexicographic pattern order matches ascending codes
        shift = n_cats - 1 - np.arange(n_cats, dtype=np.int64)
        bits = (codes[:, None] >> shift[None, :]) & 1
        factor = np.ones((len(codes), len(opt_idx)))
        de = catl >= 0
        if de.any():
            factor[:, de] = 1.0 - lam * bits[:, catl[de]]
        p = sig * factor
        util = u + a * p
        m = np.maximum.reduceat(util, starts, axis=1) if len(starts) else \
            np.empty((len(codes), 0))
        m = np.maximum(m, u0_t)
        e = np.exp(util - m[:, _local_opt_type(starts, len(opt_idx))])
        e0 = np.exp(u0_t - m)
        denom = e0 + (np.add.reduceat(e, starts, axis=1) if len(starts) else 0)
        s = e / denom[:, _local_opt_type(starts, len(opt_idx))]
        s0 = e0 / denom
        pax = pax_const + p @ (nn * a)
        rev = (p * s) @ nn
        vmt = s0 @ wN
        vals = weights.pax * pax + weights.rev * rev - weights.vmt * vmt
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_bits = bits[k].copy()
    return best_bits, best_val


def _local_opt_type(starts: np.ndarray, n_opts: int) -> np.ndarray:
    out = np.zeros(n_opts, dtype=np.int64)
    out[starts[1:]] = 1
    return np.cumsum(out)


def _assemble(ctx: EvalContext, y: np.ndarray, bits: np.ndarray,
              weights: ObjectiveWeights | None, exact: bool) -> SecondStageSolution:
    ev = ctx.evaluate(y, bits, weights)
    de_idx = ctx.__dict__.get("_de_flat")
    if de_idx is None:
        de_idx = np.where(ctx.opt_cat >= 0)[0]
        ctx.__dict__["_de_flat"] = de_idx
        ctx.__dict__["_de_keys"] = [ctx.pairs[j] for j in de_idx]
    w_vals = ev.prices[ctx.opt_route[de_idx]] * ev.shares[de_idx]
    de_pairs = dict(zip(ctx.__dict__["_de_keys"], w_vals.tolist()))
    return SecondStageSolution(
        activations={cid: int(bits[ctx.cat_pos[cid]]) for cid in ctx.cat_ids},
        prices=PriceTable(route_ids=ctx.route_ids, values=ev.prices),
        shares=ShareTable(pairs=ctx.pairs, values=ev.shares,
                          outside_type_ids=ctx.type_ids, outside=ev.outside),
        linearized_revenue=de_pairs,
        welfare=ev.breakdown,
        exact=exact,
        y=np.asarray(y, dtype=float).copy(),
        p_vec=ev.prices,
        s_flat=ev.shares,
        s0_vec=ev.outside,
        bits=bits,
    )


def solve_exact(instance: Instance, fares: FareVector | np.ndarray,
                weights: ObjectiveWeights | None = None,
                component_cap: int = DEFAULT_COMPONENT_CAP) -> SecondStageSolution:
    """Welfare-maximizing activations by independent component enumeration.

    Raises :class:`ComponentTooLarge` when any coupling component has more
    categories than ``component_cap``; callers may fall back to
    :func:`solve_heuristic`.
    """
    ctx = eval_context(instance)
    y = fares if isinstance(fares, np.ndarray) else ctx.fares_to_vec(fares)
    w = ctx.weights if weights is None else weights
    sigma = ctx.sigma(y)
    bits = np.zeros(ctx.n_cats, dtype=np.int64)
    components = coupling_components(instance)
    for comp in components:
        if len(comp.category_ids) > component_cap:
            raise ComponentTooLarge(
                f"component with categories {comp.category_ids[:5]}... has "
                f"{len(comp.category_ids)} categories (cap {component_cap})"
            )

    # fast path: a single-category component's types see only its own bit,
    # so two whole-instance passes (all off, all on) decide every such
    # component at once
    cached = ctx.__dict__.get("_singles")
    if cached is None:
        singles = [c for c in components
                   if len(c.category_ids) == 1 and c.type_ids]
        group = np.full(ctx.n_types, len(singles), dtype=np.int64)
        for gi, comp in enumerate(singles):
            for tid in comp.type_ids:
                group[ctx.type_pos[tid]] = gi
        cat_cols = np.array(
            [ctx.cat_pos[c.category_ids[0]] for c in singles], dtype=np.int64)
        cached = (len(singles), group, cat_cols)
        ctx.__dict__["_singles"] = cached
    n_singles, group, cat_cols = cached
    if n_singles:
        off = ctx.per_type_totals(y, np.zeros(ctx.n_cats, dtype=np.int64), w)
        on = ctx.per_type_totals(y, np.ones(ctx.n_cats, dtype=np.int64), w)
        off_sum = np.bincount(group, weights=off, minlength=n_singles + 1)
        on_sum = np.bincount(group, weights=on, minlength=n_singles + 1)
        bits[cat_cols] = (on_sum[:n_singles] > off_sum[:n_singles]).astype(np.int64)

    for comp in components:
        nc = len(comp.category_ids)
        if nc <= 1 or not comp.type_ids:
            continue  # handled above; untouched categories stay off
        loc = _component_local(ctx, comp)
        cbits, _ = _component_best(ctx, loc, nc, y, sigma, w)
        for j, cid in enumerate(comp.category_ids):
            bits[ctx.cat_pos[cid]] = cbits[j]
    return _assemble(ctx, y, bits, weights, exact=True)


def solve_enumerate(instance: Instance, fares: FareVector | np.ndarray,
                    weights: ObjectiveWeights | None = None,
                    cap: int = DEFAULT_COMPONENT_CAP) -> SecondStageSolution:
    """Brute force over every activation vector; the testing oracle.

    Ties break to the lexicographically smallest activation vector.
    """
    ctx = eval_context(instance)
    if ctx.n_cats > cap:
        raise TooManyCategories(f"{ctx.n_cats} categories exceeds cap {cap}")
    y = fares if isinstance(fares, np.ndarray) else ctx.fares_to_vec(fares)
    best_bits = None
    best_val = -np.inf
    for pattern in itertools.product((0, 1), repeat=ctx.n_cats):
        bits = np.array(pattern, dtype=np.int64)
        val = ctx.evaluate(y, bits, weights).breakdown.total
        if val > best_val:
            best_val = val
            best_bits = bits
    return _assemble(ctx, y, best_bits, weights, exact=True)


def solve_heuristic(instance: Instance, fares: FareVector | np.ndarray,
                    seed: int = 0,
                    weights: ObjectiveWeights | None = None) -> SecondStageSolution:
    """Best-improvement single-flip hill climbing; flagged non-exact.

    Climbs from all-off, all-on, and 5 seeded random starts; deterministic
    for a fixed seed.
    """
    ctx = eval_context(instance)
    y = fares if isinstance(fares, np.ndarray) else ctx.fares_to_vec(fares)
    rng = np.random.default_rng(seed)
    starts = [np.zeros(ctx.n_cats, dtype=np.int64),
              np.ones(ctx.n_cats, dtype=np.int64)]
    starts += [rng.integers(0, 2, ctx.n_cats) for _ in range(5)]

    def climb(bits):
        bits = bits.copy()
        val = ctx.evaluate(y, bits, weights).breakdown.total
        improved = True
        while improved:
            improved = False
            best_flip, best_val = None, val
            for c in range(ctx.n_cats):
                bits[c] ^= 1
                cand = ctx.evaluate(y, bits, weights).breakdown.total
                bits[c] ^= 1
                if cand > best_val:
                    best_flip, best_val = c, cand
            if best_flip is not None:
                bits[best_flip] ^= 1
                val = best_val
                improved = True
        return bits, val

    best_bits, best_val = None, -np.inf
    for s in starts:
        bits, val = climb(s)
        if val > best_val:
            best_bits, best_val = bits, val
    return _assemble(ctx, y, best_bits, weights, exact=False)


def big_m(instance: Instance, fares: FareVector) -> BigMBundle:
    """Big-M constants for the linearized activation model.

    For each discount-eligible (type, route) pair the share constant is the
    full-price attractiveness ratio and the revenue constant is the maximum
    possible price drop.
    """
    m_share, m_rev = {}, {}
    for t in instance.passenger_types:
        for rid in t.route_ids:
            route = instance.route_by_id(rid)
            if route.category is None:
                continue
            m_share[(t.id, rid)] = gamma(t, route, fares, discount_applied=False)
            m_rev[(t.id, rid)] = fares.discount * base_price(route, fares)
    return BigMBundle(m_share=m_share, m_rev=m_rev)


# ----------------------------------------------------------------------
# LP export
# ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _term(coef: float, name: str, first: bool) -> str:
    sign = "- " if coef < 0 else ("" if first else "+ ")
    return f"{sign}{_fmt(abs(coef))} {name}"


def export_milp(instance: Instance, fares: FareVector, path) -> None:
    """Write the fixed-fare activation model in LP file format.

    Binary activation variables, continuous shares, linearized revenues and
    prices; output is byte-identical for identical inputs.  Solving the
    file with an external MILP solver should reproduce ``solve_exact``'s
    welfare (see README for the cross-check procedure).
    """
    ctx = eval_context(instance)
    w = instance.weights
    lam = fares.discount
    bundle = big_m(instance, fares)

    # aggregate objective coefficients per variable (routes are shared
    # across types, so p_r picks up one alpha term per serving type)
    obj_terms: dict[str, float] = {}
    constant = ctx.pax_const * w.pax
    for t in sorted(instance.passenger_types, key=lambda t: t.id):
        if w.vmt:
            name = f"s0_i{t.id}"
            obj_terms[name] = obj_terms.get(name, 0.0) \
                - w.vmt * t.count * t.drive_distance
        for rid in sorted(t.route_ids):
            if w.pax:
                name = f"p_r{rid}"
                obj_terms[name] = obj_terms.get(name, 0.0) \
                    + w.pax * t.count * t.price_sensitivity
            if w.rev:
                name = f"w_i{t.id}_r{rid}"
                obj_terms[name] = obj_terms.get(name, 0.0) + w.rev * t.count

    lines = ["\\ fixed-fare discount activation model", "Maximize", " obj:"]
    body = []
    first = True
    for name, coef in obj_terms.items():
        if coef == 0:
            continue
        body.append(_term(coef, name, first))
        first = False
    if constant != 0 or first:
        body.append(_term(constant, "", first).rstrip())
    for i in range(0, len(body), 6):
        lines.append("  " + " ".join(body[i:i + 6]))

    lines.append("Subject To")
    n_con = 0

    def con(tag: str, lhs: str, rel: str, rhs: float):
        nonlocal n_con
        n_con += 1
        lines.append(f" {tag}: {lhs} {rel} {_fmt(rhs)}")

    for t in sorted(instance.passenger_types, key=lambda t: t.id):
        rids = sorted(t.route_ids)
        lhs = " + ".join([f"s0_i{t.id}"] + [f"s_i{t.id}_r{r}" for r in rids])
        con(f"norm_i{t.id}", lhs, "=", 1.0)

    for t in sorted(instance.passenger_types, key=lambda t: t.id):
        for rid in sorted(t.route_ids):
            route = instance.route_by_id(rid)
            sig = base_price(route, fares)
            s_name = f"s_i{t.id}_r{rid}"
            w_name = f"w_i{t.id}_r{rid}"
            if route.category is None:
                g0 = gamma(t, route, fares, discount_applied=False)
                con(f"prop_i{t.id}_r{rid}",
                    f"s0_i{t.id} - {_fmt(g0)} {s_name}", "=", 0.0)
                con(f"wdef_i{t.id}_r{rid}",
                    f"{w_name} - {_fmt(sig)} {s_name}", "=", 0.0)
            else:
                a = route.category
                g0 = bundle.m_share[(t.id, rid)]
                gl = gamma(t, route, fares, discount_applied=True)
                ms = g0
                mw = bundle.m_rev[(t.id, rid)]
                con(f"shr_ub0_i{t.id}_r{rid}",
                    f"s0_i{t.id} - {_fmt(g0)} {s_name}", "<=", 0.0)
                con(f"shr_lb0_i{t.id}_r{rid}",
                    f"s0_i{t.id} - {_fmt(g0)} {s_name} + {_fmt(ms)} x_a{a}",
                    ">=", 0.0)
                con(f"shr_ub1_i{t.id}_r{rid}",
                    f"s0_i{t.id} - {_fmt(gl)} {s_name} + {_fmt(ms)} x_a{a}",
                    "<=", ms)
                con(f"shr_lb1_i{t.id}_r{rid}",
                    f"s0_i{t.id} - {_fmt(gl)} {s_name}", ">=", 0.0)
                con(f"rev_ub0_i{t.id}_r{rid}",
                    f"{w_name} - {_fmt(sig)} {s_name}", "<=", 0.0)
                con(f"rev_lb0_i{t.id}_r{rid}",
                    f"{w_name} - {_fmt(sig)} {s_name} + {_fmt(mw)} x_a{a}",
                    ">=", 0.0)
                con(f"rev_ub1_i{t.id}_r{rid}",
                    f"{w_name} - {_fmt((1 - lam) * sig)} {s_name} "
                    f"+ {_fmt(mw)} x_a{a}", "<=", mw)
                con(f"rev_lb1_i{t.id}_r{rid}",
                    f"{w_name} - {_fmt((1 - lam) * sig)} {s_name}", ">=", 0.0)

    for rid in sorted(r.id for r in instance.routes):
        route = instance.route_by_id(rid)
        sig = base_price(route, fares)
        if route.category is None:
            con(f"price_r{rid}", f"p_r{rid}", "=", sig)
        else:
            con(f"price_r{rid}",
                f"p_r{rid} + {_fmt(lam * sig)} x_a{route.category}", "=", sig)

    lines.append("Bounds")
    for t in sorted(instance.passenger_types, key=lambda t: t.id):
        for rid in sorted(t.route_ids):
            lines.append(f" w_i{t.id}_r{rid} free")
    for rid in sorted(r.id for r in instance.routes):
        lines.append(f" p_r{rid} free")

    lines.append("Binaries")
    for c in sorted(c.id for c in instance.categories):
        lines.append(f" x_a{c}")
    lines.append("End")

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def constraint_count(instance: Instance) -> int:
    """Expected number of constraints in the exported model."""
    n = len(instance.passenger_types)
    de = instance.discount_eligible_route_ids()
    non_de_pairs = sum(
        len([r for r in t.route_ids if r not in de])
        for t in instance.passenger_types
    )
    big_m_triples = 0
    for c in instance.categories:
        cat_routes = set(c.route_ids)
        for tid in instance.types_touching(c.id):
            t = instance.type_by_id(tid)
            big_m_triples += len(set(t.route_ids) & cat_routes)
    return n + 2 * non_de_pairs + 8 * big_m_triples + len(instance.routes)


def check_feasibility(instance: Instance, fares: FareVector,
                      solution: SecondStageSolution) -> float:
    """Max violation of the linearized model's constraints at the solution."""
    from .choice import base_price
    bundle = big_m(instance, fares)
    lam = fares.discount
    worst = 0.0

    def viol(x):
        nonlocal worst
        worst = max(worst, x)

    for t in instance.passenger_types:
        s0 = solution.shares.outside_share(t.id)
        total = s0
        for rid in t.route_ids:
            route = instance.route_by_id(rid)
            sig = base_price(route, fares)
            s = solution.shares.share(t.id, rid)
            total += s
            g0 = gamma(t, route, fares, discount_applied=False)
            gl = gamma(t, route, fares, discount_applied=True)
            if route.category is None:
                viol(abs(s0 - g0 * s))
                continue
            x = solution.activations[route.category]
            w_val = solution.linearized_revenue[(t.id, rid)]
            ms = bundle.m_share[(t.id, rid)]
            mw = bundle.m_rev[(t.id, rid)]
            viol(s0 - g0 * s)
            viol((g0 * s - ms * x) - s0)
            viol(s0 - (gl * s + ms * (1 - x)))
            viol(gl * s - s0)
            viol(w_val - sig * s)
            viol((sig * s - mw * x) - w_val)
            viol(w_val - ((1 - lam) * sig * s + mw * (1 - x)))
            viol((1 - lam) * sig * s - w_val)
        viol(abs(total - 1.0))
    for route in instance.routes:
        sig = base_price(route, fares)
        p = solution.prices[route.id]
        if route.category is None:
            viol(abs(p - sig))
        else:
            x = solution.activations[route.category]
            viol(abs(p - (1 - lam * x) * sig))
    return worst
