import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from fareplan import choice
from fareplan.choice import (
    base_price,
    customer_price,
    eval_context,
    gamma,
    operator_revenue,
    shares,
    welfare,
)
from fareplan.model import (
    FareBounds,
    DiscountCategory,
    Instance,
    ObjectiveWeights,
    Operator,
    PassengerType,
    Route,
)

from conftest import random_instance, random_fare_vec


def _mod_only_route(dist):
    return Route(id=0, operators_served=(1,), distance_by_operator={1: dist})


def _fares(base_tr, mk_tr, base_mod, mk_mod, lam):
    return choice.FareVector(base={0: base_tr, 1: base_mod},
                             markup={0: mk_tr, 1: mk_mod}, discount=lam)


def test_base_price_mod_only_real_fare_values():
    # 10-mile ride at the published-style base 4.53 and 1.07 per mile
    route = _mod_only_route(10.0)
    fares = _fares(4.50, 0.16, 4.53, 1.07, 0.0)
    assert base_price(route, fares) == approx(15.23, abs=1e-12)


def test_base_price_zero_fares():
    route = _mod_only_route(10.0)
    assert base_price(route, _fares(0, 0, 0, 0, 0)) == 0.0


def test_base_price_hybrid_sums_both_operators():
    route = Route(id=0, operators_served=(0, 1),
                  distance_by_operator={0: 20.0, 1: 3.0})
    fares = _fares(4.50, 0.16, 4.53, 1.07, 0.0)
    # transit 4.50 + 20*0.16 = 7.70, mod 4.53 + 3*1.07 = 7.74
    assert base_price(route, fares) == approx(15.44, abs=1e-12)


def test_customer_price_discount_cases():
    route = Route(id=3, operators_served=(1,), distance_by_operator={1: 0.0},
                  category=7)
    fares = _fares(0, 0, 20.0, 0, 0.5)
    assert customer_price(route, fares, {7: True}) == approx(10.0)
    assert customer_price(route, fares, {7: False}) == approx(20.0)
    non_de = Route(id=4, operators_served=(1,), distance_by_operator={1: 0.0})
    assert customer_price(non_de, fares, {7: True}) == approx(20.0)


def test_shares_three_way_symmetry():
    t = PassengerType(id=0, count=1.0, route_ids=(0, 1),
                      u_nonmonetary={0: 0.3, 1: 0.3}, u_outside=0.3,
                      price_sensitivity=0.0, drive_distance=1.0)
    s, s0 = shares(t, {0: 5.0, 1: 9.0})
    assert s[0] == approx(1 / 3, abs=1e-12)
    assert s[1] == approx(1 / 3, abs=1e-12)
    assert s0 == approx(1 / 3, abs=1e-12)


def test_shares_alpha_zero_ignores_prices():
    t = PassengerType(id=0, count=1.0, route_ids=(0, 1),
                      u_nonmonetary={0: 0.5, 1: -0.2}, u_outside=0.1,
                      price_sensitivity=0.0, drive_distance=1.0)
    s_a, s0_a = shares(t, {0: 0.0, 1: 0.0})
    s_b, s0_b = shares(t, {0: 50.0, 1: 2.0})
    assert s_a == approx(s_b)
    assert s0_a == approx(s0_b)


def test_share_equals_outside_when_utilities_match():
    t = PassengerType(id=0, count=1.0, route_ids=(0,),
                      u_nonmonetary={0: 1.0}, u_outside=0.5,
                      price_sensitivity=-0.1, drive_distance=1.0)
    s, s0 = shares(t, {0: 5.0})  # 1.0 - 0.5 = u_outside
    assert s[0] == approx(s0, abs=1e-12)


def test_gamma_equal_attractiveness_is_one():
    t = PassengerType(id=0, count=1.0, route_ids=(0,),
                      u_nonmonetary={0: 1.0}, u_outside=0.0,
                      price_sensitivity=-0.1, drive_distance=1.0)
    route = _mod_only_route(0.0)
    fares = _fares(0, 0, 10.0, 0, 0.0)  # price 10 -> utility 1 - 1 = 0
    assert gamma(t, route, fares, discount_applied=False) == approx(1.0)


def test_gamma_monotone_in_price_and_discount():
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = float(rng.normal(0, 1))
        u0 = float(rng.normal(0, 1))
        alpha = -float(rng.uniform(0.01, 0.2))
        dist = float(rng.uniform(0, 20))
        lam = float(rng.uniform(0, 0.5))
        t = PassengerType(id=0, count=1.0, route_ids=(0,),
                          u_nonmonetary={0: u}, u_outside=u0,
                          price_sensitivity=alpha, drive_distance=1.0)
        route = _mod_only_route(dist)
        lo = _fares(0, 0, 2.0, 0.3, lam)
        hi = _fares(0, 0, 4.0, 0.3, lam)
        assert gamma(t, route, hi, False) > gamma(t, route, lo, False)
        assert gamma(t, route, lo, True) <= gamma(t, route, lo, False)


def test_welfare_zero_prices_zero_revenue():
    inst = random_instance(np.random.default_rng(11), weights=(0, 1, 0))
    fares = _fares(0, 0, 0, 0, 0.0)
    bd = welfare(inst, fares)
    assert bd.total == approx(0.0, abs=1e-12)
    assert bd.rev_term == approx(0.0, abs=1e-12)


def test_welfare_pure_vmt_symmetric_split():
    # every option ties, so each type sends 1/(|R_i|+1) outside
    routes = (Route(id=0, operators_served=(0,), distance_by_operator={0: 0.0}),
              Route(id=1, operators_served=(1,), distance_by_operator={1: 0.0}))
    types = tuple(PassengerType(
        id=i, count=float(10 + i), route_ids=(0, 1),
        u_nonmonetary={0: 0.7, 1: 0.7}, u_outside=0.7,
        price_sensitivity=0.0, drive_distance=float(2 + 3 * i))
        for i in range(3))
    inst = Instance(
        operators=(Operator(0, "transit"), Operator(1, "mod")),
        routes=routes, categories=(), passenger_types=types,
        bounds=FareBounds(0, 10, 0, 5, 0, 0.5),
        weights=ObjectiveWeights(0, 0, 1))
    bd = welfare(inst, _fares(3, 1, 4, 2, 0.2))
    expected = -sum(t.count * t.drive_distance / 3 for t in types)
    assert bd.total == approx(expected, rel=1e-12)


def _spreadsheet_welfare(inst, fares, activations):
    """Independent recomputation: plain double loop over types and routes."""
    import math
    act = activations or {}
    pax = rev = vmt = 0.0
    for t in inst.passenger_types:
        prices = {}
        for rid in t.route_ids:
            r = inst.route_by_id(rid)
            sigma = sum(fares.base[k] + r.distance_by_operator[k] * fares.markup[k]
                        for k in r.operators_served)
            if r.category is not None and act.get(r.category, 0):
                prices[rid] = (1 - fares.discount) * sigma
            else:
                prices[rid] = sigma
        weights = {rid: math.exp(t.u_nonmonetary[rid]
                                 + t.price_sensitivity * prices[rid])
                   for rid in t.route_ids}
        w0 = math.exp(t.u_outside)
        denom = w0 + sum(weights.values())
        pax += t.count * (t.u_outside
                          + sum(t.u_nonmonetary[rid]
                                + t.price_sensitivity * prices[rid]
                                for rid in t.route_ids))
        rev += t.count * sum(prices[rid] * weights[rid] / denom
                             for rid in t.route_ids)
        vmt += t.count * t.drive_distance * w0 / denom
    w = inst.weights
    return pax, rev, vmt, w.pax * pax + w.rev * rev - w.vmt * vmt


def test_welfare_matches_double_loop_oracle():
    rng = np.random.default_rng(12)
    for trial in range(10):
        inst = random_instance(rng, n_types=5, n_cats=3)
        ctx = eval_context(inst)
        fares = ctx.vec_to_fares(random_fare_vec(rng))
        act = {c.id: int(rng.integers(0, 2)) for c in inst.categories}
        bd = welfare(inst, fares, act)
        pax, rev, vmt, total = _spreadsheet_welfare(inst, fares, act)
        assert bd.pax_term == approx(pax, rel=1e-9)
        assert bd.rev_term == approx(rev, rel=1e-9)
        assert bd.vmt_term == approx(vmt, rel=1e-9)
        assert bd.total == approx(total, rel=1e-9)


def test_welfare_breakdown_identity():
    rng = np.random.default_rng(13)
    inst = random_instance(rng)
    ctx = eval_context(inst)
    bd = welfare(inst, ctx.vec_to_fares(random_fare_vec(rng)))
    w = inst.weights
    recomposed = w.pax * bd.pax_term + w.rev * bd.rev_term - w.vmt * bd.vmt_term
    assert bd.total == approx(recomposed, abs=1e-12 * max(1, abs(bd.total)))


def test_operator_revenue_single_operator_route():
    inst = random_instance(np.random.default_rng(14), n_types=4, n_cats=2)
    ctx = eval_context(inst)
    fares = ctx.vec_to_fares(random_fare_vec(np.random.default_rng(15)))
    total = welfare(inst, fares).rev_term
    r_tr = operator_revenue(inst, fares, None, 0)
    r_mod = operator_revenue(inst, fares, None, 1)
    assert r_tr + r_mod == approx(total, rel=1e-9)


def test_operator_revenue_prorata_halving():
    route = Route(id=0, operators_served=(0, 1),
                  distance_by_operator={0: 10.0, 1: 5.0}, category=0)
    t = PassengerType(id=0, count=7.0, route_ids=(0,),
                      u_nonmonetary={0: 0.0}, u_outside=0.0,
                      price_sensitivity=-0.05, drive_distance=3.0)
    inst = Instance(
        operators=(Operator(0, "transit"), Operator(1, "mod")),
        routes=(route,), categories=(DiscountCategory(id=0, route_ids=(0,)),),
        passenger_types=(t,), bounds=FareBounds(0, 10, 0, 5, 0, 0.5),
        weights=ObjectiveWeights(1, 1, 0))
    fares = _fares(2.0, 0.1, 1.0, 0.2, 0.5)
    on = {0: True}
    # with the 50% discount active, each operator's component is halved
    # per rider: revenue_k = N * s * (1 - lam) * (beta0_k + d_k * betaDelta_k)
    s_on = choice.share_table(inst, fares, on).share(0, 0)
    comp_tr = 2.0 + 10.0 * 0.1
    comp_mod = 1.0 + 5.0 * 0.2
    assert operator_revenue(inst, fares, on, 0) == approx(
        7.0 * s_on * 0.5 * comp_tr, rel=1e-12)
    assert operator_revenue(inst, fares, on, 1) == approx(
        7.0 * s_on * 0.5 * comp_mod, rel=1e-12)


# ----------------------------------------------------------------------
# numeric properties
# ----------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_share_normalization(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_types=4, n_cats=2)
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    bits = rng.integers(0, 2, ctx.n_cats)
    ev = ctx.evaluate(y, bits)
    sums = np.add.reduceat(ev.shares, ctx.type_start[:-1]) + ev.outside
    assert np.all(np.abs(sums - 1.0) <= 1e-12)
    assert np.all(ev.shares >= 0) and np.all(ev.shares <= 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_softmax_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    t = PassengerType(id=0, count=1.0, route_ids=(0, 1),
                      u_nonmonetary={0: float(rng.normal()), 1: float(rng.normal())},
                      u_outside=float(rng.normal()),
                      price_sensitivity=-0.05, drive_distance=1.0)
    shifted = PassengerType(
        id=0, count=1.0, route_ids=(0, 1),
        u_nonmonetary={k: v + c for k, v in t.u_nonmonetary.items()},
        u_outside=t.u_outside + c,
        price_sensitivity=-0.05, drive_distance=1.0)
    prices = {0: float(rng.uniform(0, 20)), 1: float(rng.uniform(0, 20))}
    s_a, s0_a = shares(t, prices)
    s_b, s0_b = shares(shifted, prices)
    assert s0_a == approx(s0_b, abs=1e-12)
    for rid in (0, 1):
        assert s_a[rid] == approx(s_b[rid], abs=1e-12)


def test_own_price_derivative_matches_analytic():
    rng = np.random.default_rng(16)
    h = 1e-6
    for _ in range(300):
        u = {0: float(rng.normal()), 1: float(rng.normal())}
        t = PassengerType(id=0, count=1.0, route_ids=(0, 1),
                          u_nonmonetary=u, u_outside=float(rng.normal()),
                          price_sensitivity=-float(rng.uniform(0.02, 0.2)),
                          drive_distance=1.0)
        p = {0: float(rng.uniform(0, 20)), 1: float(rng.uniform(0, 20))}
        s, _ = shares(t, p)
        up = dict(p)
        up[0] = p[0] + h
        s_up, _ = shares(t, up)
        fd = (s_up[0] - s[0]) / h
        analytic = t.price_sensitivity * s[0] * (1 - s[0])
        assert fd == approx(analytic, rel=1e-5)
        assert s_up[0] < s[0]  # strictly decreasing in own price
