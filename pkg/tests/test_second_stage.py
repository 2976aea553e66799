import numpy as np
import pytest
from pytest import approx

from fareplan.choice import eval_context, gamma, welfare
from fareplan.second_stage import (
    BigMBundle,
    ComponentTooLarge,
    TooManyCategories,
    big_m,
    check_feasibility,
    constraint_count,
    coupling_components,
    export_milp,
    solve_enumerate,
    solve_exact,
    solve_heuristic,
)

from conftest import random_instance, random_fare_vec


def test_components_merge_on_shared_type():
    rng = np.random.default_rng(21)
    for _ in range(20):
        inst = random_instance(rng, n_types=8, n_cats=4)
        comps = coupling_components(inst)
        # every type appears exactly once, every category at most once
        seen_types = [t for c in comps for t in c.type_ids]
        assert sorted(seen_types) == sorted(t.id for t in inst.passenger_types)
        seen_cats = [c for comp in comps for c in comp.category_ids]
        assert sorted(seen_cats) == sorted(c.id for c in inst.categories)
        # within a component the category set is closed under type contact
        for comp in comps:
            for tid in comp.type_ids:
                t = inst.type_by_id(tid)
                touched = {
                    inst.route_by_id(r).category for r in t.route_ids
                    if inst.route_by_id(r).category is not None
                }
                assert touched <= set(comp.category_ids)


def test_components_constant_component_when_no_de():
    inst = random_instance(np.random.default_rng(22), n_types=4, n_cats=0)
    comps = coupling_components(inst)
    assert len(comps) == 1
    assert comps[0].category_ids == ()
    assert len(comps[0].type_ids) == 4


def test_lambda_zero_returns_all_zero_activations():
    rng = np.random.default_rng(23)
    inst = random_instance(rng, n_types=6, n_cats=3)
    y = random_fare_vec(rng)
    y[4] = 0.0
    sol = solve_exact(inst, y)
    assert all(v == 0 for v in sol.activations.values())
    assert sol.welfare.total == approx(
        welfare(inst, eval_context(inst).vec_to_fares(y)).total, rel=1e-12)


def test_single_category_revenue_picks_better_branch():
    rng = np.random.default_rng(24)
    inst = random_instance(rng, n_types=5, n_cats=1, weights=(0, 1, 0))
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    off = ctx.evaluate(y, np.array([0])).breakdown.total
    on = ctx.evaluate(y, np.array([1])).breakdown.total
    sol = solve_exact(inst, y)
    assert sol.welfare.total == approx(max(off, on), rel=1e-12)
    assert sol.activations[inst.categories[0].id] == int(on > off)


def test_exact_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(25)
    for _ in range(40):
        inst = random_instance(rng, n_types=int(rng.integers(2, 7)),
                               n_cats=int(rng.integers(1, 5)))
        y = random_fare_vec(rng)
        a = solve_exact(inst, y)
        b = solve_enumerate(inst, y)
        scale = max(1.0, abs(b.welfare.total))
        assert abs(a.welfare.total - b.welfare.total) <= 1e-12 * scale
        assert a.activations == b.activations


def test_enumerate_tie_breaks_lexicographically():
    # alpha = 0 for every type makes all activation vectors exactly tie
    inst = random_instance(np.random.default_rng(26), n_types=3, n_cats=3)
    types = tuple(
        type(t)(id=t.id, count=t.count, route_ids=t.route_ids,
                u_nonmonetary=t.u_nonmonetary, u_outside=t.u_outside,
                price_sensitivity=0.0, drive_distance=t.drive_distance)
        for t in inst.passenger_types)
    import dataclasses
    flat = dataclasses.replace(inst, passenger_types=types)
    y = random_fare_vec(np.random.default_rng(27))
    sol = solve_enumerate(flat, y)
    assert all(v == 0 for v in sol.activations.values())
    assert solve_exact(flat, y).activations == sol.activations


def test_solution_internal_consistency():
    rng = np.random.default_rng(28)
    inst = random_instance(rng, n_types=6, n_cats=3)
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    sol = solve_exact(inst, y)
    fares = ctx.vec_to_fares(y)
    # w_ir = p_r * s_ir on discount-eligible pairs
    for (tid, rid), w_val in sol.linearized_revenue.items():
        p = sol.prices[rid]
        s = sol.shares.share(tid, rid)
        assert w_val == approx(p * s, abs=1e-9)
    # all linearized constraints hold at the returned activation vector
    assert check_feasibility(inst, fares, sol) <= 1e-9
    # zero activation is always feasible, so W dominates it
    assert sol.welfare.total >= welfare(inst, fares).total - 1e-12


def test_welfare_attained_by_returned_activations():
    rng = np.random.default_rng(29)
    inst = random_instance(rng, n_types=5, n_cats=3)
    y = random_fare_vec(rng)
    sol = solve_enumerate(inst, y)
    direct = welfare(inst, eval_context(inst).vec_to_fares(y), sol.activations)
    assert direct.total == approx(sol.welfare.total, rel=1e-12)


def test_enumerate_category_cap():
    inst = random_instance(np.random.default_rng(30), n_types=4, n_cats=3)
    with pytest.raises(TooManyCategories):
        solve_enumerate(inst, random_fare_vec(np.random.default_rng(31)), cap=2)


def test_exact_component_cap():
    # seed 3 welds three categories through one type's route set
    rng = np.random.default_rng(3)
    inst = random_instance(rng, n_types=1, n_cats=4, n_routes=5)
    comps = [c for c in coupling_components(inst) if len(c.category_ids) > 1]
    assert comps
    with pytest.raises(ComponentTooLarge):
        solve_exact(inst, random_fare_vec(rng), component_cap=1)


def test_heuristic_matches_exact_on_decomposable():
    rng = np.random.default_rng(33)
    for _ in range(10):
        inst = random_instance(rng, n_types=5, n_cats=3)
        y = random_fare_vec(rng)
        h = solve_heuristic(inst, y, seed=0)
        e = solve_exact(inst, y)
        assert not h.exact
        assert h.welfare.total == approx(e.welfare.total, rel=1e-9)


def test_heuristic_deterministic():
    rng = np.random.default_rng(34)
    inst = random_instance(rng, n_types=5, n_cats=4)
    y = random_fare_vec(rng)
    a = solve_heuristic(inst, y, seed=5)
    b = solve_heuristic(inst, y, seed=5)
    assert a.activations == b.activations
    assert a.welfare.total == b.welfare.total


# ----------------------------------------------------------------------
# big-M and LP export
# ----------------------------------------------------------------------

def test_big_m_values():
    rng = np.random.default_rng(35)
    inst = random_instance(rng, n_types=5, n_cats=3)
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    fares = ctx.vec_to_fares(y)
    bundle = big_m(inst, fares)
    assert isinstance(bundle, BigMBundle)
    de = inst.discount_eligible_route_ids()
    for t in inst.passenger_types:
        for rid in t.route_ids:
            route = inst.route_by_id(rid)
            if rid not in de:
                assert (t.id, rid) not in bundle.m_share
                continue
            g = gamma(t, route, fares, discount_applied=False)
            assert bundle.m_share[(t.id, rid)] == approx(g, rel=1e-12)
            assert bundle.m_share[(t.id, rid)] >= 0
            sigma = sum(fares.base[k] + route.distance_by_operator[k]
                        * fares.markup[k] for k in route.operators_served)
            assert bundle.m_rev[(t.id, rid)] == approx(
                fares.discount * sigma, rel=1e-12)


def test_big_m_zero_discount_zeroes_m_rev():
    rng = np.random.default_rng(36)
    inst = random_instance(rng, n_types=4, n_cats=2)
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    y[4] = 0.0
    bundle = big_m(inst, ctx.vec_to_fares(y))
    assert all(v == 0.0 for v in bundle.m_rev.values())


def test_export_constraint_count_and_determinism(tmp_path):
    rng = np.random.default_rng(37)
    inst = random_instance(rng, n_types=6, n_cats=3)
    ctx = eval_context(inst)
    fares = ctx.vec_to_fares(random_fare_vec(rng))
    p1, p2 = tmp_path / "m1.lp", tmp_path / "m2.lp"
    export_milp(inst, fares, p1)
    export_milp(inst, fares, p2)
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    lines = text.splitlines()
    start = lines.index("Subject To") + 1
    end = lines.index("Bounds")
    n_constraints = sum(1 for ln in lines[start:end] if ":" in ln)
    assert n_constraints == constraint_count(inst)
    # binaries section lists every category
    bin_start = lines.index("Binaries") + 1
    names = {ln.strip() for ln in lines[bin_start:lines.index("End")]}
    assert names == {f"x_a{c.id}" for c in inst.categories}


def test_exported_model_consistent_with_solution(tmp_path):
    """The exact solution satisfies the exported model's constraints and
    objective: an in-process stand-in for the external-solver cross-check."""
    rng = np.random.default_rng(38)
    inst = random_instance(rng, n_types=5, n_cats=2)
    ctx = eval_context(inst)
    y = random_fare_vec(rng)
    fares = ctx.vec_to_fares(y)
    sol = solve_exact(inst, y)
    assert check_feasibility(inst, fares, sol) <= 1e-9
    # objective reconstruction from (p, s, w) values matches the solver
    w = inst.weights
    total = w.pax * ctx.pax_const
    for t in inst.passenger_types:
        for rid in t.route_ids:
            p = sol.prices[rid]
            s = sol.shares.share(t.id, rid)
            total += w.pax * t.count * t.price_sensitivity * p
            wval = sol.linearized_revenue.get((t.id, rid), p * s)
            total += w.rev * t.count * wval
        total -= w.vmt * t.count * t.drive_distance \
            * sol.shares.outside_share(t.id)
    assert total == approx(sol.welfare.total, rel=1e-9)
