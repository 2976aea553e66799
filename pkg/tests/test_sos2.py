import numpy as np
import pytest
from pytest import approx

from fareplan.choice import eval_context
from fareplan.second_stage import solve_exact
from fareplan.sos2 import (
    DegenerateRange,
    MOD_PLANE,
    TRANSIT_PLANE,
    SearchDirection,
    generate_anchors,
    slope_range,
    sos2_optimize,
    surrogate_on_grid,
)

from conftest import random_instance, random_fare_vec

BOUNDS = np.array([[0.0, 10.0], [0.0, 5.0], [0.0, 10.0], [0.0, 5.0],
                   [0.0, 0.5]])


def test_axis_anchors_even_spacing_with_current():
    current = np.array([2.0, 1.0, 3.0, 0.5, 0.23])
    d = SearchDirection(kind="axis", axis=4)
    anchors = generate_anchors(current, d, 6, np.random.default_rng(0), BOUNDS)
    lam_vals = [p[4] for p in anchors.points]
    expect = [0.0, 0.1, 0.2, 0.23, 0.3, 0.4, 0.5]
    assert lam_vals == approx(expect)
    assert anchors.current_index == 3
    assert len(anchors.points) == 7  # D + 1, current not on the grid
    # frozen coordinates untouched
    for p in anchors.points:
        assert p[[0, 1, 2, 3]] == approx(current[[0, 1, 2, 3]])


def test_axis_anchor_on_grid_not_duplicated():
    current = np.array([2.0, 1.0, 3.0, 0.5, 0.3])
    d = SearchDirection(kind="axis", axis=4)
    anchors = generate_anchors(current, d, 6, np.random.default_rng(0), BOUNDS)
    assert len(anchors.points) == 6  # 0.3 coincides with a grid anchor
    assert anchors.positions[anchors.current_index] == approx(0.3)


def test_degenerate_axis_raises():
    bounds = BOUNDS.copy()
    bounds[4] = [0.2, 0.2]
    with pytest.raises(DegenerateRange):
        generate_anchors(np.array([1, 1, 1, 1, 0.2]),
                         SearchDirection(kind="axis", axis=4), 5,
                         np.random.default_rng(0), bounds)


def test_slope_range_lower_corner():
    # at x = x_min the whole slope fan to the far edge is valid
    lo, hi = slope_range(0.0, 0.0, 10.0, 2.0, 0.0, 5.0)
    assert lo == approx((0.0 - 2.0) / 10.0)
    assert hi == approx((5.0 - 2.0) / 10.0)


def test_slope_range_upper_boundary():
    lo, hi = slope_range(10.0, 0.0, 10.0, 2.0, 0.0, 5.0)
    assert lo == approx((5.0 - 2.0) / -10.0)
    assert hi == approx((0.0 - 2.0) / -10.0)


def test_slope_range_interior():
    lo, hi = slope_range(4.0, 0.0, 10.0, 1.0, 0.0, 5.0)
    assert lo == approx(max((5.0 - 1.0) / -4.0, (0.0 - 1.0) / 6.0))
    assert hi == approx(min((0.0 - 1.0) / -4.0, (5.0 - 1.0) / 6.0))


def test_plane_anchors_stay_in_bounds_many_draws():
    rng = np.random.default_rng(42)
    lo, hi = BOUNDS[:, 0], BOUNDS[:, 1]
    for _ in range(10_000):
        current = lo + rng.random(5) * (hi - lo)
        plane = TRANSIT_PLANE if rng.random() < 0.5 else MOD_PLANE
        d = SearchDirection(kind="plane", plane=plane)
        anchors = generate_anchors(current, d, 6, rng, BOUNDS)
        for p in anchors.points:
            assert np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12)
        pos = anchors.positions
        assert all(b > a for a, b in zip(pos, pos[1:]))
        assert anchors.direction.slope is not None


def test_plane_anchors_lie_on_sampled_line():
    rng = np.random.default_rng(7)
    current = np.array([4.0, 2.0, 6.0, 1.0, 0.1])
    d = SearchDirection(kind="plane", plane=TRANSIT_PLANE)
    anchors = generate_anchors(current, d, 6, rng, BOUNDS)
    span = anchors.direction.spanning_axis
    other = TRANSIT_PLANE[0] if span == TRANSIT_PLANE[1] else TRANSIT_PLANE[1]
    m, b = anchors.direction.slope, anchors.direction.intercept
    for p in anchors.points:
        assert p[other] == approx(b + m * p[span], abs=1e-9)


def _evaluated_anchors(inst, rng, axis=None):
    ctx = eval_context(inst)
    current = random_fare_vec(rng)
    if axis is None:
        axis = int(rng.integers(0, 5))
    d = SearchDirection(kind="axis", axis=axis)
    anchors = generate_anchors(current, d, 6, rng, ctx.axis_bounds)
    anchors.solutions = [solve_exact(inst, p) for p in anchors.points]
    return ctx, anchors


def test_surrogate_exact_at_anchors():
    rng = np.random.default_rng(50)
    for _ in range(20):
        inst = random_instance(rng, n_types=4, n_cats=2)
        ctx, anchors = _evaluated_anchors(inst, rng)
        from fareplan.sos2 import segment_coefficients
        for d in range(len(anchors.points) - 1):
            c0, c1, c2 = segment_coefficients(
                ctx, anchors.solutions[d], anchors.solutions[d + 1],
                ctx.weights)
            w_a = anchors.solutions[d].welfare.total
            w_b = anchors.solutions[d + 1].welfare.total
            assert c0 == approx(w_a, rel=1e-12, abs=1e-9)
            assert c0 + c1 + c2 == approx(w_b, rel=1e-12, abs=1e-9)


def test_identical_anchor_solutions_return_first_anchor():
    rng = np.random.default_rng(51)
    inst = random_instance(rng, n_types=4, n_cats=2)
    ctx = eval_context(inst)
    sol = solve_exact(inst, random_fare_vec(rng))
    from fareplan.sos2 import AnchorSet
    pts = [np.array([1, 1, 1, 1, 0.1]), np.array([2, 1, 1, 1, 0.1])]
    anchors = AnchorSet(direction=SearchDirection(kind="axis", axis=0),
                        points=pts, positions=[1.0, 2.0], current_index=0,
                        solutions=[sol, sol])
    y, val = sos2_optimize(anchors, ctx)
    assert np.allclose(y, pts[0])
    assert val == approx(sol.welfare.total, rel=1e-12)


def test_pure_pax_segment_optimum_at_anchor():
    # with only the passenger term the surrogate is linear per segment, so
    # the argmax is always one of the anchors
    rng = np.random.default_rng(52)
    inst = random_instance(rng, n_types=4, n_cats=2, weights=(1, 0, 0))
    ctx, anchors = _evaluated_anchors(inst, rng)
    y, val = sos2_optimize(anchors, ctx)
    anchor_vals = [s.welfare.total for s in anchors.solutions]
    k = int(np.argmax(anchor_vals))
    assert val == approx(anchor_vals[k], rel=1e-12)
    assert np.allclose(y, anchors.points[k])


def test_optimize_matches_grid_oracle():
    rng = np.random.default_rng(53)
    for _ in range(30):
        inst = random_instance(rng, n_types=int(rng.integers(2, 6)),
                               n_cats=int(rng.integers(1, 4)))
        ctx, anchors = _evaluated_anchors(inst, rng)
        y_fast, v_fast = sos2_optimize(anchors, ctx)
        y_grid, v_grid = surrogate_on_grid(anchors, ctx, step=1e-4)
        assert v_fast >= v_grid - 1e-12 * max(1, abs(v_grid))
        assert v_fast == approx(v_grid, rel=1e-6)


def test_surrogate_at_current_bounds_accepted_value():
    # the current solution is an anchor, so the surrogate max is at least
    # the true objective there
    rng = np.random.default_rng(54)
    for _ in range(10):
        inst = random_instance(rng, n_types=4, n_cats=2)
        ctx = eval_context(inst)
        current = random_fare_vec(rng)
        d = SearchDirection(kind="axis", axis=int(rng.integers(0, 5)))
        anchors = generate_anchors(current, d, 6, rng, ctx.axis_bounds)
        anchors.solutions = [solve_exact(inst, p) for p in anchors.points]
        _, val = sos2_optimize(anchors, ctx)
        cur_w = anchors.solutions[anchors.current_index].welfare.total
        assert val >= cur_w - 1e-12 * max(1, abs(cur_w))
