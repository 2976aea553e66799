"""Anchor lines and exact optimization of the interpolated welfare surrogate.

A search line is either a single fare axis or a slanted line in one
operator's (base fare, markup) plane.  The second stage is solved exactly
at evenly spaced anchors along the line; between consecutive anchors the
price and share variables are interpolated linearly, which makes the
interpolated objective quadratic in the segment coordinate (the revenue
term is a product of two linear interpolants, everything else is linear).
Each segment is therefore maximized in closed form, replacing a small MIQP
with per-segment vertex/stationary-point comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .choice import EvalContext, ObjectiveWeights

AXIS_LO_TOL = 1e-9

# axis pairs for the two operator planes, in axis-space order
TRANSIT_PLANE = (0, 1)
MOD_PLANE = (2, 3)
LAMBDA_AXIS = 4


class DegenerateRange(ValueError):
    """The requested search axis has zero width; the line is a point."""


@dataclass(frozen=True)
class SearchDirection:
    """Either one fare axis or a slanted line in an operator plane.

    For planes the spanning axis and slope are sampled when anchors are
    generated; a direction coming out of ``search_directions`` has them
    unset.
    """

    kind: str                      # "axis" or "plane"
    axis: int | None = None        # axis index for kind == "axis"
    plane: tuple[int, int] | None = None  # (base axis, markup axis)
    spanning_axis: int | None = None
    slope: float | None = None
    intercept: float | None = None

    def label(self) -> str:
        if self.kind == "axis":
            return f"axis{self.axis}"
        return f"plane{self.plane[0]}{self.plane[1]}"


@dataclass
class AnchorSet:
    """Ordered anchors along one line, positions strictly increasing.

    ``solutions`` is filled by the caller (one second-stage solution per
    anchor) before the set is handed to :func:`sos2_optimize`.
    """

    direction: SearchDirection
    points: list[np.ndarray]
    positions: list[float]
    current_index: int
    solutions: list = field(default_factory=list)


def slope_range(x: float, x_min: float, x_max: float,
                y: float, y_min: float, y_max: float) -> tuple[float, float]:
    """Slopes for which the line through (x, y) spans [x_min, x_max] inside
    the y box.  Boundary positions use the one-sided corner formulas."""
    if x_max - x_min <= 0:
        raise DegenerateRange("spanning axis has zero width")
    span = x_max - x_min
    if x <= x_min + AXIS_LO_TOL * span:
        m_min = (y_min - y) / (x_max - x)
        m_max = (y_max - y) / (x_max - x)
    elif x >= x_max - AXIS_LO_TOL * span:
        m_min = (y_max - y) / (x_min - x)
        m_max = (y_min - y) / (x_min - x)
    else:
        m_min = max((y_max - y) / (x_min - x), (y_min - y) / (x_max - x))
        m_max = min((y_min - y) / (x_min - x), (y_max - y) / (x_max - x))
    # + 0.0 normalizes signed zeros, which would otherwise invert the pair
    m_min += 0.0
    m_max += 0.0
    return m_min, max(m_min, m_max)


def generate_anchors(current: np.ndarray, direction: SearchDirection,
                     D: int, rng: np.random.Generator,
                     bounds: np.ndarray) -> AnchorSet:
    """Evenly spaced anchors along the line, with the current solution
    inserted in order unless it coincides with a grid anchor."""
    if D < 2:
        raise ValueError("need at least two anchors")
    current = np.asarray(current, dtype=float)

    if direction.kind == "axis":
        ax = direction.axis
        lo, hi = bounds[ax]
        if hi - lo <= 0:
            raise DegenerateRange(f"axis {ax} has max == min")
        grid = np.linspace(lo, hi, D)
        points, positions = [], []
        for g in grid:
            pt = current.copy()
            pt[ax] = g
            points.append(pt)
            positions.append(float(g))
        cur_pos = float(current[ax])
        concrete = direction
    else:
        bx, by = direction.plane
        if rng.random() < 0.5:
            span, other = bx, by
        else:
            span, other = by, bx
        x_min, x_max = bounds[span]
        y_min, y_max = bounds[other]
        x, yv = float(current[span]), float(current[other])
        m_lo, m_hi = slope_range(x, x_min, x_max, yv, y_min, y_max)
        m = float(rng.uniform(m_lo, m_hi))
        b = yv - m * x
        grid = np.linspace(x_min, x_max, D)
        points, positions = [], []
        for g in grid:
            pt = current.copy()
            pt[span] = g
            pt[other] = min(max(b + m * g, y_min), y_max)
            points.append(pt)
            positions.append(float(g))
        cur_pos = x
        concrete = replace(direction, spanning_axis=span, slope=m, intercept=b)

    tol = 1e-12 * max(abs(positions[-1] - positions[0]), 1.0)
    idx = None
    for i, pos in enumerate(positions):
        if abs(pos - cur_pos) <= tol:
            points[i] = current.copy()
            idx = i
            break
    if idx is None:
        idx = int(np.searchsorted(positions, cur_pos))
        points.insert(idx, current.copy())
        positions.insert(idx, cur_pos)
    return AnchorSet(direction=concrete, points=points, positions=positions,
                     current_index=idx)


def segment_coefficients(ctx: EvalContext, sol_a, sol_b,
                         weights: ObjectiveWeights):
    """(c0, c1, c2) of the interpolated objective on one segment.

    The interpolation parameter t runs from anchor a (t=0) to anchor b
    (t=1); prices and shares interpolate linearly, so only the revenue
    term is quadratic.
    """
    p0 = sol_a.p_vec[ctx.opt_route]
    p1 = sol_b.p_vec[ctx.opt_route]
    dp = p1 - p0
    s0 = sol_a.s_flat
    ds = sol_b.s_flat - s0
    o0 = sol_a.s0_vec
    do = sol_b.s0_vec - o0
    wN = ctx.N * ctx.d0
    wA = ctx.opt_N * ctx.opt_alpha

    pax0 = ctx.pax_const + float(wA @ p0)
    dpax = float(wA @ dp)
    rev0 = float(ctx.opt_N @ (p0 * s0))
    rev1 = float(ctx.opt_N @ (p0 * ds + s0 * dp))
    rev2 = float(ctx.opt_N @ (dp * ds))
    vmt0 = float(wN @ o0)
    dvmt = float(wN @ do)

    c0 = weights.pax * pax0 + weights.rev * rev0 - weights.vmt * vmt0
    c1 = weights.pax * dpax + weights.rev * rev1 - weights.vmt * dvmt
    c2 = weights.rev * rev2
    return c0, c1, c2


def sos2_optimize(anchors: AnchorSet, ctx: EvalContext,
                  weights: ObjectiveWeights | None = None):
    """Maximize the interpolated objective over the anchor line.

    Each segment's quadratic is compared at its endpoints and, when the
    curvature is negative, at the interior stationary point.  Returns the
    interpolated fare point and the surrogate value there.
    """
    w = ctx.weights if weights is None else weights
    if len(anchors.solutions) != len(anchors.points):
        raise ValueError("anchor set is missing evaluated solutions")
    best_val = -np.inf
    best_y = None
    for d in range(len(anchors.points) - 1):
        sol_a = anchors.solutions[d]
        sol_b = anchors.solutions[d + 1]
        c0, c1, c2 = segment_coefficients(ctx, sol_a, sol_b, w)
        cands = [(0.0, c0), (1.0, c0 + c1 + c2)]
        if c2 < 0:
            t_star = -c1 / (2 * c2)
            if 0.0 < t_star < 1.0:
                cands.append((t_star, c0 + c1 * t_star + c2 * t_star * t_star))
        for t, val in cands:
            if val > best_val:
                best_val = val
                best_y = (1 - t) * anchors.points[d] + t * anchors.points[d + 1]
    lo = ctx.axis_bounds[:, 0]
    hi = ctx.axis_bounds[:, 1]
    return np.minimum(np.maximum(best_y, lo), hi), float(best_val)


def surrogate_on_grid(anchors: AnchorSet, ctx: EvalContext,
                      weights: ObjectiveWeights | None = None,
                      step: float = 1e-4):
    """Dense-grid evaluation of the surrogate; the independent oracle used
    to test :func:`sos2_optimize`."""
    w = ctx.weights if weights is None else weights
    best_val = -np.inf
    best_y = None
    for d in range(len(anchors.points) - 1):
        c0, c1, c2 = segment_coefficients(
            ctx, anchors.solutions[d], anchors.solutions[d + 1], w)
        ts = np.arange(0.0, 1.0 + step / 2, step)
        vals = c0 + c1 * ts + c2 * ts * ts
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            t = float(ts[k])
            best_y = (1 - t) * anchors.points[d] + t * anchors.points[d + 1]
    return best_y, best_val
