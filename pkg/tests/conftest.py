import numpy as np
import pytest

from fareplan.casegen import desk_config, generate, tiny_config
from fareplan.model import (
    DiscountCategory,
    FareBounds,
    Instance,
    ObjectiveWeights,
    Operator,
    PassengerType,
    Route,
    validate,
)


def random_instance(rng: np.random.Generator, n_types: int = 5,
                    n_cats: int = 3, n_routes: int | None = None,
                    weights: tuple | None = None,
                    allow_zero_alpha: bool = False) -> Instance:
    """Small random instance; types may straddle several categories, so the
    coupling graph is not trivially one category per component."""
    if n_routes is None:
        n_routes = max(2 * n_cats + 2, 4)
    routes = []
    for rid in range(n_routes):
        ops = [int(rng.integers(0, 2))] if rng.random() < 0.6 else [0, 1]
        dists = {k: float(rng.uniform(0.5, 15.0)) for k in ops}
        routes.append(Route(id=rid, operators_served=tuple(sorted(ops)),
                            distance_by_operator=dists, category=None))
    # leave route 0 never eligible so non-DE paths stay exercised
    de_pool = list(range(1, n_routes))
    rng.shuffle(de_pool)
    cat_routes: dict[int, list[int]] = {c: [] for c in range(n_cats)}
    n_de = int(rng.integers(n_cats, len(de_pool) + 1)) if n_cats else 0
    for j, rid in enumerate(de_pool[:n_de]):
        cat = j % n_cats
        routes[rid].category = cat
        cat_routes[cat].append(rid)
    categories = tuple(
        DiscountCategory(id=c, route_ids=tuple(sorted(cat_routes[c])))
        for c in range(n_cats) if cat_routes[c]
    )
    types = []
    for tid in range(n_types):
        k = int(rng.integers(1, min(4, n_routes) + 1))
        rids = tuple(sorted(rng.choice(n_routes, size=k, replace=False).tolist()))
        alpha = 0.0 if (allow_zero_alpha and rng.random() < 0.1) \
            else -float(rng.uniform(0.01, 0.15))
        types.append(PassengerType(
            id=tid,
            count=float(rng.uniform(1.0, 100.0)),
            route_ids=rids,
            u_nonmonetary={r: float(rng.normal(-1.0, 1.0)) for r in rids},
            u_outside=float(rng.normal(0.0, 1.0)),
            price_sensitivity=alpha,
            drive_distance=float(rng.uniform(0.0, 30.0)),
        ))
    if weights is None:
        w = rng.uniform(0.0, 1.0, 3)
        w[int(rng.integers(0, 3))] += 0.5  # never all zero
        weights = tuple(w)
    inst = Instance(
        operators=(Operator(id=0, kind="transit"), Operator(id=1, kind="mod")),
        routes=tuple(routes),
        categories=categories,
        passenger_types=tuple(types),
        bounds=FareBounds(0.0, 10.0, 0.0, 5.0, 0.0, 0.5),
        weights=ObjectiveWeights(*weights),
    )
    assert not validate(inst)
    return inst


def random_fare_vec(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(0, 10), rng.uniform(0, 5),
                     rng.uniform(0, 10), rng.uniform(0, 5),
                     rng.uniform(0, 0.5)])


@pytest.fixture(scope="session")
def tiny_instance():
    return generate(tiny_config())


@pytest.fixture(scope="session")
def desk_instance():
    return generate(desk_config())
