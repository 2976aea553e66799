"""Synthetic alliance instances with a commuter-rail-plus-MOD structure.

Geometry: an inner city at the origin, towns on radial transit lines, a
hub (station) per town, and census-tract centroids scattered around each
town center.  Mobility-on-demand edges connect tracts to hubs and nearby
tracts; a two-layer copy of the transit network caps paths at one
transfer.  Per-mode fastest routes come from k-shortest-path search over
the routing graph, utilities from fixed mode constants and travel times,
and price sensitivities optionally from town income ratios.

Everything is a pure function of the config; a fixed seed reproduces the
instance byte for byte.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    DiscountCategory,
    FareBounds,
    Instance,
    ObjectiveWeights,
    Operator,
    PassengerType,
    Route,
    validate,
)

# calibrated route-choice coefficients
ASC_MOD = -0.75
ASC_TRANSIT = -1.125
ASC_HYBRID = -0.9375
ASC_DRIVE = 0.0
PRICE_COEF = -0.05     # per dollar
TIME_COEF = -0.0075    # per minute

MODE_ASC = {"mod": ASC_MOD, "transit": ASC_TRANSIT, "hybrid": ASC_HYBRID}

PROFILES = (
    # (name, time multiplier, price multiplier)
    ("intermediate", 1.0, 1.0),
    ("time_sensitive", 2.0, 0.5),
    ("price_sensitive", 0.5, 2.0),
)


class NoPath(ValueError):
    """No route exists between the requested endpoints."""


@dataclass
class SyntheticConfig:
    town_count: int = 14
    tracts_per_town: int = 4
    transit_line_count: int = 4
    hub_spacing: float = 4.0
    demand_scale: float = 40.0
    local_od_per_tract: int = 2
    transit_mph: float = 35.0
    mod_mph: float = 22.0
    drive_mph: float = 28.0
    walk_mph: float = 3.0
    transit_wait_min: float = 8.0
    mod_wait_min: float = 4.0
    transfer_penalty_min: float = 5.0
    walk_threshold_miles: float = 1.0
    inner_walk_miles: float = 0.4
    mod_coverage: float = 1.0
    road_circuity: float = 1.25
    gas_per_mile: float = 0.20
    parking_fee: float = 10.0
    profile_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    income_ratios: dict[str, float] | None = None
    k_paths: int = 10
    base_max: float = 10.0
    markup_max: float = 5.0
    discount_max: float = 0.5
    weights: tuple[float, float, float] = (1.0, 1.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.town_count < 2:
            raise ValueError("need at least two towns")
        for speed in (self.transit_mph, self.mod_mph, self.drive_mph,
                      self.walk_mph):
            if speed <= 0:
                raise ValueError("speeds must be > 0")
        if not 0 < self.mod_coverage <= 1:
            raise ValueError("mod_coverage must be in (0, 1]")


def tiny_config(seed: int = 7) -> SyntheticConfig:
    return SyntheticConfig(town_count=2, tracts_per_town=1,
                           transit_line_count=1, local_od_per_tract=1,
                           demand_scale=25.0, seed=seed)


def desk_config(seed: int = 20) -> SyntheticConfig:
    return SyntheticConfig(seed=seed)


def large_config(seed: int = 31) -> SyntheticConfig:
    return SyntheticConfig(town_count=20, tracts_per_town=8,
                           transit_line_count=5, local_od_per_tract=2,
                           seed=seed)


# ----------------------------------------------------------------------
# k shortest loopless paths
# ----------------------------------------------------------------------

def _lex_dijkstra(adj, source, target, banned_nodes=frozenset(),
                  banned_edges=frozenset()):
    """Shortest path with ties broken to the lexicographically smallest
    node sequence; returns (cost, path) or None."""
    heap = [(0.0, (source,))]
    finalized = set()
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in finalized:
            continue
        finalized.add(node)
        if node == target:
            return cost, path
        for nbr, c in adj.get(node, ()):
            if nbr in finalized or nbr in banned_nodes:
                continue
            if (node, nbr) in banned_edges:
                continue
            heapq.heappush(heap, (cost + c, path + (nbr,)))
    return None


def yen_k_shortest(adj, source, target, k: int):
    """Up to k loopless paths by ascending (cost, node sequence).

    ``adj`` maps node -> iterable of (neighbor, cost) with costs >= 0.
    Raises :class:`NoPath` if the target is unreachable.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    first = _lex_dijkstra(adj, source, target)
    if first is None:
        raise NoPath(f"no path from {source!r} to {target!r}")
    edge_cost = {}
    for u, nbrs in adj.items():
        for v, c in nbrs:
            prev = edge_cost.get((u, v))
            if prev is None or c < prev:
                edge_cost[(u, v)] = c
    results = [first]
    candidates: list[tuple[float, tuple]] = []
    pushed = {first[1]}
    while len(results) < k:
        _, prev_path = results[-1]
        root_cost = 0.0
        for i in range(len(prev_path) - 1):
            spur = prev_path[i]
            root = prev_path[:i + 1]
            banned_edges = set()
            for _, p in results:
                if len(p) > i + 1 and p[:i + 1] == root:
                    banned_edges.add((p[i], p[i + 1]))
            banned_nodes = set(root[:-1])
            res = _lex_dijkstra(adj, spur, target, banned_nodes, banned_edges)
            if res is not None:
                spur_cost, spur_path = res
                total = root[:-1] + spur_path
                if total not in pushed:
                    pushed.add(total)
                    heapq.heappush(candidates,
                                   (root_cost + spur_cost, total))
            root_cost += edge_cost[(prev_path[i], prev_path[i + 1])]
        if not candidates:
            break
        results.append(heapq.heappop(candidates))
    return results


# ----------------------------------------------------------------------
# routing network
# ----------------------------------------------------------------------

@dataclass
class Edge:
    to: str
    minutes: float
    distance: float
    kind: str               # mod | transit | walk | wait | transfer
    operator: str | None    # "transit" | "mod" | None

    def __post_init__(self):
        if self.minutes < 0:
            raise ValueError("edge cost must be >= 0")


@dataclass
class RoutingGraph:
    coords: dict[str, tuple[float, float]]
    edges: dict[str, list[Edge]] = field(default_factory=dict)

    def add_edge(self, frm: str, to: str, minutes: float, distance: float,
                 kind: str, operator: str | None = None):
        self.edges.setdefault(frm, []).append(
            Edge(to=to, minutes=minutes, distance=distance, kind=kind,
                 operator=operator))

    def adjacency(self) -> dict[str, list[tuple[str, float]]]:
        return {u: [(e.to, e.minutes) for e in es]
                for u, es in self.edges.items()}

    def edge(self, u: str, v: str) -> Edge:
        for e in self.edges.get(u, ()):
            if e.to == v:
                return e
        raise KeyError((u, v))


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class Network:
    graph: RoutingGraph
    towns: list[str]
    town_of_tract: dict[str, str]
    tracts: dict[str, list[str]]         # town -> tract nodes
    adjacent: dict[str, set[str]]        # same-line neighbor towns
    town_line: dict[str, int]


def build_network(config: SyntheticConfig, rng: np.random.Generator) -> Network:
    towns = [f"town{j:02d}" for j in range(config.town_count)]
    L = config.transit_line_count
    graph = RoutingGraph(coords={})
    coords = graph.coords
    coords["street:inner"] = (0.0, 0.0)
    coords["dest:inner"] = (0.0, 0.0)

    town_line: dict[str, int] = {}
    town_hop: dict[str, int] = {}
    for j, town in enumerate(towns):
        line = j % L
        hop = 1 + j // L
        angle = 2 * math.pi * line / L + rng.uniform(-0.15, 0.15)
        radius = hop * config.hub_spacing * rng.uniform(0.9, 1.1)
        coords[f"street:{town}"] = (radius * math.cos(angle),
                                    radius * math.sin(angle))
        town_line[town] = line
        town_hop[town] = hop

    tracts: dict[str, list[str]] = {}
    town_of_tract: dict[str, str] = {}
    for town in towns:
        cx, cy = coords[f"street:{town}"]
        tracts[town] = []
        for i in range(config.tracts_per_town):
            r = rng.uniform(0.2, 1.4)
            a = rng.uniform(0, 2 * math.pi)
            node = f"tract:{town}:{i}"
            coords[node] = (cx + r * math.cos(a), cy + r * math.sin(a))
            tracts[town].append(node)
            town_of_tract[node] = town

    # transit lines: inner hub out through each line's towns, two layers
    # (layer 1 is entered only through a transfer, capping paths at one)
    lines: dict[int, list[str]] = {l: ["inner"] for l in range(L)}
    for town in towns:
        lines[town_line[town]].append(town)
    for l in range(L):
        lines[l].sort(key=lambda t: 0 if t == "inner" else town_hop[t])
        for layer in (0, 1):
            for place in lines[l]:
                coords[f"plat:{place}:{l}:{layer}"] = coords[f"street:{place}"]
        for a, b in zip(lines[l], lines[l][1:]):
            d = _dist(coords[f"street:{a}"], coords[f"street:{b}"])
            minutes = d / config.transit_mph * 60
            for layer in (0, 1):
                na, nb = f"plat:{a}:{l}:{layer}", f"plat:{b}:{l}:{layer}"
                graph.add_edge(na, nb, minutes, d, "transit", "transit")
                graph.add_edge(nb, na, minutes, d, "transit", "transit")

    adjacent: dict[str, set[str]] = {t: set() for t in towns}
    for l in range(L):
        seq = [t for t in lines[l] if t != "inner"]
        for a, b in zip(seq, seq[1:]):
            adjacent[a].add(b)
            adjacent[b].add(a)

    places = ["inner"] + towns
    for place in places:
        street = f"street:{place}"
        served = [l for l in range(L) if place in lines[l]]
        for l in served:
            graph.add_edge(street, f"plat:{place}:{l}:0",
                           config.transit_wait_min, 0.0, "wait")
            for layer in (0, 1):
                graph.add_edge(f"plat:{place}:{l}:{layer}", street,
                               0.0, 0.0, "walk")
        if place == "inner":
            # transfers between lines happen downtown only
            for l in served:
                for l2 in served:
                    if l2 != l:
                        graph.add_edge(
                            f"plat:{place}:{l}:0", f"plat:{place}:{l2}:1",
                            config.transfer_penalty_min + config.transit_wait_min,
                            0.0, "transfer")

    walk_minutes = 60.0 / config.walk_mph
    d_inner = config.inner_walk_miles
    graph.add_edge("street:inner", "dest:inner", d_inner * walk_minutes,
                   d_inner, "walk")

    def road(a, b):
        return _dist(coords[a], coords[b]) * config.road_circuity

    def add_mod(frm, to):
        d = road(frm, to)
        graph.add_edge(frm, to, config.mod_wait_min + d / config.mod_mph * 60,
                       d, "mod", "mod")

    for town in towns:
        for tract in tracts[town]:
            d = _dist(coords[tract], coords[f"street:{town}"])
            if d <= config.walk_threshold_miles:
                graph.add_edge(tract, f"street:{town}", d * walk_minutes,
                               d, "walk")
                graph.add_edge(f"street:{town}", tract, d * walk_minutes,
                               d, "walk")
            # first mile to own hub, last mile home
            add_mod(tract, f"street:{town}")
            add_mod(f"street:{town}", tract)
            for nbr in sorted(adjacent[town]):
                if rng.random() <= config.mod_coverage:
                    add_mod(tract, f"street:{nbr}")
            # direct long-haul service is the optional part of the edge set
            if rng.random() <= config.mod_coverage:
                add_mod(tract, "dest:inner")
            for other in sorted({town} | adjacent[town]):
                for t2 in tracts.get(other, ()):
                    if t2 != tract and rng.random() <= config.mod_coverage:
                        add_mod(tract, t2)

    return Network(graph=graph, towns=towns, town_of_tract=town_of_tract,
                   tracts=tracts, adjacent=adjacent, town_line=town_line)


# ----------------------------------------------------------------------
# choice sets
# ----------------------------------------------------------------------

@dataclass
class RouteSpec:
    mode: str
    minutes: float
    dist_transit: float
    dist_mod: float


@dataclass
class ODRecord:
    origin_tract: str
    origin_town: str
    dest_label: str     # "inner" or a tract node
    dest_town: str
    demand: float
    drive_miles: float
    drive_minutes: float
    routes: list[RouteSpec] = field(default_factory=list)


def _classify(graph: RoutingGraph, path: tuple[str, ...]) -> RouteSpec | None:
    has_transit = has_mod = False
    minutes = d_tr = d_mod = 0.0
    for u, v in zip(path, path[1:]):
        e = graph.edge(u, v)
        minutes += e.minutes
        if e.kind == "transit":
            has_transit = True
            d_tr += e.distance
        elif e.kind == "mod":
            has_mod = True
            d_mod += e.distance
    if has_transit and has_mod:
        mode = "hybrid"
    elif has_transit:
        mode = "transit"
    elif has_mod:
        mode = "mod"
    else:
        return None  # pure walk is not an in-system route
    return RouteSpec(mode=mode, minutes=minutes, dist_transit=d_tr,
                     dist_mod=d_mod)


def _route_key(graph: RoutingGraph, path: tuple[str, ...]):
    """Uniqueness key: where the trip starts plus its transfer locations."""
    transfers = tuple(
        v for u, v in zip(path, path[1:]) if graph.edge(u, v).kind == "transfer"
    )
    start = path[1] if len(path) > 1 else path[0]
    return (start, transfers)


def build_choice_sets(network: Network, ods: list[ODRecord],
                      config: SyntheticConfig) -> list[ODRecord]:
    """Attach the fastest route of each mode to every OD record.

    Near-duplicate paths (same start and transfer locations) are collapsed
    before the per-mode selection; ODs left with no in-system route are
    dropped with a warning.
    """
    adj = network.graph.adjacency()
    kept: list[ODRecord] = []
    for od in ods:
        target = "dest:inner" if od.dest_label == "inner" else od.dest_label
        try:
            paths = yen_k_shortest(adj, od.origin_tract, target,
                                   config.k_paths)
        except NoPath:
            warnings.warn(f"dropping OD {od.origin_tract} -> {target}: "
                          f"unreachable")
            continue
        seen_keys = set()
        best: dict[str, RouteSpec] = {}
        for _, path in paths:
            key = _route_key(network.graph, path)
            if key in seen_keys:
                continue
            seen_keys.add(key)
            spec = _classify(network.graph, path)
            if spec is None:
                continue
            cur = best.get(spec.mode)
            if cur is None or spec.minutes < cur.minutes:
                best[spec.mode] = spec
        if not best:
            warnings.warn(f"dropping OD {od.origin_tract} -> {target}: "
                          f"no in-system route")
            continue
        od.routes = [best[m] for m in ("transit", "mod", "hybrid") if m in best]
        kept.append(od)
    return kept


# ----------------------------------------------------------------------
# utilities and assembly
# ----------------------------------------------------------------------

def normalized_income_ratios(income_ratios: dict[str, float],
                             demand_by_town: dict[str, float]) -> dict[str, float]:
    """Scale ratios so their demand-weighted mean is one."""
    for town, ratio in income_ratios.items():
        if ratio <= 0:
            raise ValueError(f"income ratio for {town} must be > 0")
    total = sum(demand_by_town.values())
    mean = sum(income_ratios[t] * n for t, n in demand_by_town.items()) / total
    return {t: r / mean for t, r in income_ratios.items()}


def apply_income_awareness(types: list[PassengerType],
                           income_ratios: dict[str, float],
                           alpha_base: float = PRICE_COEF) -> list[PassengerType]:
    """Income-aware price sensitivities: alpha = alpha_base / town ratio.

    Ratios are first normalized so their demand-weighted mean is one.
    Only the price sensitivity changes; recompute any utilities that
    depend on it separately.
    """
    demand_by_town: dict[str, float] = {}
    for t in types:
        demand_by_town[t.town] = demand_by_town.get(t.town, 0.0) + t.count
    ratios = normalized_income_ratios(income_ratios, demand_by_town)
    return [
        replace(t, price_sensitivity=alpha_base / ratios[t.town])
        for t in types
    ]


def assign_utilities(time_mult: float, alpha: float, od: ODRecord,
                     spec: RouteSpec, config: SyntheticConfig) -> float:
    """Non-monetary utility of one route for one sensitivity profile."""
    return MODE_ASC[spec.mode] + time_mult * TIME_COEF * spec.minutes


def outside_utility(time_mult: float, alpha: float, od: ODRecord,
                    config: SyntheticConfig) -> float:
    money = config.gas_per_mile * od.drive_miles + config.parking_fee
    return (ASC_DRIVE + time_mult * TIME_COEF * od.drive_minutes
            + alpha * money)


def generate(config: SyntheticConfig) -> Instance:
    """Full synthetic instance; deterministic per seed.

    Discount activation categories are (origin town, destination town)
    pairs covering every route the MOD operator touches; transit-only
    routes are not discount-eligible.
    """
    rng = np.random.default_rng(config.seed)
    network = build_network(config, rng)
    coords = network.graph.coords

    ods: list[ODRecord] = []
    for town in network.towns:
        for tract in network.tracts[town]:
            demand = config.demand_scale * float(rng.lognormal(0.0, 0.75))
            miles = _dist(coords[tract], coords["dest:inner"]) \
                * config.road_circuity
            ods.append(ODRecord(
                origin_tract=tract, origin_town=town,
                dest_label="inner", dest_town="inner",
                demand=demand, drive_miles=miles,
                drive_minutes=miles / config.drive_mph * 60,
            ))
            local_pool = sorted(
                t2
                for other in sorted({town} | network.adjacent[town])
                for t2 in network.tracts[other]
                if t2 != tract
            )
            n_local = min(config.local_od_per_tract, len(local_pool))
            if n_local:
                picks = rng.choice(len(local_pool), size=n_local, replace=False)
                for pi in sorted(int(x) for x in picks):
                    t2 = local_pool[pi]
                    demand = 0.5 * config.demand_scale \
                        * float(rng.lognormal(0.0, 0.75))
                    miles = _dist(coords[tract], coords[t2]) \
                        * config.road_circuity
                    ods.append(ODRecord(
                        origin_tract=tract, origin_town=town,
                        dest_label=t2, dest_town=network.town_of_tract[t2],
                        demand=demand, drive_miles=miles,
                        drive_minutes=miles / config.drive_mph * 60,
                    ))

    ods = build_choice_sets(network, ods, config)

    # income-aware generation replaces the three sensitivity profiles
    if config.income_ratios is not None:
        demand_by_town: dict[str, float] = {}
        for od in ods:
            demand_by_town[od.origin_town] = \
                demand_by_town.get(od.origin_town, 0.0) + od.demand
        ratios = normalized_income_ratios(config.income_ratios, demand_by_town)
        profiles = [("income_aware", 1.0, None)]
    else:
        ratios = None
        profiles = [
            (name, tm, pm) for (name, tm, pm), share
            in zip(PROFILES, config.profile_mix) if share > 0
        ]
        shares = [s for s in config.profile_mix if s > 0]

    routes: list[Route] = []
    categories: dict[tuple[str, str], list[int]] = {}
    types: list[PassengerType] = []
    cat_keys: list[tuple[str, str]] = sorted({
        (od.origin_town, od.dest_town)
        for od in ods if any(r.mode != "transit" for r in od.routes)
    })
    cat_id_of = {key: i for i, key in enumerate(cat_keys)}
    for key in cat_keys:
        categories[key] = []

    rid = 0
    tid = 0
    for od in ods:
        od_route_ids = []
        for spec in od.routes:
            ops = []
            dists = {}
            if spec.dist_transit > 0 or spec.mode in ("transit", "hybrid"):
                ops.append(0)
                dists[0] = spec.dist_transit
            if spec.dist_mod > 0 or spec.mode in ("mod", "hybrid"):
                ops.append(1)
                dists[1] = spec.dist_mod
            cat = None
            if spec.mode != "transit":
                cat = cat_id_of[(od.origin_town, od.dest_town)]
                categories[(od.origin_town, od.dest_town)].append(rid)
            routes.append(Route(
                id=rid, operators_served=tuple(ops),
                distance_by_operator=dists, category=cat,
            ))
            od_route_ids.append((rid, spec))
            rid += 1
        if ratios is not None:
            alphas = [PRICE_COEF / ratios[od.origin_town]]
            mults = [1.0]
            counts = [od.demand]
        else:
            mults = [tm for _, tm, _ in profiles]
            alphas = [PRICE_COEF * pm for _, _, pm in profiles]
            counts = [od.demand * s for s in shares]
        for tm, alpha, cnt in zip(mults, alphas, counts):
            types.append(PassengerType(
                id=tid, count=cnt,
                route_ids=tuple(r for r, _ in od_route_ids),
                u_nonmonetary={
                    r: assign_utilities(tm, alpha, od, spec, config)
                    for r, spec in od_route_ids
                },
                u_outside=outside_utility(tm, alpha, od, config),
                price_sensitivity=alpha,
                drive_distance=od.drive_miles,
                town=od.origin_town,
            ))
            tid += 1

    instance = Instance(
        operators=(Operator(id=0, kind="transit"), Operator(id=1, kind="mod")),
        routes=tuple(routes),
        categories=tuple(
            DiscountCategory(id=cat_id_of[key], route_ids=tuple(categories[key]),
                             label=f"{key[0]}->{key[1]}")
            for key in cat_keys
        ),
        passenger_types=tuple(types),
        bounds=FareBounds(
            base_min=0.0, base_max=config.base_max,
            markup_min=0.0, markup_max=config.markup_max,
            discount_min=0.0, discount_max=config.discount_max,
        ),
        weights=ObjectiveWeights(*config.weights),
    )
    problems = validate(instance)
    if problems:
        raise AssertionError(
            f"generator produced an invalid instance: {problems[:3]}")
    return instance
