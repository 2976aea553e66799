"""Problem data model: operators, routes, discount categories, passenger types.

An :class:`Instance` bundles everything one alliance pricing problem needs.
Instances are treated as immutable after construction and are shared freely
across threads.  The canonical on-disk format is JSON (see ``save``/``load``);
field names transliterate the usual symbols (beta0, betaDelta, Lambda,
mu_pax, ...) so fixtures stay human-diffable.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

TRANSIT = "transit"
MOD = "mod"

SCHEMA_VERSION = "1"


class SchemaError(ValueError):
    """Raised when an instance file is missing or mangles a required field."""

    def __init__(self, message, field_name=None):
        super().__init__(message)
        self.field_name = field_name


@dataclass(frozen=True)
class Operator:
    id: int
    kind: str  # "transit" or "mod"


@dataclass(frozen=True)
class FareBounds:
    """Box constraints for base fares, per-mile markups and the discount."""

    base_min: float
    base_max: float
    markup_min: float
    markup_max: float
    discount_min: float
    discount_max: float


@dataclass(frozen=True)
class ObjectiveWeights:
    """Non-negative priority weights for passenger, revenue and VMT terms."""

    pax: float
    rev: float
    vmt: float


@dataclass
class Route:
    """A travel option: one or more legs, each on some operator's network.

    ``distance_by_operator`` records the miles covered on each serving
    operator; its keys must equal ``operators_served``.  ``category`` is the
    discount-activation category id, present exactly when the route is
    discount-eligible.
    """

    id: int
    operators_served: tuple[int, ...]
    distance_by_operator: dict[int, float]
    category: int | None = None


@dataclass
class DiscountCategory:
    """A group of routes whose discounts switch on together."""

    id: int
    route_ids: tuple[int, ...]
    label: str | None = None


@dataclass
class PassengerType:
    """A (origin, destination, preference profile) demand segment.

    ``u_nonmonetary`` holds the price-free part of each route's utility;
    the full utility of route r at price p is ``u_nonmonetary[r] +
    price_sensitivity * p``.  The outside option (driving) has utility
    ``u_outside`` and contributes ``drive_distance`` vehicle-miles per
    passenger who takes it.
    """

    id: int
    count: float
    route_ids: tuple[int, ...]
    u_nonmonetary: dict[int, float]
    u_outside: float
    price_sensitivity: float
    drive_distance: float
    town: str | None = None


@dataclass
class FareVector:
    """A first-stage decision point: per-operator fares plus the discount."""

    base: dict[int, float]
    markup: dict[int, float]
    discount: float

    def to_json(self) -> dict:
        return {
            "beta0": {str(k): v for k, v in sorted(self.base.items())},
            "betaDelta": {str(k): v for k, v in sorted(self.markup.items())},
            "Lambda": self.discount,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "FareVector":
        try:
            return cls(
                base={int(k): float(v) for k, v in obj["beta0"].items()},
                markup={int(k): float(v) for k, v in obj["betaDelta"].items()},
                discount=float(obj["Lambda"]),
            )
        except KeyError as exc:
            raise SchemaError(f"fare vector missing field {exc}", str(exc)) from exc


@dataclass
class Violation:
    """One failed validation rule. Violations are data, not exceptions."""

    entity: str
    rule: str
    message: str

    def __str__(self):
        return f"{self.entity}: {self.rule}: {self.message}"


@dataclass
class Instance:
    operators: tuple[Operator, ...]
    routes: tuple[Route, ...]
    categories: tuple[DiscountCategory, ...]
    passenger_types: tuple[PassengerType, ...]
    bounds: FareBounds
    weights: ObjectiveWeights

    # ------------------------------------------------------------------
    # cached lookups (lazy; cached values never escape structural equality)
    # ------------------------------------------------------------------
    def _cache(self, key, build):
        cache = self.__dict__.setdefault("_lazy", {})
        if key not in cache:
            cache[key] = build()
        return cache[key]

    def route_by_id(self, rid: int) -> Route:
        return self._cache("routes_by_id", lambda: {r.id: r for r in self.routes})[rid]

    def category_by_id(self, cid: int) -> DiscountCategory:
        return self._cache(
            "cats_by_id", lambda: {c.id: c for c in self.categories}
        )[cid]

    def type_by_id(self, tid: int) -> PassengerType:
        return self._cache(
            "types_by_id", lambda: {t.id: t for t in self.passenger_types}
        )[tid]

    def operator_by_kind(self, kind: str) -> Operator:
        for op in self.operators:
            if op.kind == kind:
                return op
        raise KeyError(kind)

    @property
    def transit_id(self) -> int:
        return self.operator_by_kind(TRANSIT).id

    @property
    def mod_id(self) -> int:
        return self.operator_by_kind(MOD).id

    def discount_eligible_route_ids(self) -> frozenset[int]:
        return self._cache(
            "de_routes",
            lambda: frozenset(r.id for r in self.routes if r.category is not None),
        )

    def types_touching(self, category_id: int) -> tuple[int, ...]:
        """Passenger types with at least one route in the given category."""

        def build():
            touching: dict[int, list[int]] = {c.id: [] for c in self.categories}
            for t in self.passenger_types:
                seen = set()
                for rid in t.route_ids:
                    cat = self.route_by_id(rid).category
                    if cat is not None and cat not in seen:
                        seen.add(cat)
                        touching[cat].append(t.id)
            return {cid: tuple(tids) for cid, tids in touching.items()}

        return self._cache("touching", build)[category_id]

    def fare_vector(self, base_tr, markup_tr, base_mod, markup_mod, discount):
        return FareVector(
            base={self.transit_id: base_tr, self.mod_id: base_mod},
            markup={self.transit_id: markup_tr, self.mod_id: markup_mod},
            discount=discount,
        )

    def hash_hex(self) -> str:
        """Stable content hash; identical across save/load round trips."""
        payload = json.dumps(to_json(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def validate(instance: Instance) -> list[Violation]:
    """Check every structural invariant; returns an empty list iff clean."""
    out: list[Violation] = []
    v = out.append

    kinds = sorted(op.kind for op in instance.operators)
    if len(instance.operators) != 2 or kinds != [MOD, TRANSIT]:
        v(Violation("operators", "operator pair",
                    "exactly two operators required, one transit and one mod"))
    op_ids = {op.id for op in instance.operators}
    if len(op_ids) != len(instance.operators):
        v(Violation("operators", "operator ids", "duplicate operator id"))

    b = instance.bounds
    if not (0 <= b.base_min <= b.base_max):
        v(Violation("bounds", "base fare bounds", "need 0 <= base_min <= base_max"))
    if not (0 <= b.markup_min <= b.markup_max):
        v(Violation("bounds", "markup bounds", "need 0 <= markup_min <= markup_max"))
    if not (0 <= b.discount_min <= b.discount_max <= 1):
        v(Violation("bounds", "discount bounds",
                    "need 0 <= discount_min <= discount_max <= 1"))

    w = instance.weights
    if min(w.pax, w.rev, w.vmt) < 0:
        v(Violation("weights", "weight sign", "objective weights must be >= 0"))
    if w.pax == w.rev == w.vmt == 0:
        v(Violation("weights", "weight sum", "objective weights are all zero"))

    route_ids = set()
    cat_ids = {c.id for c in instance.categories}
    if len(cat_ids) != len(instance.categories):
        v(Violation("categories", "category ids", "duplicate category id"))
    for r in instance.routes:
        ent = f"route {r.id}"
        if r.id in route_ids:
            v(Violation(ent, "route ids", "duplicate route id"))
        route_ids.add(r.id)
        if not r.operators_served:
            v(Violation(ent, "operators served", "route served by no operator"))
        if set(r.operators_served) - op_ids:
            v(Violation(ent, "operators served", "unknown operator id"))
        if set(r.distance_by_operator) != set(r.operators_served):
            v(Violation(ent, "distance keys",
                        "distance_by_operator keys must equal operators_served"))
        if any(d < 0 for d in r.distance_by_operator.values()):
            v(Violation(ent, "distance sign", "negative operator distance"))
        if r.category is not None and r.category not in cat_ids:
            v(Violation(ent, "category reference", f"unknown category {r.category}"))

    # categories must partition the discount-eligible routes
    assigned: dict[int, list[int]] = {}
    for c in instance.categories:
        for rid in c.route_ids:
            assigned.setdefault(rid, []).append(c.id)
            if rid not in route_ids:
                v(Violation(f"category {c.id}", "route reference",
                            f"unknown route {rid}"))
    for rid, cids in assigned.items():
        if len(cids) > 1:
            v(Violation(f"route {rid}", "category partition",
                        f"route assigned to categories {sorted(cids)}"))
    for r in instance.routes:
        in_cats = assigned.get(r.id, [])
        if r.category is None and in_cats:
            v(Violation(f"route {r.id}", "category partition",
                        "non-eligible route listed in a category"))
        if r.category is not None:
            if r.category not in in_cats:
                v(Violation(f"route {r.id}", "category partition",
                            f"route claims category {r.category} but is not in it"))

    type_ids = set()
    for t in instance.passenger_types:
        ent = f"passenger type {t.id}"
        if t.id in type_ids:
            v(Violation(ent, "type ids", "duplicate passenger type id"))
        type_ids.add(t.id)
        if t.count <= 0:
            v(Violation(ent, "count sign", "passenger count must be > 0"))
        if t.price_sensitivity > 0:
            v(Violation(ent, "price_sensitivity sign",
                        "price sensitivity must be <= 0"))
        if t.drive_distance < 0:
            v(Violation(ent, "drive distance sign", "drive distance must be >= 0"))
        if not t.route_ids:
            v(Violation(ent, "route set", "route set is empty"))
        if set(t.route_ids) - route_ids:
            v(Violation(ent, "route reference", "unknown route id in route set"))
        if set(t.u_nonmonetary) != set(t.route_ids):
            v(Violation(ent, "utility keys",
                        "u_nonmonetary keys must equal route_ids"))
    return out


# ----------------------------------------------------------------------
# JSON round trip
# ----------------------------------------------------------------------

_KNOWN_TOP = {"schema_version", "operators", "routes", "categories",
              "passenger_types", "bounds", "weights"}


def to_json(instance: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "operators": [
            {"id": op.id, "kind": op.kind}
            for op in sorted(instance.operators, key=lambda o: o.id)
        ],
        "routes": [
            {
                "id": r.id,
                "operators_served": sorted(r.operators_served),
                "distance_by_operator": {
                    str(k): r.distance_by_operator[k]
                    for k in sorted(r.distance_by_operator)
                },
                "category": r.category,
            }
            for r in sorted(instance.routes, key=lambda r: r.id)
        ],
        "categories": [
            {"id": c.id, "route_ids": sorted(c.route_ids), "label": c.label}
            for c in sorted(instance.categories, key=lambda c: c.id)
        ],
        "passenger_types": [
            {
                "id": t.id,
                "count": t.count,
                "route_ids": sorted(t.route_ids),
                "u_nonmonetary": {
                    str(k): t.u_nonmonetary[k] for k in sorted(t.u_nonmonetary)
                },
                "u_outside": t.u_outside,
                "price_sensitivity": t.price_sensitivity,
                "drive_distance": t.drive_distance,
                "town": t.town,
            }
            for t in sorted(instance.passenger_types, key=lambda t: t.id)
        ],
        "bounds": {
            "base_min": instance.bounds.base_min,
            "base_max": instance.bounds.base_max,
            "markup_min": instance.bounds.markup_min,
            "markup_max": instance.bounds.markup_max,
            "discount_min": instance.bounds.discount_min,
            "discount_max": instance.bounds.discount_max,
        },
        "weights": {
            "mu_pax": instance.weights.pax,
            "mu_rev": instance.weights.rev,
            "mu_vmt": instance.weights.vmt,
        },
    }


def _require(obj: Mapping, name: str, context: str):
    if name not in obj:
        raise SchemaError(f"{context}: missing required field '{name}'", name)
    return obj[name]


def _warn_unknown(obj: Mapping, known: set[str], context: str):
    extra = set(obj) - known
    if extra:
        warnings.warn(
            f"{context}: ignoring unknown fields {sorted(extra)}",
            stacklevel=3,
        )


def from_json(obj: Mapping) -> Instance:
    version = _require(obj, "schema_version", "instance")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})",
            "schema_version",
        )
    _warn_unknown(obj, _KNOWN_TOP, "instance")

    operators = tuple(
        Operator(id=int(_require(o, "id", "operator")),
                 kind=str(_require(o, "kind", "operator")))
        for o in _require(obj, "operators", "instance")
    )
    routes = []
    for r in _require(obj, "routes", "instance"):
        ctx = f"route {r.get('id', '?')}"
        _warn_unknown(r, {"id", "operators_served", "distance_by_operator",
                          "category"}, ctx)
        routes.append(Route(
            id=int(_require(r, "id", ctx)),
            operators_served=tuple(int(k) for k in
                                   _require(r, "operators_served", ctx)),
            distance_by_operator={
                int(k): float(d)
                for k, d in _require(r, "distance_by_operator", ctx).items()
            },
            category=None if r.get("category") is None else int(r["category"]),
        ))
    categories = []
    for c in _require(obj, "categories", "instance"):
        ctx = f"category {c.get('id', '?')}"
        _warn_unknown(c, {"id", "route_ids", "label"}, ctx)
        categories.append(DiscountCategory(
            id=int(_require(c, "id", ctx)),
            route_ids=tuple(int(r) for r in _require(c, "route_ids", ctx)),
            label=c.get("label"),
        ))
    ptypes = []
    for t in _require(obj, "passenger_types", "instance"):
        ctx = f"passenger type {t.get('id', '?')}"
        _warn_unknown(t, {"id", "count", "route_ids", "u_nonmonetary",
                          "u_outside", "price_sensitivity", "drive_distance",
                          "town"}, ctx)
        ptypes.append(PassengerType(
            id=int(_require(t, "id", ctx)),
            count=float(_require(t, "count", ctx)),
            route_ids=tuple(int(r) for r in _require(t, "route_ids", ctx)),
            u_nonmonetary={int(k): float(u) for k, u in
                           _require(t, "u_nonmonetary", ctx).items()},
            u_outside=float(_require(t, "u_outside", ctx)),
            price_sensitivity=float(_require(t, "price_sensitivity", ctx)),
            drive_distance=float(_require(t, "drive_distance", ctx)),
            town=t.get("town"),
        ))
    braw = _require(obj, "bounds", "instance")
    _warn_unknown(braw, {"base_min", "base_max", "markup_min", "markup_max",
                         "discount_min", "discount_max"}, "bounds")
    bounds = FareBounds(
        base_min=float(_require(braw, "base_min", "bounds")),
        base_max=float(_require(braw, "base_max", "bounds")),
        markup_min=float(_require(braw, "markup_min", "bounds")),
        markup_max=float(_require(braw, "markup_max", "bounds")),
        discount_min=float(_require(braw, "discount_min", "bounds")),
        discount_max=float(_require(braw, "discount_max", "bounds")),
    )
    wraw = _require(obj, "weights", "instance")
    _warn_unknown(wraw, {"mu_pax", "mu_rev", "mu_vmt"}, "weights")
    weights = ObjectiveWeights(
        pax=float(_require(wraw, "mu_pax", "weights")),
        rev=float(_require(wraw, "mu_rev", "weights")),
        vmt=float(_require(wraw, "mu_vmt", "weights")),
    )
    return Instance(
        operators=operators,
        routes=tuple(routes),
        categories=tuple(categories),
        passenger_types=tuple(ptypes),
        bounds=bounds,
        weights=weights,
    )


def save(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json(instance), fh, indent=1)
        fh.write("\n")


def load(path) -> Instance:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"{path}: not valid JSON (line {exc.lineno}, col {exc.colno})"
            ) from exc
    return from_json(obj)


def with_weights(instance: Instance, pax: float, rev: float, vmt: float) -> Instance:
    """A copy of the instance under different objective weights."""
    return replace(instance, weights=ObjectiveWeights(pax=pax, rev=rev, vmt=vmt))
