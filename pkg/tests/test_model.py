import json

import numpy as np
import pytest

from fareplan import model
from fareplan.model import FareVector, SchemaError, validate

from conftest import random_instance


def test_validate_clean_instance():
    inst = random_instance(np.random.default_rng(1))
    assert validate(inst) == []


def test_validate_route_in_two_categories():
    inst = random_instance(np.random.default_rng(2))
    cats = list(inst.categories)
    # duplicate one DE route into a second category
    rid = cats[0].route_ids[0]
    cats[1] = model.DiscountCategory(
        id=cats[1].id, route_ids=tuple(sorted(cats[1].route_ids + (rid,))))
    bad = model.Instance(
        operators=inst.operators, routes=inst.routes,
        categories=tuple(cats), passenger_types=inst.passenger_types,
        bounds=inst.bounds, weights=inst.weights)
    rules = {v.rule for v in validate(bad)}
    assert "category partition" in rules


def test_validate_positive_price_sensitivity():
    inst = random_instance(np.random.default_rng(3))
    t = inst.passenger_types[0]
    bad_types = (model.PassengerType(
        id=t.id, count=t.count, route_ids=t.route_ids,
        u_nonmonetary=t.u_nonmonetary, u_outside=t.u_outside,
        price_sensitivity=+0.1, drive_distance=t.drive_distance),
    ) + inst.passenger_types[1:]
    bad = model.Instance(
        operators=inst.operators, routes=inst.routes,
        categories=inst.categories, passenger_types=bad_types,
        bounds=inst.bounds, weights=inst.weights)
    rules = {v.rule for v in validate(bad)}
    assert "price_sensitivity sign" in rules


def test_save_load_round_trip(tmp_path):
    inst = random_instance(np.random.default_rng(4))
    path = tmp_path / "inst.json"
    model.save(inst, path)
    again = model.load(path)
    assert again == inst
    assert again.hash_hex() == inst.hash_hex()


def test_load_missing_weights_names_field(tmp_path):
    inst = random_instance(np.random.default_rng(5))
    obj = model.to_json(inst)
    del obj["weights"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(SchemaError) as err:
        model.load(path)
    assert "weights" in str(err.value)


def test_load_unknown_field_warns_and_loads(tmp_path):
    inst = random_instance(np.random.default_rng(6))
    obj = model.to_json(inst)
    obj["extra_knob"] = 42
    path = tmp_path / "extra.json"
    path.write_text(json.dumps(obj))
    with pytest.warns(UserWarning, match="extra_knob"):
        again = model.load(path)
    assert again == inst


def test_load_rejects_bad_schema_version(tmp_path):
    inst = random_instance(np.random.default_rng(7))
    obj = model.to_json(inst)
    obj["schema_version"] = "999"
    path = tmp_path / "ver.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(SchemaError):
        model.load(path)


def test_load_parse_error_reports_line(tmp_path):
    path = tmp_path / "mangled.json"
    path.write_text('{"schema_version": "1",\n  "operators": [BROKEN')
    with pytest.raises(SchemaError) as err:
        model.load(path)
    assert "line" in str(err.value)


def test_category_partition_property():
    inst = random_instance(np.random.default_rng(8), n_types=8, n_cats=4)
    de = inst.discount_eligible_route_ids()
    from_cats = sorted(r for c in inst.categories for r in c.route_ids)
    assert sorted(de) == from_cats  # disjoint union covers exactly R^DE


def test_hash_stable_across_round_trip(tmp_path):
    inst = random_instance(np.random.default_rng(9))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    model.save(inst, p1)
    loaded = model.load(p1)
    model.save(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_fare_vector_json_round_trip():
    fv = FareVector(base={0: 4.5, 1: 4.53}, markup={0: 0.16, 1: 1.07},
                    discount=0.31)
    assert FareVector.from_json(fv.to_json()) == fv


def test_types_touching_index():
    inst = random_instance(np.random.default_rng(10), n_types=10, n_cats=3)
    for c in inst.categories:
        touching = set(inst.types_touching(c.id))
        expect = {
            t.id for t in inst.passenger_types
            if set(t.route_ids) & set(c.route_ids)
        }
        assert touching == expect
