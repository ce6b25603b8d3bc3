from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from endokit.manifest import UnprojectedRecordError
from endokit.weights import EmptyInputError, compute_weights, write_weights_csv
from conftest import make_manifest, make_record, singleton_manifest


def test_two_balanced_classes():
    m = singleton_manifest({"a": 5, "b": 5})
    table = compute_weights(m)
    assert all(w == pytest.approx(0.1) for w in table.weights.values())
    assert table.class_mass == {"a": pytest.approx(0.5), "b": pytest.approx(0.5)}


def test_three_one_imbalance():
    m = singleton_manifest({"a": 3, "b": 1})
    table = compute_weights(m)
    for r in m.records:
        expected = 1 / 6 if r.canonical_class == "a" else 1 / 2
        assert table.weights[r.record_id] == pytest.approx(expected)
    assert table.class_mass["a"] == pytest.approx(0.5)


def test_single_class_uniform():
    m = singleton_manifest({"a": 4})
    table = compute_weights(m)
    assert all(w == pytest.approx(0.25) for w in table.weights.values())
    assert table.class_mass == {"a": pytest.approx(1.0)}


@given(st.dictionaries(st.sampled_from("abcdef"),
                       st.integers(min_value=1, max_value=40),
                       min_size=1, max_size=6))
@settings(max_examples=60, deadline=None)
def test_mass_properties(class_counts):
    table = compute_weights(singleton_manifest(class_counts))
    assert sum(table.weights.values()) == pytest.approx(1.0, abs=1e-9)
    masses = list(table.class_mass.values())
    assert max(masses) - min(masses) <= 1e-9


def test_scale_free_duplication():
    base = compute_weights(singleton_manifest({"a": 5, "b": 5}))
    doubled = compute_weights(singleton_manifest({"a": 10, "b": 5}))
    a_weight_base = next(w for rid, w in base.weights.items() if rid.endswith("00000.jpg"))
    a_weight_doubled = next(w for rid, w in doubled.weights.items()
                            if rid.endswith("00000.jpg"))
    assert a_weight_doubled == pytest.approx(a_weight_base / 2)
    assert doubled.class_mass["a"] == pytest.approx(base.class_mass["a"])


def test_split_filter_via_hint_and_assignment():
    records = [
        make_record("d", "a.jpg", "x", canonical_class="x", split_hint="train"),
        make_record("d", "b.jpg", "x", canonical_class="x", split_hint="val"),
    ]
    m = make_manifest("d", records)
    table = compute_weights(m, split="train")
    assert list(table.weights) == ["d/a.jpg"]
    table2 = compute_weights(m, split="val",
                             assignment={"d/a.jpg": "val", "d/b.jpg": "train"})
    assert list(table2.weights) == ["d/a.jpg"]


def test_empty_after_filter():
    m = singleton_manifest({"a": 3})
    with pytest.raises(EmptyInputError):
        compute_weights(m, split="val")


def test_unprojected_rejected():
    m = singleton_manifest({"a": 3}, projected=False)
    with pytest.raises(UnprojectedRecordError):
        compute_weights(m)


def test_csv_precision_round_trip(tmp_path):
    m = singleton_manifest({"a": 3, "b": 7})
    table = compute_weights(m)
    out = tmp_path / "w.csv"
    write_weights_csv(table, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "record_id,weight"
    parsed = {line.split(",")[0]: float(line.split(",")[1]) for line in lines[1:]}
    assert parsed == table.weights  # 17 significant digits round-trip exactly
