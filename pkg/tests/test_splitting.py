from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from endokit.adapters import GroupPolicy, GroupSource
from endokit.manifest import UnprojectedRecordError
from endokit.splitting import (AmbiguousMatchError, ConflictingExternalEntryError,
                               KTooLargeError, SplitError, SplitSpec,
                               UnmatchedPolicy, UnreachableTargetError,
                               enforce_external_split, load_assignment,
                               read_external_csv, rebalance, split_cost,
                               split_with_external, stratified_group_kfold,
                               stratified_group_shuffle_split, write_assignment)
from conftest import grouped_manifest, make_manifest, make_record, singleton_manifest


def spec2(ratios=(0.8, 0.2), seed=1, lam=1.0):
    return SplitSpec(("train", "val"), ratios, seed=seed, size_term_weight=lam)


# -- split_cost ---------------------------------------------------------------

def test_split_cost_zero_on_exact_proportions():
    counts = {"train": {"a": 8, "b": 8}, "val": {"a": 2, "b": 2}}
    assert split_cost(counts, spec2()) == 0.0


def test_split_cost_hand_computed_example():
    counts = {"train": {"a": 9}, "val": {"a": 1}}
    assert split_cost(counts, spec2(lam=0.0)) == pytest.approx(0.02, abs=1e-15)


def test_split_cost_class_permutation_invariant():
    counts = {"train": {"a": 7, "b": 3}, "val": {"a": 1, "b": 4}}
    renamed = {"train": {"b": 7, "a": 3}, "val": {"b": 1, "a": 4}}
    assert split_cost(counts, spec2()) == pytest.approx(
        split_cost(renamed, spec2()), rel=1e-12)


# -- spec validation ----------------------------------------------------------

def test_spec_validation():
    with pytest.raises(SplitError):
        SplitSpec(("train",), (1.0,), seed=0)
    with pytest.raises(SplitError):
        SplitSpec(("a", "b"), (0.9, 0.2), seed=0)
    with pytest.raises(SplitError):
        SplitSpec(("a", "a"), (0.5, 0.5), seed=0)
    with pytest.raises(SplitError):
        SplitSpec(("a", "b"), (1.0, 0.0), seed=0)
    SplitSpec(tuple(f"f{i}" for i in range(3)), tuple(1 / 3 for _ in range(3)),
              seed=0)  # 1/3+1/3+1/3 is within tolerance


# -- shuffle split ------------------------------------------------------------

def test_single_group_lands_in_largest_split():
    m = grouped_manifest({"p1": ["a", "a", "b", "b", "b"]})
    a = stratified_group_shuffle_split(m, spec2())
    assert set(a.assignment.values()) == {"train"}


def test_twenty_singletons_split_exactly():
    m = singleton_manifest({"a": 10, "b": 10})
    a = stratified_group_shuffle_split(m, spec2())
    assert a.achieved_counts == {"train": {"a": 8, "b": 8},
                                 "val": {"a": 2, "b": 2}}
    assert a.cost <= 1e-12


def test_determinism_and_seed_sensitivity(tiny_manifest):
    a1 = stratified_group_shuffle_split(tiny_manifest, spec2(seed=0))
    a2 = stratified_group_shuffle_split(tiny_manifest, spec2(seed=0))
    assert a1.assignment == a2.assignment and a1.cost == a2.cost
    a3 = stratified_group_shuffle_split(tiny_manifest, spec2(seed=1))
    assert a1.assignment != a3.assignment


def test_completeness_and_group_exclusivity(tiny_manifest):
    a = stratified_group_shuffle_split(tiny_manifest, spec2(seed=3))
    assert set(a.assignment) == {r.record_id for r in tiny_manifest.records}
    split_of_group = {}
    for rid, split in a.assignment.items():
        g = a.group_of[rid]
        assert split_of_group.setdefault(g, split) == split


def test_unprojected_records_rejected():
    m = singleton_manifest({"a": 4}, projected=False)
    with pytest.raises(UnprojectedRecordError):
        stratified_group_shuffle_split(m, spec2())


def test_degenerate_ratio_warns_not_fails():
    m = singleton_manifest({"a": 3})
    spec = SplitSpec(("train", "val"), (0.9, 0.1), seed=0)
    a = stratified_group_shuffle_split(m, spec)
    assert any("DegenerateSpec" in w for w in a.warnings)
    assert len(a.assignment) == 3


@st.composite
def _random_grouped_instance(draw):
    n_groups = draw(st.integers(min_value=2, max_value=12))
    classes = ["a", "b", "c"]
    groups = {}
    for i in range(n_groups):
        size = draw(st.integers(min_value=1, max_value=4))
        groups[f"p{i:02d}"] = [classes[draw(st.integers(0, 2))]
                               for _ in range(size)]
    return groups


@given(_random_grouped_instance(), st.integers(min_value=0, max_value=2 ** 32))
@settings(max_examples=60, deadline=None)
def test_property_group_exclusivity_and_local_optimality(groups, seed):
    m = grouped_manifest(groups)
    spec = spec2(seed=seed)
    a = stratified_group_shuffle_split(m, spec)
    # exclusivity
    split_of_group = {}
    for rid, split in a.assignment.items():
        assert split_of_group.setdefault(a.group_of[rid], split) == split
    # cost field equals the public objective on achieved counts
    assert a.cost == split_cost(a.achieved_counts, spec)
    # no single-group move improves the cost
    for g, split in split_of_group.items():
        members = [rid for rid in a.assignment if a.group_of[rid] == g]
        for other in spec.split_names:
            if other == split:
                continue
            counts = {s: dict(a.achieved_counts[s]) for s in spec.split_names}
            for rid in members:
                cls = a.class_of[rid]
                counts[split][cls] -= 1
                counts[other][cls] = counts[other].get(cls, 0) + 1
            assert split_cost(counts, spec) >= a.cost


# -- k-fold -------------------------------------------------------------------

def test_kfold_nine_singletons():
    m = singleton_manifest({"a": 9})
    f = stratified_group_kfold(m, 3, seed=5)
    fold_sizes = [list(f.fold_of.values()).count(i) for i in range(3)]
    assert fold_sizes == [3, 3, 3]
    assert f.cost <= 1e-12


def test_kfold_too_large():
    m = grouped_manifest({"p1": ["a", "a"], "p2": ["a"]})
    with pytest.raises(KTooLargeError):
        stratified_group_kfold(m, 3, seed=0)


def test_kfold_matches_shuffle_split_cost():
    m = singleton_manifest({"a": 12, "b": 6})
    f = stratified_group_kfold(m, 2, seed=9)
    spec = SplitSpec(("fold0", "fold1"), (0.5, 0.5), seed=9)
    a = stratified_group_shuffle_split(m, spec)
    assert f.cost == a.cost


def test_kfold_divisible_exactness():
    m = singleton_manifest({"a": 30, "b": 30, "c": 30})
    for k in (3, 5):
        f = stratified_group_kfold(m, k, seed=4)
        for name, row in f.achieved_counts.items():
            assert all(v == 30 // k for v in row.values())
        assert f.cost <= 1e-12


def test_fold_sizes_differ_at_most_largest_group():
    groups = {f"p{i}": ["a"] * (1 + i % 3) for i in range(10)}
    m = grouped_manifest(groups)
    f = stratified_group_kfold(m, 3, seed=2)
    sizes = [sum(1 for v in f.fold_of.values() if v == i) for i in range(3)]
    assert max(sizes) - min(sizes) <= 3  # largest group has 3 records


# -- rebalance ----------------------------------------------------------------

def test_rebalance_singletons_exact():
    m = singleton_manifest({"a": 500, "b": 500})
    a = stratified_group_shuffle_split(m, spec2(ratios=(0.7, 0.3), seed=2))
    assert a.split_sizes() == {"train": 700, "val": 300}
    r = rebalance(a, "val", "train", 0.2)
    assert r.split_sizes() == {"train": 800, "val": 200}
    for cls in ("a", "b"):
        assert abs(r.achieved_counts["val"][cls] - 100) <= 1
    assert r.cost == split_cost(r.achieved_counts, r.spec)


def test_rebalance_identity_when_target_equals_current():
    m = singleton_manifest({"a": 10})
    a = stratified_group_shuffle_split(m, spec2(seed=1))
    r = rebalance(a, "val", "train", a.split_sizes()["val"] / 10)
    assert r.assignment == a.assignment


def test_rebalance_moves_whole_groups():
    m = grouped_manifest({f"p{i}": ["a", "b"] for i in range(10)})
    a = stratified_group_shuffle_split(m, spec2(ratios=(0.7, 0.3), seed=3))
    r = rebalance(a, "val", "train", 0.2)
    split_of_group = {}
    for rid, split in r.assignment.items():
        assert split_of_group.setdefault(r.group_of[rid], split) == split
    assert r.split_sizes()["val"] / 20 == pytest.approx(0.2)


def test_rebalance_target_above_current_rejected():
    m = singleton_manifest({"a": 10})
    a = stratified_group_shuffle_split(m, spec2(seed=1))
    with pytest.raises(SplitError):
        rebalance(a, "val", "train", 0.9)


def test_rebalance_unreachable_target():
    m = grouped_manifest({"p1": ["a"] * 8, "p2": ["a"] * 2})
    a = stratified_group_shuffle_split(m, spec2(seed=1))
    from_split = a.assignment[next(rid for rid, g in a.group_of.items()
                                   if g == "patient:p2")]
    with pytest.raises(UnreachableTargetError):
        rebalance(a, from_split, "train" if from_split == "val" else "val", 0.01)


# -- external enforcement -----------------------------------------------------

def _filename_manifest():
    records = [
        make_record("kid", "images/abc_123.jpg", "a", canonical_class="a"),
        make_record("kid", "images/def_456.jpg", "b", canonical_class="b"),
        make_record("see", "frames/ghi_789.jpg", "a", canonical_class="a"),
    ]
    return make_manifest("kid", records[:2]), records


def test_enforce_basic_match():
    m, _ = _filename_manifest()
    a = enforce_external_split(m, {"abc_123": "train", "def_456": "val"})
    assert a.assignment == {"kid/images/abc_123.jpg": "train",
                            "kid/images/def_456.jpg": "val"}
    assert a.match_report["matched"] == 2
    assert a.spec is None and a.cost is None


def test_enforce_unmatched_policies():
    m, _ = _filename_manifest()
    with pytest.raises(SplitError) as err:
        enforce_external_split(m, {"abc_123": "train"},
                               UnmatchedPolicy.ERROR_ON_UNMATCHED)
    assert "def_456" in str(err.value)
    a = enforce_external_split(m, {"abc_123": "train"},
                               UnmatchedPolicy.PASSTHROUGH_UNMATCHED)
    assert list(a.assignment) == ["kid/images/abc_123.jpg"]
    assert a.match_report["per_dataset"]["kid"] == {"matched": 1, "unmatched": 1}


def test_enforce_cropped_copy_scenario():
    # external keys derived from ".png" crops match original ".jpg" records
    m, _ = _filename_manifest()
    external = [("abc_123", "train"), ("def_456", "val")]
    a = enforce_external_split(m, external)
    assert a.assignment["kid/images/abc_123.jpg"] == "train"


def test_enforce_conflicting_entries():
    m, _ = _filename_manifest()
    with pytest.raises(ConflictingExternalEntryError):
        enforce_external_split(m, [("abc_123", "train"), ("abc_123", "val"),
                                   ("def_456", "val")])


def test_enforce_ambiguous_match():
    records = [
        make_record("kid", "a/abc.jpg", "a", canonical_class="a"),
        make_record("kid", "b/abc.png", "a", canonical_class="a"),
    ]
    m = make_manifest("kid", records)
    with pytest.raises(AmbiguousMatchError):
        enforce_external_split(m, {"abc": "train"},
                               UnmatchedPolicy.PASSTHROUGH_UNMATCHED)


def test_split_with_external_pins_groups():
    groups = {f"p{i}": ["a", "b"] for i in range(10)}
    m = grouped_manifest(groups)
    external = {"img_00000": "val"}  # first record of p0
    a = split_with_external(m, spec2(seed=5), external)
    # whole group p0 follows its externally pinned record
    p0_members = [rid for rid, g in a.group_of.items() if g == "patient:p0"]
    assert {a.assignment[rid] for rid in p0_members} == {"val"}
    assert set(a.assignment) == {r.record_id for r in m.records}
    assert a.match_report["matched"] == 1
    assert a.cost == split_cost(a.achieved_counts, a.spec)


def test_split_with_external_unknown_split_name():
    m = grouped_manifest({"p0": ["a", "a"], "p1": ["a"]})
    with pytest.raises(SplitError):
        split_with_external(m, spec2(seed=5), {"img_00000": "test"})


def test_split_with_external_conflicting_pin_warns():
    m = grouped_manifest({"p0": ["a", "a", "a"], "p1": ["a"], "p2": ["a"]})
    external = {"img_00000": "train", "img_00001": "val"}
    a = split_with_external(m, spec2(seed=5), external)
    assert any("pinned to several splits" in w for w in a.warnings)
    # the externally dictated records keep their splits
    assert a.assignment["d/img_00000.jpg"] == "train"
    assert a.assignment["d/img_00001.jpg"] == "val"


# -- persistence --------------------------------------------------------------

def test_assignment_round_trip(tmp_path, tiny_manifest):
    a = stratified_group_shuffle_split(tiny_manifest, spec2(seed=6))
    csv_path = tmp_path / "split.csv"
    json_path = tmp_path / "split.json"
    write_assignment(a, csv_path, json_path)
    loaded = load_assignment(csv_path, tiny_manifest, json_path)
    assert loaded.assignment == a.assignment
    assert loaded.group_of == a.group_of
    assert loaded.spec == a.spec
    assert loaded.cost == a.cost
    # byte determinism across rewrites
    csv2, json2 = tmp_path / "s2.csv", tmp_path / "s2.json"
    write_assignment(a, csv2, json2)
    assert csv_path.read_bytes() == csv2.read_bytes()
    assert json_path.read_bytes() == json2.read_bytes()


def test_read_external_csv(tmp_path):
    path = tmp_path / "ext.csv"
    path.write_text("match_key,split\nabc,train\ndef,val\n", encoding="utf-8")
    assert read_external_csv(path) == [("abc", "train"), ("def", "val")]
    bad = tmp_path / "bad.csv"
    bad.write_text("key,split\nabc,train\n", encoding="utf-8")
    with pytest.raises(SplitError):
        read_external_csv(bad)
