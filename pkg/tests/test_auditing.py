from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from endokit.adapters import GroupPolicy
from endokit.auditing import audit_group_integrity, detect_overlap, write_report
from endokit.splitting import SplitSpec, stratified_group_shuffle_split
from conftest import grouped_manifest, make_manifest, make_record


def _clean_split(m, seed=1):
    spec = SplitSpec(("train", "val"), (0.8, 0.2), seed=seed)
    return stratified_group_shuffle_split(m, spec)


def test_clean_split_passes(tiny_manifest):
    a = _clean_split(tiny_manifest)
    report = audit_group_integrity(tiny_manifest, a)
    assert report.passed


def test_planted_group_span_detected():
    m = grouped_manifest({"p9": ["a", "a"], "p1": ["a", "b"], "p2": ["b", "b"]})
    # p9's two records land in different splits; everyone else stays in train.
    pairs = []
    for r in m.records:
        if r.patient_id == "p9" and r.file_path.endswith("00001.jpg"):
            pairs.append((r.record_id, "val"))
        else:
            pairs.append((r.record_id, "train"))
    report = audit_group_integrity(m, pairs)
    spans = [v for v in report.violations if v.kind == "GROUP_SPANS_SPLITS"]
    assert len(spans) == 1
    assert spans[0].group_key == "patient:p9"
    assert len(spans[0].record_ids) == 2
    assert spans[0].splits == ["train", "val"]


def test_unassigned_record_detected(tiny_manifest):
    a = _clean_split(tiny_manifest)
    pairs = list(a.assignment.items())[1:]
    report = audit_group_integrity(tiny_manifest, pairs)
    assert any(v.kind == "UNASSIGNED_RECORD" for v in report.violations)


def test_duplicate_assignment_detected(tiny_manifest):
    a = _clean_split(tiny_manifest)
    pairs = list(a.assignment.items())
    rid, split = pairs[0]
    pairs.append((rid, "val" if split == "train" else "train"))
    report = audit_group_integrity(tiny_manifest, pairs)
    assert any(v.kind == "DUPLICATE_ASSIGNMENT" for v in report.violations)


def test_unknown_assigned_record_is_warning(tiny_manifest):
    a = _clean_split(tiny_manifest)
    pairs = list(a.assignment.items()) + [("ghost", "train")]
    report = audit_group_integrity(tiny_manifest, pairs)
    assert report.passed
    assert any("ghost" in w for w in report.warnings)


@given(st.integers(min_value=0, max_value=10 ** 9))
@settings(max_examples=50, deadline=None)
def test_any_single_corruption_is_detected(seed):
    m = grouped_manifest({f"p{i}": ["a", "b"] for i in range(5)})
    a = _clean_split(m, seed=3)
    pairs = list(a.assignment.items())
    kind = seed % 3
    idx = (seed // 3) % len(pairs)
    rid, split = pairs[idx]
    if kind == 0:       # flip one record's split (groups have >1 member)
        pairs[idx] = (rid, "val" if split == "train" else "train")
    elif kind == 1:     # drop one record
        del pairs[idx]
    else:               # duplicate one record into the other split
        pairs.append((rid, "val" if split == "train" else "train"))
    report = audit_group_integrity(m, pairs)
    assert not report.passed


def test_overlap_disjoint_sets():
    a = make_manifest("a", [make_record("a", "x1.jpg", "l")])
    b = make_manifest("b", [make_record("b", "y1.jpg", "l")])
    report = detect_overlap(a, b)
    assert report.clean and report.pairs == []


def test_overlap_cropped_copy_pair():
    a = make_manifest("a", [make_record("a", "abc_123.jpg", "l")])
    b = make_manifest("b", [make_record("b", "crops/abc_123.png", "l")])
    report = detect_overlap(a, b)
    assert len(report.pairs) == 1
    pair = report.pairs[0]
    assert pair.match_key == "abc_123"
    assert pair.dataset_a == "a" and pair.dataset_b == "b"


def test_overlap_hundred_shared_basenames():
    a = make_manifest("a", [make_record("a", f"f_{i:03d}.jpg", "l")
                            for i in range(100)])
    b = make_manifest("b", [make_record("b", f"mirror/f_{i:03d}.png", "l")
                            for i in range(100)])
    report = detect_overlap(a, b)
    assert len(report.pairs) == 100
    assert report.per_dataset_counts == {"a": 100, "b": 100}
    # set-intersection oracle
    keys_a = {f"f_{i:03d}" for i in range(100)}
    assert report.match_keys() == keys_a


@given(st.sets(st.integers(min_value=0, max_value=40), max_size=15),
       st.sets(st.integers(min_value=0, max_value=40), max_size=15))
@settings(max_examples=40, deadline=None)
def test_overlap_symmetry_and_oracle(names_a, names_b):
    a = make_manifest("a", [make_record("a", f"n{i}.jpg", "l") for i in sorted(names_a)])
    b = make_manifest("b", [make_record("b", f"n{i}.png", "l") for i in sorted(names_b)])
    ab = detect_overlap(a, b)
    ba = detect_overlap(b, a)
    assert len(ab.pairs) == len(ba.pairs) == len(names_a & names_b)


def test_overlap_within_manifest_duplicates_warn():
    a = make_manifest("a", [make_record("a", "x/abc.jpg", "l"),
                            make_record("a", "y/abc.jpg", "l")])
    b = make_manifest("b", [make_record("b", "other.jpg", "l")])
    report = detect_overlap(a, b)
    assert report.clean
    assert any("abc" in w for w in report.warnings)


def test_report_json(tmp_path, tiny_manifest):
    a = _clean_split(tiny_manifest)
    report = audit_group_integrity(tiny_manifest, a)
    out = tmp_path / "audit.json"
    write_report(report, out)
    import json
    doc = json.loads(out.read_text())
    assert doc["passed"] is True
