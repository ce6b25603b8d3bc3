from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from endokit.manifest import (DatasetDescriptor, DuplicateDatasetIdError,
                              DuplicateRecordIdError, ImageRecord,
                              ManifestFormatError, Modality, UnifiedManifest,
                              UnprojectedRecordError, make_record_id,
                              merge_manifests, read_manifest, summarize,
                              validate_manifest, write_distribution_csv,
                              write_manifest)
from conftest import make_manifest, make_record, singleton_manifest


def test_merge_counts_add_up():
    a = make_manifest("a", [make_record("a", f"{i}.jpg", "x") for i in range(3)])
    b = make_manifest("b", [make_record("b", f"{i}.jpg", "x") for i in range(4)])
    merged = merge_manifests([a, b])
    assert len(merged.records) == 7
    assert [r.dataset_id for r in merged.records[:3]] == ["a"] * 3
    assert merged.dataset_ids() == ["a", "b"]


def test_merge_empty_input():
    merged = merge_manifests([])
    assert merged.records == [] and merged.datasets == []


def test_merge_duplicate_dataset_id():
    a = make_manifest("a", [])
    with pytest.raises(DuplicateDatasetIdError):
        merge_manifests([a, make_manifest("a", [])])


def test_merge_duplicate_record_id():
    a = make_manifest("a", [make_record("a", "x.jpg", "l")])
    b = make_manifest("b", [ImageRecord(record_id="a/x.jpg", dataset_id="b",
                                        file_path="x.jpg", raw_label="l")])
    with pytest.raises(DuplicateRecordIdError) as err:
        merge_manifests([a, b])
    assert "a/x.jpg" in str(err.value)


@given(st.lists(st.integers(min_value=0, max_value=20), max_size=6))
def test_merge_additivity(sizes):
    inputs = [
        make_manifest(f"d{i}", [make_record(f"d{i}", f"{j}.jpg", "x")
                                for j in range(n)])
        for i, n in enumerate(sizes)
    ]
    assert len(merge_manifests(inputs).records) == sum(sizes)


def test_validate_clean_manifest():
    m = make_manifest("a", [make_record("a", "x.jpg", "l")], declared_count=1)
    assert validate_manifest(m).passed


def test_validate_flags_empty_label():
    m = make_manifest("a", [make_record("a", "x.jpg", "")])
    report = validate_manifest(m)
    assert not report.passed
    assert any(v.kind == "EmptyRawLabel" and v.record_id == "a/x.jpg"
               for v in report.violations)


def test_validate_count_mismatch():
    records = [make_record("a", f"{i}.jpg", "l") for i in range(99)]
    m = make_manifest("a", records, declared_count=100)
    report = validate_manifest(m)
    assert any(v.kind == "CountMismatch" for v in report.violations)


def test_validate_bad_dimensions_and_split_hint():
    bad = [
        make_record("a", "x.jpg", "l", width=0),
        make_record("a", "y.jpg", "l", split_hint="validation"),
    ]
    report = validate_manifest(make_manifest("a", bad))
    kinds = {v.kind for v in report.violations}
    assert {"BadDimension", "BadSplitHint"} <= kinds


def test_summarize_single_record():
    m = singleton_manifest({"bleeding": 1})
    table = summarize(m)
    assert table.cells["d"]["bleeding"] == 1
    assert table.totals_row["bleeding"] == 1
    assert table.column_percentages["d"]["bleeding"] == 1.0


def test_summarize_even_split_percentages():
    a = singleton_manifest({"ulcer": 5}, dataset_id="a")
    b = singleton_manifest({"ulcer": 5}, dataset_id="b")
    table = summarize(merge_manifests([a, b]))
    assert table.column_percentages["a"]["ulcer"] == pytest.approx(0.5)
    assert table.column_percentages["b"]["ulcer"] == pytest.approx(0.5)


def test_summarize_requires_projection():
    m = make_manifest("a", [make_record("a", "x.jpg", "l")])
    with pytest.raises(UnprojectedRecordError):
        summarize(m)


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]),
                       st.integers(min_value=0, max_value=30), min_size=1))
def test_summarize_conservation(class_counts):
    m = singleton_manifest(class_counts)
    table = summarize(m)
    assert sum(table.totals_row.values()) == len(m.records)


def test_summarize_class_order_controls_columns():
    m = singleton_manifest({"b": 1, "a": 2})
    table = summarize(m, class_order=["b", "a"])
    assert table.class_ids == ["b", "a"]
    with pytest.raises(ValueError):
        summarize(m, class_order=["a"])


def test_jsonl_round_trip(tmp_path):
    records = [
        make_record("a", "x.jpg", "l", patient_id="p1", width=64, height=64,
                    split_hint="train"),
        make_record("a", "nested/y.png", "m", video_id="v9"),
    ]
    m = make_manifest("a", records, declared_count=2)
    m.provenance = [{"name": "src", "sha256": "0" * 64, "tool_version": "0.1.0"}]
    path = tmp_path / "m.jsonl"
    write_manifest(m, path)
    again = read_manifest(path)
    assert again.records == records
    assert again.datasets == m.datasets
    assert again.provenance == m.provenance
    # byte determinism
    path2 = tmp_path / "m2.jsonl"
    write_manifest(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_read_manifest_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n", encoding="utf-8")
    with pytest.raises(ManifestFormatError):
        read_manifest(path)
    path.write_text(json.dumps({"schema_version": 99}) + "\n", encoding="utf-8")
    with pytest.raises(ManifestFormatError):
        read_manifest(path)


def test_unknown_modality_becomes_unknown(tmp_path):
    path = tmp_path / "m.jsonl"
    header = {"schema_version": 1, "datasets": [
        {"dataset_id": "a", "name": "a", "year": 2024,
         "modalities": ["VCE"], "split_type": "NONE"}], "provenance": []}
    record = {"record_id": "a/x.jpg", "dataset_id": "a", "file_path": "x.jpg",
              "raw_label": "l", "modality": "XRAY"}
    path.write_text(json.dumps(header) + "\n" + json.dumps(record) + "\n",
                    encoding="utf-8")
    m = read_manifest(path)
    assert m.records[0].modality is Modality.UNKNOWN


def test_record_id_normalizes_separators():
    assert make_record_id("kid", "images\\abc.jpg") == "kid/images/abc.jpg"


def test_distribution_csv(tmp_path):
    m = merge_manifests([singleton_manifest({"ulcer": 2, "polyp": 1}, "a"),
                         singleton_manifest({"ulcer": 1}, "b")])
    table = summarize(m, class_order=["ulcer", "polyp"])
    out = tmp_path / "dist.csv"
    write_distribution_csv(table, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "dataset,ulcer,polyp"
    assert lines[1] == "a,2,1"
    assert lines[2] == "b,1,0"
    assert lines[3] == "total,3,1"
