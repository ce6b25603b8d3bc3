from __future__ import annotations

import pytest

from endokit.manifest import (DatasetDescriptor, ImageRecord, Modality,
                              UnifiedManifest)


def make_record(dataset_id, file_path, raw_label, **kwargs):
    kwargs.setdefault("modality", Modality.VCE)
    return ImageRecord(record_id=f"{dataset_id}/{file_path}",
                       dataset_id=dataset_id, file_path=file_path,
                       raw_label=raw_label, **kwargs)


def make_manifest(dataset_id, records, declared_count=None):
    descriptor = DatasetDescriptor(dataset_id=dataset_id, name=dataset_id,
                                   year=2024,
                                   declared_image_count=declared_count)
    return UnifiedManifest(records=list(records), datasets=[descriptor])


def singleton_manifest(class_counts, dataset_id="d", projected=True):
    """One record per row, no patient ids: every group is a singleton."""
    records = []
    i = 0
    for cls, n in class_counts.items():
        for _ in range(n):
            path = f"img_{i:05d}.jpg"
            records.append(ImageRecord(
                record_id=f"{dataset_id}/{path}", dataset_id=dataset_id,
                file_path=path, raw_label=cls,
                canonical_class=cls if projected else None))
            i += 1
    return make_manifest(dataset_id, records)


def grouped_manifest(groups, dataset_id="d"):
    """*groups*: mapping patient id -> list of class ids, one record each."""
    records = []
    i = 0
    for patient, classes in groups.items():
        for cls in classes:
            path = f"img_{i:05d}.jpg"
            records.append(ImageRecord(
                record_id=f"{dataset_id}/{path}", dataset_id=dataset_id,
                file_path=path, raw_label=cls, canonical_class=cls,
                patient_id=patient))
            i += 1
    return make_manifest(dataset_id, records)


@pytest.fixture
def tiny_manifest():
    from endokit.fixtures import build_tiny_manifest
    return build_tiny_manifest(seed=0)
