"""Canonical dataset-manifest representation: records, merging, validation,
distribution summaries, and the line-delimited JSON on-disk format.

A manifest holds image *metadata* only; image files are never touched.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

TOOL_VERSION = "0.1.0"
SCHEMA_VERSION = 1

_SPLIT_HINT_RE = re.compile(r"^(train|val|test|fold\d+)$")


class Modality(str, Enum):
    VCE = "VCE"
    GST = "GST"
    COL = "COL"
    UNKNOWN = "UNKNOWN"


class SplitType(str, Enum):
    NONE = "NONE"
    PATIENT_ID = "PATIENT_ID"
    KFOLD_CV = "KFOLD_CV"
    TRAIN_VAL_TEST = "TRAIN_VAL_TEST"


class ManifestError(ValueError):
    """Base class for manifest construction/parsing failures."""


class DuplicateDatasetIdError(ManifestError):
    """Two merge inputs declare the same dataset_id."""


class DuplicateRecordIdError(ManifestError):
    """The same record_id occurs more than once."""


class UnprojectedRecordError(ManifestError):
    """An operation requiring canonical classes met a record without one."""


class ManifestFormatError(ManifestError):
    """A manifest file does not follow the on-disk schema."""


@dataclass(frozen=True, slots=True)
class ImageRecord:
    """Metadata for one labeled image."""

    record_id: str
    dataset_id: str
    file_path: str
    raw_label: str
    canonical_class: Optional[str] = None
    patient_id: Optional[str] = None
    video_id: Optional[str] = None
    modality: Modality = Modality.UNKNOWN
    split_hint: Optional[str] = None
    width: Optional[int] = None
    height: Optional[int] = None


@dataclass(frozen=True, slots=True)
class DatasetDescriptor:
    dataset_id: str
    name: str
    year: int
    modalities: tuple[Modality, ...] = (Modality.UNKNOWN,)
    split_type: SplitType = SplitType.NONE
    declared_image_count: Optional[int] = None


@dataclass(slots=True)
class UnifiedManifest:
    """An ordered collection of records plus dataset descriptors and provenance.

    Treated as immutable after construction; operations return new manifests.
    """

    records: list[ImageRecord] = field(default_factory=list)
    datasets: list[DatasetDescriptor] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def dataset_ids(self) -> list[str]:
        return [d.dataset_id for d in self.datasets]


@dataclass(slots=True)
class Violation:
    kind: str
    message: str
    record_id: Optional[str] = None
    dataset_id: Optional[str] = None


@dataclass(slots=True)
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass(slots=True)
class DistributionTable:
    """Per-(dataset, class) counts with class totals and column percentages."""

    dataset_ids: list[str]
    class_ids: list[str]
    cells: dict[str, dict[str, int]]          # dataset_id -> class_id -> count
    totals_row: dict[str, int]                # class_id -> count
    column_percentages: dict[str, dict[str, float]]  # dataset -> class -> share


def make_record_id(dataset_id: str, file_path: str) -> str:
    """Globally unique record id: ``<dataset_id>/<file_path>`` with '/' separators."""
    normalized = file_path.replace("\\", "/")
    return f"{dataset_id}/{normalized}"


def valid_split_hint(hint: str) -> bool:
    return bool(_SPLIT_HINT_RE.match(hint))


def merge_manifests(inputs: Sequence[UnifiedManifest]) -> UnifiedManifest:
    """Concatenate per-dataset manifests into one, preserving input order.

    Raises DuplicateDatasetIdError / DuplicateRecordIdError rather than
    silently dropping anything.
    """
    seen_datasets: dict[str, int] = {}
    seen_records: dict[str, str] = {}
    records: list[ImageRecord] = []
    datasets: list[DatasetDescriptor] = []
    provenance: list[dict] = []

    for idx, m in enumerate(inputs):
        for d in m.datasets:
            if d.dataset_id in seen_datasets:
                raise DuplicateDatasetIdError(
                    f"dataset_id {d.dataset_id!r} appears in inputs "
                    f"{seen_datasets[d.dataset_id]} and {idx}"
                )
            seen_datasets[d.dataset_id] = idx
            datasets.append(d)
        for r in m.records:
            prev = seen_records.get(r.record_id)
            if prev is not None:
                raise DuplicateRecordIdError(
                    f"record_id {r.record_id!r} occurs in datasets "
                    f"{prev!r} and {r.dataset_id!r}"
                )
            seen_records[r.record_id] = r.dataset_id
            records.append(r)
        provenance.extend(m.provenance)

    return UnifiedManifest(records=records, datasets=datasets, provenance=provenance)


def validate_manifest(m: UnifiedManifest) -> ValidationReport:
    """Check every record/manifest invariant; findings are report entries."""
    report = ValidationReport()
    known = set(m.dataset_ids())
    seen: set[str] = set()
    per_dataset: dict[str, int] = {}

    for r in m.records:
        if not r.record_id:
            report.violations.append(Violation("EmptyRecordId", "record_id is empty",
                                               dataset_id=r.dataset_id))
        elif r.record_id in seen:
            report.violations.append(Violation(
                "DuplicateRecordId", f"record_id {r.record_id!r} repeated",
                record_id=r.record_id, dataset_id=r.dataset_id))
        else:
            seen.add(r.record_id)
        if not r.file_path:
            report.violations.append(Violation(
                "EmptyFilePath", "file_path is empty", record_id=r.record_id))
        if not r.raw_label:
            report.violations.append(Violation(
                "EmptyRawLabel", "raw_label is empty", record_id=r.record_id))
        if r.width is not None and r.width <= 0:
            report.violations.append(Violation(
                "BadDimension", f"width {r.width} is not positive", record_id=r.record_id))
        if r.height is not None and r.height <= 0:
            report.violations.append(Violation(
                "BadDimension", f"height {r.height} is not positive", record_id=r.record_id))
        if r.split_hint is not None and not valid_split_hint(r.split_hint):
            report.violations.append(Violation(
                "BadSplitHint", f"split_hint {r.split_hint!r} is not train/val/test/fold<k>",
                record_id=r.record_id))
        if r.dataset_id not in known:
            report.violations.append(Violation(
                "UnknownDataset", f"dataset_id {r.dataset_id!r} has no descriptor",
                record_id=r.record_id, dataset_id=r.dataset_id))
        per_dataset[r.dataset_id] = per_dataset.get(r.dataset_id, 0) + 1

    for d in m.datasets:
        actual = per_dataset.get(d.dataset_id, 0)
        if d.declared_image_count is not None and actual != d.declared_image_count:
            report.violations.append(Violation(
                "CountMismatch",
                f"dataset {d.dataset_id!r} declares {d.declared_image_count} images "
                f"but the manifest holds {actual}",
                dataset_id=d.dataset_id))
    return report


def summarize(m: UnifiedManifest, class_order: Optional[Sequence[str]] = None) -> DistributionTable:
    """Per-(dataset, class) count table over canonical classes.

    Class columns follow *class_order* when given (taxonomy order), else the
    sorted class ids present. Dataset rows follow manifest descriptor order.
    """
    counts: dict[str, dict[str, int]] = {d: {} for d in m.dataset_ids()}
    present: set[str] = set()
    for r in m.records:
        if r.canonical_class is None:
            raise UnprojectedRecordError(
                f"record {r.record_id!r} has no canonical_class; run projection first")
        row = counts.setdefault(r.dataset_id, {})
        row[r.canonical_class] = row.get(r.canonical_class, 0) + 1
        present.add(r.canonical_class)

    if class_order is None:
        class_ids = sorted(present)
    else:
        class_ids = list(class_order)
        missing = present - set(class_ids)
        if missing:
            raise ValueError(f"classes {sorted(missing)} absent from supplied class order")

    dataset_ids = list(counts.keys())
    cells = {d: {c: counts[d].get(c, 0) for c in class_ids} for d in dataset_ids}
    totals = {c: sum(cells[d][c] for d in dataset_ids) for c in class_ids}
    shares = {
        d: {c: (cells[d][c] / totals[c] if totals[c] > 0 else 0.0) for c in class_ids}
        for d in dataset_ids
    }
    return DistributionTable(dataset_ids, class_ids, cells, totals, shares)


# ---------------------------------------------------------------------------
# On-disk format: UTF-8 JSON lines, header object first, one record per line.
# ---------------------------------------------------------------------------

_RECORD_FIELDS = ("record_id", "dataset_id", "file_path", "raw_label",
                  "canonical_class", "patient_id", "video_id", "modality",
                  "split_hint", "width", "height")


def _record_to_obj(r: ImageRecord) -> dict:
    obj = {
        "record_id": r.record_id,
        "dataset_id": r.dataset_id,
        "file_path": r.file_path,
        "raw_label": r.raw_label,
    }
    if r.canonical_class is not None:
        obj["canonical_class"] = r.canonical_class
    if r.patient_id is not None:
        obj["patient_id"] = r.patient_id
    if r.video_id is not None:
        obj["video_id"] = r.video_id
    obj["modality"] = r.modality.value
    if r.split_hint is not None:
        obj["split_hint"] = r.split_hint
    if r.width is not None:
        obj["width"] = r.width
    if r.height is not None:
        obj["height"] = r.height
    return obj


def _record_from_obj(obj: Mapping, warnings: Optional[list[str]] = None) -> ImageRecord:
    unknown = set(obj) - set(_RECORD_FIELDS)
    if unknown:
        raise ManifestFormatError(f"unknown record fields: {sorted(unknown)}")
    modality_raw = obj.get("modality", "UNKNOWN")
    try:
        modality = Modality(modality_raw)
    except ValueError:
        # Table-of-origin modality strings vary; degrade to UNKNOWN, keep going.
        if warnings is not None:
            warnings.append(f"unknown modality {modality_raw!r} mapped to UNKNOWN")
        modality = Modality.UNKNOWN
    try:
        return ImageRecord(
            record_id=obj["record_id"],
            dataset_id=obj["dataset_id"],
            file_path=obj["file_path"],
            raw_label=obj["raw_label"],
            canonical_class=obj.get("canonical_class"),
            patient_id=obj.get("patient_id"),
            video_id=obj.get("video_id"),
            modality=modality,
            split_hint=obj.get("split_hint"),
            width=obj.get("width"),
            height=obj.get("height"),
        )
    except KeyError as exc:
        raise ManifestFormatError(f"record line missing field {exc}") from exc


def _descriptor_to_obj(d: DatasetDescriptor) -> dict:
    obj = {
        "dataset_id": d.dataset_id,
        "name": d.name,
        "year": d.year,
        "modalities": [m.value for m in d.modalities],
        "split_type": d.split_type.value,
    }
    if d.declared_image_count is not None:
        obj["declared_image_count"] = d.declared_image_count
    return obj


def _descriptor_from_obj(obj: Mapping) -> DatasetDescriptor:
    try:
        return DatasetDescriptor(
            dataset_id=obj["dataset_id"],
            name=obj.get("name", obj["dataset_id"]),
            year=int(obj.get("year", 0)),
            modalities=tuple(Modality(v) for v in obj.get("modalities", ["UNKNOWN"])),
            split_type=SplitType(obj.get("split_type", "NONE")),
            declared_image_count=obj.get("declared_image_count"),
        )
    except (KeyError, ValueError) as exc:
        raise ManifestFormatError(f"bad dataset descriptor: {exc}") from exc


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_manifest(m: UnifiedManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fp:
        header = {
            "schema_version": SCHEMA_VERSION,
            "datasets": [_descriptor_to_obj(d) for d in m.datasets],
            "provenance": m.provenance,
        }
        fp.write(_dumps(header) + "\n")
        for r in m.records:
            fp.write(_dumps(_record_to_obj(r)) + "\n")


def read_manifest(path: str | Path) -> UnifiedManifest:
    path = Path(path)
    warnings: list[str] = []
    with path.open("r", encoding="utf-8") as fp:
        header_line = fp.readline()
        if not header_line.strip():
            raise ManifestFormatError(f"{path}: empty manifest file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ManifestFormatError(f"{path}: bad header line: {exc}") from exc
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ManifestFormatError(
                f"{path}: unsupported schema_version {header.get('schema_version')!r}")
        datasets = [_descriptor_from_obj(o) for o in header.get("datasets", [])]
        records = []
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestFormatError(f"{path}:{lineno}: bad record line: {exc}") from exc
            records.append(_record_from_obj(obj, warnings))
    return UnifiedManifest(records=records, datasets=datasets,
                           provenance=list(header.get("provenance", [])))


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance_entry(name: str, digest: str) -> dict:
    return {"name": name, "sha256": digest, "tool_version": TOOL_VERSION}


def write_distribution_csv(table: DistributionTable, path: str | Path) -> None:
    """Datasets as rows, classes as columns, final 'total' row."""
    lines = ["dataset," + ",".join(table.class_ids)]
    for d in table.dataset_ids:
        lines.append(d + "," + ",".join(str(table.cells[d][c]) for c in table.class_ids))
    lines.append("total," + ",".join(str(table.totals_row[c]) for c in table.class_ids))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def with_canonical_class(r: ImageRecord, class_id: str) -> ImageRecord:
    return replace(r, canonical_class=class_id)


def class_totals(records: Iterable[ImageRecord]) -> dict[str, int]:
    """Counts over canonical_class; raises on unprojected records."""
    out: dict[str, int] = {}
    for r in records:
        if r.canonical_class is None:
            raise UnprojectedRecordError(
                f"record {r.record_id!r} has no canonical_class")
        out[r.canonical_class] = out.get(r.canonical_class, 0) + 1
    return out
