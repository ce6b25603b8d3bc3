"""Per-dataset ingestion adapters plus the two key derivations used across
the toolkit: filename match keys and group keys.

Three on-disk layouts are supported: a CSV metadata file, one directory per
class, and label/id extraction from filename patterns.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from .manifest import (DatasetDescriptor, DuplicateRecordIdError, ImageRecord,
                       Modality, SplitType, UnifiedManifest, make_record_id,
                       provenance_entry, valid_split_hint)

log = logging.getLogger(__name__)


class Layout(str, Enum):
    CSV_MANIFEST = "CSV_MANIFEST"
    DIRECTORY_PER_CLASS = "DIRECTORY_PER_CLASS"
    FILENAME_PATTERN = "FILENAME_PATTERN"


class GroupSource(str, Enum):
    PATIENT_ID = "PATIENT_ID"
    VIDEO_ID = "VIDEO_ID"
    RECORD_ID = "RECORD_ID"


class AdapterError(ValueError):
    """Base class for ingestion failures."""


class AdapterConfigError(AdapterError):
    pass


class MissingColumnError(AdapterError):
    pass


class PatternMismatchError(AdapterError):
    pass


class NoGroupKeyError(ValueError):
    """The group-policy fallback chain was exhausted for a record."""


@dataclass(frozen=True, slots=True)
class GroupPolicy:
    """Ordered fallback chain deciding which identifier groups records.

    RECORD_ID always succeeds (singleton groups), so it must come last.
    """

    fallback_chain: tuple[GroupSource, ...] = (GroupSource.PATIENT_ID,
                                               GroupSource.VIDEO_ID,
                                               GroupSource.RECORD_ID)

    def __post_init__(self):
        if not self.fallback_chain:
            raise ValueError("fallback_chain must not be empty")
        if GroupSource.RECORD_ID in self.fallback_chain and \
                self.fallback_chain[-1] is not GroupSource.RECORD_ID:
            raise ValueError("RECORD_ID must be the last link of the chain")

    @classmethod
    def parse(cls, spec: str) -> "GroupPolicy":
        """Parse a comma-separated chain like ``patient_id,video_id,record_id``."""
        try:
            chain = tuple(GroupSource(tok.strip().upper())
                          for tok in spec.split(",") if tok.strip())
        except ValueError as exc:
            raise ValueError(f"bad group chain {spec!r}: {exc}") from exc
        return cls(fallback_chain=chain)


@dataclass(frozen=True, slots=True)
class AdapterConfig:
    dataset_id: str
    layout: Layout
    root: str
    modality: Modality = Modality.UNKNOWN
    csv_columns: Optional[dict] = None     # {path,label[,patient_id,video_id,split]} -> column
    pattern: Optional[str] = None          # e.g. "{patient_id}_{label}_{*}.png"
    name: Optional[str] = None
    year: int = 0
    split_type: SplitType = SplitType.NONE
    declared_image_count: Optional[int] = None

    def __post_init__(self):
        if self.layout is Layout.CSV_MANIFEST and not self.csv_columns:
            raise AdapterConfigError(
                f"{self.dataset_id}: CSV_MANIFEST layout requires csv_columns")
        if self.layout is Layout.FILENAME_PATTERN and not self.pattern:
            raise AdapterConfigError(
                f"{self.dataset_id}: FILENAME_PATTERN layout requires a pattern")


def normalize_filename(file_path: str, case_insensitive: bool = False) -> str:
    """Match key: final path component with its last extension removed.

    Invariant under directory moves and extension changes, the two
    transformations that occur between copies of the same image. Matching is
    case-sensitive unless explicitly relaxed for case-mangling filesystems.
    """
    if not file_path:
        raise ValueError("file_path must be non-empty")
    base = file_path.replace("\\", "/").rsplit("/", 1)[-1]
    key = os.path.splitext(base)[0]
    return key.lower() if case_insensitive else key


def extract_group_key(record: ImageRecord, policy: GroupPolicy) -> str:
    """First present identifier in the fallback chain, tagged with its source
    so patient "7" and video "7" can never collide."""
    for source in policy.fallback_chain:
        if source is GroupSource.PATIENT_ID and record.patient_id:
            return f"patient:{record.patient_id}"
        if source is GroupSource.VIDEO_ID and record.video_id:
            return f"video:{record.video_id}"
        if source is GroupSource.RECORD_ID:
            return f"record:{record.record_id}"
    raise NoGroupKeyError(
        f"record {record.record_id!r}: no identifier in chain "
        f"{[s.value for s in policy.fallback_chain]}")


_PATTERN_TOKEN = re.compile(r"\{(label|patient_id|video_id|\*)\}")
_ALLOWED_CAPTURES = {"label", "patient_id", "video_id"}


def compile_pattern(pattern: str) -> re.Pattern:
    """Translate a tokenized filename pattern into an anchored regex.

    Captures are non-greedy, so underscore-separated templates split at the
    leftmost separator, which is the predictable reading.
    """
    parts = []
    pos = 0
    seen: set[str] = set()
    for match in _PATTERN_TOKEN.finditer(pattern):
        parts.append(re.escape(pattern[pos:match.start()]))
        token = match.group(1)
        if token == "*":
            parts.append("(?:.+?)")
        else:
            if token in seen:
                raise AdapterConfigError(f"pattern uses {{{token}}} twice")
            seen.add(token)
            parts.append(f"(?P<{token}>.+?)")
        pos = match.end()
    parts.append(re.escape(pattern[pos:]))
    if "label" not in seen:
        raise AdapterConfigError(f"pattern {pattern!r} must capture {{label}}")
    return re.compile("".join(parts))


def _descriptor(config: AdapterConfig) -> DatasetDescriptor:
    return DatasetDescriptor(
        dataset_id=config.dataset_id,
        name=config.name or config.dataset_id,
        year=config.year,
        modalities=(config.modality,),
        split_type=config.split_type,
        declared_image_count=config.declared_image_count,
    )


def _normalize_split(value: str, dataset_id: str) -> Optional[str]:
    value = value.strip().lower()
    if not value:
        return None
    if not valid_split_hint(value):
        raise AdapterError(
            f"{dataset_id}: split value {value!r} is not train/val/test/fold<k>")
    return value


def _ingest_csv(config: AdapterConfig) -> list[ImageRecord]:
    cols = config.csv_columns or {}
    for required in ("path", "label"):
        if required not in cols:
            raise AdapterConfigError(
                f"{config.dataset_id}: csv_columns must map {required!r}")
    records = []
    with Path(config.root).open("r", encoding="utf-8", newline="") as fp:
        reader = csv.DictReader(fp)
        header = reader.fieldnames or []
        for logical, column in cols.items():
            if column not in header:
                raise MissingColumnError(
                    f"{config.dataset_id}: column {column!r} (for {logical!r}) "
                    f"not in CSV header {header}")
        for row in reader:
            path = (row[cols["path"]] or "").strip()
            label = (row[cols["label"]] or "").strip()
            patient = (row.get(cols["patient_id"], "") or "").strip() \
                if "patient_id" in cols else ""
            video = (row.get(cols["video_id"], "") or "").strip() \
                if "video_id" in cols else ""
            split = _normalize_split(row.get(cols["split"], "") or "", config.dataset_id) \
                if "split" in cols else None
            records.append(ImageRecord(
                record_id=make_record_id(config.dataset_id, path),
                dataset_id=config.dataset_id,
                file_path=path,
                raw_label=label,
                patient_id=patient or None,
                video_id=video or None,
                modality=config.modality,
                split_hint=split,
            ))
    return records


def _scan_files(root: Path) -> list[Path]:
    files = [p for p in root.rglob("*") if p.is_file()]
    files.sort(key=lambda p: p.relative_to(root).as_posix())
    return files


def _ingest_directory(config: AdapterConfig) -> list[ImageRecord]:
    root = Path(config.root)
    records = []
    for p in _scan_files(root):
        rel = p.relative_to(root)
        if len(rel.parts) < 2:
            log.warning("%s: %s sits outside any class directory, skipped",
                        config.dataset_id, rel)
            continue
        # Immediate hierarchy becomes the label; the profile interprets it.
        label = "/".join(rel.parts[:-1])
        rel_posix = rel.as_posix()
        records.append(ImageRecord(
            record_id=make_record_id(config.dataset_id, rel_posix),
            dataset_id=config.dataset_id,
            file_path=rel_posix,
            raw_label=label,
            modality=config.modality,
        ))
    return records


def _ingest_pattern(config: AdapterConfig) -> list[ImageRecord]:
    root = Path(config.root)
    regex = compile_pattern(config.pattern or "")
    records = []
    for p in _scan_files(root):
        rel = p.relative_to(root)
        match = regex.fullmatch(p.name)
        if match is None:
            raise PatternMismatchError(
                f"{config.dataset_id}: filename {p.name!r} does not match "
                f"pattern {config.pattern!r}")
        groups = match.groupdict()
        rel_posix = rel.as_posix()
        records.append(ImageRecord(
            record_id=make_record_id(config.dataset_id, rel_posix),
            dataset_id=config.dataset_id,
            file_path=rel_posix,
            raw_label=groups["label"],
            patient_id=groups.get("patient_id"),
            video_id=groups.get("video_id"),
            modality=config.modality,
        ))
    return records


def ingest(config: AdapterConfig) -> UnifiedManifest:
    """Produce the per-dataset manifest for one adapter config.

    Record order is deterministic: CSV row order, or lexicographic relative
    path order for directory scans.
    """
    root = Path(config.root)
    if not root.exists():
        raise AdapterError(f"{config.dataset_id}: root {config.root!r} does not exist")
    if config.layout is Layout.CSV_MANIFEST:
        records = _ingest_csv(config)
    elif config.layout is Layout.DIRECTORY_PER_CLASS:
        records = _ingest_directory(config)
    else:
        records = _ingest_pattern(config)

    if not records:
        log.warning("%s: ingestion produced an empty dataset", config.dataset_id)
    seen: set[str] = set()
    for r in records:
        if r.record_id in seen:
            raise DuplicateRecordIdError(
                f"{config.dataset_id}: duplicate record_id {r.record_id!r}")
        seen.add(r.record_id)
    return UnifiedManifest(
        records=records,
        datasets=[_descriptor(config)],
        provenance=[provenance_entry(f"ingest:{config.dataset_id}:{config.root}", "-")],
    )


def load_collection(path: str | Path) -> list[AdapterConfig]:
    """Read a collection JSON listing adapter configs; relative roots are
    resolved against the collection file's directory."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fp:
        doc = json.load(fp)
    configs = []
    for entry in doc.get("datasets", []):
        try:
            root = entry["root"]
            if not os.path.isabs(root):
                root = str((path.parent / root).resolve())
            configs.append(AdapterConfig(
                dataset_id=entry["dataset_id"],
                layout=Layout(entry["layout"]),
                root=root,
                modality=Modality(entry.get("modality", "UNKNOWN")),
                csv_columns=entry.get("csv_columns"),
                pattern=entry.get("pattern"),
                name=entry.get("name"),
                year=int(entry.get("year", 0)),
                split_type=SplitType(entry.get("split_type", "NONE")),
                declared_image_count=entry.get("declared_image_count"),
            ))
        except (KeyError, ValueError) as exc:
            raise AdapterConfigError(f"{path}: bad dataset entry: {exc}") from exc
    if not configs:
        raise AdapterConfigError(f"{path}: collection lists no datasets")
    return configs
