"""Leakage and integrity auditing, independent of how a split was produced.

The group-integrity audit re-derives group keys from the manifest and a
group policy rather than trusting whatever the splitter recorded, so
externally enforced splits get exactly the same scrutiny.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .adapters import GroupPolicy, extract_group_key, normalize_filename
from .manifest import UnifiedManifest
from .splitting import FoldAssignment, SplitAssignment


@dataclass(slots=True)
class AuditViolation:
    kind: str                              # GROUP_SPANS_SPLITS | UNASSIGNED_RECORD | DUPLICATE_ASSIGNMENT
    record_ids: list[str]
    splits: list[str]
    group_key: Optional[str] = None


@dataclass(slots=True)
class AuditReport:
    violations: list[AuditViolation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [
                {"kind": v.kind, "group_key": v.group_key,
                 "record_ids": v.record_ids, "splits": v.splits}
                for v in self.violations
            ],
            "warnings": self.warnings,
        }


@dataclass(slots=True)
class OverlapPair:
    match_key: str
    record_id_a: str
    record_id_b: str
    dataset_a: str
    dataset_b: str


@dataclass(slots=True)
class OverlapReport:
    pairs: list[OverlapPair] = field(default_factory=list)
    per_dataset_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.pairs

    def match_keys(self) -> set[str]:
        return {p.match_key for p in self.pairs}

    def to_json_dict(self) -> dict:
        return {
            "clean": self.clean,
            "pairs": [
                {"match_key": p.match_key,
                 "record_id_a": p.record_id_a, "record_id_b": p.record_id_b,
                 "dataset_a": p.dataset_a, "dataset_b": p.dataset_b}
                for p in self.pairs
            ],
            "per_dataset_counts": self.per_dataset_counts,
            "warnings": self.warnings,
        }


AssignmentLike = Union[SplitAssignment, FoldAssignment,
                       Iterable[tuple[str, str]]]


def _assignment_pairs(a: AssignmentLike) -> list[tuple[str, str]]:
    if isinstance(a, (SplitAssignment, FoldAssignment)):
        return list(a.assignment.items())
    return [(rid, split) for rid, split in a]


def audit_group_integrity(m: UnifiedManifest, a: AssignmentLike,
                          policy: GroupPolicy = GroupPolicy()) -> AuditReport:
    """Report any group spanning splits, unassigned record, or record
    assigned more than once."""
    report = AuditReport()
    pairs = _assignment_pairs(a)

    assigned: dict[str, str] = {}
    for rid, split in pairs:
        if rid in assigned:
            report.violations.append(AuditViolation(
                kind="DUPLICATE_ASSIGNMENT", record_ids=[rid],
                splits=sorted({assigned[rid], split})))
        else:
            assigned[rid] = split

    known = {r.record_id for r in m.records}
    for rid in assigned:
        if rid not in known:
            report.warnings.append(f"assigned record {rid!r} is not in the manifest")

    groups: dict[str, list[str]] = {}
    for r in m.records:
        split = assigned.get(r.record_id)
        if split is None:
            report.violations.append(AuditViolation(
                kind="UNASSIGNED_RECORD", record_ids=[r.record_id], splits=[]))
            continue
        groups.setdefault(extract_group_key(r, policy), []).append(r.record_id)

    for group_key, rids in groups.items():
        splits = sorted({assigned[rid] for rid in rids})
        if len(splits) > 1:
            report.violations.append(AuditViolation(
                kind="GROUP_SPANS_SPLITS", record_ids=rids, splits=splits,
                group_key=group_key))
    return report


def detect_overlap(a: UnifiedManifest, b: UnifiedManifest,
                   case_insensitive: bool = False) -> OverlapReport:
    """Cross-manifest duplicate detection by filename match key.

    Name-based on purpose: copies of an image keep their basename even when
    cropping or re-encoding changes every byte. Within-manifest duplicate
    keys are reported as warnings, not pairs.
    """
    report = OverlapReport()

    def index(m: UnifiedManifest, tag: str) -> dict[str, list]:
        idx: dict[str, list] = {}
        for r in m.records:
            key = normalize_filename(r.file_path, case_insensitive)
            idx.setdefault(key, []).append(r)
        for key, records in idx.items():
            if len(records) > 1:
                report.warnings.append(
                    f"manifest {tag}: match key {key!r} shared by "
                    f"{len(records)} records")
        return idx

    idx_a = index(a, "a")
    idx_b = index(b, "b")
    counts: dict[str, int] = {}
    for key in sorted(set(idx_a) & set(idx_b)):
        for ra in idx_a[key]:
            for rb in idx_b[key]:
                report.pairs.append(OverlapPair(
                    match_key=key,
                    record_id_a=ra.record_id, record_id_b=rb.record_id,
                    dataset_a=ra.dataset_id, dataset_b=rb.dataset_id))
                counts[ra.dataset_id] = counts.get(ra.dataset_id, 0) + 1
                counts[rb.dataset_id] = counts.get(rb.dataset_id, 0) + 1
    report.per_dataset_counts = counts
    return report


def write_report(report: Union[AuditReport, OverlapReport],
                 path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True,
                   ensure_ascii=False) + "\n",
        encoding="utf-8")
