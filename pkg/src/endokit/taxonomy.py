"""Class taxonomy, per-dataset raw-label mapping profiles, and granularity
projection (fine-grained findings lifted to their nearest coarse ancestor).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .manifest import (ImageRecord, UnifiedManifest, UnprojectedRecordError,
                       with_canonical_class)

EXCLUDED = "EXCLUDED"

# Canonical 10-class capsule-endoscopy finding set, in canonical order.
CE24_CLASSES = (
    "normal_mucosa",
    "bleeding",
    "ulcer",
    "polyp",
    "erosion",
    "angioectasia",
    "lymphangiectasia",
    "erythema",
    "foreign_body",
    "worms",
)


class TaxonomyError(ValueError):
    """Base class for taxonomy/profile failures."""


class DuplicateClassIdError(TaxonomyError):
    pass


class UnknownParentError(TaxonomyError):
    pass


class CycleDetectedError(TaxonomyError):
    pass


class UnmappedLabelError(TaxonomyError):
    """A (dataset_id, raw_label) pair has no profile entry."""

    def __init__(self, pairs: Sequence[tuple[str, str]]):
        self.pairs = list(pairs)
        shown = ", ".join(f"({d!r}, {l!r})" for d, l in self.pairs[:10])
        extra = "" if len(self.pairs) <= 10 else f" (+{len(self.pairs) - 10} more)"
        super().__init__(f"no mapping entry for: {shown}{extra}")


@dataclass(frozen=True, slots=True)
class TaxonomyNode:
    class_id: str
    display_name: str
    parent: Optional[str] = None


@dataclass(slots=True)
class Taxonomy:
    """A validated forest of finding classes."""

    nodes: list[TaxonomyNode]
    version: str = "1"
    _parent: dict[str, Optional[str]] = field(init=False, repr=False)

    def __post_init__(self):
        parent: dict[str, Optional[str]] = {}
        for n in self.nodes:
            if n.class_id == EXCLUDED:
                raise DuplicateClassIdError(f"{EXCLUDED!r} is reserved and cannot be a class_id")
            if n.class_id in parent:
                raise DuplicateClassIdError(f"duplicate class_id {n.class_id!r}")
            parent[n.class_id] = n.parent
        for n in self.nodes:
            if n.parent is not None and n.parent not in parent:
                raise UnknownParentError(
                    f"node {n.class_id!r} references unknown parent {n.parent!r}")
        # Walk up from every node; revisiting a node on the same walk is a cycle.
        for start in parent:
            seen = {start}
            cur = parent[start]
            while cur is not None:
                if cur in seen:
                    raise CycleDetectedError(f"parent cycle through {cur!r}")
                seen.add(cur)
                cur = parent[cur]
        self._parent = parent

    def __contains__(self, class_id: str) -> bool:
        return class_id in self._parent

    def roots(self) -> list[str]:
        return [n.class_id for n in self.nodes if n.parent is None]

    def ancestry(self, class_id: str) -> list[str]:
        """class_id followed by its ancestors, root last."""
        if class_id not in self._parent:
            raise TaxonomyError(f"unknown class_id {class_id!r}")
        chain = [class_id]
        cur = self._parent[class_id]
        while cur is not None:
            chain.append(cur)
            cur = self._parent[cur]
        return chain


@dataclass(slots=True)
class MappingProfile:
    """Association of (dataset_id, raw_label) pairs with taxonomy classes at a
    chosen target granularity. ``EXCLUDED`` entries drop records explicitly.
    """

    profile_id: str
    target_classes: list[str]
    entries: dict[tuple[str, str], str]

    def validate(self, taxonomy: Taxonomy) -> None:
        if len(set(self.target_classes)) != len(self.target_classes):
            raise TaxonomyError(f"profile {self.profile_id!r}: duplicate target classes")
        for c in self.target_classes:
            if c not in taxonomy:
                raise TaxonomyError(
                    f"profile {self.profile_id!r}: target class {c!r} not in taxonomy")
        for (ds, raw), cls in self.entries.items():
            if cls != EXCLUDED and cls not in taxonomy:
                raise TaxonomyError(
                    f"profile {self.profile_id!r}: entry ({ds!r}, {raw!r}) maps to "
                    f"unknown class {cls!r}")


@dataclass(slots=True)
class ProjectionResult:
    """Projected manifest plus mandatory dropped-record accounting."""

    manifest: UnifiedManifest
    dropped_excluded: int
    dropped_no_ancestor: int
    dropped_by_label: dict[str, int]
    warnings: list[str]


def ce24_profile(entries: Mapping[tuple[str, str], str] | None = None,
                 profile_id: str = "ce24_10") -> MappingProfile:
    """Built-in profile over the canonical 10-class set; entries are data."""
    return MappingProfile(profile_id=profile_id,
                          target_classes=list(CE24_CLASSES),
                          entries=dict(entries or {}))


def load_taxonomy(path: str | Path) -> Taxonomy:
    with Path(path).open("r", encoding="utf-8") as fp:
        doc = json.load(fp)
    try:
        nodes = [TaxonomyNode(class_id=n["class_id"],
                              display_name=n.get("display_name", n["class_id"]),
                              parent=n.get("parent"))
                 for n in doc["nodes"]]
        version = str(doc.get("version", "1"))
    except (KeyError, TypeError) as exc:
        raise TaxonomyError(f"{path}: malformed taxonomy document: {exc}") from exc
    return Taxonomy(nodes=nodes, version=version)


def write_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    doc = {"version": taxonomy.version,
           "nodes": [
               {"class_id": n.class_id, "display_name": n.display_name}
               if n.parent is None else
               {"class_id": n.class_id, "display_name": n.display_name, "parent": n.parent}
               for n in taxonomy.nodes]}
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def load_profile(path: str | Path) -> MappingProfile:
    with Path(path).open("r", encoding="utf-8") as fp:
        doc = json.load(fp)
    try:
        entries = {(e["dataset_id"], e["raw_label"]): e["class_id"] for e in doc["entries"]}
        return MappingProfile(profile_id=doc["profile_id"],
                              target_classes=list(doc["target_classes"]),
                              entries=entries)
    except (KeyError, TypeError) as exc:
        raise TaxonomyError(f"{path}: malformed mapping profile: {exc}") from exc


def write_profile(profile: MappingProfile, path: str | Path) -> None:
    doc = {
        "profile_id": profile.profile_id,
        "target_classes": profile.target_classes,
        "entries": [
            {"dataset_id": ds, "raw_label": raw, "class_id": cls}
            for (ds, raw), cls in sorted(profile.entries.items())
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def resolve_label(profile: MappingProfile, dataset_id: str, raw_label: str) -> str:
    """Exact, case-sensitive lookup after trimming surrounding whitespace.

    Returns a class_id or EXCLUDED; a missing entry raises rather than
    guessing (fuzzy matching silently mislabels).
    """
    key = (dataset_id, raw_label.strip())
    try:
        return profile.entries[key]
    except KeyError:
        raise UnmappedLabelError([key]) from None


def nearest_target_ancestor(taxonomy: Taxonomy, class_id: str,
                            targets: set[str]) -> Optional[str]:
    for c in taxonomy.ancestry(class_id):
        if c in targets:
            return c
    return None


def project(m: UnifiedManifest, taxonomy: Taxonomy,
            profile: MappingProfile) -> ProjectionResult:
    """Set canonical_class on every record via the profile + ancestor rule.

    EXCLUDED records and records whose class has no ancestor among the
    target classes are dropped, with counts reported in the result.
    """
    profile.validate(taxonomy)
    targets = set(profile.target_classes)

    # Labels repeat heavily across records; resolve each distinct pair once.
    distinct: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for r in m.records:
        key = (r.dataset_id, r.raw_label.strip())
        if key not in seen:
            seen.add(key)
            distinct.append(key)
    unmapped = [key for key in distinct if key not in profile.entries]
    if unmapped:
        raise UnmappedLabelError(unmapped)

    # None means "drop"; the companion flag tells excluded from no-ancestor.
    lifted: dict[tuple[str, str], Optional[str]] = {}
    excluded: set[tuple[str, str]] = set()
    for key in distinct:
        cls = profile.entries[key]
        if cls == EXCLUDED:
            lifted[key] = None
            excluded.add(key)
        else:
            lifted[key] = nearest_target_ancestor(taxonomy, cls, targets)

    kept: list[ImageRecord] = []
    dropped_excluded = 0
    dropped_no_ancestor = 0
    dropped_by_label: dict[str, int] = {}
    for r in m.records:
        key = (r.dataset_id, r.raw_label.strip())
        target = lifted[key]
        if target is None:
            dropped_by_label_key = f"{key[0]}:{key[1]}"
            dropped_by_label[dropped_by_label_key] = \
                dropped_by_label.get(dropped_by_label_key, 0) + 1
            if key in excluded:
                dropped_excluded += 1
            else:
                dropped_no_ancestor += 1
            continue
        kept.append(with_canonical_class(r, target))

    warnings = []
    if dropped_no_ancestor:
        warnings.append(
            f"{dropped_no_ancestor} records dropped: mapped class has no ancestor "
            f"among target classes")
    out = UnifiedManifest(records=kept, datasets=list(m.datasets),
                          provenance=list(m.provenance))
    return ProjectionResult(manifest=out,
                            dropped_excluded=dropped_excluded,
                            dropped_no_ancestor=dropped_no_ancestor,
                            dropped_by_label=dropped_by_label,
                            warnings=warnings)


def class_counts(m: UnifiedManifest,
                 class_order: Optional[Sequence[str]] = None) -> dict[str, int]:
    """Record count per canonical class; zero-filled for *class_order* entries."""
    counts: dict[str, int] = {c: 0 for c in (class_order or [])}
    for r in m.records:
        if r.canonical_class is None:
            raise UnprojectedRecordError(
                f"record {r.record_id!r} has no canonical_class")
        counts[r.canonical_class] = counts.get(r.canonical_class, 0) + 1
    return counts
