"""Class-balanced per-record sampling weights.

Inverse-frequency weighting normalized to a distribution: a record of class
c gets 1/(C * n_c), the unique choice that gives every present class the
same total mass 1/C.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .manifest import UnifiedManifest, UnprojectedRecordError


class EmptyInputError(ValueError):
    """No records remained after filtering."""


@dataclass(slots=True)
class WeightTable:
    weights: dict[str, float]       # record_id -> weight
    class_mass: dict[str, float]    # class_id -> summed weight


def compute_weights(m: UnifiedManifest, split: Optional[str] = None,
                    assignment: Optional[Mapping[str, str]] = None) -> WeightTable:
    """Weights over the manifest, optionally restricted to one split.

    The split filter reads the given assignment when provided, otherwise each
    record's split_hint.
    """
    records = []
    for r in m.records:
        if split is not None:
            record_split = assignment.get(r.record_id) if assignment is not None \
                else r.split_hint
            if record_split != split:
                continue
        records.append(r)
    if not records:
        raise EmptyInputError("no records to weight" +
                              (f" in split {split!r}" if split else ""))

    counts: dict[str, int] = {}
    for r in records:
        if r.canonical_class is None:
            raise UnprojectedRecordError(
                f"record {r.record_id!r} has no canonical_class")
        counts[r.canonical_class] = counts.get(r.canonical_class, 0) + 1

    n_classes = len(counts)
    weights = {r.record_id: 1.0 / (n_classes * counts[r.canonical_class])
               for r in records}
    class_mass: dict[str, float] = {c: 0.0 for c in counts}
    for r in records:
        class_mass[r.canonical_class] += weights[r.record_id]
    return WeightTable(weights=weights, class_mass=class_mass)


def write_weights_csv(table: WeightTable, path: str | Path) -> None:
    """record_id,weight rows with 17 significant digits (round-trip exact)."""
    lines = ["record_id,weight"]
    lines.extend(f"{rid},{w:.17g}" for rid, w in table.weights.items())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
