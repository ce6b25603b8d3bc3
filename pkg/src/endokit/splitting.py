"""Patient-integrity-preserving stratified splitting.

Whole groups (patients, videos, or singletons) are assigned to splits so
that no group ever spans two splits, while per-class proportions track the
target ratios. Assignment is greedy — rare-class groups first, each group
placed where the stratification objective is lowest — followed by a
single-move local refinement, so the result is always locally optimal:
moving any one group to another split cannot reduce the objective.

All randomness is limited to seeded ordering tiebreaks, which makes results
reproducible bit-for-bit for a fixed (manifest, spec).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .adapters import GroupPolicy, extract_group_key
from .manifest import UnifiedManifest, UnprojectedRecordError
from .rng import tiebreak

RATIO_SUM_TOL = 1e-9


class SplitError(ValueError):
    """Base class for splitting failures."""


class KTooLargeError(SplitError):
    """k exceeds the number of groups."""


class UnreachableTargetError(SplitError):
    """Rebalancing cannot reach the target without emptying the source split."""


class ConflictingExternalEntryError(SplitError):
    """One match key maps to two different splits in the external input."""


class AmbiguousMatchError(SplitError):
    """Two records of one dataset share a match key used by the external split."""


class UnmatchedPolicy(str, Enum):
    ERROR_ON_UNMATCHED = "ERROR_ON_UNMATCHED"
    PASSTHROUGH_UNMATCHED = "PASSTHROUGH_UNMATCHED"


@dataclass(frozen=True, slots=True)
class SplitSpec:
    split_names: tuple[str, ...]
    ratios: tuple[float, ...]
    seed: int
    group_policy: GroupPolicy = GroupPolicy()
    size_term_weight: float = 1.0

    def __post_init__(self):
        if len(self.split_names) != len(self.ratios) or len(self.ratios) < 2:
            raise SplitError("need at least two splits, one ratio per name")
        if len(set(self.split_names)) != len(self.split_names):
            raise SplitError("split names must be distinct")
        if any(not (0.0 < r < 1.0) for r in self.ratios):
            raise SplitError("ratios must lie strictly between 0 and 1")
        if abs(sum(self.ratios) - 1.0) > RATIO_SUM_TOL:
            raise SplitError(f"ratios sum to {sum(self.ratios)!r}, not 1")
        if self.size_term_weight < 0:
            raise SplitError("size_term_weight must be non-negative")


@dataclass(slots=True)
class SplitAssignment:
    assignment: dict[str, str]            # record_id -> split name
    group_of: dict[str, str]              # record_id -> group key
    spec: Optional[SplitSpec]
    achieved_counts: dict[str, dict[str, int]]
    cost: Optional[float]
    warnings: list[str] = field(default_factory=list)
    match_report: Optional[dict] = None
    class_of: dict[str, str] = field(default_factory=dict)

    def split_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for split in self.assignment.values():
            sizes[split] = sizes.get(split, 0) + 1
        return sizes


@dataclass(slots=True)
class FoldAssignment:
    k: int
    fold_of: dict[str, int]               # record_id -> fold index
    group_of: dict[str, str]
    spec: Optional[SplitSpec]
    achieved_counts: dict[str, dict[str, int]]
    cost: Optional[float]
    warnings: list[str] = field(default_factory=list)

    @property
    def assignment(self) -> dict[str, str]:
        return {rid: fold_name(i) for rid, i in self.fold_of.items()}


def fold_name(i: int) -> str:
    return f"fold{i}"


# ---------------------------------------------------------------------------
# Objective. One function, one summation order, used by placement, local
# refinement, the public split_cost, and (via that) every verification test —
# so equality comparisons are exact, never within-epsilon.
# ---------------------------------------------------------------------------

def _objective(counts: Sequence[Sequence[float]], sizes: Sequence[float],
               ratios: Sequence[float], class_totals: Sequence[float],
               n_total: float, lam: float) -> float:
    if n_total <= 0:
        return 0.0
    cost = 0.0
    n_classes = len(class_totals)
    for s, r in enumerate(ratios):
        row = counts[s]
        for c in range(n_classes):
            t = class_totals[c]
            d = (row[c] - r * t) / (t if t > 0 else 1.0)
            cost += d * d
        dz = (sizes[s] - r * n_total) / n_total
        cost += lam * dz * dz
    return cost


def split_cost(counts: Mapping[str, Mapping[str, int]], spec: SplitSpec) -> float:
    """Stratification objective of a per-(split, class) count table.

    Squared relative per-class deviation from the ratio targets, normalized
    by class totals so rare classes weigh as much as common ones, plus a
    weighted split-size term.
    """
    class_ids = sorted({c for split in spec.split_names for c in counts[split]})
    matrix = [[counts[split].get(c, 0) for c in class_ids] for split in spec.split_names]
    totals = [sum(matrix[s][c] for s in range(len(spec.split_names)))
              for c in range(len(class_ids))]
    sizes = [sum(row) for row in matrix]
    return _objective(matrix, sizes, spec.ratios, totals, sum(sizes),
                      spec.size_term_weight)


# ---------------------------------------------------------------------------
# Greedy engine.
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class _Group:
    key: str
    size: int
    class_counts: dict[int, int]          # class index -> count
    rarity: int
    rank: int


class _Engine:
    """Shared state for greedy placement + local refinement."""

    def __init__(self, m: UnifiedManifest, names: Sequence[str],
                 ratios: Sequence[float], policy: GroupPolicy, seed: int,
                 lam: float):
        self.names = list(names)
        self.ratios = list(ratios)
        self.lam = lam
        self.records = m.records
        self.group_key = {}
        for r in m.records:
            if r.canonical_class is None:
                raise UnprojectedRecordError(
                    f"record {r.record_id!r} has no canonical_class; "
                    f"splitting requires projected manifests")
            self.group_key[r.record_id] = extract_group_key(r, policy)

        self.class_ids = sorted({r.canonical_class for r in m.records})
        class_idx = {c: i for i, c in enumerate(self.class_ids)}
        self.totals = [0] * len(self.class_ids)
        members: dict[str, dict[int, int]] = {}
        group_sizes: dict[str, int] = {}
        for r in m.records:
            ci = class_idx[r.canonical_class]
            self.totals[ci] += 1
            g = self.group_key[r.record_id]
            members.setdefault(g, {})
            members[g][ci] = members[g].get(ci, 0) + 1
            group_sizes[g] = group_sizes.get(g, 0) + 1
        self.n_total = len(m.records)

        # Rank classes rarest-first so scarce findings are placed before the
        # bulk classes can crowd small splits.
        rarity_order = sorted(range(len(self.class_ids)),
                              key=lambda i: (self.totals[i], self.class_ids[i]))
        rank_of_class = {ci: pos for pos, ci in enumerate(rarity_order)}
        self.groups = [
            _Group(key=g, size=group_sizes[g], class_counts=members[g],
                   rarity=min(rank_of_class[ci] for ci in members[g]),
                   rank=tiebreak(seed, g))
            for g in members
        ]
        self.groups.sort(key=lambda g: (g.rarity, -g.size, g.rank, g.key))

        s_count = len(self.names)
        self.counts = [[0] * len(self.class_ids) for _ in range(s_count)]
        self.sizes = [0] * s_count
        self.placed: dict[str, int] = {}

    def _cost(self) -> float:
        return _objective(self.counts, self.sizes, self.ratios, self.totals,
                          self.n_total, self.lam)

    def _apply(self, g: _Group, s: int, sign: int) -> None:
        for ci, n in g.class_counts.items():
            self.counts[s][ci] += sign * n
        self.sizes[s] += sign * g.size

    def _cost_with(self, g: _Group, s: int) -> float:
        self._apply(g, s, +1)
        cost = self._cost()
        self._apply(g, s, -1)
        return cost

    def pin(self, g: _Group, s: int) -> None:
        self._apply(g, s, +1)
        self.placed[g.key] = s

    def place_greedy(self, groups: Iterable[_Group]) -> None:
        for g in groups:
            best = None
            for s in range(len(self.names)):
                fill = self.sizes[s] / (self.ratios[s] * self.n_total)
                cand = (self._cost_with(g, s), fill, s)
                if best is None or cand < best:
                    best = cand
            self.pin(g, best[2])

    def refine(self, movable: set[str]) -> None:
        """Single-move local search to a fixpoint. Each applied move strictly
        lowers the objective, so states never repeat and the loop terminates;
        on exit no single-group move can reduce the cost."""
        current = self._cost()
        improved = True
        while improved:
            improved = False
            for g in self.groups:
                if g.key not in movable:
                    continue
                s_cur = self.placed[g.key]
                self._apply(g, s_cur, -1)
                best = None
                for s in range(len(self.names)):
                    if s == s_cur:
                        continue
                    fill = self.sizes[s] / (self.ratios[s] * self.n_total)
                    cand = (self._cost_with(g, s), fill, s)
                    if best is None or cand < best:
                        best = cand
                if best is not None and best[0] < current:
                    self._apply(g, best[2], +1)
                    self.placed[g.key] = best[2]
                    current = best[0]
                    improved = True
                else:
                    self._apply(g, s_cur, +1)

    def result_counts(self) -> dict[str, dict[str, int]]:
        return {name: {c: self.counts[s][ci] for ci, c in enumerate(self.class_ids)}
                for s, name in enumerate(self.names)}

    def result_assignment(self) -> tuple[dict[str, str], dict[str, str], dict[str, str]]:
        """(record->split, record->group, record->class) in manifest order."""
        assignment = {}
        group_of = {}
        class_of = {}
        for r in self.records:
            g = self.group_key[r.record_id]
            assignment[r.record_id] = self.names[self.placed[g]]
            group_of[r.record_id] = g
            class_of[r.record_id] = r.canonical_class
        return assignment, group_of, class_of


def _degenerate_warnings(spec_names: Sequence[str], ratios: Sequence[float],
                         n_total: int) -> list[str]:
    return [
        f"DegenerateSpec: split {name!r} targets {r * n_total:.3g} records (< 1)"
        for name, r in zip(spec_names, ratios) if n_total > 0 and r * n_total < 1.0
    ]


def stratified_group_shuffle_split(m: UnifiedManifest,
                                   spec: SplitSpec) -> SplitAssignment:
    """Assign whole groups to the spec's splits, stratifying by class."""
    eng = _Engine(m, spec.split_names, spec.ratios, spec.group_policy,
                  spec.seed, spec.size_term_weight)
    eng.place_greedy(eng.groups)
    eng.refine({g.key for g in eng.groups})
    assignment, group_of, class_of = eng.result_assignment()
    return SplitAssignment(
        assignment=assignment,
        group_of=group_of,
        spec=spec,
        achieved_counts=eng.result_counts(),
        cost=eng._cost(),
        warnings=_degenerate_warnings(spec.split_names, spec.ratios, eng.n_total),
        class_of=class_of,
    )


def stratified_group_kfold(m: UnifiedManifest, k: int, seed: int,
                           group_policy: GroupPolicy = GroupPolicy()) -> FoldAssignment:
    """Grouped k-fold: a shuffle split with k equal ratios."""
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    spec = SplitSpec(split_names=tuple(fold_name(i) for i in range(k)),
                     ratios=tuple(1.0 / k for _ in range(k)),
                     seed=seed, group_policy=group_policy)
    n_groups = len({extract_group_key(r, group_policy) for r in m.records})
    if k > n_groups:
        raise KTooLargeError(f"k={k} exceeds the {n_groups} available groups")
    a = stratified_group_shuffle_split(m, spec)
    fold_of = {rid: int(split[len("fold"):]) for rid, split in a.assignment.items()}
    return FoldAssignment(k=k, fold_of=fold_of, group_of=a.group_of, spec=spec,
                          achieved_counts=a.achieved_counts, cost=a.cost,
                          warnings=a.warnings)


# ---------------------------------------------------------------------------
# Ratio rebalancing: move whole groups between two existing splits.
# ---------------------------------------------------------------------------

def rebalance(a: SplitAssignment, from_split: str, to_split: str,
              target_from_fraction: float) -> SplitAssignment:
    """Shrink *from_split* to the target record fraction by moving whole
    groups into *to_split*, greedily choosing the group whose move leaves the
    lowest stratification cost.

    Targets for the objective are re-derived from the achieved fractions:
    *from_split* gets the requested fraction, *to_split* absorbs the
    difference, untouched splits keep their current share.
    """
    sizes = a.split_sizes()
    for name in (from_split, to_split):
        if name not in sizes:
            raise SplitError(f"split {name!r} not present in the assignment")
    if from_split == to_split:
        raise SplitError("from_split and to_split must differ")
    if not (0.0 < target_from_fraction < 1.0):
        raise SplitError("target_from_fraction must lie strictly between 0 and 1")

    n_total = len(a.assignment)
    current = sizes[from_split] / n_total
    if target_from_fraction > current + 1e-12:
        raise SplitError(
            f"target fraction {target_from_fraction} exceeds current "
            f"fraction {current:.6f} of {from_split!r}")

    if a.spec is not None and set(a.spec.split_names) >= set(sizes):
        names = list(a.spec.split_names)
    else:
        names = list(dict.fromkeys(a.assignment.values()))
    fractions = {name: sizes.get(name, 0) / n_total for name in names}
    new_ratios = dict(fractions)
    new_ratios[from_split] = target_from_fraction
    new_ratios[to_split] = fractions[to_split] + (fractions[from_split]
                                                  - target_from_fraction)
    ratios = [new_ratios[name] for name in names]

    missing_classes = sum(1 for rid in a.assignment if rid not in a.class_of)
    if missing_classes:
        raise SplitError(
            f"{missing_classes} assigned records carry no class; "
            f"load the assignment alongside its projected manifest")

    class_ids = sorted(set(a.class_of.values()))
    class_idx = {c: i for i, c in enumerate(class_ids)}
    split_idx = {name: i for i, name in enumerate(names)}
    counts = [[0] * len(class_ids) for _ in names]
    totals = [0] * len(class_ids)
    split_sizes = [0] * len(names)
    group_records: dict[str, list[str]] = {}
    group_split: dict[str, int] = {}
    for rid, split in a.assignment.items():
        ci = class_idx[a.class_of[rid]]
        si = split_idx[split]
        counts[si][ci] += 1
        totals[ci] += 1
        split_sizes[si] += 1
        g = a.group_of[rid]
        group_records.setdefault(g, []).append(rid)
        prev = group_split.setdefault(g, si)
        if prev != si:
            raise SplitError(f"group {g!r} spans splits; audit the assignment first")

    seed = a.spec.seed if a.spec is not None else 0
    lam = a.spec.size_term_weight if a.spec is not None else 1.0
    si_from = split_idx[from_split]
    si_to = split_idx[to_split]
    movable = sorted((g for g, si in group_split.items() if si == si_from),
                     key=lambda g: (tiebreak(seed, g), g))

    def group_vec(g: str) -> dict[int, int]:
        vec: dict[int, int] = {}
        for rid in group_records[g]:
            ci = class_idx[a.class_of[rid]]
            vec[ci] = vec.get(ci, 0) + 1
        return vec

    vecs = {g: group_vec(g) for g in movable}
    moved: list[str] = []
    while split_sizes[si_from] / n_total > target_from_fraction + 1e-12:
        if len(movable) <= 1:
            raise UnreachableTargetError(
                f"reaching fraction {target_from_fraction} would empty "
                f"{from_split!r}")
        best = None
        for g in movable:
            vec = vecs[g]
            for ci, n in vec.items():
                counts[si_from][ci] -= n
                counts[si_to][ci] += n
            size = sum(vec.values())
            split_sizes[si_from] -= size
            split_sizes[si_to] += size
            cand_cost = _objective(counts, split_sizes, ratios, totals, n_total, lam)
            for ci, n in vec.items():
                counts[si_from][ci] += n
                counts[si_to][ci] -= n
            split_sizes[si_from] += size
            split_sizes[si_to] -= size
            if best is None or cand_cost < best[0]:
                best = (cand_cost, g)
        g = best[1]
        vec = vecs[g]
        for ci, n in vec.items():
            counts[si_from][ci] -= n
            counts[si_to][ci] += n
        size = sum(vec.values())
        split_sizes[si_from] -= size
        split_sizes[si_to] += size
        movable.remove(g)
        group_split[g] = si_to
        moved.append(g)

    assignment = {rid: names[group_split[a.group_of[rid]]] for rid in a.assignment}
    achieved = {name: {c: counts[split_idx[name]][class_idx[c]] for c in class_ids}
                for name in names}
    cost = _objective(counts, split_sizes, ratios, totals, n_total, lam)

    new_spec: Optional[SplitSpec] = None
    if all(0.0 < r < 1.0 for r in ratios):
        base = a.spec if a.spec is not None else SplitSpec(
            split_names=tuple(names), ratios=tuple(ratios), seed=seed)
        new_spec = replace(base, split_names=tuple(names), ratios=tuple(ratios))

    warnings = list(a.warnings)
    warnings.append(
        f"rebalance: moved {len(moved)} groups "
        f"({sum(len(group_records[g]) for g in moved)} records) "
        f"from {from_split!r} to {to_split!r} targeting {target_from_fraction}")
    return SplitAssignment(assignment=assignment, group_of=dict(a.group_of),
                           spec=new_spec, achieved_counts=achieved, cost=cost,
                           warnings=warnings, match_report=a.match_report,
                           class_of=dict(a.class_of))


# ---------------------------------------------------------------------------
# External predefined splits, matched by filename.
# ---------------------------------------------------------------------------

ExternalSplit = Union[Mapping[str, str], Iterable[tuple[str, str]]]


def _external_map(external: ExternalSplit) -> dict[str, str]:
    if isinstance(external, Mapping):
        mapping = dict(external)
    else:
        mapping = {}
        for key, split in external:
            if key in mapping and mapping[key] != split:
                raise ConflictingExternalEntryError(
                    f"match key {key!r} maps to both {mapping[key]!r} and {split!r}")
            mapping[key] = split
    if not mapping:
        raise SplitError("external split input is empty")
    return mapping


def enforce_external_split(m: UnifiedManifest, external: ExternalSplit,
                           policy: UnmatchedPolicy = UnmatchedPolicy.ERROR_ON_UNMATCHED,
                           case_insensitive: bool = False) -> SplitAssignment:
    """Force records onto split names dictated by an external filename map.

    Matching uses the filename match key (basename, last extension removed),
    which survives the directory moves and re-encodings applied to copies of
    the same image. Unmatched records either error out or pass through
    unassigned for a later splitting pass.
    """
    from .adapters import normalize_filename

    mapping = _external_map(external)
    matched_keys_per_dataset: dict[tuple[str, str], str] = {}
    assignment: dict[str, str] = {}
    group_of: dict[str, str] = {}
    class_of: dict[str, str] = {}
    unmatched: list[str] = []
    per_dataset: dict[str, dict[str, int]] = {}

    for r in m.records:
        key = normalize_filename(r.file_path, case_insensitive)
        stats = per_dataset.setdefault(r.dataset_id, {"matched": 0, "unmatched": 0})
        split = mapping.get(key)
        if split is None:
            stats["unmatched"] += 1
            unmatched.append(r.record_id)
            continue
        dk = (r.dataset_id, key)
        if dk in matched_keys_per_dataset:
            raise AmbiguousMatchError(
                f"records {matched_keys_per_dataset[dk]!r} and {r.record_id!r} of "
                f"dataset {r.dataset_id!r} share match key {key!r}")
        matched_keys_per_dataset[dk] = r.record_id
        stats["matched"] += 1
        assignment[r.record_id] = split
        # External matching has no group information; records move alone.
        group_of[r.record_id] = f"record:{r.record_id}"
        if r.canonical_class is not None:
            class_of[r.record_id] = r.canonical_class

    if unmatched and policy is UnmatchedPolicy.ERROR_ON_UNMATCHED:
        shown = ", ".join(repr(x) for x in unmatched[:10])
        extra = "" if len(unmatched) <= 10 else f" (+{len(unmatched) - 10} more)"
        raise SplitError(f"unmatched records under ERROR_ON_UNMATCHED: {shown}{extra}")

    achieved: dict[str, dict[str, int]] = {}
    for rid, split in assignment.items():
        cls = class_of.get(rid, "?")
        achieved.setdefault(split, {})
        achieved[split][cls] = achieved[split].get(cls, 0) + 1

    report = {
        "matched": len(assignment),
        "unmatched": len(unmatched),
        "per_dataset": per_dataset,
    }
    return SplitAssignment(assignment=assignment, group_of=group_of, spec=None,
                           achieved_counts=achieved, cost=None,
                           warnings=[], match_report=report, class_of=class_of)


def split_with_external(m: UnifiedManifest, spec: SplitSpec,
                        external: ExternalSplit,
                        case_insensitive: bool = False) -> SplitAssignment:
    """Enforce an external split, then stratify the unmatched remainder.

    Groups containing externally matched records are pinned to the split the
    external data dictates (plurality on disagreement, with a warning), so
    group exclusivity is preserved wherever the external input allows it.
    """
    enforced = enforce_external_split(m, external,
                                      UnmatchedPolicy.PASSTHROUGH_UNMATCHED,
                                      case_insensitive)
    unknown = sorted(set(enforced.assignment.values()) - set(spec.split_names))
    if unknown:
        raise SplitError(f"external split names {unknown} not in spec "
                         f"{list(spec.split_names)}")

    eng = _Engine(m, spec.split_names, spec.ratios, spec.group_policy,
                  spec.seed, spec.size_term_weight)
    warnings = _degenerate_warnings(spec.split_names, spec.ratios, eng.n_total)

    split_idx = {name: i for i, name in enumerate(spec.split_names)}
    enforced_votes: dict[str, dict[int, int]] = {}
    for rid, split in enforced.assignment.items():
        g = eng.group_key[rid]
        votes = enforced_votes.setdefault(g, {})
        si = split_idx[split]
        votes[si] = votes.get(si, 0) + 1

    free: list = []
    for g in eng.groups:
        votes = enforced_votes.get(g.key)
        if votes is None:
            free.append(g)
            continue
        if len(votes) > 1:
            warnings.append(
                f"group {g.key!r} is externally pinned to several splits; "
                f"free records follow the plurality")
        si = min(votes, key=lambda s: (-votes[s], s))
        eng.pin(g, si)

    eng.place_greedy(free)
    eng.refine({g.key for g in free})

    assignment, group_of, class_of = eng.result_assignment()
    # Externally matched records keep their dictated split even when the rest
    # of their group was pinned elsewhere; the audit pass reports the span.
    assignment.update(enforced.assignment)
    counts: dict[str, dict[str, int]] = {name: {c: 0 for c in eng.class_ids}
                                         for name in spec.split_names}
    for rid, split in assignment.items():
        counts[split][class_of[rid]] += 1
    matrix = [[counts[name][c] for c in eng.class_ids] for name in spec.split_names]
    sizes = [sum(row) for row in matrix]
    cost = _objective(matrix, sizes, spec.ratios, eng.totals, eng.n_total,
                      spec.size_term_weight)
    return SplitAssignment(assignment=assignment, group_of=group_of, spec=spec,
                           achieved_counts=counts, cost=cost, warnings=warnings,
                           match_report=enforced.match_report, class_of=class_of)


# ---------------------------------------------------------------------------
# On-disk formats.
# ---------------------------------------------------------------------------

def _spec_to_obj(spec: Optional[SplitSpec]) -> Optional[dict]:
    if spec is None:
        return None
    return {
        "split_names": list(spec.split_names),
        "ratios": list(spec.ratios),
        "seed": spec.seed,
        "group_chain": [s.value for s in spec.group_policy.fallback_chain],
        "lambda": spec.size_term_weight,
    }


def _spec_from_obj(obj: Optional[Mapping]) -> Optional[SplitSpec]:
    if obj is None:
        return None
    from .adapters import GroupSource
    return SplitSpec(
        split_names=tuple(obj["split_names"]),
        ratios=tuple(obj["ratios"]),
        seed=int(obj["seed"]),
        group_policy=GroupPolicy(tuple(GroupSource(v) for v in obj["group_chain"])),
        size_term_weight=float(obj.get("lambda", 1.0)),
    )


def write_assignment(a: Union[SplitAssignment, FoldAssignment],
                     csv_path: str | Path, sidecar_path: str | Path) -> None:
    assignment = a.assignment
    with Path(csv_path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["record_id", "group_key", "split"])
        for rid, split in assignment.items():
            writer.writerow([rid, a.group_of.get(rid, ""), split])
    sidecar = {
        "spec": _spec_to_obj(a.spec),
        "cost": a.cost,
        "achieved_counts": a.achieved_counts,
        "warnings": a.warnings,
    }
    if isinstance(a, FoldAssignment):
        sidecar["k"] = a.k
    elif a.match_report is not None:
        sidecar["match_report"] = a.match_report
    Path(sidecar_path).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8")


def read_assignment_rows(csv_path: str | Path) -> list[tuple[str, str, str]]:
    """Raw (record_id, group_key, split) rows, duplicates preserved."""
    with Path(csv_path).open("r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header != ["record_id", "group_key", "split"]:
            raise SplitError(f"{csv_path}: expected header record_id,group_key,split")
        return [(row[0], row[1], row[2]) for row in reader]


def load_assignment(csv_path: str | Path, m: UnifiedManifest,
                    sidecar_path: Optional[str | Path] = None) -> SplitAssignment:
    """Rebuild a SplitAssignment from its CSV (+ optional sidecar) and the
    manifest it was computed from."""
    rows = read_assignment_rows(csv_path)
    assignment: dict[str, str] = {}
    group_of: dict[str, str] = {}
    for rid, group, split in rows:
        if rid in assignment:
            raise SplitError(f"{csv_path}: record {rid!r} assigned twice")
        assignment[rid] = split
        group_of[rid] = group
    class_of = {r.record_id: r.canonical_class for r in m.records
                if r.canonical_class is not None and r.record_id in assignment}
    achieved: dict[str, dict[str, int]] = {}
    for rid, split in assignment.items():
        cls = class_of.get(rid, "?")
        achieved.setdefault(split, {})
        achieved[split][cls] = achieved[split].get(cls, 0) + 1
    spec = None
    cost = None
    warnings: list[str] = []
    if sidecar_path is not None and Path(sidecar_path).exists():
        doc = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        spec = _spec_from_obj(doc.get("spec"))
        cost = doc.get("cost")
        warnings = list(doc.get("warnings", []))
    return SplitAssignment(assignment=assignment, group_of=group_of, spec=spec,
                           achieved_counts=achieved, cost=cost,
                           warnings=warnings, class_of=class_of)


def read_external_csv(path: str | Path) -> list[tuple[str, str]]:
    """External split file: CSV with header match_key,split."""
    with Path(path).open("r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header != ["match_key", "split"]:
            raise SplitError(f"{path}: expected header match_key,split")
        return [(row[0], row[1]) for row in reader]
