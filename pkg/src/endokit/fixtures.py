"""Synthetic dataset fixtures for desk-scale verification.

The ``endoextend24`` preset reproduces the ten-dataset collection's published
shape: exact per-dataset record counts, exact totals for the five findings
with published counts, and the published per-dataset cells (e.g. the two big
normal-mucosa contributions). Everything not published is filled by a
deterministic largest-remainder apportionment and marked synthetic in the
manifest provenance — it is never presented as ground truth.

No pixel data is generated anywhere; fixtures are metadata only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .adapters import GroupPolicy
from .manifest import (DatasetDescriptor, ImageRecord, Modality, SplitType,
                       UnifiedManifest, make_record_id, provenance_entry,
                       write_manifest)
from .rng import SplitMix64
from .splitting import SplitSpec, stratified_group_shuffle_split, write_assignment
from .taxonomy import (CE24_CLASSES, MappingProfile, Taxonomy, TaxonomyNode,
                       write_profile, write_taxonomy)

PRESETS = ("endoextend24", "tiny", "planted-leak", "planted-overlap")


class UnknownPresetError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class _SourceDataset:
    dataset_id: str
    name: str
    year: int
    modalities: tuple[Modality, ...]
    split_type: SplitType
    images: int
    resolution: Optional[tuple[int, int]]  # None when the source varies
    groups_by_video: bool = False


_VCE = (Modality.VCE,)
_COL = (Modality.COL,)

SOURCES = (
    _SourceDataset("seeai", "The SEE-AI Project", 2023, _VCE, SplitType.NONE,
                   18481, (576, 576)),
    _SourceDataset("kid2", "KID 2", 2017, _VCE, SplitType.NONE, 2371, (360, 360)),
    _SourceDataset("kid1", "KID 1", 2017, _VCE, SplitType.NONE, 77, (360, 360)),
    _SourceDataset("ers", "ERS", 2022, (Modality.GST, Modality.COL, Modality.VCE),
                   SplitType.PATIENT_ID, 121399, None),
    _SourceDataset("limuc", "LIMUC", 2022, _COL, SplitType.PATIENT_ID,
                   11276, (352, 288)),
    _SourceDataset("medfmc", "MedFMC", 2023, _COL, SplitType.PATIENT_ID,
                   3865, (1280, 1024)),
    _SourceDataset("kvasir_capsule", "Kvasir-Capsule", 2021, _VCE,
                   SplitType.KFOLD_CV, 47238, (336, 336), groups_by_video=True),
    _SourceDataset("hyper_kvasir", "HyperKvasir", 2020,
                   (Modality.GST, Modality.COL), SplitType.KFOLD_CV, 10662, None),
    _SourceDataset("crohnipi", "CrohnIPI", 2020, _VCE, SplitType.KFOLD_CV,
                   3498, (320, 320)),
    _SourceDataset("gastrovision", "GastroVision", 2023,
                   (Modality.GST, Modality.COL), SplitType.TRAIN_VAL_TEST,
                   8000, None),
)

TOTAL_IMAGES = 226_867

# Published class totals; the remaining five classes are synthetic fill.
PUBLISHED_CLASS_TOTALS = {
    "normal_mucosa": 67_434,
    "bleeding": 27_450,
    "ulcer": 12_334,
    "foreign_body": 675,
    "worms": 201,
}

# Published per-dataset cells.
PUBLISHED_CELLS = {
    ("ers", "normal_mucosa"): 20_469,
    ("kvasir_capsule", "normal_mucosa"): 34_338,
    ("limuc", "ulcer"): 5_166,
    ("hyper_kvasir", "polyp"): 1_028,
    ("hyper_kvasir", "ulcer"): 851,
}

_FILL_CLASSES = ("polyp", "erosion", "angioectasia", "lymphangiectasia", "erythema")
_FILL_WEIGHTS = (0.30, 0.27, 0.18, 0.10, 0.15)

# Fine-grained findings used by the ERS fixture; projection lifts them to
# their parents.
_FINE_CHILDREN = {
    "bleeding": ("bleeding_active", "bleeding_inactive"),
    "ulcer": ("ulcer_aphthous", "ulcer_deep"),
    "erosion": ("erosion_single", "erosion_multiple"),
}


def apportion(total: int, weights: list[float],
              caps: Optional[list[int]] = None) -> list[int]:
    """Largest-remainder apportionment of *total* over *weights*.

    Deterministic: remainders tie-break by index. Raises when caps make the
    target infeasible.
    """
    n = len(weights)
    if total == 0:
        return [0] * n
    wsum = float(sum(weights))
    if wsum <= 0:
        raise ValueError("weights must have positive sum")
    quotas = [total * w / wsum for w in weights]
    base = [math.floor(q) for q in quotas]
    if caps is not None:
        base = [min(b, cap) for b, cap in zip(base, caps)]
    remaining = total - sum(base)
    order = sorted(range(n), key=lambda i: (base[i] - quotas[i], i))
    guard = 0
    while remaining > 0:
        progressed = False
        for i in order:
            if remaining == 0:
                break
            if caps is None or base[i] < caps[i]:
                base[i] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ValueError("apportionment infeasible under the given caps")
        guard += 1
        if guard > total + 1:
            raise ValueError("apportionment failed to converge")
    return base


def build_distribution_matrix() -> dict[str, dict[str, int]]:
    """Per-(dataset, class) counts honoring every published number exactly."""
    counts = {s.dataset_id: {c: 0 for c in CE24_CLASSES} for s in SOURCES}
    capacity = {s.dataset_id: s.images for s in SOURCES}
    for (ds, cls), n in PUBLISHED_CELLS.items():
        counts[ds][cls] = n
        capacity[ds] -= n

    for cls in CE24_CLASSES:
        if cls not in PUBLISHED_CLASS_TOTALS:
            continue
        budget = PUBLISHED_CLASS_TOTALS[cls] - sum(counts[d][cls] for d in counts)
        # Datasets whose cell for this class is published keep it verbatim.
        ids = [s.dataset_id for s in SOURCES
               if (s.dataset_id, cls) not in PUBLISHED_CELLS]
        caps = [capacity[d] for d in ids]
        alloc = apportion(budget, [float(c) for c in caps], caps)
        for d, n in zip(ids, alloc):
            counts[d][cls] += n
            capacity[d] -= n

    for s in SOURCES:
        d = s.dataset_id
        free = [c for c in _FILL_CLASSES if counts[d][c] == 0]
        weights = [w for c, w in zip(_FILL_CLASSES, _FILL_WEIGHTS) if c in free]
        alloc = apportion(capacity[d], weights)
        for c, n in zip(free, alloc):
            counts[d][c] = n
        capacity[d] = 0

    for s in SOURCES:
        assert sum(counts[s.dataset_id].values()) == s.images
    for cls, total in PUBLISHED_CLASS_TOTALS.items():
        assert sum(counts[d][cls] for d in counts) == total
    assert sum(sum(row.values()) for row in counts.values()) == TOTAL_IMAGES
    return counts


def fixture_taxonomy() -> Taxonomy:
    nodes = [TaxonomyNode(c, c.replace("_", " ")) for c in CE24_CLASSES]
    for parent, children in _FINE_CHILDREN.items():
        nodes.extend(TaxonomyNode(child, child.replace("_", " "), parent=parent)
                     for child in children)
    return Taxonomy(nodes=nodes, version="ce24-fixture-1")


def _raw_label(dataset_id: str, class_id: str, half: int) -> tuple[str, str]:
    """(raw label, taxonomy class) for one record; *half* selects the
    fine-grained variant where the dataset uses finer labels."""
    if dataset_id == "ers":
        children = _FINE_CHILDREN.get(class_id)
        if children is not None:
            child = children[half]
            return child.replace("_", "-"), child
        return class_id.replace("_", "-"), class_id
    if dataset_id == "limuc":
        if class_id == "normal_mucosa":
            return "mayo-0", class_id
        if class_id == "ulcer":
            return "mayo-3", class_id
        return class_id, class_id
    if dataset_id == "seeai":
        return class_id.replace("_", " "), class_id
    if dataset_id == "kvasir_capsule":
        return class_id.replace("_", " ").title(), class_id
    if dataset_id == "hyper_kvasir":
        return class_id.replace("_", "-"), class_id
    return class_id, class_id


def fixture_profile() -> MappingProfile:
    """Mapping entries covering every raw label the fixtures emit."""
    entries: dict[tuple[str, str], str] = {}
    for s in SOURCES:
        for cls in CE24_CLASSES:
            for half in (0, 1):
                raw, mapped = _raw_label(s.dataset_id, cls, half)
                entries[(s.dataset_id, raw)] = mapped
    return MappingProfile(profile_id="ce24_10",
                          target_classes=list(CE24_CLASSES),
                          entries=entries)


def _group_size(class_total: int, min_size: int, cap: int, divisor: int) -> int:
    return max(min_size, min(cap, class_total // divisor))


def _split_hint(source: _SourceDataset, position: int) -> Optional[str]:
    if source.split_type is SplitType.TRAIN_VAL_TEST:
        slot = position % 20
        return "train" if slot < 14 else ("val" if slot < 17 else "test")
    if source.split_type is SplitType.KFOLD_CV:
        return f"fold{position % 2}"
    return None


def build_endoextend_manifests(seed: int = 0, group_size_min: int = 4,
                               group_size_cap: int = 50,
                               group_size_divisor: int = 100) -> list[UnifiedManifest]:
    """Ten per-dataset manifests with Table-shaped counts and synthetic
    patient/video groups (roughly 5,000 groups at the default sizing)."""
    matrix = build_distribution_matrix()
    class_full_totals = {c: sum(matrix[d][c] for d in matrix) for c in CE24_CLASSES}

    manifests = []
    for source in SOURCES:
        d = source.dataset_id
        records: list[ImageRecord] = []
        serial = 0
        group_serial = 0
        width, height = source.resolution or (None, None)
        for cls in CE24_CLASSES:
            cell = matrix[d][cls]
            if cell == 0:
                continue
            size = _group_size(class_full_totals[cls], group_size_min,
                               group_size_cap, group_size_divisor)
            for start in range(0, cell, size):
                block = min(size, cell - start)
                group_serial += 1
                if source.groups_by_video:
                    patient, video = None, f"{d}-v{group_serial:05d}"
                else:
                    patient, video = f"{d}-p{group_serial:05d}", None
                for i in range(block):
                    half = 0 if (start + i) * 2 < cell else 1
                    raw, _ = _raw_label(d, cls, half)
                    file_path = f"images/{d}_{serial:07d}.jpg"
                    records.append(ImageRecord(
                        record_id=make_record_id(d, file_path),
                        dataset_id=d,
                        file_path=file_path,
                        raw_label=raw,
                        patient_id=patient,
                        video_id=video,
                        modality=source.modalities[0],
                        split_hint=_split_hint(source, serial),
                        width=width,
                        height=height,
                    ))
                    serial += 1
        descriptor = DatasetDescriptor(
            dataset_id=d, name=source.name, year=source.year,
            modalities=source.modalities, split_type=source.split_type,
            declared_image_count=source.images)
        manifests.append(UnifiedManifest(
            records=records, datasets=[descriptor],
            provenance=[provenance_entry(f"synthetic:endoextend24/{d}:seed={seed}", "-")]))
    return manifests


def build_tiny_manifest(seed: int = 0) -> UnifiedManifest:
    """40 records, 4 classes, 10 patients of one record per class; small
    enough for exhaustive splitter verification."""
    classes = list(CE24_CLASSES[:4])
    records = []
    serial = 0
    for p in range(10):
        for cls in classes:
            file_path = f"images/tiny_{serial:04d}.jpg"
            records.append(ImageRecord(
                record_id=make_record_id("tiny", file_path),
                dataset_id="tiny",
                file_path=file_path,
                raw_label=cls,
                canonical_class=cls,
                patient_id=f"tiny-p{p:02d}",
                modality=Modality.VCE,
            ))
            serial += 1
    descriptor = DatasetDescriptor(dataset_id="tiny", name="Tiny fixture",
                                   year=2024, modalities=_VCE,
                                   split_type=SplitType.PATIENT_ID,
                                   declared_image_count=40)
    return UnifiedManifest(records=records, datasets=[descriptor],
                           provenance=[provenance_entry(f"synthetic:tiny:seed={seed}", "-")])


def build_planted_leak(seed: int = 0):
    """A clean grouped split with exactly one record flipped across splits.

    Returns (manifest, corrupted assignment, planted group key).
    """
    m = build_tiny_manifest(seed)
    spec = SplitSpec(split_names=("train", "val"), ratios=(0.8, 0.2), seed=seed,
                     group_policy=GroupPolicy())
    a = stratified_group_shuffle_split(m, spec)
    val_records = [rid for rid, split in a.assignment.items() if split == "val"]
    victim = val_records[0]
    a.assignment[victim] = "train"
    a.warnings.append(f"planted leak: record {victim!r} moved to 'train' "
                      f"while its group stays in 'val'")
    return m, a, a.group_of[victim]


def build_planted_overlap(seed: int = 0):
    """Two manifests sharing filenames the way cropped re-releases do.

    Returns (manifest_a, manifest_b, expected overlap match keys,
    external split pairs for manifest_b's files).
    """
    rng = SplitMix64(seed)
    classes = ("normal_mucosa", "bleeding", "ulcer")
    records_a = []
    for d in ("kid2", "seeai"):
        for i in range(60):
            cls = classes[i % len(classes)]
            file_path = f"frames/{d}_{i:04d}.jpg"
            records_a.append(ImageRecord(
                record_id=make_record_id(d, file_path),
                dataset_id=d, file_path=file_path,
                raw_label=cls, canonical_class=cls,
                patient_id=f"{d}-p{i // 6:03d}",
                modality=Modality.VCE))
    descriptors_a = [
        DatasetDescriptor("kid2", "KID 2", 2017, _VCE, SplitType.NONE, 60),
        DatasetDescriptor("seeai", "The SEE-AI Project", 2023, _VCE,
                          SplitType.NONE, 60),
    ]
    manifest_a = UnifiedManifest(
        records=records_a, datasets=descriptors_a,
        provenance=[provenance_entry(f"synthetic:planted-overlap/a:seed={seed}", "-")])

    pool = list(range(len(records_a)))
    rng.shuffle(pool)
    shared = sorted(pool[:40])
    records_b = []
    for i in shared:
        src = records_a[i]
        base = src.file_path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        file_path = f"crops/{base}.png"   # moved directory + changed extension
        records_b.append(ImageRecord(
            record_id=make_record_id("ce24", file_path),
            dataset_id="ce24", file_path=file_path,
            raw_label=src.raw_label, canonical_class=src.canonical_class,
            modality=Modality.VCE))
    for i in range(20):
        cls = classes[i % len(classes)]
        file_path = f"crops/ce24_only_{i:04d}.png"
        records_b.append(ImageRecord(
            record_id=make_record_id("ce24", file_path),
            dataset_id="ce24", file_path=file_path,
            raw_label=cls, canonical_class=cls,
            modality=Modality.VCE))
    descriptor_b = DatasetDescriptor("ce24", "CE24 fixture", 2024, _VCE,
                                     SplitType.TRAIN_VAL_TEST, 60)
    manifest_b = UnifiedManifest(
        records=records_b, datasets=[descriptor_b],
        provenance=[provenance_entry(f"synthetic:planted-overlap/b:seed={seed}", "-")])

    expected_keys = sorted(
        records_a[i].file_path.rsplit("/", 1)[-1].rsplit(".", 1)[0] for i in shared)
    external = []
    for idx, r in enumerate(records_b):
        base = r.file_path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        external.append((base, "train" if idx % 10 < 7 else "val"))
    return manifest_a, manifest_b, expected_keys, external


def generate(preset: str, out_dir: str | Path, seed: int = 0) -> list[Path]:
    """Write one preset's files under *out_dir*; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit_manifest(m: UnifiedManifest, name: str) -> None:
        path = out / name
        write_manifest(m, path)
        written.append(path)

    if preset == "endoextend24":
        for i, m in enumerate(build_endoextend_manifests(seed), start=1):
            emit_manifest(m, f"{i:02d}_{m.datasets[0].dataset_id}.jsonl")
        write_taxonomy(fixture_taxonomy(), out / "taxonomy.json")
        write_profile(fixture_profile(), out / "profile.json")
        written += [out / "taxonomy.json", out / "profile.json"]
    elif preset == "tiny":
        emit_manifest(build_tiny_manifest(seed), "tiny.jsonl")
        tax = Taxonomy(nodes=[TaxonomyNode(c, c.replace("_", " "))
                              for c in CE24_CLASSES[:4]], version="tiny-1")
        profile = MappingProfile(
            profile_id="tiny_4", target_classes=list(CE24_CLASSES[:4]),
            entries={("tiny", c): c for c in CE24_CLASSES[:4]})
        write_taxonomy(tax, out / "taxonomy.json")
        write_profile(profile, out / "profile.json")
        written += [out / "taxonomy.json", out / "profile.json"]
    elif preset == "planted-leak":
        m, a, group_key = build_planted_leak(seed)
        emit_manifest(m, "leak_manifest.jsonl")
        write_assignment(a, out / "leak_assignment.csv", out / "leak_assignment.json")
        written += [out / "leak_assignment.csv", out / "leak_assignment.json"]
    elif preset == "planted-overlap":
        ma, mb, expected, external = build_planted_overlap(seed)
        emit_manifest(ma, "overlap_a.jsonl")
        emit_manifest(mb, "overlap_b.jsonl")
        expected_path = out / "overlap_expected.json"
        expected_path.write_text(
            json.dumps({"match_keys": expected}, indent=2) + "\n", encoding="utf-8")
        written.append(expected_path)
        external_path = out / "external.csv"
        lines = ["match_key,split"] + [f"{k},{s}" for k, s in external]
        external_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(external_path)
    else:
        raise UnknownPresetError(f"unknown preset {preset!r}; "
                                 f"available: {', '.join(PRESETS)}")
    return written
