"""endokit: curation, patient-safe stratified splitting, leakage auditing,
and evaluation for multi-source endoscopy image datasets."""

from .manifest import (DatasetDescriptor, DistributionTable, ImageRecord,
                       Modality, SplitType, UnifiedManifest, merge_manifests,
                       read_manifest, summarize, validate_manifest,
                       write_manifest)
from .taxonomy import (CE24_CLASSES, EXCLUDED, MappingProfile, Taxonomy,
                       class_counts, load_profile, load_taxonomy, project,
                       resolve_label)
from .adapters import (AdapterConfig, GroupPolicy, GroupSource, Layout,
                       extract_group_key, ingest, normalize_filename)
from .splitting import (FoldAssignment, SplitAssignment, SplitSpec,
                        UnmatchedPolicy, enforce_external_split, rebalance,
                        split_cost, split_with_external,
                        stratified_group_kfold, stratified_group_shuffle_split)
from .auditing import AuditReport, OverlapReport, audit_group_integrity, detect_overlap
from .weights import WeightTable, compute_weights
from .metrics import (ConfusionMatrix, MetricsReport, PredictionSet,
                      argmax_predict, average_precision, balanced_accuracy,
                      binary_roc_auc, combined_metric, confusion_matrix,
                      evaluate, f1_scores, macro_map, multiclass_auc)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
