"""Command-line entry point wiring the modules into reproducible pipelines.

Exit codes: 0 success, 1 data/validation failure, 2 usage error. Every
command reads and writes only the files named by its flags, and re-running
a command with identical inputs produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import adapters, auditing, fixtures, manifest, metrics, splitting
from . import taxonomy as taxonomy_mod
from . import weights as weights_mod
from .adapters import GroupPolicy
from .manifest import file_digest, provenance_entry, read_manifest, write_manifest


class CliDataError(Exception):
    """Wraps module errors so main() can exit with status 1."""


def _parse_ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise CliDataError(f"bad --ratios value {text!r}: {exc}") from exc


def _default_split_names(n: int) -> tuple[str, ...]:
    if n == 2:
        return ("train", "val")
    if n == 3:
        return ("train", "val", "test")
    return tuple(f"split{i}" for i in range(n))


def _load_manifest(path: str) -> manifest.UnifiedManifest:
    try:
        return read_manifest(path)
    except (OSError, manifest.ManifestError) as exc:
        raise CliDataError(str(exc)) from exc


def _spec_from_args(args, n_records_hint: str = "") -> splitting.SplitSpec:
    ratios = _parse_ratios(args.ratios)
    return splitting.SplitSpec(
        split_names=_default_split_names(len(ratios)),
        ratios=ratios,
        seed=args.seed,
        group_policy=GroupPolicy.parse(args.group_chain),
        size_term_weight=getattr(args, "size_term_weight", 1.0),
    )


def _cmd_fixtures(args) -> int:
    written = fixtures.generate(args.preset, args.out, seed=args.seed)
    for path in written:
        print(path)
    return 0


def _cmd_ingest(args) -> int:
    configs = adapters.load_collection(args.collection)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for config in configs:
        m = adapters.ingest(config)
        report = manifest.validate_manifest(m)
        if not report.passed:
            for v in report.violations[:20]:
                print(f"ERROR {config.dataset_id}: {v.kind}: {v.message}",
                      file=sys.stderr)
            raise CliDataError(
                f"{config.dataset_id}: ingestion produced an invalid manifest")
        path = out / f"{config.dataset_id}.jsonl"
        write_manifest(m, path)
        print(f"{path}  ({len(m.records)} records)")
    return 0


def _cmd_merge(args) -> int:
    inputs = [_load_manifest(p) for p in args.manifests]
    merged = manifest.merge_manifests(inputs)
    merged.provenance = [
        provenance_entry(str(p), file_digest(p)) for p in args.manifests
    ]
    report = manifest.validate_manifest(merged)
    write_manifest(merged, args.out)
    print(f"{args.out}  ({len(merged.records)} records, "
          f"{len(merged.datasets)} datasets)")
    if not report.passed:
        for v in report.violations[:20]:
            print(f"ERROR: {v.kind}: {v.message}", file=sys.stderr)
        raise CliDataError(f"merged manifest fails validation "
                           f"({len(report.violations)} violations)")
    return 0


def _cmd_map(args) -> int:
    m = _load_manifest(args.manifest)
    tax = taxonomy_mod.load_taxonomy(args.taxonomy)
    profile = taxonomy_mod.load_profile(args.profile)
    result = taxonomy_mod.project(m, tax, profile)
    write_manifest(result.manifest, args.out)
    print(f"{args.out}  ({len(result.manifest.records)} records kept, "
          f"{result.dropped_excluded} excluded, "
          f"{result.dropped_no_ancestor} without target ancestor)")
    for w in result.warnings:
        print(f"WARNING: {w}", file=sys.stderr)
    return 0


def _cmd_summarize(args) -> int:
    m = _load_manifest(args.manifest)
    class_order = None
    if args.profile:
        class_order = taxonomy_mod.load_profile(args.profile).target_classes
    table = manifest.summarize(m, class_order=class_order)
    manifest.write_distribution_csv(table, args.out)
    print(f"{args.out}  ({len(table.dataset_ids)} datasets x "
          f"{len(table.class_ids)} classes, {sum(table.totals_row.values())} records)")
    return 0


def _write_split_outputs(a, out_dir: str, stem: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splitting.write_assignment(a, out / f"{stem}.csv", out / f"{stem}.json")
    print(out / f"{stem}.csv")
    print(out / f"{stem}.json")
    if a.cost is not None:
        print(f"cost {a.cost:.9g}")
    for w in a.warnings:
        print(f"WARNING: {w}", file=sys.stderr)


def _cmd_split(args) -> int:
    m = _load_manifest(args.manifest)
    spec = _spec_from_args(args)
    if args.external:
        external = splitting.read_external_csv(args.external)
        if args.unmatched == "error":
            a = splitting.enforce_external_split(
                m, external, splitting.UnmatchedPolicy.ERROR_ON_UNMATCHED,
                case_insensitive=args.case_insensitive)
        else:
            a = splitting.split_with_external(
                m, spec, external, case_insensitive=args.case_insensitive)
    else:
        a = splitting.stratified_group_shuffle_split(m, spec)
    _write_split_outputs(a, args.out, "split")
    return 0


def _cmd_kfold(args) -> int:
    m = _load_manifest(args.manifest)
    a = splitting.stratified_group_kfold(
        m, args.k, args.seed, GroupPolicy.parse(args.group_chain))
    _write_split_outputs(a, args.out, "folds")
    return 0


def _cmd_rebalance(args) -> int:
    m = _load_manifest(args.manifest)
    sidecar = Path(args.assignment).with_suffix(".json")
    a = splitting.load_assignment(args.assignment, m, sidecar)
    result = splitting.rebalance(a, args.from_split, args.to_split, args.target)
    _write_split_outputs(result, args.out, "rebalanced")
    return 0


def _cmd_enforce_split(args) -> int:
    m = _load_manifest(args.manifest)
    external = splitting.read_external_csv(args.external)
    policy = splitting.UnmatchedPolicy.ERROR_ON_UNMATCHED if \
        args.unmatched == "error" else splitting.UnmatchedPolicy.PASSTHROUGH_UNMATCHED
    a = splitting.enforce_external_split(m, external, policy,
                                         case_insensitive=args.case_insensitive)
    _write_split_outputs(a, args.out, "enforced")
    if a.match_report:
        print(f"matched {a.match_report['matched']}, "
              f"unmatched {a.match_report['unmatched']}")
    return 0


def _cmd_audit(args) -> int:
    m = _load_manifest(args.manifest)
    rows = splitting.read_assignment_rows(args.assignment)
    pairs = [(rid, split) for rid, _, split in rows]
    report = auditing.audit_group_integrity(m, pairs,
                                            GroupPolicy.parse(args.group_chain))
    auditing.write_report(report, args.out)
    print(f"{args.out}  ({'passed' if report.passed else 'FAILED'}, "
          f"{len(report.violations)} violations)")
    return 0 if report.passed else 1


def _cmd_overlap(args) -> int:
    ma = _load_manifest(args.manifest_a)
    mb = _load_manifest(args.manifest_b)
    report = auditing.detect_overlap(ma, mb,
                                     case_insensitive=args.case_insensitive)
    auditing.write_report(report, args.out)
    print(f"{args.out}  ({len(report.pairs)} overlapping pairs)")
    if args.strict and not report.clean:
        return 1
    return 0


def _cmd_weights(args) -> int:
    m = _load_manifest(args.manifest)
    assignment = None
    if args.assignment:
        rows = splitting.read_assignment_rows(args.assignment)
        assignment = {rid: split for rid, _, split in rows}
    table = weights_mod.compute_weights(m, split=args.split_name,
                                        assignment=assignment)
    weights_mod.write_weights_csv(table, args.out)
    print(f"{args.out}  ({len(table.weights)} records, "
          f"{len(table.class_mass)} classes)")
    return 0


def _cmd_evaluate(args) -> int:
    m = _load_manifest(args.manifest)
    preds = metrics.read_predictions_csv(args.pred)
    expected_order = None
    if args.profile:
        expected_order = taxonomy_mod.load_profile(args.profile).target_classes
    assignment = None
    if args.assignment:
        rows = splitting.read_assignment_rows(args.assignment)
        assignment = {rid: split for rid, _, split in rows}
    report = metrics.evaluate(preds, m, split=args.split_name,
                              assignment=assignment,
                              expected_class_order=expected_order,
                              match_by_filename=args.match_by_filename)
    written = metrics.write_report_files(report, args.out)
    for path in written[:2]:
        print(path)
    print(f"balanced_accuracy {report.balanced_accuracy:.6f}")
    print(f"macro_auc {report.macro_auc:.6f}")
    print(f"micro_auc {report.micro_auc:.6f}")
    print(f"macro_f1 {report.macro_f1:.6f}")
    print(f"weighted_f1 {report.weighted_f1:.6f}")
    print(f"macro_map {report.macro_map:.6f}")
    print(f"combined {report.combined:.6f}")
    for w in report.warnings:
        print(f"WARNING: {w}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endokit",
        description="Dataset curation, patient-safe stratified splitting, "
                    "leakage auditing, and prediction scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="generate synthetic verification fixtures")
    p.add_argument("--preset", required=True, choices=fixtures.PRESETS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fixtures)

    p = sub.add_parser("ingest", help="ingest datasets listed in a collection config")
    p.add_argument("--collection", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("merge", help="merge per-dataset manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("map", help="project raw labels onto canonical classes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("summarize", help="per-(dataset, class) distribution CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--profile", help="orders columns by the profile's classes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("split", help="stratified group shuffle split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", required=True, help="e.g. 0.8,0.2")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--group-chain", default="patient_id,video_id,record_id")
    p.add_argument("--lambda", dest="size_term_weight", type=float, default=1.0)
    p.add_argument("--external", help="optional external split CSV to enforce first")
    p.add_argument("--unmatched", choices=["error", "passthrough"],
                   default="passthrough")
    p.add_argument("--case-insensitive", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("kfold", help="stratified group k-fold assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--group-chain", default="patient_id,video_id,record_id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_kfold)

    p = sub.add_parser("rebalance",
                       help="move whole groups between two splits to a target fraction")
    p.add_argument("assignment", help="existing assignment CSV")
    p.add_argument("from_split")
    p.add_argument("to_split")
    p.add_argument("target", type=float, help="target record fraction of from_split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rebalance)

    p = sub.add_parser("enforce-split", help="enforce an external filename-keyed split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--external", required=True, help="CSV with header match_key,split")
    p.add_argument("--unmatched", choices=["error", "passthrough"], required=True)
    p.add_argument("--case-insensitive", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_enforce_split)

    p = sub.add_parser("audit", help="group-integrity audit of an assignment")
    p.add_argument("assignment", help="assignment CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--group-chain", default="patient_id,video_id,record_id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("overlap", help="filename-keyed duplicate detection")
    p.add_argument("manifest_a")
    p.add_argument("manifest_b")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when any overlap is found")
    p.add_argument("--case-insensitive", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("weights", help="class-balanced sampling weights CSV")
    p.add_argument("assignment", nargs="?",
                   help="optional assignment CSV supplying the split filter")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-name",
                   help="restrict to one split (from the assignment, or split_hint)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("evaluate", help="score a predictions CSV against a manifest")
    p.add_argument("assignment", nargs="?",
                   help="optional assignment CSV supplying the split filter")
    p.add_argument("--pred", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-name")
    p.add_argument("--profile", help="check prediction columns against the profile")
    p.add_argument("--match-by-filename", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (manifest.ManifestError, taxonomy_mod.TaxonomyError,
            adapters.AdapterError, adapters.NoGroupKeyError,
            splitting.SplitError, metrics.MetricsError,
            weights_mod.EmptyInputError, fixtures.UnknownPresetError,
            json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
