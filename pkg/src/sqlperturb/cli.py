"""Batch entry points: generate perturbation test sets, evaluate, report.

Exit codes: 0 success, 2 usage error, 3 data error, 4 worker unreachable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import corpus_digest, load_corpus
from .errors import DataError, SqlPerturbError, WorkerError
from .evaluate import (
    RobustnessReport,
    SetResult,
    load_predictions,
    macro_report,
    report_to_csv,
    report_to_json,
    score_testset,
)
from .lexicon import load_lexicon
from .nlq import GenerationConfig, assemble_nlq_testset, load_categories, write_review_export
from .perturb_db import (
    load_rename_lexicon,
    load_transform_lexicon,
    perturb_dbcontent,
    perturb_schema,
)
from .perturb_sql import generate_sql_testset
from .sampling import SamplingPolicy
from .testset import (
    ALL_TYPES,
    DB_TYPES,
    NLQ_TYPES,
    SQL_TYPES,
    read_testset,
    resolve_databases,
    write_testset,
)
from .worker import EchoStubWorker, HttpWorkerClient

log = logging.getLogger("sqlperturb")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_WORKER = 4

TYPE_GROUPS = {
    "all": list(ALL_TYPES),
    "all-db": list(DB_TYPES),
    "all-nlq": list(NLQ_TYPES),
    "all-sql": list(SQL_TYPES),
}


def _expand_types(requested: str) -> list[str]:
    if requested in TYPE_GROUPS:
        return TYPE_GROUPS[requested]
    if requested in ALL_TYPES:
        return [requested]
    raise DataError(f"unknown perturbation type {requested!r}")


def _indicator_lexicon(args):
    if args.indicator_dir is None:
        return load_lexicon()
    base = Path(args.indicator_dir)
    return load_lexicon(
        keyword_file=base / "keyword_indicators.json",
        comparison_file=base / "comparison_pairs.json",
        sort_file=base / "sort_pairs.json",
        sort_limit_file=base / "sort_limit_pairs.json",
    )


def _make_worker(args):
    if args.worker_url:
        client = HttpWorkerClient(args.worker_url)
        health = client.health()  # raises WorkerError when unreachable
        log.info("worker backend: %s", health.get("backend", "unknown"))
        return client
    log.warning("no --worker-url given; using the in-process echo stub")
    return EchoStubWorker()


def cmd_perturb(args) -> int:
    types = _expand_types(args.type)
    corpus = load_corpus(args.data)
    policy = SamplingPolicy(repeats=args.repeats, seed=args.seed)
    out_root = Path(args.out)

    db_types = [t for t in types if t in DB_TYPES]
    sql_types = [t for t in types if t in SQL_TYPES]
    nlq_types = [t for t in types if t in NLQ_TYPES]

    rename_lexicon = None
    if any(t in ("schema-synonym", "schema-abbreviation") for t in db_types):
        if not args.lexicon:
            raise DataError("--lexicon is required for schema rename perturbations")
        rename_lexicon = load_rename_lexicon(args.lexicon)
    transform_lexicon = None
    if "dbcontent-equivalence" in db_types:
        if not args.transforms:
            raise DataError("--transforms is required for dbcontent-equivalence")
        transform_lexicon = load_transform_lexicon(args.transforms)

    for ptype in db_types:
        if ptype == "dbcontent-equivalence":
            ts = perturb_dbcontent(
                corpus.examples, corpus.databases, transform_lexicon, policy,
                source_digest=corpus.digest,
            )
        else:
            ts = perturb_schema(
                corpus.examples, corpus.databases, rename_lexicon, policy, ptype,
                source_digest=corpus.digest,
            )
        path = write_testset(ts, out_root / ptype)
        log.info("%s: %d pairs -> %s", ptype, len(ts.pairs), path)

    if sql_types:
        indicator_lexicon = _indicator_lexicon(args)
        for ptype in sql_types:
            ts = generate_sql_testset(
                corpus.examples, corpus.databases, indicator_lexicon, policy, ptype,
                strict_denotation_filter=args.strict_denotation_filter,
                source_digest=corpus.digest,
            )
            path = write_testset(ts, out_root / ptype)
            log.info("%s: %d pairs -> %s", ptype, len(ts.pairs), path)

    if nlq_types:
        worker = _make_worker(args)
        categories = load_categories(args.prompts)
        runnable = {n: categories[n] for n in nlq_types if categories[n].exemplars}
        skipped = [n for n in nlq_types if n not in runnable]
        if skipped:
            log.warning("skipping categories without prompt exemplars: %s", skipped)
        if not runnable:
            raise DataError("no requested NLQ category has prompt exemplars")
        alignments = None
        if args.alignments:
            with open(args.alignments, encoding="utf-8") as fh:
                alignments = {int(k): v for k, v in json.load(fh).items()}
        cfg = GenerationConfig(keep_cap=args.keep_cap)
        testsets, traces = assemble_nlq_testset(
            corpus.examples, corpus.databases, runnable, cfg, worker,
            _indicator_lexicon(args), alignments,
            seed=args.seed, source_digest=corpus.digest,
        )
        for name, ts in sorted(testsets.items()):
            path = write_testset(ts, out_root / name)
            log.info("%s: %d pairs -> %s", name, len(ts.pairs), path)
        out_root.mkdir(parents=True, exist_ok=True)
        write_review_export(traces, out_root / "review_export.jsonl")
    return 0


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.data)
    testset_dir = Path(args.testset)
    ts = read_testset(testset_dir)
    if ts.source_digest and ts.source_digest != corpus.digest:
        if not args.allow_digest_mismatch:
            raise DataError(
                "test set was generated from a different corpus "
                f"(digest {ts.source_digest[:12]}.. != {corpus.digest[:12]}..); "
                "pass --allow-digest-mismatch to override"
            )
        log.warning("corpus digest mismatch overridden")
    resolve_databases(ts, testset_dir, corpus.databases)
    preds_pre = load_predictions(args.pred_pre, "pre")
    preds_post = load_predictions(args.pred_post, "post")
    metrics = ["em", "ex"] if args.metric == "both" else [args.metric]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for metric in metrics:
        result = score_testset(
            ts, preds_pre, preds_post, metric, corpus.databases, ts.databases,
            jobs=args.jobs,
        )
        report = macro_report([result])
        (out_dir / f"report-{metric}.json").write_text(
            report_to_json(report), encoding="utf-8"
        )
        (out_dir / f"report-{metric}.csv").write_text(
            report_to_csv(report, xy=args.xy), encoding="utf-8"
        )
        log.info(
            "%s %s: pre %s post %s relative %s",
            ts.perturbation, metric,
            f"{result.pre_acc:.3f}", f"{result.post_acc:.3f}",
            "null" if result.relative is None else f"{result.relative:.3f}",
        )
    return 0


def cmd_report(args) -> int:
    rows: list[SetResult] = []
    metrics = set()
    versions = set()
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        metrics.add(payload["metric"])
        if "toolkit_version" in payload:
            versions.add(payload["toolkit_version"])
        for obj in payload["sets"]:
            rows.append(
                SetResult(
                    name=obj["name"],
                    family=obj["family"],
                    metric=payload["metric"],
                    n=obj["n"],
                    pre_correct=obj["pre_correct"],
                    post_correct=obj["post_correct"],
                    both_correct=obj["both_correct"],
                )
            )
    if len(metrics) > 1:
        raise DataError(f"refusing to merge reports with mixed metrics: {sorted(metrics)}")
    if len(versions) > 1:
        log.warning("input reports come from different toolkit versions: %s", sorted(versions))
    report = macro_report(rows)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "merged-report.json").write_text(report_to_json(report), encoding="utf-8")
    (out_dir / "merged-report.csv").write_text(
        report_to_csv(report, xy=args.xy), encoding="utf-8"
    )
    print(report_to_csv(report, xy=args.xy), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlperturb",
        description="Generate perturbation test sets and evaluate text-to-SQL robustness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="generate perturbation test sets")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--type", required=True,
                   help="perturbation type, or all / all-db / all-nlq / all-sql")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--keep-cap", type=int, default=5)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--lexicon", help="rename lexicon JSON (schema perturbations)")
    p.add_argument("--transforms", help="content transform JSON (dbcontent-equivalence)")
    p.add_argument("--indicator-dir", help="directory overriding the shipped indicator lexicon")
    p.add_argument("--prompts", help="paraphrase prompt data file (NLQ perturbations)")
    p.add_argument("--alignments", help="column/value alignment annotations JSON")
    p.add_argument("--worker-url", help="model worker base URL")
    p.add_argument("--strict-denotation-filter", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="drop SQL pairs whose pre/post gold denotations are equal")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("evaluate", help="score predictions against one test set")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--testset", required=True, help="test set directory or testset.json")
    p.add_argument("--pred-pre", required=True, help="pre-perturbation predictions, one per line")
    p.add_argument("--pred-post", required=True, help="post-perturbation predictions")
    p.add_argument("--metric", choices=["em", "ex", "both"], default="ex")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--xy", action="store_true", help="render pre|post in one CSV column")
    p.add_argument("--allow-digest-mismatch", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge per-set reports into a macro report")
    p.add_argument("inputs", nargs="+", help="report-*.json files from evaluate")
    p.add_argument("--out", required=True)
    p.add_argument("--xy", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except WorkerError as exc:
        log.error("worker unreachable: %s", exc)
        _write_error_record(args, "worker", exc)
        return EXIT_WORKER
    except (DataError, SqlPerturbError, OSError) as exc:
        log.error("%s", exc)
        _write_error_record(args, "data", exc)
        return EXIT_DATA


def _write_error_record(args, kind: str, exc: Exception) -> None:
    out = getattr(args, "out", None)
    if not out:
        return
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        record = {"error": kind, "message": str(exc), "command": args.command}
        (Path(out) / "error.json").write_text(
            json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
