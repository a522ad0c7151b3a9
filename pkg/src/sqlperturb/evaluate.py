"""Scoring: exact-set-match, execution accuracy, and robustness reports.

Per-set accuracies are fractions in [0, 1]; rounding to one decimal
happens only at render time, matching the usual reporting style where
``x|y`` shows pre- and post-perturbation accuracy side by side.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, SqlPerturbError
from .schema import Schema
from .sqlast import decompose, parse_sql
from .store import Database, denotations_equal
from .testset import TestSet

FAMILIES = ("db", "nlq", "sql")


@dataclass(frozen=True)
class PredictionSet:
    side: str  # "pre" | "post"
    sqls: tuple[str, ...]

    def __post_init__(self):
        if self.side not in ("pre", "post"):
            raise DataError(f"prediction side must be pre or post, got {self.side!r}")


def load_predictions(path, side: str) -> PredictionSet:
    """One SQL per line, index-aligned with the test set; blank line = empty."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    return PredictionSet(side=side, sqls=tuple(lines))


def em_match(pred: str, gold: str, schema: Schema) -> bool:
    """Clause-wise set equality with literal values masked; unparseable pred is False."""
    gold_sets = decompose(parse_sql(gold, schema))
    try:
        pred_sets = decompose(parse_sql(pred, schema))
    except SqlPerturbError:
        return False
    return pred_sets == gold_sets


def ex_match(pred: str, gold: str, db: Database) -> bool:
    """Denotation equality; a pred that fails to parse or execute is False."""
    gold_denotation = db.execute(parse_sql(gold, db.schema))  # gold failures surface
    try:
        pred_denotation = db.execute(parse_sql(pred, db.schema))
    except SqlPerturbError:
        return False
    return denotations_equal(gold_denotation, pred_denotation)


@dataclass(frozen=True)
class SetResult:
    name: str
    family: str
    metric: str
    n: int
    pre_correct: int
    post_correct: int
    both_correct: int

    def __post_init__(self):
        if not 0 <= self.both_correct <= min(self.pre_correct, self.post_correct):
            raise DataError("both_correct exceeds pre_correct or post_correct")
        if max(self.pre_correct, self.post_correct) > self.n:
            raise DataError("correct counts exceed N")

    @property
    def pre_acc(self) -> float:
        return self.pre_correct / self.n if self.n else 0.0

    @property
    def post_acc(self) -> float:
        return self.post_correct / self.n if self.n else 0.0

    @property
    def relative(self) -> float | None:
        """Share of pre-correct examples still correct after perturbation."""
        if self.pre_correct == 0:
            return None
        return self.both_correct / self.pre_correct


def score_testset(
    ts: TestSet,
    preds_pre: PredictionSet,
    preds_post: PredictionSet,
    metric: str,
    dbs_pre: dict[str, Database],
    dbs_post: dict[str, Database] | None = None,
    jobs: int = 1,
) -> SetResult:
    if metric not in ("em", "ex"):
        raise DataError(f"metric must be em or ex, got {metric!r}")
    if len(preds_pre.sqls) != len(ts.pairs) or len(preds_post.sqls) != len(ts.pairs):
        raise DataError(
            f"prediction length mismatch: test set has {len(ts.pairs)} pairs, "
            f"got {len(preds_pre.sqls)} pre / {len(preds_post.sqls)} post"
        )
    if dbs_post is None:
        dbs_post = {}

    def score_one(index: int) -> tuple[bool, bool]:
        pair = ts.pairs[index]
        db_pre = dbs_pre[pair.db_id_pre]
        db_post = (
            dbs_post.get(pair.db_id_post)
            or ts.databases.get(pair.db_id_post)
            or dbs_pre.get(pair.db_id_post)
        )
        if db_post is None:
            raise DataError(f"cannot resolve post database {pair.db_id_post!r}")
        if metric == "em":
            return (
                em_match(preds_pre.sqls[index], pair.sql_pre, db_pre.schema),
                em_match(preds_post.sqls[index], pair.sql_post, db_post.schema),
            )
        return (
            ex_match(preds_pre.sqls[index], pair.sql_pre, db_pre),
            ex_match(preds_post.sqls[index], pair.sql_post, db_post),
        )

    if jobs > 1 and len(ts.pairs) > 1:
        # Each worker thread opens its own in-memory store handle.
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(score_one, range(len(ts.pairs))))
    else:
        outcomes = [score_one(i) for i in range(len(ts.pairs))]
    pre_correct = sum(1 for ok_pre, _ in outcomes if ok_pre)
    post_correct = sum(1 for _, ok_post in outcomes if ok_post)
    both_correct = sum(1 for ok_pre, ok_post in outcomes if ok_pre and ok_post)
    return SetResult(
        name=ts.perturbation,
        family=ts.family,
        metric=metric,
        n=len(ts.pairs),
        pre_correct=pre_correct,
        post_correct=post_correct,
        both_correct=both_correct,
    )


# --------------------------------------------------------------------------
# Macro-averaged report


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _summarize(rows: list[SetResult]) -> dict:
    relatives = [r.relative for r in rows if r.relative is not None]
    return {
        "sets": len(rows),
        "pre_acc": _mean([r.pre_acc for r in rows]),
        "post_acc": _mean([r.post_acc for r in rows]),
        "relative": _mean(relatives),
        "relative_excluded": sum(1 for r in rows if r.relative is None),
    }


@dataclass
class RobustnessReport:
    metric: str
    sets: list[SetResult]
    families: dict = field(default_factory=dict)
    overall_sets: dict = field(default_factory=dict)
    overall_families: dict = field(default_factory=dict)


def macro_report(rows: list[SetResult]) -> RobustnessReport:
    """Unweighted means per family and overall.

    The overall row is the mean over all sets (not the mean of family
    means); the family-mean variant is also reported for comparison.
    """
    if not rows:
        raise DataError("macro_report needs at least one set result")
    metrics = {r.metric for r in rows}
    if len(metrics) != 1:
        raise DataError(f"cannot mix metrics in one report: {sorted(metrics)}")
    report = RobustnessReport(metric=rows[0].metric, sets=list(rows))
    for family in FAMILIES:
        family_rows = [r for r in rows if r.family == family]
        if family_rows:
            report.families[family] = _summarize(family_rows)
    report.overall_sets = _summarize(rows)
    family_summaries = list(report.families.values())
    report.overall_families = {
        "families": len(family_summaries),
        "pre_acc": _mean([s["pre_acc"] for s in family_summaries]),
        "post_acc": _mean([s["post_acc"] for s in family_summaries]),
        "relative": _mean([s["relative"] for s in family_summaries if s["relative"] is not None]),
    }
    return report


def render_pct(value: float | None) -> str:
    """One-decimal percent rendering used by the CSV output."""
    if value is None:
        return "null"
    return f"{value * 100:.1f}"


def report_to_json(report: RobustnessReport) -> str:
    from . import __version__

    payload = {
        "toolkit_version": __version__,
        "metric": report.metric,
        "sets": [
            {
                "name": r.name,
                "family": r.family,
                "n": r.n,
                "pre_correct": r.pre_correct,
                "post_correct": r.post_correct,
                "both_correct": r.both_correct,
                "pre_acc": r.pre_acc,
                "post_acc": r.post_acc,
                "relative": r.relative,
            }
            for r in report.sets
        ],
        "families": report.families,
        "overall_sets": report.overall_sets,
        "overall_families": report.overall_families,
        "overall_convention": "overall_sets is the headline mean over all sets",
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: RobustnessReport, xy: bool = False) -> str:
    """One-decimal table; with xy=True pre/post render as a single 'x|y' column."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if xy:
        writer.writerow(["section", "name", "n", "pre|post", "relative"])
    else:
        writer.writerow(["section", "name", "n", "pre", "post", "relative"])

    def row(section, name, n, pre, post, relative):
        if xy:
            writer.writerow(
                [section, name, n, f"{render_pct(pre)}|{render_pct(post)}", render_pct(relative)]
            )
        else:
            writer.writerow(
                [section, name, n, render_pct(pre), render_pct(post), render_pct(relative)]
            )

    for result in report.sets:
        row(result.family, result.name, result.n, result.pre_acc, result.post_acc,
            result.relative)
    for family, summary in report.families.items():
        row(family, "Average", summary["sets"], summary["pre_acc"], summary["post_acc"],
            summary["relative"])
    row("all", "All", report.overall_sets["sets"], report.overall_sets["pre_acc"],
        report.overall_sets["post_acc"], report.overall_sets["relative"])
    return out.getvalue()
