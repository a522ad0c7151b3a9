"""Categorized question paraphrasing: tagging, prompting, generation, filtering.

The pipeline over-generates paraphrase candidates from a language-model
worker, then filters: dedupe, bidirectional NLI factuality, and a
rule-based out-of-category check over indicator spans. Kept paraphrases
are flagged ``needs_review`` as the hand-off to human review.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources

from .corpus import Example
from .errors import DataError, SqlPerturbError
from .lexicon import IndicatorLexicon, find_phrase_occurrences, find_phrase_spans
from .perturb_db import collect_refs
from .sampling import derive_rng
from .schema import Schema
from .sqlast import ColUnit, Predicates, SqlAst, find_literals, parse_sql, print_sql
from .store import Database
from .testset import NLQ_TYPES, PerturbedPair, TestSet, dedupe_pairs
from .worker import WorkerProtocol

log = logging.getLogger(__name__)

NLI_THRESHOLD = 0.5


@dataclass(frozen=True)
class PromptExemplar:
    sentence: str
    mentioned: str
    paraphrase: str
    explanation: str


@dataclass(frozen=True)
class ParaphraseCategory:
    name: str
    instruction: str
    mentioned_label: str
    exemplars: tuple[PromptExemplar, ...]

    def __post_init__(self):
        if self.name not in NLQ_TYPES:
            raise DataError(f"unknown paraphrase category {self.name!r}")


def load_categories(path=None) -> dict[str, ParaphraseCategory]:
    """Load the 9-category prompt data file (shipped file by default)."""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        ref = resources.files("sqlperturb.data").joinpath("paraphrase_prompts.json")
        raw = json.loads(ref.read_text(encoding="utf-8"))
    categories = {}
    for obj in raw["categories"]:
        categories[obj["name"]] = ParaphraseCategory(
            name=obj["name"],
            instruction=obj["instruction"],
            mentioned_label=obj.get("mentioned_label", "Mentioned SQL tokens"),
            exemplars=tuple(
                PromptExemplar(e["sentence"], e["mentioned"], e["paraphrase"], e["explanation"])
                for e in obj["exemplars"]
            ),
        )
    missing = set(NLQ_TYPES) - set(categories)
    if missing:
        raise DataError(f"prompt file missing categories: {sorted(missing)}")
    return categories


@dataclass(frozen=True)
class GenerationConfig:
    runs: tuple[tuple[float, float], ...] = ((0.9, 0.7), (0.9, 1.0), (1.0, 0.7), (1.0, 1.0))
    completions_per_run: int = 5
    overgeneration_target: int = 20
    keep_cap: int = 5
    max_new_tokens: int = 64

    def __post_init__(self):
        if len(self.runs) * self.completions_per_run < self.overgeneration_target:
            raise DataError("runs x completions must cover the overgeneration target")


# --------------------------------------------------------------------------
# Indicator tagging


@dataclass(frozen=True)
class IndicatorTag:
    start: int
    end: int
    text: str
    label: str  # "keyword" | "column" | "value"
    detail: str


@dataclass(frozen=True)
class IndicatorTagging:
    tags: tuple[IndicatorTag, ...]

    def by_label(self, label: str) -> tuple[IndicatorTag, ...]:
        return tuple(t for t in self.tags if t.label == label)

    @property
    def strings(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tags)


_AGG_KEYWORD = {"count": "count()", "sum": "sum()", "avg": "avg()", "max": "max()", "min": "min()"}

# When one phrase indicates several present keywords, the earlier key wins.
_KEYWORD_PRIORITY = (
    ">", "<", ">=", "<=", "between and",
    "ASC LIMIT", "DESC LIMIT", "ASC", "DESC",
    "count()", "sum()", "avg()", "max()", "min()",
)


def sql_keywords_of(ast: SqlAst) -> set[str]:
    """Indicator-lexicon keys for the keywords this query uses."""
    keywords: set[str] = set()

    def visit_val(val):
        for col in (val.a, val.b):
            if col is not None and col.agg:
                keywords.add(_AGG_KEYWORD[col.agg])

    def visit_preds(preds: Predicates):
        for cmp in preds.items:
            if cmp.op in (">", "<", ">=", "<="):
                keywords.add(cmp.op)
            if cmp.op == "between":
                keywords.add("between and")
            visit_val(cmp.left)
            for value in (cmp.right, cmp.right2):
                if isinstance(value, SqlAst):
                    visit(value)
                elif isinstance(value, ColUnit) and value.agg:
                    keywords.add(_AGG_KEYWORD[value.agg])

    def visit(node: SqlAst):
        for item in node.select:
            if item.agg:
                keywords.add(_AGG_KEYWORD[item.agg])
            visit_val(item.val)
        visit_preds(node.where)
        for col in node.group_by:
            if col.agg:
                keywords.add(_AGG_KEYWORD[col.agg])
        visit_preds(node.having)
        for item in node.order_by:
            visit_val(item.val)
        if node.order_by:
            direction = "DESC" if node.order_by[0].desc else "ASC"
            keywords.add(f"{direction} LIMIT" if node.limit is not None else direction)
        if node.setop:
            visit(node.setop[1])

    visit(ast)
    return keywords


def tag_indicators(
    ex: Example,
    lex: IndicatorLexicon,
    schema: Schema,
    alignment: list[dict] | None = None,
) -> IndicatorTagging:
    """Label keyword indicators by longest match; copy column/value tags if given."""
    ast = parse_sql(ex.query, schema)
    present = sql_keywords_of(ast)
    phrase_map: dict[str, str] = {}
    for keyword in _KEYWORD_PRIORITY:
        if keyword not in present:
            continue
        for phrase in lex.keyword_phrases.get(keyword, ()):
            phrase_map.setdefault(phrase, keyword)
    tags = [
        IndicatorTag(s.start, s.end, ex.question[s.start:s.end], "keyword", s.tag)
        for s in find_phrase_spans(ex.question, phrase_map)
    ]
    for entry in alignment or ():
        label = entry["label"]
        if label not in ("column", "value"):
            raise DataError(f"alignment label must be column or value, got {label!r}")
        start, end = int(entry["start"]), int(entry["end"])
        tags.append(
            IndicatorTag(start, end, ex.question[start:end], label, str(entry.get("detail", "")))
        )
    return IndicatorTagging(tuple(sorted(tags, key=lambda t: (t.label, t.start))))


# --------------------------------------------------------------------------
# Prompt assembly


def build_prompt(cat: ParaphraseCategory, ex: Example, mentioned: str) -> str:
    if not cat.exemplars:
        raise DataError(f"category {cat.name!r} has no prompt exemplars")
    lines = [cat.instruction]
    for i, e in enumerate(cat.exemplars):
        lines.append(
            f"({i}) Sentence: {e.sentence} {cat.mentioned_label}: {e.mentioned} "
            f"Paraphrase: {e.paraphrase} Explanation: {e.explanation}"
        )
    lines.append(f"(5) Sentence: {ex.question} {cat.mentioned_label}: {mentioned} Paraphrase:")
    return "\n".join(lines)


def mentioned_tokens_for(cat: ParaphraseCategory, ex: Example, db: Database) -> str:
    """The SQL tokens whose indicators the category asks to rephrase or imply."""
    ast = parse_sql(ex.query, db.schema)
    if cat.name == "others":
        return ""
    if cat.name in ("keyword-synonym", "keyword-carrier"):
        return ", ".join(sorted(sql_keywords_of(ast)))
    if cat.name in ("column-synonym", "column-carrier", "column-attribute"):
        return ", ".join(sorted({column for _, column in collect_refs(ast)}))
    if cat.name in ("column-value", "value-synonym"):
        bits = []
        for site in find_literals(ast):
            if site.column is not None:
                bits.append(f"{site.value} is a {site.column}")
        return "; ".join(bits) + ("." if bits else "")
    if cat.name == "multitype":
        keywords = ", ".join(sorted(sql_keywords_of(ast)))
        columns = ", ".join(sorted({column for _, column in collect_refs(ast)}))
        return "; ".join(bit for bit in (keywords, columns) if bit)
    raise DataError(f"unknown category {cat.name!r}")


# --------------------------------------------------------------------------
# Generation and filtering


_EXPLANATION_RE = re.compile(r"explanation\s*:", re.IGNORECASE)


def _truncate_completion(completion: str) -> str:
    text = completion
    match = _EXPLANATION_RE.search(text)
    if match:
        text = text[: match.start()]
    blank = re.search(r"\n\s*\n", text)
    if blank:
        text = text[: blank.start()]
    return text.strip()


def generate_candidates(
    ex: Example,
    cat: ParaphraseCategory,
    cfg: GenerationConfig,
    worker: WorkerProtocol,
    mentioned: str = "",
    source_id: int = 0,
    seed: int = 0,
) -> list[str]:
    prompt = build_prompt(cat, ex, mentioned)
    candidates: list[str] = []
    for run_index, (top_p, temperature) in enumerate(cfg.runs):
        run_seed = derive_rng(seed, cat.name, str(source_id), str(run_index)).randrange(2**31)
        completions = worker.generate(
            prompt,
            top_p=top_p,
            temperature=temperature,
            n=cfg.completions_per_run,
            max_new_tokens=cfg.max_new_tokens,
            seed=run_seed,
        )
        for raw in completions:
            log.debug("raw completion (%s, run %d): %r", cat.name, run_index, raw)
            text = _truncate_completion(raw)
            if text:
                candidates.append(text)
    return candidates[: cfg.overgeneration_target]


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _survives(indicator: str, candidate: str) -> bool:
    return bool(find_phrase_occurrences(candidate, indicator.lower()))


def filter_candidates(
    ex: Example,
    cat: ParaphraseCategory,
    candidates: list[str],
    tagging: IndicatorTagging,
    worker: WorkerProtocol,
    keep_cap: int = 5,
) -> tuple[list[str], list[dict]]:
    """Dedupe -> NLI factuality -> category rule -> keep cap.

    The category rule discards a candidate when every tagged indicator
    string of the original survives verbatim, except for category
    ``others``; ``multitype`` asks for at least two altered indicators.
    """
    kept: list[str] = []
    trace: list[dict] = []
    seen = {_normalize(ex.question)}
    for candidate in candidates:
        entry = {"category": cat.name, "original": ex.question, "candidate": candidate}
        norm = _normalize(candidate)
        if norm in seen:
            entry["stage"] = "duplicate"
            trace.append(entry)
            continue
        seen.add(norm)
        forward = worker.nli(ex.question, candidate).entailment
        backward = worker.nli(candidate, ex.question).entailment
        entry["nli"] = {"forward": forward, "backward": backward}
        if forward < NLI_THRESHOLD or backward < NLI_THRESHOLD:
            entry["stage"] = "nonfactual"
            trace.append(entry)
            continue
        altered = sum(1 for text in tagging.strings if not _survives(text, candidate))
        entry["altered_indicators"] = altered
        required = {"others": 0, "multitype": 2}.get(cat.name, 1)
        if altered < required:
            entry["stage"] = "out-of-category"
            trace.append(entry)
            continue
        if len(kept) >= keep_cap:
            entry["stage"] = "over-cap"
            trace.append(entry)
            continue
        entry["stage"] = "kept"
        trace.append(entry)
        kept.append(candidate)
    return kept, trace


# --------------------------------------------------------------------------
# Test-set assembly


def assemble_nlq_testset(
    corpus: list[Example],
    dbs: dict[str, Database],
    categories: dict[str, ParaphraseCategory],
    cfg: GenerationConfig,
    worker: WorkerProtocol,
    lex: IndicatorLexicon,
    alignments: dict[int, list[dict]] | None = None,
    seed: int = 0,
    source_digest: str = "",
) -> tuple[dict[str, TestSet], list[dict]]:
    """One test set per category; SQL and database stay byte-identical."""
    testsets: dict[str, TestSet] = {}
    all_traces: list[dict] = []
    for name in sorted(categories):
        cat = categories[name]
        if not cat.exemplars:
            log.warning("category %s has no prompt exemplars; skipping", name)
            continue
        pairs: list[PerturbedPair] = []
        for source_id, ex in enumerate(corpus):
            db = dbs.get(ex.db_id)
            if db is None:
                raise DataError(f"no database for db_id {ex.db_id!r}")
            try:
                sql_canonical = print_sql(parse_sql(ex.query, db.schema))
                mentioned = mentioned_tokens_for(cat, ex, db)
                tagging = tag_indicators(
                    ex, lex, db.schema, (alignments or {}).get(source_id)
                )
            except SqlPerturbError as exc:
                log.warning("skipping example %d for %s: %s", source_id, name, exc)
                continue
            candidates = generate_candidates(
                ex, cat, cfg, worker, mentioned=mentioned, source_id=source_id, seed=seed
            )
            kept, trace = filter_candidates(
                ex, cat, candidates, tagging, worker, keep_cap=cfg.keep_cap
            )
            for entry in trace:
                entry["source_id"] = source_id
            all_traces.extend(trace)
            for rank, candidate in enumerate(kept):
                pairs.append(
                    PerturbedPair(
                        id=f"{name}-{source_id:05d}-{rank}",
                        source_id=source_id,
                        db_id_pre=ex.db_id,
                        db_id_post=ex.db_id,
                        nlq_pre=ex.question,
                        nlq_post=candidate,
                        sql_pre=sql_canonical,
                        sql_post=sql_canonical,
                        provenance={"category": name, "candidate_rank": rank},
                        flags={"needs_review": True},
                    )
                )
        testsets[name] = TestSet(
            perturbation=name,
            seed=seed,
            source_digest=source_digest,
            pairs=dedupe_pairs(pairs),
        )
        testsets[name].check_unique()
    return testsets, all_traces


def write_review_export(traces: list[dict], path) -> None:
    """JSONL hand-off for human review of kept/dropped candidates."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in traces:
            fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
