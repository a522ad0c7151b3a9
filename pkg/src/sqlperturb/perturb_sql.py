"""Semantic-changing SQL perturbations with minimally edited aligned questions.

Every generated pair replaces exactly one contiguous span of the question
and the matching token(s) of the SQL. Examples with zero or ambiguous
indicator matches are skipped, mirroring how the perturbations stay
disentangled from paraphrase-style question changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace as dc_replace

from . import numwords
from .corpus import Example
from .errors import DataError, SqlPerturbError
from .lexicon import IndicatorLexicon, find_phrase_occurrences, find_phrase_spans
from .sampling import SamplingPolicy, sample_distinct
from .sqlast import (
    Comparison,
    Predicates,
    SqlAst,
    find_literals,
    parse_sql,
    print_sql,
    replace_literal,
)
from .store import Database, denotations_equal
from .testset import PerturbedPair, TestSet, dedupe_pairs

log = logging.getLogger(__name__)

MAX_PAIRS_PER_EXAMPLE = 5
FLIP_OP = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}


@dataclass(frozen=True)
class NlqEdit:
    start: int
    end: int
    new_text: str


def _apply_edit(nlq: str, edit: NlqEdit) -> str:
    return nlq[:edit.start] + edit.new_text + nlq[edit.end:]


def _all_phrases(lex: IndicatorLexicon) -> set[str]:
    phrases: set[str] = set()
    for plist in lex.keyword_phrases.values():
        phrases.update(plist)
    for rows in (lex.comparison_rows, lex.sort_rows, lex.sort_limit_rows):
        for row in rows:
            for plist in row.values():
                phrases.update(plist)
    return phrases


def _span_map(lex: IndicatorLexicon, relevant: dict[str, str]) -> dict[str, str | None]:
    """Relevant phrases keep their tag; all other lexicon phrases block matches."""
    return {phrase: relevant.get(phrase) for phrase in _all_phrases(lex) | set(relevant)}


def _unique_tagged_span(nlq: str, lex: IndicatorLexicon, relevant: dict[str, str]):
    spans = [s for s in find_phrase_spans(nlq, _span_map(lex, relevant)) if s.tag is not None]
    if len(spans) != 1:
        return None
    return spans[0]


# --------------------------------------------------------------------------
# Comparison operator replacement


def _comparison_sites(ast: SqlAst, prefix: tuple = ()) -> list[tuple[tuple, Comparison]]:
    sites = []
    for clause in ("where", "having"):
        preds: Predicates = getattr(ast, clause)
        for i, cmp in enumerate(preds.items):
            if cmp.op in FLIP_OP:
                sites.append((prefix + (clause, i), cmp))
            for slot in ("right", "right2"):
                value = getattr(cmp, slot)
                if isinstance(value, SqlAst):
                    sites.extend(_comparison_sites(value, prefix + (clause, i, slot)))
    if ast.setop is not None:
        sites.extend(_comparison_sites(ast.setop[1], prefix + ("setop",)))
    return sites


def _replace_comparison_op(ast: SqlAst, path: tuple, new_op: str) -> SqlAst:
    if path[0] == "setop":
        op, rhs = ast.setop
        return dc_replace(ast, setop=(op, _replace_comparison_op(rhs, path[1:], new_op)))
    clause, index = path[0], path[1]
    preds: Predicates = getattr(ast, clause)
    cmp = preds.items[index]
    if len(path) > 2:
        slot = path[2]
        sub = _replace_comparison_op(getattr(cmp, slot), path[3:], new_op)
        new_cmp = dc_replace(cmp, **{slot: sub})
    else:
        new_cmp = dc_replace(cmp, op=new_op)
    items = tuple(new_cmp if i == index else c for i, c in enumerate(preds.items))
    return dc_replace(ast, **{clause: Predicates(items, preds.connectors)})


def perturb_comparison(
    ex: Example, db: Database, lex: IndicatorLexicon, policy: SamplingPolicy,
    source_id: int = 0,
) -> list[PerturbedPair]:
    ast = parse_sql(ex.query, db.schema)
    sites = _comparison_sites(ast)
    by_op: dict[str, list] = {}
    for path, cmp in sites:
        by_op.setdefault(cmp.op, []).append(path)
    candidates = []
    for op, paths in sorted(by_op.items()):
        if len(paths) != 1:
            continue  # two sites share an indicator: ambiguous alignment
        relevant = {phrase: op for phrase in lex.comparison_phrases(op)}
        span = _unique_tagged_span(ex.question, lex, relevant)
        if span is None:
            continue
        for target_op, target_phrase in sorted(
            lex.comparison_candidates(op, span.phrase).items()
        ):
            candidates.append((paths[0], op, span, target_op, target_phrase))
    rng = policy.rng("comparison", str(source_id))
    pairs = []
    for path, op, span, target_op, target_phrase in candidates:
        post_ast = _replace_comparison_op(ast, path, target_op)
        replacement = numwords.match_case(ex.question[span.start:span.end], target_phrase)
        edit = NlqEdit(span.start, span.end, replacement)
        pairs.append(
            _build_pair(
                "comparison", source_id, ex, db, ast, post_ast, edit,
                provenance={
                    "op_pre": op,
                    "op_post": target_op,
                    "phrase_pre": span.phrase,
                    "phrase_post": target_phrase,
                },
            )
        )
    return _cap(pairs, rng)


# --------------------------------------------------------------------------
# Sort order


def _order_block(ast: SqlAst) -> SqlAst:
    if ast.order_by:
        return ast
    if ast.setop is not None:
        return _order_block(ast.setop[1])
    return ast


def _flip_order(ast: SqlAst) -> SqlAst:
    if ast.order_by:
        flipped = tuple(dc_replace(o, desc=not o.desc) for o in ast.order_by)
        return dc_replace(ast, order_by=flipped)
    if ast.setop is not None:
        op, rhs = ast.setop
        return dc_replace(ast, setop=(op, _flip_order(rhs)))
    return ast


def perturb_sort_order(
    ex: Example, db: Database, lex: IndicatorLexicon, policy: SamplingPolicy,
    source_id: int = 0,
) -> list[PerturbedPair]:
    ast = parse_sql(ex.query, db.schema)
    block = _order_block(ast)
    if not block.order_by:
        return []
    with_limit = block.limit is not None
    direction = "DESC" if block.order_by[0].desc else "ASC"
    key = f"{direction} LIMIT" if with_limit else direction
    relevant = {phrase: key for phrase in lex.sort_phrases(key, with_limit)}
    span = _unique_tagged_span(ex.question, lex, relevant)
    if span is None:
        return []
    counterpart = lex.sort_counterpart(span.phrase, with_limit)
    if counterpart is None:
        return []
    _, target_phrase = counterpart
    post_ast = _flip_order(ast)
    replacement = numwords.match_case(ex.question[span.start:span.end], target_phrase)
    edit = NlqEdit(span.start, span.end, replacement)
    pair = _build_pair(
        "sort-order", source_id, ex, db, ast, post_ast, edit,
        provenance={
            "direction_pre": direction,
            "direction_post": "ASC" if direction == "DESC" else "DESC",
            "phrase_pre": span.phrase,
            "phrase_post": target_phrase,
            "with_limit": with_limit,
        },
    )
    return [pair]


# --------------------------------------------------------------------------
# Number replacements


def _number_pairs(
    ex: Example, db: Database, policy: SamplingPolicy, source_id: int,
    ptype: str, want_db_number: bool,
) -> list[PerturbedPair]:
    ast = parse_sql(ex.query, db.schema)
    sites = []
    for site in find_literals(ast):
        if site.kind != "number" or not isinstance(site.value, int):
            continue
        if want_db_number:
            if site.non_db:
                continue
            if db.schema.column(site.table, site.column).type != "number":
                continue
        elif not site.non_db:
            continue
        sites.append(site)
    values = [s.value for s in sites]
    rng = policy.rng(ptype, str(source_id))
    pairs = []
    for site in sites:
        n = site.value
        if n in (0, 1):
            continue  # usually carried by non-number tokens in the question
        if values.count(n) > 1:
            continue  # two SQL sites share one mention: ambiguous
        mentions = numwords.find_number_mentions(ex.question, n)
        if len(mentions) != 1:
            continue
        mention = mentions[0]
        low = max(2, n - 10) if not want_db_number else n - 10
        candidates = [v for v in range(low, n + 11) if v != n]
        for new_value in sample_distinct(rng, candidates, MAX_PAIRS_PER_EXAMPLE):
            try:
                rendered = numwords.render(mention.kind, new_value)
            except ValueError:
                continue  # no same-surface rendering (word > one hundred, negative)
            original = ex.question[mention.start:mention.end]
            replacement = numwords.match_case(original, rendered)
            post_ast = replace_literal(ast, site.path, new_value)
            edit = NlqEdit(mention.start, mention.end, replacement)
            pairs.append(
                _build_pair(
                    ptype, source_id, ex, db, ast, post_ast, edit,
                    provenance={
                        "value_pre": n,
                        "value_post": new_value,
                        "surface": mention.kind,
                        "clause": site.clause,
                        "column": site.column,
                    },
                )
            )
    return _cap(pairs, rng)


def perturb_nondb_number(ex, db, policy, source_id=0) -> list[PerturbedPair]:
    return _number_pairs(ex, db, policy, source_id, "nondb-number", want_db_number=False)


def perturb_db_number(ex, db, policy, source_id=0) -> list[PerturbedPair]:
    return _number_pairs(ex, db, policy, source_id, "db-number", want_db_number=True)


# --------------------------------------------------------------------------
# DB content text


def perturb_db_text(
    ex: Example, db: Database, policy: SamplingPolicy, source_id: int = 0,
) -> list[PerturbedPair]:
    ast = parse_sql(ex.query, db.schema)
    rng = policy.rng("db-text", str(source_id))
    pairs = []
    sites = [
        s for s in find_literals(ast)
        if s.kind == "text" and not s.non_db
        and db.schema.column(s.table, s.column).type == "text"
    ]
    text_values = [s.value for s in sites]
    for site in sites:
        value = str(site.value)
        if text_values.count(site.value) > 1:
            continue
        occurrences = find_phrase_occurrences(ex.question, value)
        occurrences = [
            (s, e) for s, e in occurrences if ex.question[s:e] == value
        ]  # the mention must use the exact stored format
        if len(occurrences) != 1:
            continue
        start, end = occurrences[0]
        column_values = sorted(
            {str(v) for v in db.column_values(site.table, site.column) if v is not None}
        )
        alternatives = [v for v in column_values if v != value]
        if not alternatives:
            continue  # singleton column
        for new_value in sample_distinct(rng, alternatives, MAX_PAIRS_PER_EXAMPLE):
            post_ast = replace_literal(ast, site.path, new_value)
            edit = NlqEdit(start, end, new_value)
            pairs.append(
                _build_pair(
                    "db-text", source_id, ex, db, ast, post_ast, edit,
                    provenance={
                        "value_pre": value,
                        "value_post": new_value,
                        "column": f"{site.table}.{site.column}",
                    },
                )
            )
    return _cap(pairs, rng)


# --------------------------------------------------------------------------
# Shared assembly


def _cap(pairs: list[PerturbedPair], rng) -> list[PerturbedPair]:
    if len(pairs) <= MAX_PAIRS_PER_EXAMPLE:
        return pairs
    keep = sorted(rng.sample(range(len(pairs)), MAX_PAIRS_PER_EXAMPLE))
    return [pairs[i] for i in keep]


def _build_pair(
    ptype: str, source_id: int, ex: Example, db: Database,
    ast: SqlAst, post_ast: SqlAst, edit: NlqEdit, provenance: dict,
) -> PerturbedPair:
    nlq_post = _apply_edit(ex.question, edit)
    post_den = db.execute(post_ast)  # a failing gold query is a generator bug
    pre_den = db.execute(ast)
    provenance = dict(provenance)
    provenance["edit_span"] = [edit.start, edit.end]
    provenance["edit_text"] = edit.new_text
    return PerturbedPair(
        id="",  # assigned at test-set assembly
        source_id=source_id,
        db_id_pre=db.db_id,
        db_id_post=db.db_id,
        nlq_pre=ex.question,
        nlq_post=nlq_post,
        sql_pre=print_sql(ast),
        sql_post=print_sql(post_ast),
        provenance=provenance,
        flags={"denotation_equal": denotations_equal(pre_den, post_den)},
    )


_GENERATORS = {
    "comparison": lambda ex, db, lex, policy, sid: perturb_comparison(ex, db, lex, policy, sid),
    "sort-order": lambda ex, db, lex, policy, sid: perturb_sort_order(ex, db, lex, policy, sid),
    "nondb-number": lambda ex, db, lex, policy, sid: perturb_nondb_number(ex, db, policy, sid),
    "db-text": lambda ex, db, lex, policy, sid: perturb_db_text(ex, db, policy, sid),
    "db-number": lambda ex, db, lex, policy, sid: perturb_db_number(ex, db, policy, sid),
}


def generate_sql_testset(
    corpus: list[Example],
    dbs: dict[str, Database],
    lex: IndicatorLexicon,
    policy: SamplingPolicy,
    ptype: str,
    strict_denotation_filter: bool = True,
    source_digest: str = "",
) -> TestSet:
    """Run one SQL perturbation over a corpus and assemble the test set.

    With the strict filter on (the default profile), pairs whose post gold
    query returns the same denotation as the pre gold query are discarded;
    execution accuracy could never observe a model ignoring such an edit.
    """
    if ptype not in _GENERATORS:
        raise DataError(f"unknown SQL perturbation type {ptype!r}")
    generator = _GENERATORS[ptype]
    pairs: list[PerturbedPair] = []
    for source_id, ex in enumerate(corpus):
        db = dbs.get(ex.db_id)
        if db is None:
            raise DataError(f"no database for db_id {ex.db_id!r}")
        try:
            generated = generator(ex, db, lex, policy, source_id)
        except SqlPerturbError as exc:
            log.warning("skipping example %d: %s", source_id, exc)
            continue
        for k, pair in enumerate(generated):
            if strict_denotation_filter and pair.flags.get("denotation_equal"):
                continue
            pairs.append(dc_replace(pair, id=f"{ptype}-{source_id:05d}-{k}"))
    ts = TestSet(
        perturbation=ptype,
        seed=policy.seed,
        source_digest=source_digest,
        pairs=dedupe_pairs(pairs),
    )
    ts.check_unique()
    return ts
