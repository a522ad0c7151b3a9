"""Database perturbation generators: schema renames and content-equivalence.

Each sampled substitution set becomes one emitted database variant named
``<dbid>__<mode>__<k>``; examples whose gold SQL mentions no substituted
column are excluded from that sample's pairs. Queries whose rewrite would
need grammar outside the supported subset are dropped with a reason code.
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace as dc_replace

from .corpus import Example
from .errors import DataError, RenameCollisionError, SqlPerturbError, TransformError
from .sampling import SamplingPolicy, sample_nonempty_subset
from .sqlast import (
    ColUnit,
    ColumnRef,
    Comparison,
    Literal,
    OrderItem,
    Predicates,
    SelectItem,
    SqlAst,
    ValUnit,
    parse_sql,
    print_sql,
    rename_refs,
)
from .store import (
    ContentTransform,
    Database,
    apply_content_transform,
    apply_rename,
    transform_from_json,
    transform_to_json,
    with_id,
)
from .testset import PerturbedPair, TestSet, dedupe_pairs

log = logging.getLogger(__name__)

_MODE_TOKEN = {
    "schema-synonym": "synonym",
    "schema-abbreviation": "abbreviation",
    "dbcontent-equivalence": "content",
}

_MAX_REDRAWS = 32


class RewriteUnsupported(SqlPerturbError):
    """The gold SQL cannot be rewritten for a transform within the grammar."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SubstitutionLexicon:
    """Per-database map from (table, column) to candidate replacements."""

    def __init__(self, databases: dict[str, dict[tuple[str, str], list]]):
        self.databases = {
            db_id: {(t.lower(), c.lower()): list(cands) for (t, c), cands in entries.items()}
            for db_id, entries in databases.items()
        }

    def entries_for(self, db_id: str) -> dict[tuple[str, str], list]:
        return self.databases.get(db_id, {})

    def validate(self, dbs: dict[str, Database], transforms: bool) -> None:
        for db_id, entries in self.databases.items():
            if db_id not in dbs:
                raise DataError(f"lexicon names unknown database {db_id!r}")
            schema = dbs[db_id].schema
            for (table, column), candidates in entries.items():
                if not schema.has_column(table, column):
                    raise DataError(f"lexicon key {table}.{column} not in {db_id!r} schema")
                if not candidates:
                    raise DataError(f"empty candidate list for {table}.{column} in {db_id!r}")
                for cand in candidates:
                    if transforms:
                        if not isinstance(cand, ContentTransform):
                            raise DataError("transform lexicon must hold transform specs")
                    else:
                        if not isinstance(cand, str):
                            raise DataError("rename lexicon must hold name strings")
                        if schema.table(table).has_column(cand):
                            raise DataError(
                                f"candidate {cand!r} collides with an existing column "
                                f"of {table!r} in {db_id!r}"
                            )


def load_rename_lexicon(path) -> SubstitutionLexicon:
    """JSON layout: {db_id: {table: {column: [name, ...]}}}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    databases = {}
    for db_id, tables in raw.items():
        entries = {}
        for table, columns in tables.items():
            for column, names in columns.items():
                entries[(table, column)] = list(names)
        databases[db_id] = entries
    return SubstitutionLexicon(databases)


def load_transform_lexicon(path) -> SubstitutionLexicon:
    """JSON layout: {db_id: {table: {column: [transform spec, ...]}}}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    databases = {}
    for db_id, tables in raw.items():
        entries = {}
        for table, columns in tables.items():
            for column, specs in columns.items():
                parsed = []
                for spec in specs:
                    spec = dict(spec)
                    spec.setdefault("table", table)
                    spec.setdefault("source", column)
                    parsed.append(transform_from_json(spec))
                entries[(table, column)] = parsed
        databases[db_id] = entries
    return SubstitutionLexicon(databases)


def collect_refs(ast: SqlAst) -> set[tuple[str, str]]:
    """All (table, column) pairs referenced anywhere in the query, lowercased."""
    refs: set[tuple[str, str]] = set()

    def visit_ref(r: ColumnRef):
        if not r.is_star:
            refs.add((r.table.lower(), r.column.lower()))

    def visit_val(v: ValUnit):
        visit_ref(v.a.ref)
        if v.b is not None:
            visit_ref(v.b.ref)

    def visit_preds(p: Predicates):
        for cmp in p.items:
            visit_val(cmp.left)
            for value in (cmp.right, cmp.right2):
                if isinstance(value, SqlAst):
                    visit(value)
                elif isinstance(value, ColUnit):
                    visit_ref(value.ref)

    def visit(node: SqlAst):
        for item in node.select:
            visit_val(item.val)
        visit_preds(node.join_conds)
        visit_preds(node.where)
        for col in node.group_by:
            visit_ref(col.ref)
        visit_preds(node.having)
        for item in node.order_by:
            visit_val(item.val)
        if node.setop:
            visit(node.setop[1])

    visit(ast)
    return refs


# --------------------------------------------------------------------------
# Schema rename perturbations


def perturb_schema(
    corpus: list[Example],
    dbs: dict[str, Database],
    lexicon: SubstitutionLexicon,
    policy: SamplingPolicy,
    mode: str,
    source_digest: str = "",
) -> TestSet:
    if mode not in ("schema-synonym", "schema-abbreviation"):
        raise DataError(f"mode must be a schema rename type, got {mode!r}")
    lexicon.validate(dbs, transforms=False)
    token = _MODE_TOKEN[mode]
    pairs: list[PerturbedPair] = []
    databases: dict[str, Database] = {}

    for db_id in sorted(dbs):
        entries = lexicon.entries_for(db_id)
        if not entries:
            continue
        keys = sorted(entries)
        rng = policy.rng(mode, db_id)
        seen: set[tuple] = set()
        parsed = _parse_examples(corpus, db_id, dbs[db_id])
        variant_index = 0
        for _ in range(policy.repeats):
            mapping = _draw_rename_mapping(rng, keys, entries, dbs[db_id], seen)
            if mapping is None:
                continue
            variant_id = f"{db_id}__{token}__{variant_index}"
            variant_index += 1
            post_db = with_id(apply_rename(dbs[db_id], mapping), variant_id)
            databases[variant_id] = post_db
            for source_id, example, ast in parsed:
                touched = collect_refs(ast) & set(mapping)
                if not touched:
                    continue
                post_ast = rename_refs(ast, mapping)
                post_sql = print_sql(post_ast)
                post_db.execute(post_ast)  # a failing gold query is a generator bug
                pairs.append(
                    PerturbedPair(
                        id=f"{mode}-{source_id:05d}-{variant_id}",
                        source_id=source_id,
                        db_id_pre=db_id,
                        db_id_post=variant_id,
                        nlq_pre=example.question,
                        nlq_post=example.question,
                        sql_pre=print_sql(ast),
                        sql_post=post_sql,
                        provenance={
                            "substitutions": {
                                f"{t}.{c}": new for (t, c), new in sorted(mapping.items())
                            },
                        },
                    )
                )
    ts = TestSet(
        perturbation=mode,
        seed=policy.seed,
        source_digest=source_digest,
        pairs=dedupe_pairs(pairs),
        databases=databases,
    )
    ts.check_unique()
    return ts


def _parse_examples(corpus: list[Example], db_id: str, db: Database):
    parsed = []
    for source_id, example in enumerate(corpus):
        if example.db_id != db_id:
            continue
        try:
            ast = parse_sql(example.query, db.schema)
        except SqlPerturbError as exc:
            log.warning("skipping example %d (%s): %s", source_id, db_id, exc)
            continue
        parsed.append((source_id, example, ast))
    return parsed


def _draw_rename_mapping(rng, keys, entries, db, seen):
    for _ in range(_MAX_REDRAWS):
        subset = sample_nonempty_subset(rng, keys)
        mapping = {key: rng.choice(sorted(entries[key])) for key in subset}
        frozen = tuple(sorted(mapping.items()))
        if frozen in seen:
            continue
        try:
            db.schema.rename(mapping)
        except RenameCollisionError as exc:
            log.info("redrawing sample after collision: %s", exc)
            continue
        seen.add(frozen)
        return mapping
    return None


# --------------------------------------------------------------------------
# Content-equivalence perturbation


def perturb_dbcontent(
    corpus: list[Example],
    dbs: dict[str, Database],
    transforms: SubstitutionLexicon,
    policy: SamplingPolicy,
    source_digest: str = "",
) -> TestSet:
    transforms.validate(dbs, transforms=True)
    pairs: list[PerturbedPair] = []
    databases: dict[str, Database] = {}
    drop_counts: dict[str, int] = {}

    for db_id in sorted(dbs):
        entries = transforms.entries_for(db_id)
        if not entries:
            continue
        keys = sorted(entries)
        rng = policy.rng("dbcontent-equivalence", db_id)
        seen: set[tuple] = set()
        parsed = _parse_examples(corpus, db_id, dbs[db_id])
        variant_index = 0
        for _ in range(policy.repeats):
            chosen = _draw_transforms(rng, keys, entries, dbs[db_id], seen)
            if chosen is None:
                continue
            variant_id = f"{db_id}__content__{variant_index}"
            variant_index += 1
            post_db = dbs[db_id]
            for transform in chosen:
                post_db = apply_content_transform(post_db, transform)
            post_db = with_id(post_db, variant_id)
            databases[variant_id] = post_db
            null_map = {
                id(t): any(v is None for v in dbs[db_id].column_values(t.table, t.source))
                for t in chosen
            }
            for source_id, example, ast in parsed:
                touched = collect_refs(ast) & {
                    (t.table.lower(), t.source.lower()) for t in chosen
                }
                if not touched:
                    continue
                try:
                    post_ast = ast
                    for transform in chosen:
                        post_ast = rewrite_for_transform(
                            post_ast, transform, source_has_nulls=null_map[id(transform)]
                        )
                except RewriteUnsupported as exc:
                    drop_counts[exc.reason] = drop_counts.get(exc.reason, 0) + 1
                    log.info("dropping example %d for %s: %s", source_id, variant_id, exc.reason)
                    continue
                post_ast = dc_replace(post_ast, schema=post_db.schema)
                post_sql = print_sql(post_ast)
                post_db.execute(post_ast)  # a failing gold query is a generator bug
                pairs.append(
                    PerturbedPair(
                        id=f"dbcontent-equivalence-{source_id:05d}-{variant_id}",
                        source_id=source_id,
                        db_id_pre=db_id,
                        db_id_post=variant_id,
                        nlq_pre=example.question,
                        nlq_post=example.question,
                        sql_pre=print_sql(ast),
                        sql_post=post_sql,
                        provenance={
                            "transforms": [transform_to_json(t) for t in chosen],
                        },
                    )
                )
    ts = TestSet(
        perturbation="dbcontent-equivalence",
        seed=policy.seed,
        source_digest=source_digest,
        pairs=dedupe_pairs(pairs),
        databases=databases,
    )
    ts.check_unique()
    if drop_counts:
        log.info("dbcontent drop reasons: %s", dict(sorted(drop_counts.items())))
    return ts


def _draw_transforms(rng, keys, entries, db, seen):
    for _ in range(_MAX_REDRAWS):
        subset = sample_nonempty_subset(rng, keys)
        chosen = [
            rng.choice(sorted(entries[key], key=lambda t: (t.kind, t.targets)))
            for key in subset
        ]
        frozen = tuple(sorted((t.table, t.source, t.targets) for t in chosen))
        if frozen in seen:
            continue
        seen.add(frozen)
        return chosen
    return None


# --------------------------------------------------------------------------
# Gold-SQL rewriting for one content transform


def rewrite_for_transform(
    ast: SqlAst, t: ContentTransform, source_has_nulls: bool = False
) -> SqlAst:
    """Rewrite every reference to the transform's source column.

    Raises RewriteUnsupported when the equivalent query would need grammar
    outside the supported subset (aggregates over the source column,
    LIKE/IN on it, order-by on re-encoded text, mixed connectors, ...).
    """
    src = (t.table.lower(), t.source.lower())
    multi = t.kind in ("split-text", "text-to-multibool")

    def is_src(ref: ColumnRef) -> bool:
        return (ref.table.lower(), ref.column.lower()) == src

    def renamed(ref: ColumnRef, target: str) -> ColumnRef:
        return dc_replace(ref, column=target)

    def rewrite_select(items):
        out = []
        for item in items:
            touches = is_src(item.val.a.ref) or (item.val.b and is_src(item.val.b.ref))
            if not touches:
                out.append(item)
                continue
            if item.agg or item.val.a.agg or (item.val.b and item.val.b.agg):
                raise RewriteUnsupported("aggregate-over-source")
            if item.val.op is not None:
                raise RewriteUnsupported("arithmetic-over-source")
            col = item.val.a
            if t.kind in ("text-to-bool", "bool-to-text", "number-remap"):
                out.append(SelectItem(ValUnit(ColUnit(renamed(col.ref, t.targets[0]),
                                                      None, col.distinct))))
            else:
                if col.distinct:
                    raise RewriteUnsupported("distinct-column-expansion")
                for target in t.targets:
                    out.append(SelectItem(ValUnit(ColUnit(renamed(col.ref, target)))))
        return tuple(out)

    def map_text_literal(value: str) -> tuple[str, Literal]:
        """(target column, new literal) for an equality on the source column."""
        if t.kind == "text-to-bool":
            if value == t.true_value:
                return t.targets[0], Literal("number", 1)
            if value == t.false_value:
                return t.targets[0], Literal("number", 0)
            raise RewriteUnsupported("literal-outside-value-set")
        if t.kind == "text-to-multibool":
            if value not in t.values:
                raise RewriteUnsupported("literal-outside-value-set")
            return t.targets[t.values.index(value)], Literal("number", 1)
        if t.kind == "bool-to-text":
            if value in (0, 1):
                return t.targets[0], Literal("text", t.true_label if value else t.false_label)
            raise RewriteUnsupported("literal-outside-value-set")
        raise RewriteUnsupported("unexpected-literal-kind")

    def rewrite_one(cmp: Comparison, outer_connectors) -> tuple[list[Comparison], str]:
        """One comparison -> its replacement group and the intra-group connector."""
        left_touches = is_src(cmp.left.a.ref) or (cmp.left.b and is_src(cmp.left.b.ref))
        right_nodes = [v for v in (cmp.right, cmp.right2) if isinstance(v, ColUnit)]
        if any(is_src(v.ref) for v in right_nodes):
            raise RewriteUnsupported("source-on-comparison-right")
        new_right = cmp.right
        new_right2 = cmp.right2
        if isinstance(cmp.right, SqlAst):
            new_right = rewrite_for_transform(cmp.right, t, source_has_nulls)
        if isinstance(cmp.right2, SqlAst):
            new_right2 = rewrite_for_transform(cmp.right2, t, source_has_nulls)
        if not left_touches:
            return [dc_replace(cmp, right=new_right, right2=new_right2)], "and"
        if cmp.left.op is not None or cmp.left.a.agg is not None:
            raise RewriteUnsupported("aggregate-over-source")
        ref = cmp.left.a.ref
        if t.kind == "number-remap":
            if cmp.op in ("like", "in") or not isinstance(new_right, Literal):
                raise RewriteUnsupported("non-literal-comparison-on-source")
            op = cmp.op
            lo = Literal("number", t.map_number(new_right.value))
            hi = None
            if cmp.op == "between":
                hi = Literal("number", t.map_number(new_right2.value))
                if t.order_reversing:
                    lo, hi = hi, lo
            elif t.order_reversing:
                op = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(op, op)
            return [Comparison(ValUnit(ColUnit(renamed(ref, t.targets[0]))), op, lo, hi)], "and"
        if cmp.op not in ("=", "!=") or not isinstance(new_right, Literal):
            raise RewriteUnsupported("non-equality-on-source")
        if t.kind == "split-text":
            try:
                parts = t.derive(str(new_right.value))
            except TransformError:
                raise RewriteUnsupported("literal-not-splittable")
            connector = "and" if cmp.op == "=" else "or"
            # AND binds tighter than OR, so an AND-group is safe anywhere;
            # an OR-group is only safe in an all-OR (or singleton) list.
            if connector == "or" and any(c != "or" for c in outer_connectors):
                raise RewriteUnsupported("negated-split-in-and-context")
            group = [
                Comparison(ValUnit(ColUnit(renamed(ref, target))), cmp.op,
                           Literal("text", part))
                for target, part in zip(t.targets, parts)
            ]
            return group, connector
        target, literal = map_text_literal(new_right.value)
        return [Comparison(ValUnit(ColUnit(renamed(ref, target))), cmp.op, literal)], "and"

    def rewrite_preds(preds: Predicates) -> Predicates:
        items: list[Comparison] = []
        connectors: list[str] = []
        for index, cmp in enumerate(preds.items):
            group, intra = rewrite_one(cmp, preds.connectors)
            if index > 0:
                connectors.append(preds.connectors[index - 1])
            for offset, item in enumerate(group):
                if offset > 0:
                    connectors.append(intra)
                items.append(item)
        return Predicates(tuple(items), tuple(connectors))

    def rewrite_group(cols):
        out = []
        for col in cols:
            if not is_src(col.ref):
                out.append(col)
                continue
            if col.agg:
                raise RewriteUnsupported("aggregate-over-source")
            if multi:
                out.extend(ColUnit(renamed(col.ref, target)) for target in t.targets)
            else:
                out.append(ColUnit(renamed(col.ref, t.targets[0]), None, col.distinct))
        return tuple(out)

    def rewrite_order(items):
        out = []
        for item in items:
            touches = is_src(item.val.a.ref) or (item.val.b and is_src(item.val.b.ref))
            if not touches:
                out.append(item)
                continue
            if t.kind != "number-remap":
                raise RewriteUnsupported("order-by-reencoded-column")
            if item.val.op is not None or item.val.a.agg is not None:
                raise RewriteUnsupported("aggregate-over-source")
            if t.order_reversing and source_has_nulls:
                raise RewriteUnsupported("order-flip-with-nulls")
            ref = renamed(item.val.a.ref, t.targets[0])
            desc = (not item.desc) if t.order_reversing else item.desc
            out.append(OrderItem(ValUnit(ColUnit(ref)), desc))
        return tuple(out)

    for cmp in ast.join_conds.items:
        nodes = [cmp.left.a] + ([cmp.left.b] if cmp.left.b else [])
        nodes += [v for v in (cmp.right, cmp.right2) if isinstance(v, ColUnit)]
        if any(is_src(n.ref) for n in nodes):
            raise RewriteUnsupported("source-in-join-condition")

    return dc_replace(
        ast,
        select=rewrite_select(ast.select),
        where=rewrite_preds(ast.where),
        group_by=rewrite_group(ast.group_by),
        having=rewrite_preds(ast.having),
        order_by=rewrite_order(ast.order_by),
        setop=(
            (ast.setop[0], rewrite_for_transform(ast.setop[1], t, source_has_nulls))
            if ast.setop
            else None
        ),
    )
