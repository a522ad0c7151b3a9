"""SQL parsing, printing, transformation, and clause decomposition.

Covers the grammar subset used by Spider-format corpora: single SELECT
blocks with joins, WHERE/GROUP BY/HAVING/ORDER BY/LIMIT, one level of
subquery nesting in predicates, and set operations between top-level
blocks. Anything else raises UnsupportedGrammarError so callers can skip
the query.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import SqlSyntaxError, UnknownColumnError, UnsupportedGrammarError
from .schema import Schema

AGG_OPS = ("max", "min", "count", "sum", "avg")
ARITH_OPS = ("-", "+", "*", "/")
CMP_OPS = ("=", "!=", "<>", "<", ">", "<=", ">=")
SET_OPS = ("union", "intersect", "except")
CLAUSE_KEYWORDS = ("select", "from", "where", "group", "having", "order", "limit") + SET_OPS

MASK_TOKEN = "__value__"

_TOKEN_RE = re.compile(
    r"""
      '(?:[^']|'')*'
    | "(?:[^"]|"")*"
    | \d+\.\d+
    | \d+
    | [A-Za-z_][A-Za-z0-9_]*(?:\.(?:[A-Za-z_][A-Za-z0-9_]*|\*))?
    | != | <> | <= | >=
    | [(),;*=<>+\-/]
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    for match in _TOKEN_RE.finditer(text):
        gap = text[pos : match.start()]
        if gap.strip():
            raise SqlSyntaxError("unrecognized input", position=pos, token=gap.strip())
        tokens.append(match.group(0))
        pos = match.end()
    if text[pos:].strip():
        raise SqlSyntaxError("unrecognized input", position=pos, token=text[pos:].strip())
    return tokens


# --------------------------------------------------------------------------
# AST nodes


@dataclass(frozen=True)
class ColumnRef:
    table: str  # resolved table name; "" for '*'
    column: str
    occurrence: int = 0  # which occurrence of `table` in FROM (self-joins)

    @property
    def is_star(self) -> bool:
        return self.column == "*"


@dataclass(frozen=True)
class ColUnit:
    ref: ColumnRef
    agg: str | None = None
    distinct: bool = False


@dataclass(frozen=True)
class ValUnit:
    a: ColUnit
    op: str | None = None
    b: ColUnit | None = None


@dataclass(frozen=True)
class SelectItem:
    val: ValUnit
    agg: str | None = None


@dataclass(frozen=True)
class TableSource:
    table: str
    alias: str | None = None


@dataclass(frozen=True)
class Literal:
    kind: str  # "text" | "number"
    value: str | int | float


@dataclass(frozen=True)
class Comparison:
    left: ValUnit
    op: str  # one of CMP_OPS or "like", "in", "between"
    right: object  # Literal | ColUnit | SqlAst
    right2: object | None = None  # second BETWEEN bound
    negated: bool = False  # NOT IN / NOT LIKE


@dataclass(frozen=True)
class Predicates:
    items: tuple[Comparison, ...] = ()
    connectors: tuple[str, ...] = ()  # "and"/"or", length == max(0, len(items) - 1)

    def __bool__(self) -> bool:
        return bool(self.items)


@dataclass(frozen=True)
class OrderItem:
    val: ValUnit
    desc: bool = False


@dataclass(frozen=True)
class SqlAst:
    select: tuple[SelectItem, ...]
    distinct: bool = False
    from_tables: tuple[TableSource, ...] = ()
    join_conds: Predicates = Predicates()
    where: Predicates = Predicates()
    group_by: tuple[ColUnit, ...] = ()
    having: Predicates = Predicates()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None
    setop: tuple[str, "SqlAst"] | None = None  # ("union"|"intersect"|"except", rhs)
    schema: Schema | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.limit is not None and (not isinstance(self.limit, int) or self.limit < 0):
            raise SqlSyntaxError(f"limit must be a non-negative integer, got {self.limit!r}")


def has_top_order(ast: SqlAst) -> bool:
    """True when the query's final result carries an ordering."""
    if ast.setop is not None:
        return bool(ast.order_by) or has_top_order(ast.setop[1])
    return bool(ast.order_by)


# --------------------------------------------------------------------------
# Parser


class _Cursor:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.idx = 0

    def peek(self, ahead: int = 0) -> str | None:
        i = self.idx + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def peek_kw(self, ahead: int = 0) -> str | None:
        tok = self.peek(ahead)
        return tok.lower() if tok is not None else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise SqlSyntaxError("unexpected end of query", position=self.idx)
        self.idx += 1
        return tok

    def expect(self, keyword: str) -> None:
        tok = self.next()
        if tok.lower() != keyword:
            raise SqlSyntaxError(f"expected {keyword!r}", position=self.idx - 1, token=tok)

    def done(self) -> bool:
        return self.idx >= len(self.tokens)


class _Scope:
    """Column resolution context for one SELECT block."""

    def __init__(self, sources: tuple[TableSource, ...], schema: Schema):
        self.sources = sources
        self.schema = schema
        self.by_alias: dict[str, int] = {}
        for i, src in enumerate(sources):
            if src.alias:
                key = src.alias.lower()
                if key in self.by_alias:
                    raise SqlSyntaxError(f"duplicate alias {src.alias!r}")
                self.by_alias[key] = i

    def _occurrence(self, index: int) -> int:
        table = self.sources[index].table.lower()
        return sum(1 for s in self.sources[:index] if s.table.lower() == table)

    def resolve(self, qualifier: str | None, column: str) -> ColumnRef:
        if column == "*" and qualifier is None:
            return ColumnRef("", "*")
        if qualifier is not None:
            q = qualifier.lower()
            if q in self.by_alias:
                index = self.by_alias[q]
            else:
                hits = [i for i, s in enumerate(self.sources) if s.table.lower() == q]
                if not hits:
                    raise UnknownColumnError(f"unknown table or alias {qualifier!r}")
                if len(hits) > 1:
                    raise UnknownColumnError(
                        f"table {qualifier!r} appears more than once; qualify with an alias"
                    )
                index = hits[0]
            source = self.sources[index]
            if column == "*":
                raise UnsupportedGrammarError("qualified '*' is not supported")
            col = self.schema.column(source.table, column)  # raises UnknownColumnError
            return ColumnRef(source.table, col.name, self._occurrence(index))
        for i, source in enumerate(self.sources):
            if self.schema.table(source.table).has_column(column):
                col = self.schema.column(source.table, column)
                return ColumnRef(source.table, col.name, self._occurrence(i))
        raise UnknownColumnError(f"column {column!r} not found in FROM tables")


def _is_number(tok: str) -> bool:
    return bool(re.fullmatch(r"\d+(\.\d+)?", tok))


def _is_string(tok: str) -> bool:
    return tok.startswith("'") or tok.startswith('"')


def _is_identifier(tok: str) -> bool:
    return bool(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*(\.([A-Za-z_][A-Za-z0-9_]*|\*))?", tok))


def _unquote(tok: str) -> str:
    quote = tok[0]
    body = tok[1:-1]
    return body.replace(quote * 2, quote)


def parse_sql(text: str, schema: Schema) -> SqlAst:
    """Parse one query against a schema, resolving every column reference."""
    cur = _Cursor(tokenize(text))
    ast = _parse_query(cur, schema, depth=0)
    while cur.peek() == ";":
        cur.next()
    if not cur.done():
        raise SqlSyntaxError("trailing tokens after query", position=cur.idx, token=cur.peek())
    return ast


def _parse_query(cur: _Cursor, schema: Schema, depth: int) -> SqlAst:
    if cur.peek_kw() != "select":
        raise SqlSyntaxError("query must start with SELECT", position=cur.idx, token=cur.peek())
    select_idx = cur.idx
    from_idx = _find_from(cur)

    from_cur = _Cursor(cur.tokens)
    from_cur.idx = from_idx
    sources, join_conds, scope = _parse_from(from_cur, schema, depth)
    after_from = from_cur.idx

    sel_cur = _Cursor(cur.tokens[:from_idx])
    sel_cur.idx = select_idx
    distinct, items = _parse_select(sel_cur, scope, schema, depth)
    if not sel_cur.done():
        raise SqlSyntaxError("unexpected token in select list", token=sel_cur.peek())

    cur.idx = after_from
    where = _parse_condition_clause(cur, "where", scope, schema, depth)
    group_by = _parse_group_by(cur, scope)
    having = _parse_condition_clause(cur, "having", scope, schema, depth)
    order_by = _parse_order_by(cur, scope)
    limit = _parse_limit(cur)

    setop = None
    if cur.peek_kw() in SET_OPS:
        if depth > 0:
            raise UnsupportedGrammarError("set operation inside a subquery")
        op = cur.next().lower()
        rhs = _parse_query(cur, schema, depth)
        setop = (op, rhs)

    return SqlAst(
        select=items,
        distinct=distinct,
        from_tables=sources,
        join_conds=join_conds,
        where=where,
        group_by=group_by,
        having=having,
        order_by=order_by,
        limit=limit,
        setop=setop,
        schema=schema,
    )


def _find_from(cur: _Cursor) -> int:
    depth = 0
    for i in range(cur.idx, len(cur.tokens)):
        tok = cur.tokens[i]
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif depth == 0 and tok.lower() == "from":
            return i
    raise SqlSyntaxError("missing FROM clause", position=cur.idx)


def _parse_from(cur: _Cursor, schema: Schema, depth: int):
    cur.expect("from")
    sources: list[TableSource] = []
    conds_items: list[Comparison] = []
    conds_connectors: list[str] = []

    def parse_source():
        tok = cur.peek()
        if tok == "(":
            raise UnsupportedGrammarError("subquery in FROM clause")
        if tok is None or not _is_identifier(tok) or "." in tok:
            raise SqlSyntaxError("expected table name", token=tok)
        name = cur.next()
        if not schema.has_table(name):
            raise UnknownColumnError(f"unknown table {name!r}")
        alias = None
        if cur.peek_kw() == "as":
            cur.next()
            alias = cur.next()
        sources.append(TableSource(schema.table(name).name, alias))

    parse_source()
    while cur.peek_kw() in ("join", ","):
        if cur.peek() == ",":
            raise UnsupportedGrammarError("comma-separated FROM clause")
        cur.next()
        parse_source()
        if cur.peek_kw() == "on":
            cur.next()
            scope = _Scope(tuple(sources), schema)
            items, connectors = _parse_condition(cur, scope, schema, depth, stop={"join"})
            if conds_items:
                conds_connectors.append("and")
            conds_items.extend(items)
            conds_connectors.extend(connectors)
    scope = _Scope(tuple(sources), schema)
    return tuple(sources), Predicates(tuple(conds_items), tuple(conds_connectors)), scope


def _parse_select(cur: _Cursor, scope: _Scope, schema: Schema, depth: int):
    cur.expect("select")
    distinct = False
    if cur.peek_kw() == "distinct":
        cur.next()
        distinct = True
    items: list[SelectItem] = []
    while not cur.done():
        agg = None
        if cur.peek_kw() in AGG_OPS and cur.peek(1) == "(":
            agg = cur.next().lower()
            cur.expect("(")
            val = _parse_val_unit(cur, scope, allow_distinct=True)
            cur.expect(")")
        else:
            val = _parse_val_unit(cur, scope, allow_distinct=True)
        items.append(SelectItem(val, agg))
        if cur.peek() == ",":
            cur.next()
        else:
            break
    if not items:
        raise SqlSyntaxError("empty select list")
    return distinct, tuple(items)


def _parse_col_unit(cur: _Cursor, scope: _Scope, allow_distinct: bool = False) -> ColUnit:
    agg = None
    distinct = False
    if cur.peek_kw() in AGG_OPS and cur.peek(1) == "(":
        agg = cur.next().lower()
        cur.expect("(")
        if cur.peek_kw() == "distinct":
            cur.next()
            distinct = True
        ref = _parse_column_ref(cur, scope)
        cur.expect(")")
        return ColUnit(ref, agg, distinct)
    if allow_distinct and cur.peek_kw() == "distinct":
        cur.next()
        distinct = True
    ref = _parse_column_ref(cur, scope)
    return ColUnit(ref, None, distinct)


def _parse_column_ref(cur: _Cursor, scope: _Scope) -> ColumnRef:
    tok = cur.peek()
    if tok == "*":
        cur.next()
        return scope.resolve(None, "*")
    if tok is None or not _is_identifier(tok):
        raise SqlSyntaxError("expected column reference", token=tok)
    cur.next()
    if "." in tok:
        qualifier, column = tok.split(".", 1)
        return scope.resolve(qualifier, column)
    return scope.resolve(None, tok)


def _parse_val_unit(cur: _Cursor, scope: _Scope, allow_distinct: bool = False) -> ValUnit:
    wrapped = False
    if cur.peek() == "(" and cur.peek_kw(1) != "select":
        wrapped = True
        cur.next()
    a = _parse_col_unit(cur, scope, allow_distinct=allow_distinct)
    op = None
    b = None
    if cur.peek() in ARITH_OPS and cur.peek() != "*":
        op = cur.next()
        b = _parse_col_unit(cur, scope)
    elif cur.peek() == "*" and wrapped:
        op = cur.next()
        b = _parse_col_unit(cur, scope)
    if wrapped:
        cur.expect(")")
    return ValUnit(a, op, b)


def _parse_condition_clause(cur, keyword, scope, schema, depth) -> Predicates:
    if cur.peek_kw() != keyword:
        return Predicates()
    cur.next()
    items, connectors = _parse_condition(cur, scope, schema, depth, stop=set())
    return Predicates(tuple(items), tuple(connectors))


def _parse_condition(cur: _Cursor, scope: _Scope, schema: Schema, depth: int, stop: set):
    items: list[Comparison] = []
    connectors: list[str] = []
    stop_kw = set(CLAUSE_KEYWORDS) | stop | {")", ";"}
    while True:
        left = _parse_val_unit(cur, scope)
        negated = False
        if cur.peek_kw() == "not":
            cur.next()
            negated = True
        op_tok = cur.peek()
        if op_tok is None:
            raise SqlSyntaxError("expected comparison operator")
        op = op_tok.lower()
        if op in CMP_OPS or op in ("like", "in", "between"):
            cur.next()
        else:
            raise UnsupportedGrammarError(f"unsupported predicate operator {op_tok!r}")
        if op == "<>":
            op = "!="
        if negated and op not in ("in", "like"):
            raise UnsupportedGrammarError(f"NOT before {op!r}")
        right2 = None
        if op == "between":
            right = _parse_value(cur, scope, schema, depth)
            cur.expect("and")
            right2 = _parse_value(cur, scope, schema, depth)
        elif op == "in":
            right = _parse_value(cur, scope, schema, depth)
            if not isinstance(right, SqlAst):
                raise UnsupportedGrammarError("IN requires a subquery")
        else:
            right = _parse_value(cur, scope, schema, depth)
        items.append(Comparison(left, op, right, right2, negated))
        nxt = cur.peek_kw()
        if nxt in ("and", "or"):
            connectors.append(nxt)
            cur.next()
            continue
        if nxt is None or nxt in stop_kw:
            break
        raise SqlSyntaxError("unexpected token in condition", token=cur.peek())
    return items, connectors


def _parse_value(cur: _Cursor, scope: _Scope, schema: Schema, depth: int):
    tok = cur.peek()
    if tok == "(" and cur.peek_kw(1) == "select":
        if depth >= 1:
            raise UnsupportedGrammarError("nested subquery beyond one level")
        cur.next()
        sub = _parse_query(cur, schema, depth + 1)
        cur.expect(")")
        return sub
    if tok == "-" and cur.peek(1) is not None and _is_number(cur.peek(1)):
        cur.next()
        return _number_literal("-" + cur.next())
    if tok is not None and _is_number(tok):
        return _number_literal(cur.next())
    if tok is not None and _is_string(tok):
        return Literal("text", _unquote(cur.next()))
    return _parse_col_unit(cur, scope)


def _number_literal(tok: str) -> Literal:
    value = float(tok) if "." in tok else int(tok)
    return Literal("number", value)


def _parse_group_by(cur: _Cursor, scope: _Scope) -> tuple[ColUnit, ...]:
    if cur.peek_kw() != "group":
        return ()
    cur.next()
    cur.expect("by")
    cols = [_parse_col_unit(cur, scope)]
    while cur.peek() == ",":
        cur.next()
        cols.append(_parse_col_unit(cur, scope))
    return tuple(cols)


def _parse_order_by(cur: _Cursor, scope: _Scope) -> tuple[OrderItem, ...]:
    if cur.peek_kw() != "order":
        return ()
    cur.next()
    cur.expect("by")
    items = []
    while True:
        val = _parse_val_unit(cur, scope)
        desc = False
        if cur.peek_kw() in ("asc", "desc"):
            desc = cur.next().lower() == "desc"
        items.append(OrderItem(val, desc))
        if cur.peek() == ",":
            cur.next()
        else:
            break
    return tuple(items)


def _parse_limit(cur: _Cursor) -> int | None:
    if cur.peek_kw() != "limit":
        return None
    cur.next()
    tok = cur.next()
    if not re.fullmatch(r"\d+", tok):
        raise SqlSyntaxError("LIMIT requires a non-negative integer", token=tok)
    return int(tok)


# --------------------------------------------------------------------------
# Printing


class _RenderContext:
    """Qualification decisions for one SELECT block."""

    def __init__(self, ast: SqlAst, normalized: bool):
        self.normalized = normalized
        self.sources = ast.from_tables
        self.table_counts: dict[str, int] = {}
        for src in self.sources:
            key = src.table.lower()
            self.table_counts[key] = self.table_counts.get(key, 0) + 1
        self.column_tables: dict[str, set[str]] = {}
        if ast.schema is not None:
            for src in self.sources:
                for col in ast.schema.table(src.table).columns:
                    self.column_tables.setdefault(col.name.lower(), set()).add(src.table.lower())

    def qualifier_for(self, ref: ColumnRef) -> str | None:
        if ref.is_star:
            return None
        if self.normalized:
            return ref.table.lower()
        table_key = ref.table.lower()
        if self.table_counts.get(table_key, 0) > 1:
            seen = 0
            for src in self.sources:
                if src.table.lower() == table_key:
                    if seen == ref.occurrence:
                        return src.alias or src.table
                    seen += 1
            return ref.table
        if len(self.column_tables.get(ref.column.lower(), ())) > 1:
            for src in self.sources:
                if src.table.lower() == table_key:
                    return src.alias or src.table
            return ref.table
        return None


def print_sql(ast: SqlAst) -> str:
    """Render the canonical textual form; parse(print(ast)) equals ast."""
    return _render_query(ast, normalized=False)


def _kw(word: str, normalized: bool) -> str:
    return word.lower() if normalized else word.upper()


def _render_query(ast: SqlAst, normalized: bool, mask: bool = False) -> str:
    ctx = _RenderContext(ast, normalized)
    parts = [_kw("select", normalized)]
    if ast.distinct:
        parts.append(_kw("distinct", normalized))
    parts.append(", ".join(_render_select_item(i, ctx, mask) for i in ast.select))
    parts.append(_kw("from", normalized))
    from_bits = []
    for i, src in enumerate(ast.from_tables):
        name = src.table.lower() if normalized else src.table
        if src.alias and not normalized:
            name += f" {_kw('as', normalized)} {src.alias}"
        from_bits.append(name if i == 0 else f"{_kw('join', normalized)} {name}")
    parts.append(" ".join(from_bits))
    if ast.join_conds:
        parts.append(_kw("on", normalized))
        parts.append(_render_predicates(ast.join_conds, ctx, normalized, mask))
    if ast.where:
        parts.append(_kw("where", normalized))
        parts.append(_render_predicates(ast.where, ctx, normalized, mask))
    if ast.group_by:
        parts.append(_kw("group by", normalized))
        parts.append(", ".join(_render_col_unit(c, ctx, mask) for c in ast.group_by))
    if ast.having:
        parts.append(_kw("having", normalized))
        parts.append(_render_predicates(ast.having, ctx, normalized, mask))
    if ast.order_by:
        parts.append(_kw("order by", normalized))
        rendered = [
            f"{_render_val_unit(o.val, ctx, mask)} {_kw('desc' if o.desc else 'asc', normalized)}"
            for o in ast.order_by
        ]
        parts.append(", ".join(rendered))
    if ast.limit is not None:
        parts.append(_kw("limit", normalized))
        parts.append(MASK_TOKEN if mask else str(ast.limit))
    text = " ".join(parts)
    if ast.setop is not None:
        op, rhs = ast.setop
        text += f" {_kw(op, normalized)} {_render_query(rhs, normalized, mask)}"
    return text


def _render_select_item(item: SelectItem, ctx, mask: bool) -> str:
    inner = _render_val_unit(item.val, ctx, mask)
    if item.agg:
        return f"{item.agg}({inner})"
    return inner


def _render_val_unit(val: ValUnit, ctx, mask: bool) -> str:
    a = _render_col_unit(val.a, ctx, mask)
    if val.op is None:
        return a
    b = _render_col_unit(val.b, ctx, mask)
    return f"{a} {val.op} {b}"


def _render_col_unit(col: ColUnit, ctx, mask: bool) -> str:
    inner = _render_ref(col.ref, ctx)
    if col.distinct:
        inner = f"{_kw('distinct', ctx.normalized)} {inner}"
    if col.agg:
        return f"{col.agg}({inner})"
    return inner


def _render_ref(ref: ColumnRef, ctx) -> str:
    if ref.is_star:
        return "*"
    name = ref.column.lower() if ctx.normalized else ref.column
    qualifier = ctx.qualifier_for(ref)
    return f"{qualifier}.{name}" if qualifier else name


def _render_predicates(preds: Predicates, ctx, normalized: bool, mask: bool) -> str:
    bits = [_render_comparison(preds.items[0], ctx, normalized, mask)]
    for connector, item in zip(preds.connectors, preds.items[1:]):
        bits.append(_kw(connector, normalized))
        bits.append(_render_comparison(item, ctx, normalized, mask))
    return " ".join(bits)


def _render_comparison(cmp: Comparison, ctx, normalized: bool, mask: bool) -> str:
    left = _render_val_unit(cmp.left, ctx, mask)
    op = cmp.op if cmp.op in CMP_OPS else _kw(cmp.op, normalized)
    if cmp.negated:
        op = f"{_kw('not', normalized)} {op}"
    right = _render_value(cmp.right, ctx, normalized, mask)
    if cmp.op == "between":
        right2 = _render_value(cmp.right2, ctx, normalized, mask)
        return f"{left} {op} {right} {_kw('and', normalized)} {right2}"
    return f"{left} {op} {right}"


def _render_value(value, ctx, normalized: bool, mask: bool) -> str:
    if isinstance(value, SqlAst):
        return f"({_render_query(value, normalized, mask)})"
    if isinstance(value, Literal):
        if mask:
            return MASK_TOKEN
        if value.kind == "text":
            escaped = str(value.value).replace("'", "''")
            return f"'{escaped}'"
        return _format_number(value.value)
    if isinstance(value, ColUnit):
        return _render_col_unit(value, ctx, mask)
    raise TypeError(f"unexpected value node {value!r}")


def _format_number(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(value)  # keep the decimal point: 145.0 stays distinct from 145
    return str(value)


# --------------------------------------------------------------------------
# Rename


def rename_refs(ast: SqlAst, mapping: dict[tuple[str, str], str]) -> SqlAst:
    """Rename every reference to a mapped (table, column); other nodes unchanged."""
    if not mapping:
        return ast
    if ast.schema is None:
        raise UnknownColumnError("AST carries no schema; cannot rename")
    new_schema = ast.schema.rename(mapping)  # validates keys and collisions
    norm = {(t.lower(), c.lower()): new for (t, c), new in mapping.items()}
    return _rename_query(ast, norm, new_schema)


def _rename_query(ast: SqlAst, norm, new_schema) -> SqlAst:
    def ref(r: ColumnRef) -> ColumnRef:
        new = norm.get((r.table.lower(), r.column.lower()))
        return replace(r, column=new) if new is not None else r

    def col(c: ColUnit) -> ColUnit:
        return replace(c, ref=ref(c.ref))

    def val(v: ValUnit) -> ValUnit:
        return ValUnit(col(v.a), v.op, col(v.b) if v.b else None)

    def value(x):
        if isinstance(x, SqlAst):
            return _rename_query(x, norm, new_schema)
        if isinstance(x, ColUnit):
            return col(x)
        return x

    def preds(p: Predicates) -> Predicates:
        items = tuple(
            Comparison(val(c.left), c.op, value(c.right),
                       value(c.right2) if c.right2 is not None else None, c.negated)
            for c in p.items
        )
        return Predicates(items, p.connectors)

    return replace(
        ast,
        select=tuple(SelectItem(val(i.val), i.agg) for i in ast.select),
        join_conds=preds(ast.join_conds),
        where=preds(ast.where),
        group_by=tuple(col(c) for c in ast.group_by),
        having=preds(ast.having),
        order_by=tuple(OrderItem(val(o.val), o.desc) for o in ast.order_by),
        setop=(ast.setop[0], _rename_query(ast.setop[1], norm, new_schema)) if ast.setop else None,
        schema=new_schema,
    )


# --------------------------------------------------------------------------
# Clause decomposition (value-masked canonical sets)


@dataclass(frozen=True)
class ClauseSets:
    select_set: frozenset
    select_distinct: bool
    from_set: frozenset
    join_set: frozenset
    where_set: frozenset
    where_connectors: tuple
    group_set: frozenset
    having_set: frozenset
    having_connectors: tuple
    order_list: tuple
    has_limit: bool
    setop: tuple | None  # (op, ClauseSets) or None


def decompose(ast: SqlAst) -> ClauseSets:
    """Canonical per-clause component sets with literal values masked.

    Aliases are resolved to underlying tables and every literal is replaced
    by a single mask token, so clause sets compare queries up to value
    choices and WHERE/HAVING conjunct order.
    """
    ctx = _RenderContext(ast, normalized=True)

    def cmp_str(c: Comparison) -> str:
        return _render_comparison(c, ctx, normalized=True, mask=True)

    return ClauseSets(
        select_set=frozenset(_render_select_item(i, ctx, True) for i in ast.select),
        select_distinct=ast.distinct,
        from_set=frozenset(s.table.lower() for s in ast.from_tables),
        join_set=frozenset(cmp_str(c) for c in ast.join_conds.items),
        where_set=frozenset(cmp_str(c) for c in ast.where.items),
        where_connectors=tuple(sorted(ast.where.connectors)),
        group_set=frozenset(_render_col_unit(c, ctx, True) for c in ast.group_by),
        having_set=frozenset(cmp_str(c) for c in ast.having.items),
        having_connectors=tuple(sorted(ast.having.connectors)),
        order_list=tuple(
            f"{_render_val_unit(o.val, ctx, True)} {'desc' if o.desc else 'asc'}"
            for o in ast.order_by
        ),
        has_limit=ast.limit is not None,
        setop=(ast.setop[0], decompose(ast.setop[1])) if ast.setop else None,
    )


# --------------------------------------------------------------------------
# Literal discovery and surgical replacement


@dataclass(frozen=True)
class LiteralSite:
    """One literal in WHERE/HAVING/LIMIT with its binding and address."""

    path: tuple
    value: str | int | float
    kind: str  # "text" | "number"
    clause: str  # "where" | "having" | "limit"
    table: str | None
    column: str | None
    non_db: bool  # limit values and aggregate comparisons are not DB content


def find_literals(ast: SqlAst) -> list[LiteralSite]:
    """List every literal with its bound column and clause position."""
    sites: list[LiteralSite] = []
    _collect_literals(ast, (), sites)
    return sites


def _collect_literals(ast: SqlAst, prefix: tuple, sites: list) -> None:
    for clause in ("where", "having"):
        preds: Predicates = getattr(ast, clause)
        for i, cmp in enumerate(preds.items):
            binding = _binding_of(cmp.left)
            for slot in ("right", "right2"):
                value = getattr(cmp, slot)
                if isinstance(value, Literal):
                    table, column = binding if binding else (None, None)
                    sites.append(
                        LiteralSite(
                            path=prefix + (clause, i, slot),
                            value=value.value,
                            kind=value.kind,
                            clause=clause,
                            table=table,
                            column=column,
                            non_db=binding is None,
                        )
                    )
                elif isinstance(value, SqlAst):
                    _collect_literals(value, prefix + (clause, i, slot), sites)
    if ast.limit is not None:
        sites.append(
            LiteralSite(
                path=prefix + ("limit",),
                value=ast.limit,
                kind="number",
                clause="limit",
                table=None,
                column=None,
                non_db=True,
            )
        )
    if ast.setop is not None:
        _collect_literals(ast.setop[1], prefix + ("setop",), sites)


def _binding_of(left: ValUnit) -> tuple[str, str] | None:
    if left.op is not None or left.a.agg is not None or left.a.ref.is_star:
        return None
    return (left.a.ref.table, left.a.ref.column)


def replace_literal(ast: SqlAst, path: tuple, new_value) -> SqlAst:
    """Return a new AST with the literal at `path` replaced by `new_value`."""
    head = path[0]
    if head == "limit":
        if not isinstance(new_value, int) or new_value < 0:
            raise SqlSyntaxError(f"limit replacement must be a non-negative integer")
        return replace(ast, limit=new_value)
    if head == "setop":
        op, rhs = ast.setop
        return replace(ast, setop=(op, replace_literal(rhs, path[1:], new_value)))
    clause, index, slot = path[0], path[1], path[2]
    preds: Predicates = getattr(ast, clause)
    cmp = preds.items[index]
    current = getattr(cmp, slot)
    if isinstance(current, SqlAst):
        new_node = replace_literal(current, path[3:], new_value)
    elif isinstance(current, Literal):
        if current.kind == "number" and not isinstance(new_value, (int, float)):
            raise SqlSyntaxError("number literal replaced with non-number")
        if current.kind == "text" and not isinstance(new_value, str):
            raise SqlSyntaxError("text literal replaced with non-text")
        new_node = Literal(current.kind, new_value)
    else:
        raise SqlSyntaxError(f"no literal at path {path!r}")
    new_cmp = replace(cmp, **{slot: new_node})
    items = tuple(new_cmp if i == index else c for i, c in enumerate(preds.items))
    return replace(ast, **{clause: Predicates(items, preds.connectors)})
