import pytest

from sqlperturb.corpus import Example
from sqlperturb.perturb_sql import (
    generate_sql_testset,
    perturb_comparison,
    perturb_db_number,
    perturb_db_text,
    perturb_nondb_number,
    perturb_sort_order,
)
from sqlperturb.sampling import SamplingPolicy
from sqlperturb.sqlast import parse_sql

POLICY = SamplingPolicy(repeats=5, seed=3)


def edit_is_single_span(pair):
    """The post question differs from the pre question in one contiguous span."""
    start, end = pair.provenance["edit_span"]
    new_text = pair.provenance["edit_text"]
    rebuilt = pair.nlq_pre[:start] + new_text + pair.nlq_pre[end:]
    return rebuilt == pair.nlq_post


class TestComparison:
    def test_more_than_to_at_least(self, dbs, lex):
        ex = Example(
            "Which years have more than one concert?",
            "SELECT year FROM concert GROUP BY year HAVING count(*) > 1",
            "concerts",
        )
        pairs = perturb_comparison(ex, dbs["concerts"], lex, POLICY)
        by_op = {p.provenance["op_post"]: p for p in pairs}
        assert ">=" in by_op
        assert by_op[">="].nlq_post == "Which years have at least one concert?"
        assert "count(*) >= 1" in by_op[">="].sql_post

    def test_older_than_to_younger_than(self, dbs, lex):
        ex = Example(
            "Which singers are older than 30?",
            "SELECT name FROM singer WHERE age > 30",
            "concerts",
        )
        pairs = perturb_comparison(ex, dbs["concerts"], lex, POLICY)
        assert {p.provenance["op_post"] for p in pairs} == {"<"}  # Table-row blanks
        assert pairs[0].nlq_post == "Which singers are younger than 30?"
        assert "age < 30" in pairs[0].sql_post

    def test_no_indicator_skipped(self, dbs, lex):
        ex = Example(
            "Show singers beyond age 30.",
            "SELECT name FROM singer WHERE age > 30",
            "concerts",
        )
        assert perturb_comparison(ex, dbs["concerts"], lex, POLICY) == []

    def test_ambiguous_indicator_skipped(self, dbs, lex):
        ex = Example(
            "Singers older than 30 with net worth more than 20?",
            "SELECT name FROM singer WHERE age > 30 AND net_worth > 20",
            "concerts",
        )
        # two '>' comparisons, two candidate phrases: alignment is ambiguous
        assert perturb_comparison(ex, dbs["concerts"], lex, POLICY) == []

    def test_operator_coherence(self, dbs, lex):
        ex = Example(
            "Which singers are older than 30?",
            "SELECT name FROM singer WHERE age > 30",
            "concerts",
        )
        for pair in perturb_comparison(ex, dbs["concerts"], lex, POLICY):
            # phrase and operator replacements come from the same lexicon row
            assert pair.provenance["phrase_pre"] == "older than"
            assert pair.provenance["phrase_post"] == "younger than"
            assert pair.provenance["op_post"] == "<"


class TestSortOrder:
    def test_desc_to_asc(self, dbs, lex):
        ex = Example(
            "Show names from the oldest to the youngest.",
            "SELECT name FROM singer ORDER BY age DESC",
            "concerts",
        )
        pairs = perturb_sort_order(ex, dbs["concerts"], lex, POLICY)
        assert len(pairs) == 1
        assert pairs[0].nlq_post == "Show names from the youngest to the oldest."
        assert "ORDER BY age ASC" in pairs[0].sql_post

    def test_limit_vocabulary(self, dbs, lex):
        ex = Example(
            "Who are the 3 youngest winners?",
            "SELECT winner_name FROM matches ORDER BY winner_age ASC LIMIT 3",
            "tennis",
        )
        pairs = perturb_sort_order(ex, dbs["tennis"], lex, POLICY)
        assert pairs[0].nlq_post == "Who are the 3 oldest winners?"
        assert "ORDER BY winner_age DESC LIMIT 3" in pairs[0].sql_post

    def test_no_order_by_no_pairs(self, dbs, lex):
        ex = Example("List singers.", "SELECT name FROM singer", "concerts")
        assert perturb_sort_order(ex, dbs["concerts"], lex, POLICY) == []

    def test_mismatched_vocabulary_skipped(self, dbs, lex):
        # 'youngest' is LIMIT vocabulary; without LIMIT the plain table applies
        ex = Example(
            "Show the youngest names.",
            "SELECT name FROM singer ORDER BY age ASC",
            "concerts",
        )
        assert perturb_sort_order(ex, dbs["concerts"], lex, POLICY) == []


class TestNonDbNumber:
    def test_limit_replacement(self, dbs, lex):
        ex = Example(
            "Who are the 3 youngest winners?",
            "SELECT winner_name FROM matches ORDER BY winner_age ASC LIMIT 3",
            "tennis",
        )
        pairs = perturb_nondb_number(ex, dbs["tennis"], POLICY)
        assert 1 <= len(pairs) <= 5
        for pair in pairs:
            new_value = pair.provenance["value_post"]
            assert 2 <= new_value <= 13 and new_value != 3
            assert f"LIMIT {new_value}" in pair.sql_post
            assert f"{new_value} youngest winners" in pair.nlq_post

    def test_word_surface(self, dbs, lex):
        ex = Example(
            "Find cities with three students.",
            "SELECT city_code FROM student GROUP BY city_code HAVING count(*) = 3",
            "pets",
        )
        pairs = perturb_nondb_number(ex, dbs["pets"], POLICY)
        assert pairs
        for pair in pairs:
            assert pair.provenance["surface"] == "number-word"
            rendered = pair.provenance["edit_text"]
            assert rendered.isalpha() or "-" in rendered

    def test_skip_zero_and_one(self, dbs, lex):
        ex = Example(
            "Which cities have 1 student?",
            "SELECT city_code FROM student GROUP BY city_code HAVING count(*) = 1",
            "pets",
        )
        assert perturb_nondb_number(ex, dbs["pets"], POLICY) == []

    def test_mention_absent_skipped(self, dbs, lex):
        ex = Example(
            "Who are the few youngest winners?",
            "SELECT winner_name FROM matches ORDER BY winner_age ASC LIMIT 3",
            "tennis",
        )
        assert perturb_nondb_number(ex, dbs["tennis"], POLICY) == []

    def test_bounds_clamped_at_two(self, dbs, lex):
        ex = Example(
            "Show the top 4 players.",
            "SELECT name FROM players ORDER BY ranking_points DESC LIMIT 4",
            "tennis",
        )
        pairs = perturb_nondb_number(ex, dbs["tennis"], POLICY)
        assert pairs and all(p.provenance["value_post"] >= 2 for p in pairs)


class TestDbText:
    def test_same_column_replacement(self, dbs, lex):
        ex = Example(
            "List singers from France.",
            "SELECT name FROM singer WHERE country = 'France'",
            "concerts",
        )
        pairs = perturb_db_text(ex, dbs["concerts"], POLICY)
        assert pairs
        column_values = set(dbs["concerts"].column_values("singer", "country"))
        for pair in pairs:
            new_value = pair.provenance["value_post"]
            assert new_value in column_values and new_value != "France"
            assert f"country = '{new_value}'" in pair.sql_post
            assert f"singers from {new_value}." in pair.nlq_post

    def test_non_verbatim_mention_skipped(self, dbs, lex):
        ex = Example(
            "List singers from the french republic.",
            "SELECT name FROM singer WHERE country = 'France'",
            "concerts",
        )
        assert perturb_db_text(ex, dbs["concerts"], POLICY) == []

    def test_substring_not_verbatim(self, dbs, lex):
        # 'US' inside 'USA' must not count as a mention
        ex = Example(
            "List players from USA.",
            "SELECT name FROM players WHERE country = 'US'",
            "tennis",
        )
        assert perturb_db_text(ex, dbs["tennis"], POLICY) == []

    def test_singleton_column_skipped(self, dbs, lex):
        ex = Example(
            "Which concerts have the theme Wide Awake?",
            "SELECT concert_name FROM concert WHERE theme = 'Wide Awake'",
            "concerts",
        )
        pairs = perturb_db_text(ex, dbs["concerts"], POLICY)
        assert pairs  # theme column has 5 distinct values; sanity-check the fixture
        single = Example(
            "Which pets are of type goldfish?",
            "SELECT petid FROM pets WHERE pettype = 'goldfish'",
            "pets",
        )
        # pettype only has cat/dog; 'goldfish' is absent so alternatives exist,
        # but a truly singleton column must skip:
        import sqlperturb.store as store
        from sqlperturb.schema import Column, Schema, Table

        schema = Schema((Table("t", (Column("a", "text"), Column("b", "text"))),))
        db = store.Database(
            schema=schema, content={"t": (("only", "x"), ("only", "y"))}, db_id="s"
        )
        lone = Example("Rows where a is only.", "SELECT b FROM t WHERE a = 'only'", "s")
        assert perturb_db_text(lone, db, POLICY) == []

    def test_case_mismatch_skipped(self, dbs, lex):
        ex = Example(
            "List singers from france.",
            "SELECT name FROM singer WHERE country = 'France'",
            "concerts",
        )
        assert perturb_db_text(ex, dbs["concerts"], POLICY) == []


class TestDbNumber:
    def test_replacement_window(self, dbs, lex):
        ex = Example(
            "Which players are older than 25?",
            "SELECT name FROM players WHERE age > 25",
            "tennis",
        )
        pairs = perturb_db_number(ex, dbs["tennis"], POLICY)
        assert pairs
        for pair in pairs:
            new_value = pair.provenance["value_post"]
            assert 15 <= new_value <= 35 and new_value != 25
            assert f"age > {new_value}" in pair.sql_post
            assert f"older than {new_value}?" in pair.nlq_post

    def test_zero_skipped(self, dbs, lex):
        ex = Example(
            "Which pets weigh more than 0?",
            "SELECT petid FROM pets WHERE weight > 0",
            "pets",
        )
        assert perturb_db_number(ex, dbs["pets"], POLICY) == []

    def test_double_mention_skipped(self, dbs, lex):
        ex = Example(
            "Which players aged 23 have 23 wins?",
            "SELECT name FROM players WHERE age = 23",
            "tennis",
        )
        assert perturb_db_number(ex, dbs["tennis"], POLICY) == []


class TestTestSetAssembly:
    def test_minimal_edit_property(self, dbs, lex, sql_corpus):
        for ptype in ("comparison", "sort-order", "nondb-number", "db-text", "db-number"):
            ts = generate_sql_testset(
                sql_corpus, dbs, lex, POLICY, ptype, strict_denotation_filter=False
            )
            assert ts.pairs
            for pair in ts.pairs:
                assert edit_is_single_span(pair), pair.id

    def test_post_sql_parses_and_executes(self, dbs, lex, sql_corpus):
        ts = generate_sql_testset(
            sql_corpus, dbs, lex, POLICY, "db-number", strict_denotation_filter=False
        )
        for pair in ts.pairs:
            db = dbs[pair.db_id_post]
            db.execute(parse_sql(pair.sql_post, db.schema))

    def test_strict_filter_drops_equal_denotations(self, dbs, lex, sql_corpus):
        loose = generate_sql_testset(
            sql_corpus, dbs, lex, POLICY, "db-number", strict_denotation_filter=False
        )
        strict = generate_sql_testset(
            sql_corpus, dbs, lex, POLICY, "db-number", strict_denotation_filter=True
        )
        assert any(p.flags["denotation_equal"] for p in loose.pairs)
        assert all(not p.flags["denotation_equal"] for p in strict.pairs)
        assert len(strict.pairs) < len(loose.pairs)

    def test_reproducible(self, dbs, lex, sql_corpus):
        a = generate_sql_testset(sql_corpus, dbs, lex, POLICY, "nondb-number")
        b = generate_sql_testset(sql_corpus, dbs, lex, POLICY, "nondb-number")
        assert [(p.id, p.nlq_post, p.sql_post) for p in a.pairs] == [
            (p.id, p.nlq_post, p.sql_post) for p in b.pairs
        ]

    def test_cap_of_five_per_example(self, dbs, lex, sql_corpus):
        ts = generate_sql_testset(
            sql_corpus, dbs, lex, POLICY, "db-number", strict_denotation_filter=False
        )
        per_example: dict[int, int] = {}
        for pair in ts.pairs:
            per_example[pair.source_id] = per_example.get(pair.source_id, 0) + 1
        assert per_example and all(count <= 5 for count in per_example.values())
