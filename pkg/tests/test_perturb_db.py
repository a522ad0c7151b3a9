import json

import pytest

from fixtures_data import fixture_databases
from sqlperturb.corpus import Example
from sqlperturb.errors import DataError
from sqlperturb.perturb_db import (
    RewriteUnsupported,
    SubstitutionLexicon,
    load_rename_lexicon,
    load_transform_lexicon,
    perturb_dbcontent,
    perturb_schema,
    rewrite_for_transform,
)
from sqlperturb.sampling import SamplingPolicy
from sqlperturb.sqlast import parse_sql, print_sql
from sqlperturb.store import ContentTransform, denotations_equal

POLICY = SamplingPolicy(repeats=5, seed=11)


@pytest.fixture()
def tennis_lexicon():
    return SubstitutionLexicon(
        {
            "tennis": {
                ("matches", "winner_name"): ["champ_name"],
                ("players", "country"): ["nation", "homeland"],
                ("players", "ranking_points"): ["rank_pts"],
            }
        }
    )


@pytest.fixture()
def small_corpus():
    return [
        Example(
            "Who are the 3 youngest winners?",
            "SELECT winner_name FROM matches ORDER BY winner_age ASC LIMIT 3",
            "tennis",
        ),
        Example("How many players are there?", "SELECT count(*) FROM players", "tennis"),
        Example(
            "List players from Japan.",
            "SELECT name FROM players WHERE country = 'Japan'",
            "tennis",
        ),
    ]


class TestPerturbSchema:
    def test_winner_name_pair(self, dbs, small_corpus, tennis_lexicon):
        ts = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        champ_pairs = [p for p in ts.pairs if "champ_name" in p.sql_post]
        assert champ_pairs, "expected a winner_name -> champ_name pair"
        pair = champ_pairs[0]
        assert pair.nlq_post == pair.nlq_pre  # question untouched
        assert "winner_name" not in pair.sql_post
        assert pair.db_id_post in ts.databases
        assert ts.databases[pair.db_id_post].schema.has_column("matches", "champ_name")

    def test_untouched_examples_excluded(self, dbs, small_corpus, tennis_lexicon):
        ts = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        assert all(p.source_id != 1 for p in ts.pairs)  # count(*) touches no column

    def test_empty_lexicon_no_pairs(self, dbs, small_corpus):
        empty = SubstitutionLexicon({})
        ts = perturb_schema(small_corpus, dbs, empty, POLICY, "schema-abbreviation")
        assert ts.pairs == [] and ts.databases == {}

    def test_reproducible(self, dbs, small_corpus, tennis_lexicon):
        a = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        b = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        assert [p.id for p in a.pairs] == [p.id for p in b.pairs]
        assert [p.sql_post for p in a.pairs] == [p.sql_post for p in b.pairs]

    def test_different_seeds_differ(self, dbs, small_corpus, tennis_lexicon):
        a = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        b = perturb_schema(
            small_corpus, dbs, tennis_lexicon, SamplingPolicy(repeats=5, seed=99),
            "schema-synonym",
        )
        assert [p.provenance for p in a.pairs] != [p.provenance for p in b.pairs]

    def test_pre_post_denotations_equal(self, dbs, small_corpus, tennis_lexicon):
        ts = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        for pair in ts.pairs:
            pre_db = dbs[pair.db_id_pre]
            post_db = ts.databases[pair.db_id_post]
            pre = pre_db.execute(parse_sql(pair.sql_pre, pre_db.schema))
            post = post_db.execute(parse_sql(pair.sql_post, post_db.schema))
            assert denotations_equal(pre, post)

    def test_no_duplicate_pairs(self, dbs, small_corpus, tennis_lexicon):
        ts = perturb_schema(small_corpus, dbs, tennis_lexicon, POLICY, "schema-synonym")
        keys = {(p.nlq_post, p.sql_post, p.db_id_post) for p in ts.pairs}
        assert len(keys) == len(ts.pairs)

    def test_collision_candidate_rejected(self, dbs):
        bad = SubstitutionLexicon({"tennis": {("players", "country"): ["age"]}})
        with pytest.raises(DataError):
            perturb_schema([], dbs, bad, POLICY, "schema-synonym")

    def test_lexicon_file_loading(self, tmp_path, dbs, small_corpus):
        path = tmp_path / "lex.json"
        path.write_text(
            json.dumps({"tennis": {"players": {"country": ["nation"]}}}), encoding="utf-8"
        )
        lexicon = load_rename_lexicon(path)
        ts = perturb_schema(small_corpus, dbs, lexicon, POLICY, "schema-synonym")
        assert any("nation" in p.sql_post for p in ts.pairs)


AGE_TO_BIRTHYEAR = ContentTransform(
    kind="number-remap", table="singer", source="age", targets=("birthyear",),
    scale=-1, offset=2023,
)
NAME_SPLIT = ContentTransform(
    kind="split-text", table="singer", source="name", targets=("firstname", "lastname"),
)
PETTYPE_TO_BOOL = ContentTransform(
    kind="text-to-bool", table="pets", source="pettype", targets=("is_dog",),
    true_value="dog", false_value="cat",
)


class TestRewriteRules:
    def setup_method(self):
        self.dbs = fixture_databases()

    def parse(self, query, db_id):
        return parse_sql(query, self.dbs[db_id].schema)

    def test_select_split(self):
        out = rewrite_for_transform(self.parse("SELECT name FROM singer", "concerts"), NAME_SPLIT)
        assert print_sql(out) == "SELECT firstname, lastname FROM singer"

    def test_where_bool(self):
        out = rewrite_for_transform(
            self.parse("SELECT count(*) FROM pets WHERE pettype = 'dog'", "pets"),
            PETTYPE_TO_BOOL,
        )
        assert print_sql(out) == "SELECT count(*) FROM pets WHERE is_dog = 1"

    def test_order_flip_with_limit(self):
        out = rewrite_for_transform(
            self.parse("SELECT name FROM singer ORDER BY age ASC LIMIT 1", "concerts"),
            AGE_TO_BIRTHYEAR,
        )
        assert print_sql(out) == "SELECT name FROM singer ORDER BY birthyear DESC LIMIT 1"

    def test_implicit_asc_also_flips(self):
        out = rewrite_for_transform(
            self.parse("SELECT name FROM singer ORDER BY age LIMIT 1", "concerts"),
            AGE_TO_BIRTHYEAR,
        )
        assert "ORDER BY birthyear DESC LIMIT 1" in print_sql(out)

    def test_comparison_flip(self):
        out = rewrite_for_transform(
            self.parse("SELECT name FROM singer WHERE age >= 40", "concerts"),
            AGE_TO_BIRTHYEAR,
        )
        assert print_sql(out) == "SELECT name FROM singer WHERE birthyear <= 1983"

    def test_between_flip(self):
        out = rewrite_for_transform(
            self.parse("SELECT name FROM singer WHERE age BETWEEN 30 AND 45", "concerts"),
            AGE_TO_BIRTHYEAR,
        )
        assert print_sql(out) == "SELECT name FROM singer WHERE birthyear BETWEEN 1978 AND 1993"

    def test_equality_no_flip(self):
        out = rewrite_for_transform(
            self.parse("SELECT name FROM singer WHERE age = 52", "concerts"),
            AGE_TO_BIRTHYEAR,
        )
        assert print_sql(out) == "SELECT name FROM singer WHERE birthyear = 1971"

    def test_group_by_expansion(self):
        out = rewrite_for_transform(
            self.parse("SELECT count(*) FROM singer GROUP BY name", "concerts"), NAME_SPLIT
        )
        assert print_sql(out) == "SELECT count(*) FROM singer GROUP BY firstname, lastname"

    def test_split_where_inequality_singleton(self):
        out = rewrite_for_transform(
            self.parse("SELECT country FROM singer WHERE name != 'Joe Sharp'", "concerts"),
            NAME_SPLIT,
        )
        assert (
            print_sql(out)
            == "SELECT country FROM singer WHERE firstname != 'Joe' OR lastname != 'Sharp'"
        )

    def test_split_inequality_in_and_context_drops(self):
        ast = self.parse(
            "SELECT country FROM singer WHERE name != 'Joe Sharp' AND age > 30", "concerts"
        )
        with pytest.raises(RewriteUnsupported):
            rewrite_for_transform(ast, NAME_SPLIT)

    def test_aggregate_over_source_drops(self):
        for query in (
            "SELECT avg(age) FROM singer",
            "SELECT max(age) FROM singer",
            "SELECT name FROM singer ORDER BY avg(age) DESC",
        ):
            with pytest.raises(RewriteUnsupported):
                rewrite_for_transform(self.parse(query, "concerts"), AGE_TO_BIRTHYEAR)

    def test_like_on_source_drops(self):
        ast = self.parse("SELECT country FROM singer WHERE name LIKE 'Joe'", "concerts")
        with pytest.raises(RewriteUnsupported):
            rewrite_for_transform(ast, NAME_SPLIT)

    def test_order_by_reencoded_text_drops(self):
        ast = self.parse("SELECT petid FROM pets ORDER BY pettype ASC", "pets")
        with pytest.raises(RewriteUnsupported):
            rewrite_for_transform(ast, PETTYPE_TO_BOOL)

    def test_rewrite_inside_subquery(self):
        ast = self.parse(
            "SELECT concert_id FROM singer_in_concert WHERE singer_id IN "
            "(SELECT singer_id FROM singer WHERE age > 30)",
            "concerts",
        )
        out = rewrite_for_transform(ast, AGE_TO_BIRTHYEAR)
        assert "birthyear < 1993" in print_sql(out)


class TestPerturbDbContent:
    @pytest.fixture()
    def transforms(self):
        return SubstitutionLexicon(
            {
                "concerts": {
                    ("singer", "age"): [AGE_TO_BIRTHYEAR],
                    ("singer", "name"): [NAME_SPLIT],
                },
                "pets": {("pets", "pettype"): [PETTYPE_TO_BOOL]},
            }
        )

    @pytest.fixture()
    def content_corpus(self):
        return [
            Example("List all singer names.", "SELECT name FROM singer", "concerts"),
            Example(
                "Find the country of the youngest singer.",
                "SELECT country FROM singer ORDER BY age ASC LIMIT 1",
                "concerts",
            ),
            Example(
                "How many dog pets are there?",
                "SELECT count(*) FROM pets WHERE pettype = 'dog'",
                "pets",
            ),
            Example(
                "What is the average age of singers?",
                "SELECT avg(age) FROM singer",
                "concerts",
            ),
        ]

    def test_worked_rewrites_produced(self, dbs, transforms, content_corpus):
        ts = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        posts = {p.sql_post for p in ts.pairs}
        assert "SELECT firstname, lastname FROM singer" in posts
        assert "SELECT country FROM singer ORDER BY birthyear DESC LIMIT 1" in posts
        assert "SELECT count(*) FROM pets WHERE is_dog = 1" in posts

    def test_aggregate_examples_dropped(self, dbs, transforms, content_corpus):
        ts = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        assert all(p.source_id != 3 for p in ts.pairs)  # avg(age) has no rewrite

    def test_post_gold_executes(self, dbs, transforms, content_corpus):
        ts = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        for pair in ts.pairs:
            post_db = ts.databases[pair.db_id_post]
            post_db.execute(parse_sql(pair.sql_post, post_db.schema))

    def test_top_k_identity_preserved_under_flip(self, dbs, transforms, content_corpus):
        ts = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        flipped = [p for p in ts.pairs if "birthyear DESC" in p.sql_post]
        assert flipped
        for pair in flipped:
            pre_db = dbs[pair.db_id_pre]
            post_db = ts.databases[pair.db_id_post]
            pre = pre_db.execute(parse_sql(pair.sql_pre, pre_db.schema))
            post = post_db.execute(parse_sql(pair.sql_post, post_db.schema))
            assert pre.rows == post.rows  # same singers selected

    def test_reproducible(self, dbs, transforms, content_corpus):
        a = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        b = perturb_dbcontent(content_corpus, dbs, transforms, POLICY)
        assert [(p.id, p.sql_post) for p in a.pairs] == [(p.id, p.sql_post) for p in b.pairs]

    def test_transform_file_loading(self, tmp_path, dbs, content_corpus):
        spec = {
            "pets": {
                "pets": {
                    "pettype": [
                        {
                            "kind": "text-to-bool",
                            "targets": ["is_dog"],
                            "true_value": "dog",
                            "false_value": "cat",
                        }
                    ]
                }
            }
        }
        path = tmp_path / "transforms.json"
        path.write_text(json.dumps(spec), encoding="utf-8")
        lexicon = load_transform_lexicon(path)
        ts = perturb_dbcontent(content_corpus, dbs, lexicon, POLICY)
        assert any("is_dog = 1" in p.sql_post for p in ts.pairs)
