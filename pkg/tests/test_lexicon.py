import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqlperturb import numwords
from sqlperturb.errors import DataError
from sqlperturb.lexicon import (
    IndicatorLexicon,
    find_phrase_occurrences,
    find_phrase_spans,
    load_lexicon,
)


class TestLexiconLoading:
    def test_default_files_load(self, lex):
        assert lex.keyword_phrases[">"][0] == "more than"
        assert len(lex.comparison_rows) == 8
        assert len(lex.sort_rows) == 6
        assert len(lex.sort_limit_rows) == 9

    def test_phrases_lowercase_enforced(self):
        with pytest.raises(DataError):
            IndicatorLexicon(
                keyword_phrases={">": ("More Than",)},
                comparison_rows=(),
                sort_rows=(),
                sort_limit_rows=(),
            )

    def test_custom_file_override(self, tmp_path, lex):
        path = tmp_path / "kw.json"
        path.write_text('{">": ["beyond"]}', encoding="utf-8")
        custom = load_lexicon(keyword_file=path)
        assert custom.keyword_phrases[">"] == ("beyond",)
        assert custom.comparison_rows == lex.comparison_rows


class TestCorrespondences:
    def test_more_than_at_least(self, lex):
        targets = lex.comparison_candidates(">", "more than")
        assert targets[">="] == "at least"
        assert targets["<"] == "less than"
        assert targets["<="] == "at most"

    def test_blank_cells_unavailable(self, lex):
        targets = lex.comparison_candidates(">", "above")
        assert set(targets) == {"<"}  # 'above' has no >= or <= counterpart

    def test_older_younger(self, lex):
        assert lex.comparison_candidates(">", "older than") == {"<": "younger than"}

    def test_or_more_or_less(self, lex):
        assert lex.comparison_candidates(">=", "or more") == {"<=": "or less"}

    def test_sort_pairs(self, lex):
        key, phrase = lex.sort_counterpart("from the oldest to the youngest", False)
        assert key == "DESC" and phrase == "from the youngest to the oldest"

    def test_sort_limit_pairs(self, lex):
        key, phrase = lex.sort_counterpart("youngest", True)
        assert key == "ASC LIMIT" and phrase == "oldest"
        key, phrase = lex.sort_counterpart("most", True)
        assert key == "DESC LIMIT" and phrase == "least"

    def test_unknown_phrase(self, lex):
        assert lex.sort_counterpart("sideways", True) is None


class TestSpanMatching:
    def test_longest_match_wins(self):
        spans = find_phrase_spans(
            "find airlines with at least 10 flights",
            {"at least": "<=ish", "least": "sort"},
        )
        assert [s.phrase for s in spans] == ["at least"]

    def test_word_boundaries(self):
        assert find_phrase_occurrences("the USA team", "US") == []
        assert find_phrase_occurrences("the US team", "US") == [(4, 6)]

    def test_case_insensitive(self):
        spans = find_phrase_spans("More than one", {"more than": ">"})
        assert len(spans) == 1 and spans[0].start == 0

    def test_non_overlapping(self):
        spans = find_phrase_spans("more than more than", {"more than": ">"})
        assert len(spans) == 2

    def test_keyword_filter(self, lex):
        spans = lex.find_keyword_spans("the number of old singers", keywords={"count()"})
        assert [s.tag for s in spans] == ["count()"]


class TestNumberSurfaces:
    def test_render_examples(self):
        assert numwords.render("digit", 3) == "3"
        assert numwords.render("ordinal-digit", 4) == "4th"
        assert numwords.render("ordinal-digit", 2) == "2nd"
        assert numwords.render("ordinal-digit", 11) == "11th"
        assert numwords.render("ordinal-digit", 23) == "23rd"
        assert numwords.render("number-word", 4) == "four"
        assert numwords.render("number-word", 21) == "twenty-one"
        assert numwords.render("number-word", 100) == "one hundred"

    def test_word_out_of_range(self):
        with pytest.raises(ValueError):
            numwords.render("number-word", 101)
        with pytest.raises(ValueError):
            numwords.render("number-word", -1)

    @given(st.integers(0, 100), st.sampled_from(numwords.SURFACE_KINDS))
    def test_render_parse_inverse(self, value, kind):
        assert numwords.parse(kind, numwords.render(kind, value)) == value

    def test_find_mentions_surfaces(self):
        mentions = numwords.find_number_mentions("the 3rd of three or 3 items", 3)
        kinds = [m.kind for m in mentions]
        assert kinds == ["ordinal-digit", "number-word", "digit"]

    def test_digit_not_inside_bigger_number(self):
        assert numwords.find_number_mentions("we saw 33 birds", 3) == []
        assert numwords.find_number_mentions("pay 3.5 dollars", 3) == []

    def test_hyphen_and_space_words(self):
        assert numwords.find_number_mentions("twenty one dogs", 21)[0].kind == "number-word"
        assert numwords.find_number_mentions("twenty-one dogs", 21)[0].kind == "number-word"

    def test_match_case(self):
        assert numwords.match_case("Three", "four") == "Four"
        assert numwords.match_case("three", "four") == "four"
        assert numwords.match_case("THREE", "four") == "FOUR"
