"""Keyword-indicator lexicon: phrase tables, span matching, correspondences.

The shipped data files cover the common indicator phrases for comparison
operators, aggregates, and sort directions, with phrase correspondences
used when an operator or direction is flipped. Users may point the loader
at extended copies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

from .errors import DataError

COMPARISON_OPS = (">", "<", ">=", "<=")
SORT_KEYS = ("ASC", "DESC")
SORT_LIMIT_KEYS = ("ASC LIMIT", "DESC LIMIT")


@dataclass(frozen=True)
class PhraseSpan:
    start: int
    end: int
    phrase: str  # lexicon form, lowercase
    tag: str


@dataclass(frozen=True)
class IndicatorLexicon:
    keyword_phrases: dict[str, tuple[str, ...]]
    comparison_rows: tuple[dict[str, tuple[str, ...]], ...]
    sort_rows: tuple[dict[str, tuple[str, ...]], ...]
    sort_limit_rows: tuple[dict[str, tuple[str, ...]], ...]

    def __post_init__(self):
        for phrases in self.keyword_phrases.values():
            _check_lower(phrases)
        for rows, keys in (
            (self.comparison_rows, COMPARISON_OPS),
            (self.sort_rows, SORT_KEYS),
            (self.sort_limit_rows, SORT_LIMIT_KEYS),
        ):
            for row in rows:
                for key, phrases in row.items():
                    if key not in keys:
                        raise DataError(f"unexpected correspondence key {key!r}")
                    if not phrases:
                        raise DataError(f"empty phrase list under {key!r}")
                    _check_lower(phrases)

    # -- span matching ------------------------------------------------

    def find_keyword_spans(self, text: str, keywords=None) -> list[PhraseSpan]:
        """Longest-match, non-overlapping indicator spans for the given keywords."""
        phrase_map: dict[str, str] = {}
        for keyword, phrases in self.keyword_phrases.items():
            if keywords is not None and keyword not in keywords:
                continue
            for phrase in phrases:
                phrase_map.setdefault(phrase, keyword)
        return find_phrase_spans(text, phrase_map)

    # -- comparison correspondences ------------------------------------

    def comparison_candidates(self, source_op: str, phrase: str) -> dict[str, str]:
        """Target operators reachable from one matched phrase.

        Returns {target_op: replacement phrase} for every operator the
        phrase's correspondence row covers, excluding the source operator.
        Blank cells in the row make that target unavailable.
        """
        for row in self.comparison_rows:
            if phrase in row.get(source_op, ()):
                return {
                    op: phrases[0]
                    for op, phrases in row.items()
                    if op != source_op and phrases
                }
        return {}

    def comparison_phrases(self, op: str) -> tuple[str, ...]:
        out = []
        for row in self.comparison_rows:
            out.extend(row.get(op, ()))
        return tuple(dict.fromkeys(out))

    # -- sort correspondences -------------------------------------------

    def sort_counterpart(self, phrase: str, with_limit: bool) -> tuple[str, str] | None:
        """(source direction key, replacement phrase) for a sort indicator."""
        rows = self.sort_limit_rows if with_limit else self.sort_rows
        keys = SORT_LIMIT_KEYS if with_limit else SORT_KEYS
        for row in rows:
            for key in keys:
                if phrase in row.get(key, ()):
                    other = keys[1 - keys.index(key)]
                    if row.get(other):
                        return key, row[other][0]
        return None

    def sort_phrases(self, direction_key: str, with_limit: bool) -> tuple[str, ...]:
        rows = self.sort_limit_rows if with_limit else self.sort_rows
        out = []
        for row in rows:
            out.extend(row.get(direction_key, ()))
        return tuple(dict.fromkeys(out))


def _check_lower(phrases):
    for phrase in phrases:
        if phrase != phrase.lower():
            raise DataError(f"lexicon phrases must be lowercase: {phrase!r}")


def _phrase_pattern(phrase: str) -> re.Pattern:
    return re.compile(r"(?<![A-Za-z0-9_])" + re.escape(phrase) + r"(?![A-Za-z0-9_])",
                      re.IGNORECASE)


def find_phrase_spans(text: str, phrase_map: dict[str, str]) -> list[PhraseSpan]:
    """Non-overlapping matches, longer phrases shadowing shorter ones."""
    spans: list[PhraseSpan] = []
    taken: list[tuple[int, int]] = []
    for phrase in sorted(phrase_map, key=len, reverse=True):
        for match in _phrase_pattern(phrase).finditer(text):
            start, end = match.start(), match.end()
            if any(start < e and s < end for s, e in taken):
                continue
            taken.append((start, end))
            spans.append(PhraseSpan(start, end, phrase, phrase_map[phrase]))
    spans.sort(key=lambda s: s.start)
    return spans


def find_phrase_occurrences(text: str, phrase: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in _phrase_pattern(phrase).finditer(text)]


def _load_json(path_or_none, package_file: str):
    if path_or_none is not None:
        with open(path_or_none, encoding="utf-8") as fh:
            return json.load(fh)
    ref = resources.files("sqlperturb.data").joinpath(package_file)
    return json.loads(ref.read_text(encoding="utf-8"))


def load_lexicon(
    keyword_file=None,
    comparison_file=None,
    sort_file=None,
    sort_limit_file=None,
) -> IndicatorLexicon:
    """Load the indicator lexicon, defaulting to the shipped data files."""
    keywords = _load_json(keyword_file, "keyword_indicators.json")
    comparison = _load_json(comparison_file, "comparison_pairs.json")
    sort = _load_json(sort_file, "sort_pairs.json")
    sort_limit = _load_json(sort_limit_file, "sort_limit_pairs.json")

    def freeze_rows(obj):
        return tuple({k: tuple(v) for k, v in row.items()} for row in obj["rows"])

    return IndicatorLexicon(
        keyword_phrases={k: tuple(v) for k, v in keywords.items()},
        comparison_rows=freeze_rows(comparison),
        sort_rows=freeze_rows(sort),
        sort_limit_rows=freeze_rows(sort_limit),
    )
