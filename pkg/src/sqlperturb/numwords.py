"""Number surfaces: digits, ordinal digits, and number words.

Rendering inverts parsing for each surface kind. Word rendering covers
zero through one hundred; larger values raise ValueError so callers can
fall back to the digit surface or skip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

DIGIT = "digit"
ORDINAL_DIGIT = "ordinal-digit"
NUMBER_WORD = "number-word"
SURFACE_KINDS = (DIGIT, ORDINAL_DIGIT, NUMBER_WORD)

_UNITS = (
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen",
)
_TENS = (
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy",
    "eighty", "ninety",
)

MAX_WORD_VALUE = 100


def number_word(value: int) -> str:
    if not 0 <= value <= MAX_WORD_VALUE:
        raise ValueError(f"no word rendering for {value}")
    if value == 100:
        return "one hundred"
    if value < 20:
        return _UNITS[value]
    tens, unit = divmod(value, 10)
    word = _TENS[tens]
    return f"{word}-{_UNITS[unit]}" if unit else word


def ordinal_suffix(value: int) -> str:
    if value % 100 in (11, 12, 13):
        return "th"
    return {1: "st", 2: "nd", 3: "rd"}.get(value % 10, "th")


def render(kind: str, value: int) -> str:
    if kind == DIGIT:
        return str(value)
    if kind == ORDINAL_DIGIT:
        return f"{value}{ordinal_suffix(value)}"
    if kind == NUMBER_WORD:
        return number_word(value)
    raise ValueError(f"unknown surface kind {kind!r}")


_WORD_VALUES: dict[str, int] = {}
for _v in range(MAX_WORD_VALUE + 1):
    _word = number_word(_v)
    _WORD_VALUES[_word] = _v
    if "-" in _word:
        _WORD_VALUES[_word.replace("-", " ")] = _v
    if " " in _word:
        _WORD_VALUES[_word.replace(" ", "-")] = _v


def parse(kind: str, text: str) -> int:
    text = text.strip().lower()
    if kind == DIGIT:
        return int(text)
    if kind == ORDINAL_DIGIT:
        match = re.fullmatch(r"(\d+)(st|nd|rd|th)", text)
        if not match or match.group(2) != ordinal_suffix(int(match.group(1))):
            raise ValueError(f"not an ordinal digit: {text!r}")
        return int(match.group(1))
    if kind == NUMBER_WORD:
        if text not in _WORD_VALUES:
            raise ValueError(f"not a number word: {text!r}")
        return _WORD_VALUES[text]
    raise ValueError(f"unknown surface kind {kind!r}")


@dataclass(frozen=True)
class NumberSurface:
    kind: str
    value: int

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")

    def render(self) -> str:
        return render(self.kind, self.value)


@dataclass(frozen=True)
class NumberMention:
    start: int
    end: int
    kind: str
    value: int

    @property
    def text(self):
        return None  # filled by caller context; kept minimal


_DIGIT_RE = re.compile(
    r"(?<![A-Za-z0-9_.])(\d+)(?:(\.\d+)|(st|nd|rd|th))?(?![A-Za-z0-9_])",
    re.IGNORECASE,
)

_WORD_RE = re.compile(
    r"(?<![A-Za-z-])("
    + "|".join(
        re.escape(w) for w in sorted(_WORD_VALUES, key=len, reverse=True)
    )
    + r")(?![A-Za-z-])",
    re.IGNORECASE,
)


def find_number_mentions(text: str, value: int) -> list[NumberMention]:
    """All mentions of `value` in the text, with their surface kind."""
    mentions: list[NumberMention] = []
    for match in _DIGIT_RE.finditer(text):
        if match.group(2):
            continue  # decimal; not an integer mention
        number = int(match.group(1))
        if number != value:
            continue
        kind = ORDINAL_DIGIT if match.group(3) else DIGIT
        if kind == ORDINAL_DIGIT and match.group(3).lower() != ordinal_suffix(number):
            continue
        mentions.append(NumberMention(match.start(), match.end(), kind, number))
    for match in _WORD_RE.finditer(text):
        number = _WORD_VALUES[match.group(1).lower()]
        if number == value:
            mentions.append(NumberMention(match.start(), match.end(), NUMBER_WORD, number))
    mentions.sort(key=lambda m: m.start)
    return mentions


def match_case(template: str, replacement: str) -> str:
    """Mirror the capitalization style of the replaced text."""
    if template.isupper() and len(template) > 1:
        return replacement.upper()
    if template[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement
