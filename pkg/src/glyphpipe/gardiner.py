"""Gardiner sign codes and the code-to-transliteration lexicon.

Codes follow the sign-list grammar: a category letter (A-Z without J, or the
two-letter categories Aa, NL, NU), a number 1-999 without leading zeros, and
an optional lowercase variant letter. Transliterations use the MdC ASCII
convention so the corpus stays greppable; a display mapping for Unicode
Egyptological characters lives in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .errors import GlyphPipeError

MDC_ALPHABET = frozenset("AiyawbpfmnrhHxXzsSqkgtTdD")

KINDS = ("uniliteral", "biliteral", "triliteral", "determinative", "logogram")

_TWO_LETTER = ("Aa", "NL", "NU")
_SINGLE = frozenset("ABCDEFGHIKLMNOPQRSTUVWXYZ")  # no J section in the sign list


class BadCategory(GlyphPipeError):
    pass


class BadNumber(GlyphPipeError):
    pass


class TrailingGarbage(GlyphPipeError):
    pass


class UnknownCode(GlyphPipeError):
    """Lookup failed; the offending code text is the first argument."""

    def __init__(self, code_text: str):
        super().__init__(f"code {code_text!r} not in lexicon")
        self.code_text = code_text


class DuplicateCode(GlyphPipeError):
    pass


class InvariantViolation(GlyphPipeError):
    pass


@dataclass(frozen=True, order=True)
class GardinerCode:
    category: str
    number: int
    variant: str = ""

    def __str__(self) -> str:
        return f"{self.category}{self.number}{self.variant}"


def parse_gardiner(text: str) -> GardinerCode:
    """Parse the canonical text form; the whole input must match."""
    if not text:
        raise BadCategory("empty code")
    if text[:2] in _TWO_LETTER:
        category, rest = text[:2], text[2:]
    elif text[0] in _SINGLE:
        category, rest = text[0], text[1:]
    else:
        raise BadCategory(f"{text!r}: no category at start")
    i = 0
    while i < len(rest) and rest[i].isdigit():
        i += 1
    digits, rest = rest[:i], rest[i:]
    if not digits or digits[0] == "0" or len(digits) > 3:
        raise BadNumber(f"{text!r}: sign number must be 1-999 without leading zeros")
    variant = ""
    if rest and "a" <= rest[0] <= "z":
        variant, rest = rest[0], rest[1:]
    if rest:
        raise TrailingGarbage(f"{text!r}: unexpected trailing {rest!r}")
    return GardinerCode(category, int(digits), variant)


def format_gardiner(code: GardinerCode) -> str:
    return str(code)


@dataclass(frozen=True)
class LexiconEntry:
    code: GardinerCode
    kind: str
    translit: str
    gloss: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvariantViolation(f"{self.code}: unknown kind {self.kind!r}")
        if (self.kind == "determinative") != (self.translit == ""):
            raise InvariantViolation(
                f"{self.code}: determinatives and only determinatives have empty transliteration"
            )
        bad = set(self.translit) - MDC_ALPHABET
        if bad:
            raise InvariantViolation(
                f"{self.code}: transliteration {self.translit!r} uses non-MdC characters {sorted(bad)}"
            )


@dataclass
class Lexicon:
    entries: dict[str, LexiconEntry] = field(default_factory=dict)
    version: str = "unversioned"

    def __len__(self) -> int:
        return len(self.entries)

    def covers(self, labels) -> list[str]:
        """Class labels with no lexicon entry (empty means full coverage)."""
        return [lab for lab in labels if lab not in self.entries]


def lookup(code: GardinerCode, lex: Lexicon) -> LexiconEntry:
    entry = lex.entries.get(str(code))
    if entry is None:
        raise UnknownCode(str(code))
    return entry


def sequence_to_translit(
    codes: list[GardinerCode], lex: Lexicon
) -> tuple[list[str], list[GardinerCode]]:
    """Map a sign sequence to transliteration tokens.

    Determinatives contribute no token; signs missing from the lexicon become
    ``<unk-CODE>`` tokens. Both are reported in ``dropped`` so a wall plate
    with unusual signs still translates end to end.
    """
    tokens: list[str] = []
    dropped: list[GardinerCode] = []
    for code in codes:
        try:
            entry = lookup(code, lex)
        except UnknownCode:
            tokens.append(f"<unk-{code}>")
            dropped.append(code)
            continue
        if entry.kind == "determinative":
            dropped.append(code)
        else:
            tokens.append(entry.translit)
    return tokens, dropped


def _parse_lexicon_lines(lines, origin: str) -> Lexicon:
    lex = Lexicon()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("version:"):
                lex.version = comment[len("version:") :].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise InvariantViolation(
                f"{origin}:{lineno}: expected code<TAB>kind<TAB>translit<TAB>gloss"
            )
        code_text, kind, translit, gloss = parts
        code = parse_gardiner(code_text)
        if str(code) != code_text:
            raise InvariantViolation(f"{origin}:{lineno}: {code_text!r} is not canonical")
        if code_text in lex.entries:
            raise DuplicateCode(f"{origin}:{lineno}: duplicate code {code_text!r}")
        lex.entries[code_text] = LexiconEntry(code, kind, translit, gloss)
    return lex


def load_lexicon(path) -> Lexicon:
    """Load a TSV lexicon (``code<TAB>kind<TAB>translit<TAB>gloss``, # comments)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_lexicon_lines(fh, str(path))


def serialize_lexicon(lex: Lexicon) -> str:
    """Canonical TSV text: version header, entries sorted by code."""
    out = [f"# version: {lex.version}\n"]
    for key in sorted(lex.entries, key=lambda k: lex.entries[k].code):
        e = lex.entries[key]
        out.append(f"{key}\t{e.kind}\t{e.translit}\t{e.gloss}\n")
    return "".join(out)


def bundled_lexicon() -> Lexicon:
    """The lexicon shipped with the package (~200 common signs)."""
    ref = resources.files("glyphpipe").joinpath("data/lexicon.tsv")
    with ref.open("r", encoding="utf-8") as fh:
        lex = _parse_lexicon_lines(fh, "bundled lexicon")
    return lex
