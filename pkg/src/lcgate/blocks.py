"""Unicode block table mapping codepoint ranges to language families.

Codepoints not covered by any listed block default to LOWRES, the
catch-all family for scripts of low-resource languages. Korean (Hangul)
is deliberately LOWRES rather than CJ: the CJ family covers Chinese and
Japanese scripts only, and Korean output must never be masked as CJ.
CJK punctuation (U+3000..U+303F) is SYMBOLS so that fullwidth commas and
quotes never trigger CJ masking.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

from lcgate.families import LanguageFamily

_CJ = LanguageFamily.CJ
_LAT = LanguageFamily.LATIN
_SYM = LanguageFamily.SYMBOLS
_LOW = LanguageFamily.LOWRES


@dataclass(frozen=True)
class BlockRange:
    name: str
    lo: int
    hi: int
    family: LanguageFamily


class UnicodeBlockTable:
    """Immutable, non-overlapping codepoint ranges with family lookup."""

    def __init__(self, blocks: list[BlockRange]):
        ordered = sorted(blocks, key=lambda b: b.lo)
        prev = None
        for b in ordered:
            if b.lo > b.hi:
                raise ValueError(f"block {b.name}: lo > hi")
            if prev is not None and b.lo <= prev.hi:
                raise ValueError(f"blocks {prev.name} and {b.name} overlap")
            prev = b
        self.blocks: tuple[BlockRange, ...] = tuple(ordered)
        self._los = [b.lo for b in ordered]
        self._his = [b.hi for b in ordered]
        self._fams = [b.family for b in ordered]

    def family_of(self, codepoint: int) -> LanguageFamily:
        """Family of a single codepoint; unlisted codepoints are LOWRES."""
        i = bisect_left(self._his, codepoint)
        if i < len(self._los) and self._los[i] <= codepoint <= self._his[i]:
            return self._fams[i]
        return _LOW

    def families_in_span(self, lo: int, hi: int) -> frozenset[LanguageFamily]:
        """All families occurring in the inclusive codepoint range [lo, hi].

        Gaps between listed blocks contribute LOWRES.
        """
        if lo > hi:
            raise ValueError("empty codepoint span")
        present: set[LanguageFamily] = set()
        cursor = lo
        i = bisect_left(self._his, lo)
        while i < len(self._los) and self._los[i] <= hi:
            if self._los[i] > cursor:
                present.add(_LOW)
            present.add(self._fams[i])
            cursor = self._his[i] + 1
            if cursor > hi:
                break
            i += 1
        if cursor <= hi:
            present.add(_LOW)
        return frozenset(present)

    def span_family(self, lo: int, hi: int) -> LanguageFamily:
        """Conservative family for a token that could be any codepoint in [lo, hi].

        CJ wins on any overlap with a CJ block; a span entirely inside
        Latin-letter blocks is LATIN; a span entirely in low-resource
        territory is LOWRES; anything mixed falls back to SYMBOLS.
        """
        present = self.families_in_span(lo, hi)
        if _CJ in present:
            return _CJ
        if present == {_LAT}:
            return _LAT
        if present == {_LOW}:
            return _LOW
        return _SYM

    def overlaps_family(self, lo: int, hi: int, family: LanguageFamily) -> bool:
        return family in self.families_in_span(lo, hi)


def _default_blocks() -> list[BlockRange]:
    b: list[BlockRange] = []

    def add(name, lo, hi, fam):
        b.append(BlockRange(name, lo, hi, fam))

    # Chinese / Japanese scripts.
    add("CJK Unified Ideographs", 0x4E00, 0x9FFF, _CJ)
    add("CJK Unified Ideographs Extension A", 0x3400, 0x4DBF, _CJ)
    add("CJK Unified Ideographs Extension B", 0x20000, 0x2A6DF, _CJ)
    add("CJK Compatibility Ideographs", 0xF900, 0xFAFF, _CJ)
    add("Hiragana", 0x3040, 0x309F, _CJ)
    add("Katakana", 0x30A0, 0x30FF, _CJ)
    add("Halfwidth Katakana", 0xFF66, 0xFF9F, _CJ)

    # Latin letters. Latin-1 arithmetic signs stay SYMBOLS.
    add("Basic Latin uppercase", 0x0041, 0x005A, _LAT)
    add("Basic Latin lowercase", 0x0061, 0x007A, _LAT)
    add("Latin-1 letters I", 0x00C0, 0x00D6, _LAT)
    add("Latin-1 letters II", 0x00D8, 0x00F6, _LAT)
    add("Latin-1 letters III", 0x00F8, 0x00FF, _LAT)
    add("Latin Extended-A", 0x0100, 0x017F, _LAT)
    add("Latin Extended-B", 0x0180, 0x024F, _LAT)
    add("IPA Extensions", 0x0250, 0x02AF, _LAT)
    add("Latin Extended Additional", 0x1E00, 0x1EFF, _LAT)
    add("Latin Extended-C", 0x2C60, 0x2C7F, _LAT)
    add("Latin Extended-D", 0xA720, 0xA7FF, _LAT)
    add("Latin Extended-E", 0xAB30, 0xAB6F, _LAT)
    add("Fullwidth Latin uppercase", 0xFF21, 0xFF3A, _LAT)
    add("Fullwidth Latin lowercase", 0xFF41, 0xFF5A, _LAT)

    # Punctuation, digits, whitespace, controls, misc signs.
    add("C0 controls and whitespace", 0x0000, 0x001F, _SYM)
    add("ASCII punctuation I", 0x0020, 0x002F, _SYM)
    add("ASCII digits", 0x0030, 0x0039, _SYM)
    add("ASCII punctuation II", 0x003A, 0x0040, _SYM)
    add("ASCII punctuation III", 0x005B, 0x0060, _SYM)
    add("ASCII punctuation IV", 0x007B, 0x007E, _SYM)
    add("Delete and C1 controls", 0x007F, 0x009F, _SYM)
    add("Latin-1 punctuation", 0x00A0, 0x00BF, _SYM)
    add("Multiplication sign", 0x00D7, 0x00D7, _SYM)
    add("Division sign", 0x00F7, 0x00F7, _SYM)
    add("Spacing modifier letters", 0x02B0, 0x02FF, _SYM)
    add("Combining diacritical marks", 0x0300, 0x036F, _SYM)
    add("General punctuation", 0x2000, 0x206F, _SYM)
    add("Superscripts and subscripts", 0x2070, 0x209F, _SYM)
    add("Currency symbols", 0x20A0, 0x20CF, _SYM)
    add("Letterlike symbols", 0x2100, 0x214F, _SYM)
    add("Number forms", 0x2150, 0x218F, _SYM)
    add("Arrows", 0x2190, 0x21FF, _SYM)
    add("Mathematical operators", 0x2200, 0x22FF, _SYM)
    add("Miscellaneous technical", 0x2300, 0x23FF, _SYM)
    add("Enclosed alphanumerics", 0x2460, 0x24FF, _SYM)
    add("Box drawing and blocks", 0x2500, 0x259F, _SYM)
    add("Geometric shapes", 0x25A0, 0x25FF, _SYM)
    add("Miscellaneous symbols", 0x2600, 0x26FF, _SYM)
    add("Dingbats", 0x2700, 0x27BF, _SYM)
    add("Supplemental punctuation", 0x2E00, 0x2E7F, _SYM)
    add("CJK symbols and punctuation", 0x3000, 0x303F, _SYM)
    add("Fullwidth punctuation I", 0xFF01, 0xFF0F, _SYM)
    add("Fullwidth digits", 0xFF10, 0xFF19, _SYM)
    add("Fullwidth punctuation II", 0xFF1A, 0xFF20, _SYM)
    add("Fullwidth punctuation III", 0xFF3B, 0xFF40, _SYM)
    add("Fullwidth and halfwidth punctuation IV", 0xFF5B, 0xFF65, _SYM)
    add("Fullwidth signs", 0xFFE0, 0xFFE6, _SYM)
    add("Variation selectors", 0xFE00, 0xFE0F, _SYM)
    add("Specials", 0xFFF0, 0xFFFF, _SYM)
    add("Private use area", 0xE000, 0xF8FF, _SYM)
    add("Emoji and pictographs", 0x1F000, 0x1FAFF, _SYM)
    add("Plane 15 private use", 0xF0000, 0xFFFFD, _SYM)
    add("Plane 16 private use", 0x100000, 0x10FFFD, _SYM)

    # Explicit low-resource scripts (behaviourally identical to the
    # default, listed so partial-token spans resolve without gaps).
    add("Greek and Coptic", 0x0370, 0x03FF, _LOW)
    add("Cyrillic", 0x0400, 0x04FF, _LOW)
    add("Cyrillic Supplement", 0x0500, 0x052F, _LOW)
    add("Hebrew", 0x0590, 0x05FF, _LOW)
    add("Arabic", 0x0600, 0x06FF, _LOW)
    add("Arabic Supplement", 0x0750, 0x077F, _LOW)
    add("Devanagari", 0x0900, 0x097F, _LOW)
    add("Thai", 0x0E00, 0x0E7F, _LOW)
    add("Hangul Jamo", 0x1100, 0x11FF, _LOW)
    add("Hangul Compatibility Jamo", 0x3130, 0x318F, _LOW)
    add("Hangul Syllables", 0xAC00, 0xD7AF, _LOW)

    return b


DEFAULT_BLOCKS = UnicodeBlockTable(_default_blocks())
