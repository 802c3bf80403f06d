"""UTF-8 unit decoding and codepoint bounds for incomplete sequences.

A byte-level BPE vocabulary contains tokens that are not valid UTF-8 on
their own. The decoder here splits raw token bytes into three kinds of
units:

* ``Complete`` -- a fully decoded character,
* ``LeftPartial`` -- a valid multi-byte start that the token cuts short
  (only ever the final unit),
* ``Invalid`` -- a byte that cannot continue or start a character, such
  as a bare continuation byte.

``infer_partial_bounds`` turns a left-partial prefix into the inclusive
range of codepoints it could complete to, by filling the missing
continuation bytes with their smallest and largest valid values. The
valid value windows follow the UTF-8 shortest-form rules, so surrogates
and codepoints above U+10FFFF are never included in a range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Complete:
    codepoint: int
    span: bytes


@dataclass(frozen=True)
class LeftPartial:
    span: bytes


@dataclass(frozen=True)
class Invalid:
    byte: int

    @property
    def span(self) -> bytes:
        return bytes([self.byte])


Utf8Unit = Union[Complete, LeftPartial, Invalid]


def _lead_info(b: int) -> tuple[int, int, int, int] | None:
    """(sequence length, payload bits, second-byte lo, second-byte hi) or None.

    None for bytes that can never start a character: continuations,
    overlong leads 0xC0/0xC1, and 0xF5..0xFF.
    """
    if b <= 0x7F:
        return (1, b, 0, 0)
    if 0xC2 <= b <= 0xDF:
        return (2, b & 0x1F, 0x80, 0xBF)
    if b == 0xE0:
        return (3, 0, 0xA0, 0xBF)
    if 0xE1 <= b <= 0xEC or 0xEE <= b <= 0xEF:
        return (3, b & 0x0F, 0x80, 0xBF)
    if b == 0xED:  # exclude surrogates U+D800..U+DFFF
        return (3, 0x0D, 0x80, 0x9F)
    if b == 0xF0:
        return (4, 0, 0x90, 0xBF)
    if 0xF1 <= b <= 0xF3:
        return (4, b & 0x07, 0x80, 0xBF)
    if b == 0xF4:  # cap at U+10FFFF
        return (4, 4, 0x80, 0x8F)
    return None


def decode_utf8_units(data: bytes) -> list[Utf8Unit]:
    """Split raw bytes into complete, left-partial, and invalid units.

    The concatenation of unit spans always equals the input. A broken
    multi-byte sequence is emitted as one Invalid unit per consumed byte
    and scanning resumes at the offending byte.
    """
    units: list[Utf8Unit] = []
    i = 0
    n = len(data)
    while i < n:
        info = _lead_info(data[i])
        if info is None:
            units.append(Invalid(data[i]))
            i += 1
            continue
        length, cp, lo2, hi2 = info
        if length == 1:
            units.append(Complete(cp, data[i : i + 1]))
            i += 1
            continue
        j = i + 1
        broken = False
        while j < i + length and j < n:
            lo, hi = (lo2, hi2) if j == i + 1 else (0x80, 0xBF)
            if not lo <= data[j] <= hi:
                broken = True
                break
            cp = (cp << 6) | (data[j] & 0x3F)
            j += 1
        if broken:
            for k in range(i, j):
                units.append(Invalid(data[k]))
            i = j
        elif j - i == length:
            units.append(Complete(cp, bytes(data[i:j])))
            i = j
        else:  # input ended mid-character
            units.append(LeftPartial(bytes(data[i:j])))
            i = j
    return units


def infer_partial_bounds(prefix: bytes) -> tuple[int, int] | None:
    """Inclusive codepoint range reachable by completing a partial sequence.

    Missing continuation bytes are assumed at their minimum valid value
    for the lower bound and maximum valid value for the upper bound.
    Returns None when the prefix cannot start any valid character.
    """
    if not prefix:
        return None
    info = _lead_info(prefix[0])
    if info is None:
        return None
    length, base, lo2, hi2 = info
    if length == 1 or len(prefix) >= length:
        return None  # not a partial sequence
    lo = hi = base
    for pos in range(1, length):
        blo, bhi = (lo2, hi2) if pos == 1 else (0x80, 0xBF)
        if pos < len(prefix):
            c = prefix[pos]
            if not blo <= c <= bhi:
                return None
            lo = (lo << 6) | (c & 0x3F)
            hi = (hi << 6) | (c & 0x3F)
        else:
            lo = (lo << 6) | (blo & 0x3F)
            hi = (hi << 6) | (bhi & 0x3F)
    return lo, hi
