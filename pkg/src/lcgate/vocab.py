"""Exhaustive classification of a BPE vocabulary into language families.

Classification is a prioritized heuristic over decoded characters: any
CJ character makes a token CJ; otherwise Latin letters mixed with
symbols make it Latin; all-symbol tokens are SYMBOLS; everything else is
LOWRES. Tokens whose bytes cut a character short are resolved through
the codepoint bounds of ``infer_partial_bounds``; tokens that cannot be
resolved (bare continuation bytes, empty byte strings used by special
tokens) fall back to SYMBOLS so they are never maskable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from lcgate.blocks import DEFAULT_BLOCKS, UnicodeBlockTable
from lcgate.families import FAMILY_INDEX, FAMILY_ORDER, LanguageFamily, parse_family
from lcgate.utf8 import Complete, Invalid, LeftPartial, decode_utf8_units, infer_partial_bounds


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class TokenEntry:
    """One vocabulary token: integer id plus raw surface-form bytes."""

    id: int
    bytes: bytes
    norm: float | None = None


@dataclass
class VocabClassification:
    """Total map token id -> family, with per-family counts."""

    families: dict[int, LanguageFamily]
    counts: dict[LanguageFamily, int]
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def family_array(self) -> np.ndarray:
        """Families as an int8 array indexed by token id (FAMILY_ORDER codes).

        Requires ids to be exactly 0..n-1, which holds for any vocabulary
        exported from a real tokenizer or built synthetically.
        """
        if self._dense is None:
            n = len(self.families)
            arr = np.full(n, -1, dtype=np.int8)
            for tid, fam in self.families.items():
                if not 0 <= tid < n:
                    raise ClassificationError(
                        f"token ids are not contiguous from 0 (saw id {tid} in a vocab of {n})"
                    )
                arr[tid] = FAMILY_INDEX[fam]
            self._dense = arr
        return self._dense

    def ids_of(self, family: LanguageFamily) -> np.ndarray:
        arr = self.family_array()
        return np.nonzero(arr == FAMILY_INDEX[family])[0]

    @property
    def size(self) -> int:
        return len(self.families)


def _combine(fams: Sequence[LanguageFamily]) -> LanguageFamily:
    """Prioritized merge of per-unit families into one token family."""
    if LanguageFamily.CJ in fams:
        return LanguageFamily.CJ
    allowed_latin = (LanguageFamily.LATIN, LanguageFamily.SYMBOLS)
    if all(f in allowed_latin for f in fams) and LanguageFamily.LATIN in fams:
        return LanguageFamily.LATIN
    if all(f is LanguageFamily.SYMBOLS for f in fams):
        return LanguageFamily.SYMBOLS
    return LanguageFamily.LOWRES


def classify_codepoints(
    chars: Sequence[int], table: UnicodeBlockTable = DEFAULT_BLOCKS
) -> LanguageFamily:
    """Family of a fully decoded character sequence."""
    if not chars:
        raise ValueError("empty codepoint sequence")
    return _combine([table.family_of(c) for c in chars])


def classify_token(data: bytes, table: UnicodeBlockTable = DEFAULT_BLOCKS) -> LanguageFamily:
    """Family of a raw token byte string, partial characters included."""
    if not data:
        return LanguageFamily.SYMBOLS
    fams: list[LanguageFamily] = []
    for unit in decode_utf8_units(data):
        if isinstance(unit, Complete):
            fams.append(table.family_of(unit.codepoint))
        elif isinstance(unit, LeftPartial):
            bounds = infer_partial_bounds(unit.span)
            fams.append(table.span_family(*bounds) if bounds else LanguageFamily.SYMBOLS)
        else:
            assert isinstance(unit, Invalid)
            fams.append(LanguageFamily.SYMBOLS)
    return _combine(fams)


def classify_vocabulary(
    entries: Sequence[TokenEntry], table: UnicodeBlockTable = DEFAULT_BLOCKS
) -> VocabClassification:
    """Classify every token; exhaustive and mutually exclusive by construction."""
    if not entries:
        raise ClassificationError("empty vocabulary")
    families: dict[int, LanguageFamily] = {}
    counts = {f: 0 for f in FAMILY_ORDER}
    for e in entries:
        if e.id in families:
            raise ClassificationError(f"duplicate token id {e.id}")
        fam = classify_token(e.bytes, table)
        families[e.id] = fam
        counts[fam] += 1
    return VocabClassification(families=families, counts=counts)


# ---------------------------------------------------------------------------
# File formats: JSON Lines, one record per token.


def read_vocab_jsonl(path) -> list[TokenEntry]:
    """Read records {"id": int, "bytes_hex": str, "norm"?: float}."""
    entries: list[TokenEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                tid = int(rec["id"])
                raw = bytes.fromhex(rec["bytes_hex"])
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as err:
                raise ClassificationError(f"{path}: line {lineno}: {err}") from None
            norm = float(rec["norm"]) if "norm" in rec else None
            entries.append(TokenEntry(id=tid, bytes=raw, norm=norm))
    if not entries:
        raise ClassificationError(f"{path}: no vocabulary records")
    return entries


def vocab_record(entry: TokenEntry) -> str:
    rec: dict = {"id": entry.id, "bytes_hex": entry.bytes.hex()}
    if entry.norm is not None:
        rec["norm"] = float(np.float32(entry.norm))
    return json.dumps(rec)


def write_vocab_jsonl(path, entries: Iterable[TokenEntry]) -> None:
    from lcgate.jsonl import atomic_write_lines

    atomic_write_lines(path, (vocab_record(e) for e in entries))


def write_classification_jsonl(path, classes: VocabClassification) -> None:
    """One {"id", "family"} record per token plus a trailing counts summary."""
    from lcgate.jsonl import atomic_write_lines

    def lines():
        for tid in sorted(classes.families):
            yield json.dumps({"id": tid, "family": classes.families[tid].value})
        yield json.dumps({"counts": {f.value: classes.counts[f] for f in FAMILY_ORDER}})

    atomic_write_lines(path, lines())


def read_classification_jsonl(path) -> VocabClassification:
    families: dict[int, LanguageFamily] = {}
    counts: dict[LanguageFamily, int] | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ClassificationError(f"{path}: line {lineno}: {err}") from None
            if "counts" in rec:
                counts = {parse_family(k): int(v) for k, v in rec["counts"].items()}
            else:
                try:
                    families[int(rec["id"])] = parse_family(rec["family"])
                except (KeyError, ValueError) as err:
                    raise ClassificationError(f"{path}: line {lineno}: {err}") from None
    if not families:
        raise ClassificationError(f"{path}: no classification records")
    tallied = {f: 0 for f in FAMILY_ORDER}
    for fam in families.values():
        tallied[fam] += 1
    if counts is not None and counts != tallied:
        raise ClassificationError(f"{path}: summary counts disagree with records")
    return VocabClassification(families=families, counts=tallied)
