"""Confusion and code-switch metrics over generated text and step logs.

Character scans use the same block table as the masker, so the metric
and the intervention can never drift apart. "Latin characters" always
means Latin letters: digits and punctuation are symbol-class and appear
in virtually every reference, so counting them would empty the
no-Latin partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np

from lcgate.blocks import DEFAULT_BLOCKS, UnicodeBlockTable
from lcgate.decoder import DecodeState, RuleConfig, StepOutcome, gated_step
from lcgate.families import FAMILY_ORDER, LanguageFamily
from lcgate.gate import GateParams
from lcgate.sampling import SamplingParams
from lcgate.trace import Trace, sparse_logits
from lcgate.vocab import VocabClassification, classify_vocabulary

CJ = LanguageFamily.CJ
LATIN = LanguageFamily.LATIN
SYMBOLS = LanguageFamily.SYMBOLS


@dataclass(frozen=True)
class ResponseRecord:
    id: str
    text: str
    reference: str | None = None
    target_language: str | None = None


def round2(x: float) -> float:
    """Two decimals, halves away from zero."""
    return float(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def contains_family_chars(
    text: str, family: LanguageFamily, table: UnicodeBlockTable = DEFAULT_BLOCKS
) -> bool:
    """Character-level scan; only CJ and Latin are queryable."""
    if family not in (CJ, LATIN):
        raise ValueError("confusion detection is defined for CJ and Latin only")
    return any(table.family_of(ord(c)) is family for c in text)


def confusion_rate(
    responses: Sequence[ResponseRecord],
    family: LanguageFamily,
    table: UnicodeBlockTable = DEFAULT_BLOCKS,
) -> float:
    """Percent of responses containing at least one character of the family."""
    if not responses:
        raise ValueError("no responses")
    flagged = sum(contains_family_chars(r.text, family, table) for r in responses)
    return round2(100.0 * flagged / len(responses))


def flag_responses(
    responses: Sequence[ResponseRecord],
    family: LanguageFamily,
    table: UnicodeBlockTable = DEFAULT_BLOCKS,
) -> list[bool]:
    return [contains_family_chars(r.text, family, table) for r in responses]


def partition_by_reference(
    pairs: Iterable[ResponseRecord], table: UnicodeBlockTable = DEFAULT_BLOCKS
) -> tuple[list[ResponseRecord], list[ResponseRecord]]:
    """(no-Latin subset, with-Latin subset) by reference Latin letters."""
    no_latin: list[ResponseRecord] = []
    with_latin: list[ResponseRecord] = []
    for rec in pairs:
        if rec.reference is None:
            raise ValueError(f"response {rec.id!r} carries no reference text")
        if contains_family_chars(rec.reference, LATIN, table):
            with_latin.append(rec)
        else:
            no_latin.append(rec)
    return no_latin, with_latin


def code_switch_rate(
    responses: Sequence[ResponseRecord], table: UnicodeBlockTable = DEFAULT_BLOCKS
) -> float:
    """Percent of responses containing at least one Latin letter."""
    if not responses:
        raise ValueError("no responses")
    flagged = sum(contains_family_chars(r.text, LATIN, table) for r in responses)
    return round2(100.0 * flagged / len(responses))


@dataclass(frozen=True)
class ConfusionPointStats:
    points: int
    top1_confusion_frac: float | None
    top3_consistent_frac: float | None


def confusion_point_stats(outcomes: Iterable[StepOutcome]) -> ConfusionPointStats:
    """Aggregate rank statistics over steps flagged as confusion points."""
    points = 0
    top1 = 0
    top3 = 0
    for out in outcomes:
        if not out.confusion_point:
            continue
        points += 1
        top1 += out.confusion_token_rank == 1
        top3 += bool(out.consistent_in_top3)
    if points == 0:
        return ConfusionPointStats(0, None, None)
    return ConfusionPointStats(points, top1 / points, top3 / points)


def _prev_nonsymbol_at(trace: Trace, classes: VocabClassification, pos: int):
    """Nearest preceding non-symbol family, following the chosen/prev chain.

    Walks backwards while consecutive steps chain (prev_id equals the
    prior step's chosen_id); a chain break means an earlier sequence, so
    the scan stops there.
    """
    fam_arr = classes.family_array()
    cur = pos
    while True:
        pid = trace.steps[cur].prev_id
        fam = FAMILY_ORDER[fam_arr[pid]]
        if fam is not SYMBOLS:
            return fam
        if cur > 0 and trace.steps[cur - 1].chosen_id == pid:
            cur -= 1
        else:
            return None


def allowance_check(
    gate: GateParams,
    rules: RuleConfig,
    trace: Trace,
    positions: Sequence[int],
    params: SamplingParams = SamplingParams(20, 0.95, 1.0),
    classes: VocabClassification | None = None,
) -> float:
    """Percent of positions where the chosen token's family stays unmasked.

    Each position replays the recorded hidden state and sparse logits
    through the full rule pipeline; the position counts as allowed when
    the family of the token actually chosen there is not in the masked
    set. The masking decision is sampling-free, so no RNG is involved.
    """
    if not positions:
        raise ValueError("no positions to check")
    if classes is None:
        classes = classify_vocabulary(trace.vocab)
    fam_arr = classes.family_array()
    vocab_size = trace.meta.vocab_size
    allowed = 0
    for pos in positions:
        step = trace.steps[pos]
        logits = sparse_logits(step.raw_ids, step.raw_probs, vocab_size)
        state = DecodeState(
            context=[step.prev_id],
            prev_nonsymbol_family=_prev_nonsymbol_at(trace, classes, pos),
        )
        out = gated_step(
            np.asarray(step.h, dtype=np.float64),
            logits,
            gate,
            state,
            params,
            rules,
            classes,
            rng=None,
        )
        fam = FAMILY_ORDER[fam_arr[step.chosen_id]]
        if fam not in out.masked_families:
            allowed += 1
    return round2(100.0 * allowed / len(positions))
