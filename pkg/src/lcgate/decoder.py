"""The gated decoding loop.

Per step, the pipeline is:

1. Build the sampleable candidate set C from the raw logits under the
   session's top-k / top-p / temperature.
2. Query the gate on the hidden state for allowed families, then widen
   the allowance with the never-masked families (Symbols, LowRes) and
   the family of the closest preceding non-symbol token.
3. Families present in C but not allowed, restricted to {CJ, Latin},
   are the mask candidates D. Empty D means no intervention.
4. Safety backoff: if no token of any gate-predicted family appears in
   either high-confidence set (top-k=5/top-p=0.999 or top-k=20/top-p=0.95
   of the raw distribution), the gate is contradicted by the model's own
   confident output and no mask is applied.
5. Otherwise D is masked over the full logit vector, the candidate set
   is recomputed (letting in-family tokens from outside the original C
   surface), and sampling proceeds. Should masking empty the
   distribution, the step falls back to the unmasked candidates and the
   outcome is flagged.

Every step consumes exactly one uniform draw from the session RNG, so a
gate that never intervenes leaves the sampled stream bit-identical to
ungated decoding. Passing ``rng=None`` selects greedily (highest
probability, ties to the lower token id).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lcgate.families import FAMILY_INDEX, FAMILY_ORDER, LanguageFamily
from lcgate.gate import GateParams, allowed_set, gate_forward
from lcgate.sampling import CandidateSet, SamplingParams, candidate_set, sample
from lcgate.vocab import VocabClassification

CJ = LanguageFamily.CJ
LATIN = LanguageFamily.LATIN
SYMBOLS = LanguageFamily.SYMBOLS
LOWRES = LanguageFamily.LOWRES

_MASKABLE = frozenset((CJ, LATIN))


@dataclass(frozen=True)
class RuleConfig:
    threshold: float = 0.5
    safety_set_1: tuple[int, float] = (5, 0.999)
    safety_set_2: tuple[int, float] = (20, 0.95)
    never_mask_protected: bool = True  # Symbols / LowRes exempt
    safety_backoff: bool = True  # skip masking when high-confidence sets disagree
    keep_prev_family: bool = True  # previous non-symbol family stays allowed


@dataclass
class DecodeState:
    context: list[int]
    prev_nonsymbol_family: LanguageFamily | None = None
    step_index: int = 0


@dataclass
class StepOutcome:
    token_id: int
    intervened: bool
    masked_families: frozenset[LanguageFamily]
    gate_allowed: frozenset[LanguageFamily] | None
    candidate_ids_before: list[int]
    candidate_ids_after: list[int] | None
    confusion_point: bool
    confusion_token_rank: int | None
    consistent_in_top3: bool | None
    fallback: bool = False


def detect_confusion_point(
    candidates: CandidateSet,
    prev: LanguageFamily | None,
    classes: VocabClassification,
) -> tuple[list[int], bool, bool] | None:
    """Candidate tokens whose family departs from the previous token's.

    Returns (confusion ids, top-1 is a confusion token, a prev-family
    token sits within the top 3), or None when there is no previous
    non-symbol family or no departing candidate. Symbols never count as
    confusion.
    """
    if prev is None:
        return None
    fam_arr = classes.family_array()
    fams = [FAMILY_ORDER[fam_arr[int(t)]] for t in candidates.ids]
    confusion = [
        int(t) for t, f in zip(candidates.ids, fams) if f is not prev and f is not SYMBOLS
    ]
    if not confusion:
        return None
    top1 = fams[0] is not prev and fams[0] is not SYMBOLS
    top3 = any(f is prev for f in fams[:3])
    return confusion, top1, top3


def _families_in(ids, fam_arr) -> frozenset[LanguageFamily]:
    return frozenset(FAMILY_ORDER[fam_arr[int(t)]] for t in ids)


def _pick(cset: CandidateSet, rng: np.random.Generator | None) -> int:
    if rng is None:
        return int(cset.ids[0])  # descending probs, ties already at lower id
    return sample(cset, rng)


def _mask_ids(logits: np.ndarray, fam_arr: np.ndarray, banned) -> np.ndarray:
    out = np.array(logits, dtype=np.float64, copy=True)
    for fam in banned:
        out[fam_arr == FAMILY_INDEX[fam]] = -np.inf
    return out


def gated_step(
    h: np.ndarray,
    logits: np.ndarray,
    gate: GateParams | None,
    state: DecodeState,
    params: SamplingParams,
    rules: RuleConfig,
    classes: VocabClassification,
    rng: np.random.Generator | None,
) -> StepOutcome:
    """One decode step under the intervention rules. Does not mutate state."""
    fam_arr = classes.family_array()
    cands = candidate_set(logits, params)
    detection = detect_confusion_point(cands, state.prev_nonsymbol_family, classes)
    confusion_rank = None
    consistent = None
    if detection is not None:
        confusion_ids, top1, consistent = detection
        ranks = {int(t): r for r, t in enumerate(cands.ids, start=1)}
        confusion_rank = min(ranks[t] for t in confusion_ids)

    def outcome(token, intervened, masked, after, predicted, fallback=False):
        return StepOutcome(
            token_id=token,
            intervened=intervened,
            masked_families=masked,
            gate_allowed=predicted,
            candidate_ids_before=[int(t) for t in cands.ids],
            candidate_ids_after=after,
            confusion_point=detection is not None,
            confusion_token_rank=confusion_rank,
            consistent_in_top3=consistent,
            fallback=fallback,
        )

    if gate is None:
        return outcome(_pick(cands, rng), False, frozenset(), None, None)

    predicted = allowed_set(gate_forward(gate, h), rules.threshold)
    allowed = set(predicted)
    if rules.never_mask_protected:
        allowed |= {SYMBOLS, LOWRES}
    if rules.keep_prev_family and state.prev_nonsymbol_family is not None:
        allowed.add(state.prev_nonsymbol_family)

    disallowed = _families_in(cands.ids, fam_arr) - allowed
    if rules.never_mask_protected:
        disallowed &= _MASKABLE
    if not disallowed:
        return outcome(_pick(cands, rng), False, frozenset(), None, predicted)

    if rules.safety_backoff:
        contradicted = True
        for k, p in (rules.safety_set_1, rules.safety_set_2):
            confident = candidate_set(logits, SamplingParams(k, p, 1.0))
            if _families_in(confident.ids, fam_arr) & predicted:
                contradicted = False
                break
        if contradicted:
            return outcome(_pick(cands, rng), False, frozenset(), None, predicted)

    masked_logits = _mask_ids(logits, fam_arr, disallowed)
    if not np.isfinite(masked_logits).any():
        return outcome(_pick(cands, rng), False, frozenset(), None, predicted, fallback=True)
    refined = candidate_set(masked_logits, params)
    return outcome(
        _pick(refined, rng),
        True,
        frozenset(disallowed),
        [int(t) for t in refined.ids],
        predicted,
    )


def _prompt_prev_family(
    prompt, classes: VocabClassification
) -> LanguageFamily | None:
    fam_arr = classes.family_array()
    for tid in reversed(list(prompt)):
        fam = FAMILY_ORDER[fam_arr[int(tid)]]
        if fam is not SYMBOLS:
            return fam
    return None


def decode_sequence(
    model,
    gate: GateParams | None,
    prompt,
    params: SamplingParams,
    rules: RuleConfig,
    rng: np.random.Generator | None,
    max_steps: int,
    classes: VocabClassification | None = None,
) -> tuple[list[int], list[StepOutcome]]:
    """Autoregressive decoding; ``gate=None`` is plain sampling."""
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if classes is None:
        classes = model.classes
    state = DecodeState(
        context=list(prompt),
        prev_nonsymbol_family=_prompt_prev_family(prompt, classes),
    )
    fam_arr = classes.family_array()
    tokens: list[int] = []
    outcomes: list[StepOutcome] = []
    for _ in range(max_steps):
        h, logits = model.step(state.context)
        out = gated_step(h, logits, gate, state, params, rules, classes, rng)
        tokens.append(out.token_id)
        outcomes.append(out)
        state.context.append(out.token_id)
        fam = FAMILY_ORDER[fam_arr[out.token_id]]
        if fam is not SYMBOLS:
            state.prev_nonsymbol_family = fam
        state.step_index += 1
    return tokens, outcomes


@dataclass
class SpecDecodeResult:
    tokens: list[int]
    proposed: int
    accepted: int

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def _vocab_matches(a, b) -> bool:
    if len(a) != len(b):
        return False
    return all(x.id == y.id and x.bytes == y.bytes for x, y in zip(a, b))


def speculative_decode(
    draft,
    target,
    gate: GateParams | None,
    rules: RuleConfig,
    params: SamplingParams,
    draft_len: int,
    prompt,
    max_steps: int,
    classes: VocabClassification | None = None,
) -> SpecDecodeResult:
    """Greedy speculative decoding with gate masking at verification.

    The draft proposes ``draft_len`` tokens by plain greedy argmax; the
    target re-evaluates each position and the gate mask applies to the
    target's logits using the target's hidden state. A draft token is
    accepted while it equals the gated greedy choice; the first mismatch
    emits the gated choice and restarts. The emitted stream is exactly
    the autoregressive gated greedy stream.
    """
    if draft_len < 1:
        raise ValueError("draft_len must be at least 1")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if not _vocab_matches(draft.vocabulary, target.vocabulary):
        raise ValueError("draft and target models must share a vocabulary")
    if classes is None:
        classes = target.classes
    fam_arr = classes.family_array()

    state = DecodeState(
        context=list(prompt),
        prev_nonsymbol_family=_prompt_prev_family(prompt, classes),
    )
    tokens: list[int] = []
    proposed = accepted = 0

    def emit(token: int) -> None:
        tokens.append(token)
        state.context.append(token)
        fam = FAMILY_ORDER[fam_arr[token]]
        if fam is not SYMBOLS:
            state.prev_nonsymbol_family = fam

    while len(tokens) < max_steps:
        draft_ctx = list(state.context)
        drafts: list[int] = []
        for _ in range(min(draft_len, max_steps - len(tokens))):
            _, dlogits = draft.step(draft_ctx)
            tok = int(np.argmax(dlogits))
            drafts.append(tok)
            draft_ctx.append(tok)

        all_accepted = True
        for dtok in drafts:
            h, logits = target.step(state.context)
            out = gated_step(h, logits, gate, state, params, rules, classes, rng=None)
            proposed += 1
            emit(out.token_id)
            if out.token_id != dtok:
                all_accepted = False
                break
            accepted += 1
            if len(tokens) >= max_steps:
                break
        if all_accepted and len(tokens) < max_steps:
            # Bonus token from the position after the verified block.
            h, logits = target.step(state.context)
            out = gated_step(h, logits, gate, state, params, rules, classes, rng=None)
            emit(out.token_id)
    return SpecDecodeResult(tokens=tokens, proposed=proposed, accepted=accepted)
