"""A deterministic synthetic language model with controllable norm skew.

The model is a desk-scale stand-in for a multilingual LLM. Its output
embeddings carry family structure (tokens of one family share a latent
direction) and its hidden states point toward the family the sequence is
meant to stay in, plus seeded per-step noise. Logits are exactly
``embeddings.T @ h``, so the norm decomposition of real models holds:
scaling CJ embedding columns by ``norm_skew`` inflates raw CJ logits
without touching their cosine similarity, which is what makes confusion
appear under sampling and disappear under norm adjustment.

Determinism: every byte, weight, and step output is a pure function of
the config and the context. Per-step randomness comes from a hash of
(seed, first two context tokens, position, last token), never from
carried RNG state, so replaying any context reproduces the step.

Sequence identities: benchmark sequences are addressed by an integer id.
``prompt_for`` maps an id to a two-token prompt drawn from the intended
family, and ``step`` recovers the intent from those prompt tokens, so
ground truth stays available to evaluation code without side channels.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from lcgate.families import FAMILY_INDEX, LanguageFamily
from lcgate.sampling import embedding_norms
from lcgate.vocab import TokenEntry, VocabClassification, classify_vocabulary

CJ = LanguageFamily.CJ
LATIN = LanguageFamily.LATIN
SYMBOLS = LanguageFamily.SYMBOLS
LOWRES = LanguageFamily.LOWRES

# Family coherence of token embeddings: e = COHERENCE * u_family + rest.
_COHERENCE = 0.75
_SYMBOL_INTENT_PULL = 0.35
_SWITCH_INTENT_PULL = 0.25

_SYMBOL_CHARS = ".,!?;:()-+*/=<>[]{}%&#@0123456789 \n'\"~^|"


@dataclass(frozen=True)
class SynthConfig:
    tokens_per_family: tuple[int, int, int, int] = (96, 96, 32, 96)
    d_model: int = 32
    norm_skew: float = 1.5
    intent_margin: float = 11.0
    noise_scale: float = 0.55
    seed: int = 0
    # Artifact knobs beyond the core mechanism:
    intent_weights: tuple[float, float, float] = (0.3, 0.4, 0.3)  # CJ, Latin, LowRes
    symbol_rate: float = 0.12
    switch_rate: float = 0.0  # planted legitimate Latin switches

    def __post_init__(self):
        if len(self.tokens_per_family) != 4 or min(self.tokens_per_family) < 1:
            raise ValueError("tokens_per_family needs four positive counts")
        if sum(self.tokens_per_family) < 8:
            raise ValueError("total vocabulary must be at least 8")
        if self.d_model < 4:
            raise ValueError("d_model must be at least 4")
        if self.norm_skew <= 0 or self.intent_margin <= 0:
            raise ValueError("norm_skew and intent_margin must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if len(self.intent_weights) != 3 or min(self.intent_weights) < 0:
            raise ValueError("intent_weights needs three non-negative weights")
        if sum(self.intent_weights) <= 0:
            raise ValueError("intent_weights must not all be zero")
        if not 0.0 <= self.symbol_rate < 1.0 or not 0.0 <= self.switch_rate < 1.0:
            raise ValueError("symbol_rate and switch_rate must be in [0, 1)")


def _latin_word(i: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    word = letters[(i // 26) % 26] + letters[i % 26]
    if i >= 676:
        word += letters[(i // 676) % 26]
    return " " + word


def _token_bytes(family: LanguageFamily, i: int) -> bytes:
    if family is CJ:
        return chr(0x4E00 + i).encode("utf-8")
    if family is LATIN:
        return _latin_word(i).encode("utf-8")
    if family is SYMBOLS:
        if i < len(_SYMBOL_CHARS):
            return _SYMBOL_CHARS[i].encode("utf-8")
        return chr(0x2010 + (i - len(_SYMBOL_CHARS))).encode("utf-8")
    return (" " + chr(0x0410 + (i // 24) % 24) + chr(0x0430 + i % 24)).encode("utf-8")


def build_vocab(tokens_per_family: tuple[int, int, int, int]) -> list[TokenEntry]:
    """Token bytes depend only on the counts, so models with the same
    counts share a vocabulary regardless of seed."""
    entries = []
    tid = 0
    for family, count in zip((CJ, LATIN, SYMBOLS, LOWRES), tokens_per_family):
        for i in range(count):
            entries.append(TokenEntry(tid, _token_bytes(family, i)))
            tid += 1
    return entries


def _hash_rng(*parts: int) -> np.random.Generator:
    payload = struct.pack(f"<{len(parts)}q", *parts)
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class TraceModelError(TypeError):
    pass


class SyntheticModel:
    """StepModel over the synthetic vocabulary and embedding table."""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.vocabulary = build_vocab(config.tokens_per_family)
        self.classes: VocabClassification = classify_vocabulary(self.vocabulary)
        fam_arr = self.classes.family_array()

        rng = np.random.default_rng(config.seed)
        d = config.d_model
        # Orthonormal family directions, then unit token embeddings around them.
        q, _ = np.linalg.qr(rng.standard_normal((d, 4)))
        self._family_dirs = q.T  # (4, d) rows ordered by FAMILY_INDEX
        res = math.sqrt(1.0 - _COHERENCE**2)
        cols = []
        for tid in range(len(self.vocabulary)):
            g = rng.standard_normal(d)
            g /= np.linalg.norm(g)
            e = _COHERENCE * self._family_dirs[fam_arr[tid]] + res * g
            e /= np.linalg.norm(e)
            if fam_arr[tid] == FAMILY_INDEX[CJ]:
                e = e * config.norm_skew
            cols.append(e)
        self.embeddings = np.stack(cols, axis=1)  # (d, |V|)
        self.norms = embedding_norms(self.embeddings)
        self.d_in = d

        self._fam_arr = fam_arr
        self._intent_families = (CJ, LATIN, LOWRES)
        w = np.asarray(config.intent_weights, dtype=np.float64)
        self._intent_cdf = np.cumsum(w / w.sum())

    # -- sequence identities ------------------------------------------------

    def intent_of(self, sequence_id: int) -> LanguageFamily:
        """Ground-truth family the sequence is constructed to stay in."""
        u = _hash_rng(self.config.seed, 0x9E37, sequence_id).random()
        pick = int(np.searchsorted(self._intent_cdf, u, side="right"))
        return self._intent_families[min(pick, 2)]

    def prompt_for(self, sequence_id: int) -> list[int]:
        """Two distinct-per-id prompt tokens drawn from the intent family."""
        fam = self.intent_of(sequence_id)
        members = self.classes.ids_of(fam)
        n = len(members)
        if sequence_id >= n * n:
            raise ValueError(f"sequence_id {sequence_id} exceeds addressable range {n * n}")
        return [int(members[(sequence_id // n) % n]), int(members[sequence_id % n])]

    def _context_intent(self, context) -> LanguageFamily:
        for tid in (context[min(1, len(context) - 1)], context[0]):
            fam = self._fam_arr[int(tid)]
            if fam != FAMILY_INDEX[SYMBOLS]:
                return (CJ, LATIN, SYMBOLS, LOWRES)[fam]
        return LATIN

    # -- planted structure ---------------------------------------------------

    def _step_kind(self, context) -> str:
        coin = _hash_rng(
            self.config.seed, 0x51EB, int(context[0]), int(context[1]) if len(context) > 1 else -1,
            len(context),
        )
        if coin.random() < self.config.symbol_rate:
            return "symbol"
        intent = self._context_intent(context)
        if intent is not LATIN and coin.random() < self.config.switch_rate:
            return "switch"
        return "normal"

    def switch_positions(self, sequence_id: int, max_steps: int) -> list[int]:
        """Generation-step offsets where a legitimate Latin switch is planted."""
        prompt = self.prompt_for(sequence_id)
        positions = []
        for step in range(max_steps):
            ctx_stub = prompt + [0] * step  # kind depends only on prompt and length
            if self._step_kind(ctx_stub) == "switch":
                positions.append(step)
        return positions

    # -- the step function ----------------------------------------------------

    def step(self, context) -> tuple[np.ndarray, np.ndarray]:
        """Hidden state and raw logits for the next position."""
        if len(context) == 0:
            raise ValueError("context must hold at least one token")
        intent = self._context_intent(context)
        kind = self._step_kind(context)
        noise_rng = _hash_rng(
            self.config.seed, 0xC0FF, int(context[0]),
            int(context[1]) if len(context) > 1 else -1, len(context), int(context[-1]),
        )
        zeta = noise_rng.standard_normal(self.config.d_model)
        zeta /= np.linalg.norm(zeta)
        u_intent = self._family_dirs[FAMILY_INDEX[intent]]
        if kind == "symbol":
            direction = self._family_dirs[FAMILY_INDEX[SYMBOLS]] + _SYMBOL_INTENT_PULL * u_intent
        elif kind == "switch":
            direction = self._family_dirs[FAMILY_INDEX[LATIN]] + _SWITCH_INTENT_PULL * u_intent
        else:
            direction = u_intent
        direction = direction + self.config.noise_scale * zeta
        h = self.config.intent_margin * direction / np.linalg.norm(direction)
        logits = self.embeddings.T @ h
        return h, logits


def build_synthetic(config: SynthConfig) -> SyntheticModel:
    return SyntheticModel(config)


def intent_of(model, sequence_id: int) -> LanguageFamily:
    """Ground-truth intent; only synthetic models carry one."""
    if not isinstance(model, SyntheticModel):
        raise TraceModelError("ground-truth intent is only defined for synthetic models")
    return model.intent_of(sequence_id)
