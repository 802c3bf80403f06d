"""Logits-space primitives for sampling-based decoding.

All probability math runs in float64. Candidate selection is fully
deterministic: probabilities are sorted descending with ties broken by
lower token id, top-k applies before top-p, and the nucleus keeps the
smallest prefix whose cumulative mass reaches top_p (the crossing token
is included). Masked logits are -inf and survive every transformation
as zero-probability entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lcgate.families import FAMILY_INDEX, LanguageFamily
from lcgate.vocab import VocabClassification

_MASKABLE = (LanguageFamily.CJ, LanguageFamily.LATIN)


@dataclass(frozen=True)
class SamplingParams:
    top_k: int
    top_p: float
    temperature: float = 1.0

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class CandidateSet:
    """Sampleable token ids, descending probability, renormalized to 1."""

    ids: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def embedding_norms(output_matrix: np.ndarray) -> np.ndarray:
    """Euclidean norm of each column of a (d_model, |V|) output matrix."""
    m = np.asarray(output_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError("output matrix must be 2-D with at least one row")
    norms = np.sqrt(np.sum(m * m, axis=0))
    if not (norms > 0.0).all():
        bad = int(np.argmin(norms))
        raise ValueError(f"zero-norm embedding column at index {bad}")
    return norms


def norm_adjust(logits: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Divide each logit by its token's embedding norm; -inf passes through."""
    logits = np.asarray(logits, dtype=np.float64)
    norms = np.asarray(norms, dtype=np.float64)
    if logits.shape != norms.shape:
        raise ValueError(f"length mismatch: {logits.shape} logits vs {norms.shape} norms")
    return logits / norms


def softmax_with_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Numerically stable temperature softmax; -inf entries map to 0."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.isfinite(logits)
    if not finite.any():
        raise ValueError("no finite logit")
    scaled = logits / temperature
    shifted = scaled - scaled[finite].max()
    probs = np.where(np.isneginf(shifted), 0.0, np.exp(shifted))
    return probs / probs.sum()


def descending_order(values: np.ndarray) -> np.ndarray:
    """Indices sorting values descending, ties broken by lower index."""
    return np.lexsort((np.arange(len(values)), -values))


def candidate_set(logits: np.ndarray, params: SamplingParams) -> CandidateSet:
    """Hybrid top-k / top-p candidate set over temperature-scaled logits."""
    probs = softmax_with_temperature(logits, params.temperature)
    order = descending_order(probs)
    top = order[: min(params.top_k, len(order))]
    kept = probs[top]
    positive = kept > 0.0
    top, kept = top[positive], kept[positive]
    cum = np.cumsum(kept)
    cut = int(np.searchsorted(cum, params.top_p, side="left"))
    cut = min(cut, len(top) - 1)
    ids = top[: cut + 1]
    mass = kept[: cut + 1]
    total = math.fsum(mass.tolist())
    return CandidateSet(ids=ids, probs=mass / total)


def mask_families(
    logits: np.ndarray,
    classes: VocabClassification,
    banned: set[LanguageFamily] | frozenset[LanguageFamily],
) -> np.ndarray:
    """Set logits of banned-family tokens to -inf.

    Only CJ and Latin may ever be banned; Symbols and low-resource
    tokens are never maskable.
    """
    for fam in banned:
        if fam not in _MASKABLE:
            raise ValueError(f"family {fam} is never maskable")
    out = np.array(logits, dtype=np.float64, copy=True)
    if not banned:
        return out
    fam_arr = classes.family_array()
    if len(fam_arr) != len(out):
        raise ValueError("classification size does not match logits length")
    for fam in banned:
        out[fam_arr == FAMILY_INDEX[fam]] = -np.inf
    return out


def sample(cset: CandidateSet, rng: np.random.Generator) -> int:
    """Draw one token id by inverse CDF; deterministic given (seed, set)."""
    if len(cset) == 0:
        raise ValueError("empty candidate set")
    u = rng.random()
    cum = np.cumsum(cset.probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(cset) - 1)
    return int(cset.ids[idx])


def top_norm_fraction(
    norms: np.ndarray,
    classes: VocabClassification,
    percentile: float,
) -> dict[LanguageFamily, float]:
    """Per family: percent of its tokens inside the global top-norm slice.

    The slice holds the ceil(percentile * |V|) largest norms, ties broken
    by lower id. Families with no tokens are omitted.
    """
    if not 0.0 < percentile < 1.0:
        raise ValueError("percentile must be in (0, 1)")
    norms = np.asarray(norms, dtype=np.float64)
    fam_arr = classes.family_array()
    if len(fam_arr) != len(norms):
        raise ValueError("classification size does not match norms length")
    m = math.ceil(percentile * len(norms))
    high = descending_order(norms)[:m]
    high_mask = np.zeros(len(norms), dtype=bool)
    high_mask[high] = True
    result: dict[LanguageFamily, float] = {}
    for fam, idx in FAMILY_INDEX.items():
        members = fam_arr == idx
        total = int(members.sum())
        if total == 0:
            continue
        result[fam] = 100.0 * int((members & high_mask).sum()) / total
    return result
