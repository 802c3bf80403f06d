"""Logits-space primitives against independent brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcgate.families import LanguageFamily
from lcgate.sampling import (
    CandidateSet,
    SamplingParams,
    candidate_set,
    embedding_norms,
    mask_families,
    norm_adjust,
    sample,
    softmax_with_temperature,
    top_norm_fraction,
)
from lcgate.vocab import TokenEntry, classify_vocabulary

CJ = LanguageFamily.CJ
LATIN = LanguageFamily.LATIN
SYMBOLS = LanguageFamily.SYMBOLS
LOWRES = LanguageFamily.LOWRES


def oracle_candidates(probs, k, p):
    """Independent selection logic: python sort, sequential prefix scan.

    Operates on the same post-softmax probabilities as the implementation
    so the check isolates top-k/top-p selection, ordering, and tie-breaks.
    """
    probs = [float(x) for x in probs]
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    top = [i for i in order[:k] if probs[i] > 0.0]
    cum = 0.0
    kept = []
    for i in top:
        kept.append(i)
        cum += probs[i]
        if cum >= p:
            break
    total = math.fsum(probs[i] for i in kept)
    return kept, [probs[i] / total for i in kept]


def one_per_family_classes():
    entries = [
        TokenEntry(0, "中".encode()),
        TokenEntry(1, b"the"),
        TokenEntry(2, b"!"),
        TokenEntry(3, "א".encode()),
    ]
    return classify_vocabulary(entries)


class TestEmbeddingNorms:
    def test_three_four_five(self):
        assert embedding_norms(np.array([[3.0], [4.0]]))[0] == pytest.approx(5.0)

    def test_identity_columns(self):
        assert embedding_norms(np.eye(6)) == pytest.approx(np.ones(6))

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(8, 16))
        got = embedding_norms(m)
        for j in range(16):
            want = math.sqrt(math.fsum(m[i, j] ** 2 for i in range(8)))
            assert got[j] == pytest.approx(want, abs=1e-12)

    def test_zero_column_rejected(self):
        m = np.ones((4, 3))
        m[:, 1] = 0.0
        with pytest.raises(ValueError, match="index 1"):
            embedding_norms(m)


class TestNormAdjust:
    def test_direct_division_flips_argmax(self):
        out = norm_adjust(np.array([2.0, 3.0]), np.array([1.0, 2.0]))
        assert out == pytest.approx([2.0, 1.5])
        assert np.argmax(out) == 0

    def test_unit_norms_identity(self):
        logits = np.array([0.5, -1.0, 7.0])
        assert norm_adjust(logits, np.ones(3)) == pytest.approx(logits)

    def test_neg_inf_passes_through(self):
        out = norm_adjust(np.array([-np.inf, 1.0]), np.array([2.0, 2.0]))
        assert np.isneginf(out[0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            norm_adjust(np.zeros(3), np.ones(2))

    def test_high_norm_top1_drops_out_of_adjusted_top10(self):
        # One inflated-norm token outranks 12 moderate tokens raw, then
        # falls below all of them once the norm is divided out.
        logits = np.array([9.0] + [8.0 - 0.1 * i for i in range(12)])
        norms = np.array([3.0] + [1.0] * 12)
        assert np.argmax(logits) == 0
        adjusted = norm_adjust(logits, norms)
        top10 = np.argsort(-adjusted)[:10]
        assert 0 not in top10

    def test_preserves_order_within_equal_norms(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=20)
        norms = np.full(20, 1.7)
        assert list(np.argsort(-norm_adjust(logits, norms))) == list(np.argsort(-logits))

    def test_argmax_equals_cosine_argmax_for_true_logits(self):
        rng = np.random.default_rng(5)
        d, v = 12, 40
        emb = rng.normal(size=(d, v))
        h = rng.normal(size=d)
        logits = emb.T @ h
        adjusted = norm_adjust(logits, embedding_norms(emb))
        cos = np.array(
            [np.dot(h, emb[:, i]) / (np.linalg.norm(h) * np.linalg.norm(emb[:, i])) for i in range(v)]
        )
        assert np.argmax(adjusted) == np.argmax(cos)


class TestSoftmax:
    def test_symmetry(self):
        assert softmax_with_temperature(np.zeros(2), 1.0) == pytest.approx([0.5, 0.5])

    def test_hand_computed(self):
        got = softmax_with_temperature(np.array([2.0, 1.0, 0.0]), 1.0)
        assert got == pytest.approx([0.66524, 0.24473, 0.09003], abs=1e-5)

    def test_masked_entry(self):
        got = softmax_with_temperature(np.array([-np.inf, 0.0]), 1.0)
        assert got == pytest.approx([0.0, 1.0])

    def test_all_masked_rejected(self):
        with pytest.raises(ValueError):
            softmax_with_temperature(np.array([-np.inf, -np.inf]), 1.0)

    @settings(max_examples=100)
    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=30),
        st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_sums_to_one_and_shift_invariant(self, vals, temp):
        logits = np.array(vals)
        p1 = softmax_with_temperature(logits, temp)
        p2 = softmax_with_temperature(logits + 13.25, temp)
        assert abs(p1.sum() - 1.0) < 1e-9
        assert p1 == pytest.approx(p2, abs=1e-9)


class TestCandidateSet:
    def test_worked_nucleus_example(self):
        # Cumulative mass of the first two tokens is 0.90997 >= 0.9; the
        # renormalized pair is exp(2)/(exp(2)+exp(1)) = e/(1+e).
        cset = candidate_set(np.array([2.0, 1.0, 0.0]), SamplingParams(3, 0.9, 1.0))
        assert list(cset.ids) == [0, 1]
        e = math.e
        assert cset.probs == pytest.approx([e / (1 + e), 1 / (1 + e)], abs=1e-9)

    def test_k1_is_argmax(self):
        cset = candidate_set(np.array([0.3, 2.0, 1.0]), SamplingParams(1, 0.5, 1.0))
        assert list(cset.ids) == [1]
        assert cset.probs == pytest.approx([1.0])

    def test_full_k_full_p_keeps_all_finite(self):
        logits = np.array([1.0, -np.inf, 0.0, 2.0])
        cset = candidate_set(logits, SamplingParams(4, 1.0, 1.0))
        assert sorted(cset.ids.tolist()) == [0, 2, 3]

    def test_ties_break_by_lower_id(self):
        cset = candidate_set(np.zeros(5), SamplingParams(3, 1.0, 1.0))
        assert list(cset.ids) == [0, 1, 2]

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-30, 30), min_size=2, max_size=40),
        st.integers(1, 40),
        st.sampled_from([0.5, 0.9, 0.95, 0.999, 1.0]),
        st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_matches_oracle(self, vals, k, p, temp):
        logits = np.array(vals)
        got = candidate_set(logits, SamplingParams(k, p, temp))
        ids, probs = oracle_candidates(softmax_with_temperature(logits, temp), k, p)
        assert got.ids.tolist() == ids
        assert got.probs.tolist() == probs

    def test_probs_positive_descending_normalized(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(size=64) * 3
            cset = candidate_set(logits, SamplingParams(20, 0.95, 1.0))
            assert (cset.probs > 0).all()
            assert (np.diff(cset.probs) <= 0).all()
            assert abs(cset.probs.sum() - 1.0) < 1e-9


class TestMaskFamilies:
    def test_empty_ban_identity(self):
        classes = one_per_family_classes()
        logits = np.array([1.0, 2.0, 3.0, 4.0])
        assert mask_families(logits, classes, set()) == pytest.approx(logits)

    def test_cj_ban_hits_exactly_cj(self):
        classes = one_per_family_classes()
        out = mask_families(np.ones(4), classes, {CJ})
        assert np.isneginf(out[0])
        assert out[1:] == pytest.approx([1.0, 1.0, 1.0])

    @pytest.mark.parametrize("fam", [SYMBOLS, LOWRES])
    def test_protected_families_rejected(self, fam):
        classes = one_per_family_classes()
        with pytest.raises(ValueError, match="never maskable"):
            mask_families(np.ones(4), classes, {fam})

    def test_mask_then_candidates_never_banned(self):
        classes = one_per_family_classes()
        rng = np.random.default_rng(9)
        for _ in range(100):
            logits = rng.normal(size=4) * 4
            masked = mask_families(logits, classes, {CJ, LATIN})
            cset = candidate_set(masked, SamplingParams(4, 1.0, 1.0))
            assert 0 not in cset.ids and 1 not in cset.ids


class TestSample:
    def test_singleton(self):
        cset = CandidateSet(ids=np.array([42]), probs=np.array([1.0]))
        for seed in (0, 1, 7):
            assert sample(cset, np.random.default_rng(seed)) == 42

    def test_frequency_matches_probs(self):
        cset = CandidateSet(ids=np.array([7, 9]), probs=np.array([0.5, 0.5]))
        rng = np.random.default_rng(42)
        draws = [sample(cset, rng) for _ in range(10_000)]
        assert abs(draws.count(7) / 10_000 - 0.5) < 0.02

    def test_same_seed_same_sequence(self):
        cset = CandidateSet(ids=np.array([1, 2, 3]), probs=np.array([0.2, 0.3, 0.5]))
        r1, r2 = np.random.default_rng(123), np.random.default_rng(123)
        assert [sample(cset, r1) for _ in range(100)] == [sample(cset, r2) for _ in range(100)]


class TestTopNormFraction:
    def test_uniform_norms_interleaved_families(self):
        # Families cycle by id so the tie-broken top slice (here 8 ids,
        # divisible by 4) spreads exactly evenly.
        entries = []
        reps = ["中", "a", "!", "ж"]
        for i in range(40):
            entries.append(TokenEntry(i, reps[i % 4].encode()))
        classes = classify_vocabulary(entries)
        fractions = top_norm_fraction(np.ones(40), classes, 0.2)
        for fam in (CJ, LATIN, SYMBOLS, LOWRES):
            assert fractions[fam] == pytest.approx(20.0)

    def test_scaled_family_dominates(self):
        entries = []
        for i in range(30):
            entries.append(TokenEntry(i, "中".encode()))
        for i in range(30, 60):
            entries.append(TokenEntry(i, b"a"))
        for i in range(60, 90):
            entries.append(TokenEntry(i, "ж".encode()))
        classes = classify_vocabulary(entries)
        norms = np.ones(90)
        norms[:30] *= 1.5
        fractions = top_norm_fraction(norms, classes, 0.05)
        assert fractions[CJ] > fractions[LATIN]
        assert fractions[LOWRES] == 0.0

    def test_empty_family_absent(self):
        entries = [TokenEntry(0, b"a"), TokenEntry(1, b"b")]
        classes = classify_vocabulary(entries)
        fractions = top_norm_fraction(np.array([1.0, 2.0]), classes, 0.5)
        assert CJ not in fractions
        assert LATIN in fractions

    def test_percentile_bounds(self):
        classes = one_per_family_classes()
        with pytest.raises(ValueError):
            top_norm_fraction(np.ones(4), classes, 1.0)
