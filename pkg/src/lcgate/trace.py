"""Recorded model traces: on-disk format, recording, and playback.

A trace directory holds three files:

* ``meta.json`` -- d_in, M, vocab_size, source label, family counts;
* ``vocab.jsonl`` -- token records with ``norm`` values;
* ``steps.jsonl`` -- one step per line with the hidden state ``h``, the
  sparse top-M ``raw_top`` and ``adjusted_top`` pairs of [id, prob]
  (full-vocabulary softmax before truncation, descending), plus
  ``chosen_id`` and ``prev_id``.

All numbers are stored at 32-bit value fidelity: values are rounded to
float32 before writing, and round-trip bit-exactly at that precision.
Probabilities (not logits) are stored because candidate-set membership
needs full-vocabulary-normalized mass; truncated logits could not be
renormalized correctly afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from lcgate.families import FAMILY_ORDER
from lcgate.jsonl import atomic_write_lines, atomic_write_text, read_jsonl
from lcgate.sampling import (
    SamplingParams,
    candidate_set,
    norm_adjust,
    sample,
    softmax_with_temperature,
    descending_order,
)
from lcgate.vocab import TokenEntry, read_vocab_jsonl, write_vocab_jsonl


class TraceFormatError(ValueError):
    pass


class TraceExhausted(RuntimeError):
    """step() was called past the recorded length."""


@dataclass
class TraceMeta:
    d_in: int
    M: int
    vocab_size: int
    source: str
    family_counts: dict[str, int]
    extra: dict = field(default_factory=dict)


@dataclass
class TraceStep:
    h: np.ndarray
    raw_ids: np.ndarray
    raw_probs: np.ndarray
    adjusted_ids: np.ndarray
    adjusted_probs: np.ndarray
    chosen_id: int
    prev_id: int


@dataclass
class Trace:
    meta: TraceMeta
    vocab: list[TokenEntry]
    norms: np.ndarray
    steps: list[TraceStep]


def _f32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32)


def top_sparse(probs: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    order = descending_order(probs)[: min(m, len(probs))]
    return order, probs[order]


def record_trace(
    model,
    contexts: Sequence[Sequence[int]],
    steps_per_context: int,
    m: int,
    out_dir,
    params: SamplingParams = SamplingParams(20, 0.95, 1.0),
    seed: int = 0,
    source: str = "synthetic",
) -> Trace:
    """Roll the model out over each context, recording every step.

    The rollout samples with ``params`` from a single stream seeded by
    ``seed``. Raw and norm-adjusted top-M probabilities are taken from
    the full-vocabulary temperature-1 softmax before truncation.
    """
    if m < 1:
        raise ValueError("M must be at least 1")
    if steps_per_context < 1:
        raise ValueError("steps_per_context must be at least 1")
    rng = np.random.default_rng(seed)
    norms = np.asarray(model.norms, dtype=np.float64)
    steps: list[TraceStep] = []
    for prompt in contexts:
        context = list(prompt)
        for _ in range(steps_per_context):
            h, logits = model.step(context)
            raw = softmax_with_temperature(logits, 1.0)
            adjusted = softmax_with_temperature(norm_adjust(logits, norms), 1.0)
            raw_ids, raw_probs = top_sparse(raw, m)
            adj_ids, adj_probs = top_sparse(adjusted, m)
            chosen = sample(candidate_set(logits, params), rng)
            steps.append(
                TraceStep(
                    h=_f32(h),
                    raw_ids=raw_ids,
                    raw_probs=_f32(raw_probs),
                    adjusted_ids=adj_ids,
                    adjusted_probs=_f32(adj_probs),
                    chosen_id=chosen,
                    prev_id=int(context[-1]),
                )
            )
            context.append(chosen)
    counts = {f.value: model.classes.counts[f] for f in FAMILY_ORDER} if hasattr(
        model, "classes"
    ) else {}
    meta = TraceMeta(
        d_in=int(model.d_in),
        M=m,
        vocab_size=len(model.vocabulary),
        source=source,
        family_counts=counts,
        extra={
            "contexts": [list(map(int, c)) for c in contexts],
            "steps_per_context": steps_per_context,
            "top_k": params.top_k,
            "top_p": params.top_p,
            "temperature": params.temperature,
            "seed": seed,
        },
    )
    vocab = [
        TokenEntry(e.id, e.bytes, norm=float(norms[e.id])) for e in model.vocabulary
    ]
    trace = Trace(meta=meta, vocab=vocab, norms=_f32(norms).astype(np.float64), steps=steps)
    if out_dir is not None:
        save_trace(trace, out_dir)
    return trace


def _pairs(ids: np.ndarray, probs: np.ndarray) -> list:
    return [[int(i), float(np.float32(p))] for i, p in zip(ids, probs)]


def save_trace(trace: Trace, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "d_in": trace.meta.d_in,
        "M": trace.meta.M,
        "vocab_size": trace.meta.vocab_size,
        "source": trace.meta.source,
        "family_counts": trace.meta.family_counts,
        **({"extra": trace.meta.extra} if trace.meta.extra else {}),
    }
    atomic_write_text(out / "meta.json", json.dumps(meta, indent=1) + "\n")
    write_vocab_jsonl(out / "vocab.jsonl", trace.vocab)

    def step_lines():
        for s in trace.steps:
            yield json.dumps(
                {
                    "h": [float(np.float32(v)) for v in s.h],
                    "raw_top": _pairs(s.raw_ids, s.raw_probs),
                    "adjusted_top": _pairs(s.adjusted_ids, s.adjusted_probs),
                    "chosen_id": int(s.chosen_id),
                    "prev_id": int(s.prev_id),
                }
            )

    atomic_write_lines(out / "steps.jsonl", step_lines())


def _parse_pairs(raw, lineno: int, name: str, vocab_size: int):
    ids, probs = [], []
    last = math.inf
    for item in raw:
        if not isinstance(item, list) or len(item) != 2:
            raise TraceFormatError(f"steps.jsonl line {lineno}: malformed {name} pair {item!r}")
        tid, p = int(item[0]), float(item[1])
        if not 0 <= tid < vocab_size:
            raise TraceFormatError(f"steps.jsonl line {lineno}: {name} id {tid} out of range")
        if p <= 0.0:
            raise TraceFormatError(f"steps.jsonl line {lineno}: {name} prob {p} not positive")
        if p > last:
            raise TraceFormatError(f"steps.jsonl line {lineno}: {name} probs not descending")
        last = p
        ids.append(tid)
        probs.append(p)
    if not ids:
        raise TraceFormatError(f"steps.jsonl line {lineno}: empty {name}")
    if math.fsum(probs) > 1.0 + 1e-5:
        raise TraceFormatError(f"steps.jsonl line {lineno}: {name} mass exceeds 1")
    return np.array(ids), np.array(probs, dtype=np.float64)


def load_trace(trace_dir) -> Trace:
    root = Path(trace_dir)
    meta_path = root / "meta.json"
    try:
        raw_meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as err:
        raise TraceFormatError(f"{meta_path}: {err}") from None
    except json.JSONDecodeError as err:
        raise TraceFormatError(f"{meta_path}: invalid JSON: {err}") from None
    for key in ("d_in", "M", "vocab_size", "source", "family_counts"):
        if key not in raw_meta:
            raise TraceFormatError(f"{meta_path}: missing field {key!r}")
    meta = TraceMeta(
        d_in=int(raw_meta["d_in"]),
        M=int(raw_meta["M"]),
        vocab_size=int(raw_meta["vocab_size"]),
        source=str(raw_meta["source"]),
        family_counts=dict(raw_meta["family_counts"]),
        extra=dict(raw_meta.get("extra", {})),
    )

    vocab = read_vocab_jsonl(root / "vocab.jsonl")
    if len(vocab) != meta.vocab_size:
        raise TraceFormatError(
            f"vocab.jsonl holds {len(vocab)} records, meta declares {meta.vocab_size}"
        )
    if any(e.norm is None for e in vocab):
        raise TraceFormatError("vocab.jsonl: every record needs a norm value")
    norms = np.zeros(meta.vocab_size, dtype=np.float64)
    for e in vocab:
        if not 0 <= e.id < meta.vocab_size:
            raise TraceFormatError(f"vocab.jsonl: token id {e.id} out of range")
        norms[e.id] = e.norm
    if not (norms > 0).all():
        raise TraceFormatError("vocab.jsonl: norms must be positive for every id")

    steps: list[TraceStep] = []
    steps_path = root / "steps.jsonl"
    try:
        records = list(read_jsonl(steps_path))
    except OSError as err:
        raise TraceFormatError(f"{steps_path}: {err}") from None
    except json.JSONDecodeError as err:
        raise TraceFormatError(f"{steps_path}: invalid JSON: {err}") from None
    for lineno, rec in records:
        for key in ("h", "raw_top", "adjusted_top", "chosen_id", "prev_id"):
            if key not in rec:
                raise TraceFormatError(f"steps.jsonl line {lineno}: missing field {key!r}")
        h = np.array(rec["h"], dtype=np.float64)
        if h.shape != (meta.d_in,):
            raise TraceFormatError(
                f"steps.jsonl line {lineno}: h has length {h.shape}, expected {meta.d_in}"
            )
        raw_ids, raw_probs = _parse_pairs(rec["raw_top"], lineno, "raw_top", meta.vocab_size)
        adj_ids, adj_probs = _parse_pairs(
            rec["adjusted_top"], lineno, "adjusted_top", meta.vocab_size
        )
        steps.append(
            TraceStep(
                h=h,
                raw_ids=raw_ids,
                raw_probs=raw_probs,
                adjusted_ids=adj_ids,
                adjusted_probs=adj_probs,
                chosen_id=int(rec["chosen_id"]),
                prev_id=int(rec["prev_id"]),
            )
        )
    if not steps:
        raise TraceFormatError(f"{steps_path}: no recorded steps")
    return Trace(meta=meta, vocab=vocab, norms=norms, steps=steps)


def sparse_logits(ids: np.ndarray, probs: np.ndarray, vocab_size: int) -> np.ndarray:
    """Reconstruct a logit vector from sparse probabilities.

    Unrecorded ids become -inf; recorded ones get log(prob), which
    preserves candidate-set membership and relative mass.
    """
    logits = np.full(vocab_size, -np.inf)
    logits[ids] = np.log(probs)
    return logits


class TracePlayer:
    """Replays recorded steps in order; a StepModel for decoding code.

    step() ignores the context and advances an internal cursor, so a
    player is single-use per decode session.
    """

    def __init__(self, trace: Trace):
        self.trace = trace
        self.vocabulary = trace.vocab
        self.norms = trace.norms
        self.d_in = trace.meta.d_in
        self.cursor = 0

    def step(self, context) -> tuple[np.ndarray, np.ndarray]:
        if self.cursor >= len(self.trace.steps):
            raise TraceExhausted(
                f"trace holds {len(self.trace.steps)} steps; step {self.cursor} requested"
            )
        s = self.trace.steps[self.cursor]
        self.cursor += 1
        return s.h, sparse_logits(s.raw_ids, s.raw_probs, self.trace.meta.vocab_size)

    def rewind(self) -> None:
        self.cursor = 0


def trace_player(trace_dir) -> TracePlayer:
    return TracePlayer(load_trace(trace_dir))
