"""The language-family gate: a two-layer MLP trained by self-distillation.

The gate maps a decoder hidden state to four logits, one per family in
FAMILY_ORDER. Training targets are pseudo-labels marking which families
appear in the top-k/top-p set of the recorded norm-adjusted next-token
distribution; the base model never updates (its outputs are frozen into
the trace). Optimization is plain mini-batch gradient descent with exact
analytic gradients, deterministic for a given seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from lcgate.families import FAMILY_INDEX, FAMILY_ORDER, LanguageFamily
from lcgate.jsonl import atomic_write_text
from lcgate.vocab import VocabClassification

if TYPE_CHECKING:
    from lcgate.trace import Trace


class TruncatedExample(ValueError):
    """The sparse distribution is too short to determine the candidate set."""


class TrainingError(RuntimeError):
    pass


class GateFileError(ValueError):
    pass


@dataclass
class GateParams:
    """Weights of the gate MLP: z = W2 @ ramp(W1 @ h + b1) + b2."""

    w1: np.ndarray  # (d_hidden, d_in)
    b1: np.ndarray  # (d_hidden,)
    w2: np.ndarray  # (4, d_hidden)
    b2: np.ndarray  # (4,)
    threshold: float = 0.5

    def __post_init__(self):
        if self.w1.ndim != 2 or self.w2.shape != (4, self.w1.shape[0]):
            raise ValueError("inconsistent gate weight shapes")
        if self.b1.shape != (self.w1.shape[0],) or self.b2.shape != (4,):
            raise ValueError("inconsistent gate bias shapes")

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "GateParams":
        return GateParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.threshold
        )


@dataclass(frozen=True)
class TrainingExample:
    """One recorded step: hidden state plus sparse top probabilities."""

    h: np.ndarray
    top_ids: np.ndarray
    top_probs: np.ndarray  # descending, full-vocabulary softmax values


@dataclass(frozen=True)
class TrainConfig:
    k: int = 20
    p: float = 0.95
    learning_rate: float = 1e-2
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    d_hidden: int = 256
    validation_fraction: float = 0.1
    use_adjusted: bool = True  # False trains on raw-distribution targets

    def __post_init__(self):
        if min(self.k, self.batch_size, self.epochs, self.d_hidden) < 1:
            raise ValueError("k, batch_size, epochs, d_hidden must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must be in [0, 0.5]")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    precision: dict[LanguageFamily, float | None]
    recall: dict[LanguageFamily, float | None]


@dataclass
class TrainResult:
    params: GateParams
    history: list[EpochStats]
    n_train: int
    n_val: int
    n_truncated: int


def init_gate(d_in: int, d_hidden: int, rng: np.random.Generator) -> GateParams:
    def glorot(fan_out, fan_in):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return GateParams(
        w1=glorot(d_hidden, d_in),
        b1=np.zeros(d_hidden),
        w2=glorot(4, d_hidden),
        b2=np.zeros(4),
    )


def gate_forward(params: GateParams, h: np.ndarray) -> np.ndarray:
    """Family logits for one hidden state; ramp (max with 0) activation."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (params.d_in,):
        raise ValueError(f"hidden state has shape {h.shape}, gate expects ({params.d_in},)")
    hidden = np.maximum(params.w1 @ h + params.b1, 0.0)
    return params.w2 @ hidden + params.b2


def _forward_batch(params: GateParams, hs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = hs @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ params.w2.T + params.b2, hidden


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def allowed_set(z: np.ndarray, threshold: float) -> frozenset[LanguageFamily]:
    """Families whose sigmoid score clears the threshold. May be empty."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    scores = sigmoid(np.asarray(z, dtype=np.float64))
    return frozenset(f for f, i in FAMILY_INDEX.items() if scores[i] >= threshold)


def prefix_cut(probs: np.ndarray, k: int, p: float) -> int:
    """Number of kept entries from a descending probability list."""
    kept = min(k, len(probs))
    cum = np.cumsum(probs[:kept])
    cut = int(np.searchsorted(cum, p, side="left"))
    return min(cut, kept - 1) + 1


def pseudo_target(
    example: TrainingExample,
    classes: VocabClassification,
    k: int,
    p: float,
) -> np.ndarray:
    """Four 0/1 indicators: families present in the example's top-k/p set.

    Raises TruncatedExample when the sparse list is too short to know the
    set for certain (fewer than k entries and retained mass below p).
    """
    probs = np.asarray(example.top_probs, dtype=np.float64)
    ids = np.asarray(example.top_ids)
    if len(probs) == 0:
        raise ValueError("empty sparse distribution")
    if len(probs) < k and float(probs.sum()) < p:
        raise TruncatedExample(
            f"retained mass {float(probs.sum()):.6f} < {p} with only {len(probs)} entries"
        )
    keep = prefix_cut(probs, k, p)
    fam_arr = classes.family_array()
    y = np.zeros(4, dtype=np.float64)
    for tid in ids[:keep]:
        y[fam_arr[int(tid)]] = 1.0
    return y


def bce_loss(z: np.ndarray, y: np.ndarray) -> float:
    """Sum over families of binary cross-entropy, in stable log1p form."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.sum())


@dataclass
class GateGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def gradient(params: GateParams, hs: np.ndarray, ys: np.ndarray) -> GateGrads:
    """Exact gradient of the mean per-example BCE over a batch."""
    hs = np.asarray(hs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if hs.ndim != 2 or len(hs) == 0:
        raise ValueError("batch must be a non-empty 2-D array")
    n = len(hs)
    z, hidden = _forward_batch(params, hs)
    dz = (sigmoid(z) - ys) / n
    dw2 = dz.T @ hidden
    db2 = dz.sum(axis=0)
    dhidden = dz @ params.w2
    dpre = np.where(hidden > 0.0, dhidden, 0.0)
    dw1 = dpre.T @ hs
    db1 = dpre.sum(axis=0)
    return GateGrads(w1=dw1, b1=db1, w2=dw2, b2=db2)


def _mean_loss(params: GateParams, hs: np.ndarray, ys: np.ndarray) -> float:
    z, _ = _forward_batch(params, hs)
    per = np.maximum(z, 0.0) - z * ys + np.log1p(np.exp(-np.abs(z)))
    return float(per.sum(axis=1).mean())


def _precision_recall(
    params: GateParams, hs: np.ndarray, ys: np.ndarray, threshold: float
) -> tuple[dict, dict]:
    z, _ = _forward_batch(params, hs)
    pred = sigmoid(z) >= threshold
    truth = ys >= 0.5
    precision: dict[LanguageFamily, float | None] = {}
    recall: dict[LanguageFamily, float | None] = {}
    for fam, i in FAMILY_INDEX.items():
        tp = int((pred[:, i] & truth[:, i]).sum())
        fp = int((pred[:, i] & ~truth[:, i]).sum())
        fn = int((~pred[:, i] & truth[:, i]).sum())
        precision[fam] = tp / (tp + fp) if tp + fp else None
        recall[fam] = tp / (tp + fn) if tp + fn else None
    return precision, recall


def build_examples(trace: "Trace", use_adjusted: bool) -> list[TrainingExample]:
    examples = []
    for step in trace.steps:
        ids = step.adjusted_ids if use_adjusted else step.raw_ids
        probs = step.adjusted_probs if use_adjusted else step.raw_probs
        examples.append(
            TrainingExample(
                h=np.asarray(step.h, dtype=np.float64),
                top_ids=ids,
                top_probs=np.asarray(probs, dtype=np.float64),
            )
        )
    return examples


def train(
    trace: "Trace",
    classes: VocabClassification,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Mini-batch gradient descent over a recorded trace.

    Returns the parameters with the best validation loss (training loss
    when validation_fraction is 0). Examples whose sparse distributions
    cannot determine a pseudo-target are excluded and counted.
    """
    examples = build_examples(trace, config.use_adjusted)
    hs_list, ys_list, n_truncated = [], [], 0
    for ex in examples:
        try:
            y = pseudo_target(ex, classes, config.k, config.p)
        except TruncatedExample:
            n_truncated += 1
            continue
        hs_list.append(ex.h)
        ys_list.append(y)
    if not hs_list:
        raise TrainingError("every example was truncated; nothing to train on")
    if len(hs_list) < config.batch_size:
        raise TrainingError(
            f"{len(hs_list)} usable examples is fewer than batch_size={config.batch_size}"
        )
    hs = np.stack(hs_list)
    ys = np.stack(ys_list)
    d_in = hs.shape[1]

    rng = np.random.default_rng(config.seed)
    params = init_gate(d_in, config.d_hidden, rng)

    perm = rng.permutation(len(hs))
    n_val = int(round(config.validation_fraction * len(hs)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    hs_tr, ys_tr = hs[train_idx], ys[train_idx]
    hs_va, ys_va = hs[val_idx], ys[val_idx]

    def snapshot(epoch: int) -> EpochStats:
        train_loss = _mean_loss(params, hs_tr, ys_tr)
        val_loss = _mean_loss(params, hs_va, ys_va) if n_val else None
        eh, ey = (hs_va, ys_va) if n_val else (hs_tr, ys_tr)
        precision, recall = _precision_recall(params, eh, ey, params.threshold)
        return EpochStats(epoch, train_loss, val_loss, precision, recall)

    history = [snapshot(0)]
    best = params.copy()
    best_score = history[0].val_loss if n_val else history[0].train_loss

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(hs_tr))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            g = gradient(params, hs_tr[batch], ys_tr[batch])
            params.w1 -= config.learning_rate * g.w1
            params.b1 -= config.learning_rate * g.b1
            params.w2 -= config.learning_rate * g.w2
            params.b2 -= config.learning_rate * g.b2
        stats = snapshot(epoch)
        history.append(stats)
        score = stats.val_loss if n_val else stats.train_loss
        if score < best_score:
            best_score = score
            best = params.copy()

    return TrainResult(
        params=best,
        history=history,
        n_train=len(train_idx),
        n_val=n_val,
        n_truncated=n_truncated,
    )


# ---------------------------------------------------------------------------
# Gate files: JSON, row-major nested arrays, 32-bit value fidelity.

_REQUIRED_GATE_FIELDS = ("d_in", "d_hidden", "family_order", "W1", "b1", "W2", "b2")


def _f32_nested(arr: np.ndarray):
    return np.asarray(arr, dtype=np.float32).astype(float).tolist()


def save_gate(params: GateParams, path, train_config: TrainConfig | None = None) -> None:
    doc = {
        "d_in": params.d_in,
        "d_hidden": params.d_hidden,
        "family_order": [f.value for f in FAMILY_ORDER],
        "W1": _f32_nested(params.w1),
        "b1": _f32_nested(params.b1),
        "W2": _f32_nested(params.w2),
        "b2": _f32_nested(params.b2),
        "threshold": params.threshold,
    }
    if train_config is not None:
        doc["train_config"] = asdict(train_config)
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_gate(path) -> GateParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise GateFileError(f"{path}: {err}") from None
    for key in _REQUIRED_GATE_FIELDS:
        if key not in doc:
            raise GateFileError(f"{path}: missing field {key!r}")
    if doc["family_order"] != [f.value for f in FAMILY_ORDER]:
        raise GateFileError(f"{path}: unexpected family_order {doc['family_order']}")
    d_in, d_hidden = int(doc["d_in"]), int(doc["d_hidden"])
    w1 = np.array(doc["W1"], dtype=np.float64)
    b1 = np.array(doc["b1"], dtype=np.float64)
    w2 = np.array(doc["W2"], dtype=np.float64)
    b2 = np.array(doc["b2"], dtype=np.float64)
    if w1.shape != (d_hidden, d_in) or w2.shape != (4, d_hidden):
        raise GateFileError(
            f"{path}: weight shapes {w1.shape}/{w2.shape} disagree with "
            f"declared dims d_in={d_in}, d_hidden={d_hidden}"
        )
    if b1.shape != (d_hidden,) or b2.shape != (4,):
        raise GateFileError(f"{path}: bias shapes {b1.shape}/{b2.shape} are inconsistent")
    return GateParams(w1=w1, b1=b1, w2=w2, b2=b2, threshold=float(doc.get("threshold", 0.5)))
