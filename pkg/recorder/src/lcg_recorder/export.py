"""Vocabulary export and step recording.

The exported hidden state is the input to the output projection, taken
after the model's final normalization layer (``hidden_states[-1]`` of a
HuggingFace causal LM). At load time the exporter verifies that the
output-embedding matrix applied to that vector reproduces the model's
own logits; architectures where it does not are rejected explicitly
rather than recorded wrong.

Probabilities and hidden states are stored at float32 precision.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from lcg_recorder.bytes_map import surface_to_bytes


class UnsupportedTokenizer(ValueError):
    """Surface forms cannot be reduced to raw bytes."""


class UnsupportedModel(ValueError):
    """The final hidden state does not reproduce the model's logits."""


@dataclass
class RecorderConfig:
    model_path: str
    out_dir: str
    prompts: list[str] = field(default_factory=list)
    max_new_tokens: int = 32
    m: int = 256
    top_k: int = 20
    top_p: float = 0.95
    temperature: float = 1.0
    greedy: bool = True
    seed: int = 0
    device: str = "cpu"
    revision: str | None = None

    def __post_init__(self):
        if self.m < 64:
            raise ValueError("M must be at least 64")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")
        if self.top_k < 1 or not 0.0 < self.top_p <= 1.0 or self.temperature <= 0.0:
            raise ValueError("bad sampling parameters")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_embedding_norms(model) -> np.ndarray:
    weight = model.get_output_embeddings().weight.detach().to(torch.float64)
    norms = torch.linalg.vector_norm(weight, dim=1).cpu().numpy()
    if not (norms > 0.0).all():
        bad = int(np.argmin(norms))
        raise UnsupportedModel(f"output embedding row {bad} has zero norm")
    return norms


def token_bytes_table(tokenizer, vocab_rows: int) -> list[bytes]:
    """Raw bytes per token id; special and padded-out ids get empty bytes.

    Empty bytes mark tokens that must never be masked, which is how the
    classifier treats control and filler entries downstream.
    """
    id_to_surface: dict[int, str] = {}
    for surface, tid in tokenizer.get_vocab().items():
        id_to_surface[tid] = surface
    special_ids = set(tokenizer.all_special_ids)
    added = getattr(tokenizer, "get_added_vocab", dict)
    special_ids |= set(added().values())

    table: list[bytes] = []
    unmapped: list[int] = []
    for tid in range(vocab_rows):
        if tid in special_ids or tid not in id_to_surface:
            table.append(b"")
            continue
        raw = surface_to_bytes(id_to_surface[tid])
        if raw is None:
            unmapped.append(tid)
            table.append(b"")
        else:
            table.append(raw)
    if unmapped:
        sample = ", ".join(repr(id_to_surface[t]) for t in unmapped[:5])
        raise UnsupportedTokenizer(
            f"{len(unmapped)} surface forms cannot be reduced to bytes "
            f"(e.g. {sample}); only byte-level BPE vocabularies are supported"
        )
    return table


def export_vocab(model, tokenizer, out_path) -> int:
    """Write vocab.jsonl: id, raw bytes (hex), output-embedding norm."""
    norms = output_embedding_norms(model)
    table = token_bytes_table(tokenizer, len(norms))
    lines = []
    for tid, raw in enumerate(table):
        lines.append(
            json.dumps(
                {"id": tid, "bytes_hex": raw.hex(), "norm": float(np.float32(norms[tid]))}
            )
        )
    _atomic_write(Path(out_path), "\n".join(lines) + "\n")
    return len(table)


def _top_m(probs: np.ndarray, m: int) -> list[list]:
    order = np.lexsort((np.arange(len(probs)), -probs))[: min(m, len(probs))]
    return [[int(i), float(np.float32(probs[i]))] for i in order]


def _softmax64(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _choose(probs: np.ndarray, cfg: RecorderConfig, rng: np.random.Generator) -> int:
    if cfg.greedy:
        return int(np.argmax(probs))
    scaled = np.power(probs, 1.0 / cfg.temperature)  # p^(1/T) tracks exp(logit/T)
    order = np.lexsort((np.arange(len(scaled)), -scaled))[: cfg.top_k]
    kept = scaled[order]
    kept = kept / kept.sum()
    cut = min(int(np.searchsorted(np.cumsum(kept), cfg.top_p, side="left")), len(kept) - 1)
    ids, mass = order[: cut + 1], kept[: cut + 1]
    mass = mass / mass.sum()
    idx = min(int(np.searchsorted(np.cumsum(mass), rng.random(), side="right")), len(ids) - 1)
    return int(ids[idx])


@torch.no_grad()
def record_steps(model, tokenizer, config: RecorderConfig) -> dict:
    """Roll out each prompt and write steps.jsonl plus meta.json.

    Returns the meta document. Raises UnsupportedModel when the final
    hidden state does not reproduce the model's logits through the
    output embedding matrix.
    """
    if not config.prompts:
        raise ValueError("no prompts to record")
    device = torch.device(config.device)
    model = model.to(device).eval()
    weight = model.get_output_embeddings().weight.detach().to(torch.float64)
    norms = output_embedding_norms(model)
    vocab_rows = weight.shape[0]
    d_in = weight.shape[1]
    rng = np.random.default_rng(config.seed)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []
    try:
        for prompt in config.prompts:
            ids = tokenizer(prompt, return_tensors="pt").input_ids.to(device)
            if ids.shape[1] == 0:
                raise ValueError(f"prompt {prompt!r} tokenizes to nothing")
            for _ in range(config.max_new_tokens):
                result = model(ids, output_hidden_states=True)
                h64 = result.hidden_states[-1][0, -1].to(torch.float64)
                logits = (weight @ h64).cpu().numpy()
                model_logits = result.logits[0, -1].to(torch.float64).cpu().numpy()
                if not np.allclose(logits, model_logits, atol=1e-3, rtol=1e-4):
                    raise UnsupportedModel(
                        "final hidden state does not reproduce the model's logits "
                        "through the output embeddings; this architecture needs a "
                        "different extraction point"
                    )
                raw = _softmax64(logits)
                adjusted = _softmax64(logits / norms)
                chosen = _choose(raw, config, rng)
                lines.append(
                    json.dumps(
                        {
                            "h": [float(v) for v in np.float32(h64.cpu().numpy())],
                            "raw_top": _top_m(raw, config.m),
                            "adjusted_top": _top_m(adjusted, config.m),
                            "chosen_id": chosen,
                            "prev_id": int(ids[0, -1]),
                        }
                    )
                )
                ids = torch.cat(
                    [ids, torch.tensor([[chosen]], dtype=ids.dtype, device=device)], dim=1
                )
    except torch.cuda.OutOfMemoryError as err:
        raise RuntimeError(
            f"out of memory while recording ({err}); retry with a smaller M, "
            "shorter prompts, or fewer new tokens"
        ) from None

    _atomic_write(out / "steps.jsonl", "\n".join(lines) + "\n")
    source = config.model_path
    if config.revision:
        source += f"@{config.revision}"
    meta = {
        "d_in": d_in,
        "M": config.m,
        "vocab_size": vocab_rows,
        "source": source,
        "family_counts": {},
        "extra": {
            "prompts": len(config.prompts),
            "max_new_tokens": config.max_new_tokens,
            "greedy": config.greedy,
            "top_k": config.top_k,
            "top_p": config.top_p,
            "temperature": config.temperature,
            "seed": config.seed,
        },
    }
    _atomic_write(out / "meta.json", json.dumps(meta, indent=1) + "\n")
    export_vocab(model, tokenizer, out / "vocab.jsonl")
    return meta
