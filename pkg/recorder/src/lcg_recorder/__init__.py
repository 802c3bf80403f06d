"""Trace exporter for causal language models.

Writes the gating toolkit's trace directory format (meta.json,
vocab.jsonl, steps.jsonl) from any byte-level-BPE HuggingFace causal LM:
raw token bytes, output-embedding norms, per-step final hidden states,
and top-M raw and norm-adjusted probabilities.
"""

from lcg_recorder.export import RecorderConfig, UnsupportedTokenizer, export_vocab, record_steps

__all__ = ["RecorderConfig", "UnsupportedTokenizer", "export_vocab", "record_steps"]
__version__ = "0.1.0"
