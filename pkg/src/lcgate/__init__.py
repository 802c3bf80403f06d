"""Decoding-time language confusion gating.

Classifies a BPE vocabulary into four language families, trains a small
gate network on a frozen model's own norm-adjusted top predictions, and
masks disallowed families from the logits during sampling, guarded by
rules that keep legitimate code-switching intact.
"""

from lcgate.families import LanguageFamily, FAMILY_ORDER

__all__ = ["LanguageFamily", "FAMILY_ORDER"]
__version__ = "0.1.0"
