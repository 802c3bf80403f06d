"""Reverse the byte-to-printable-character remapping of byte-level BPE.

Byte-level BPE tokenizers (GPT-2 lineage, including Qwen and Llama-3
style vocabularies) store each raw byte as a printable unicode
character so vocab files never contain control bytes. Recovering the
true bytes of a token means mapping every character of its surface form
back through that table.
"""

from __future__ import annotations

from functools import lru_cache


@lru_cache(maxsize=1)
def byte_decoder() -> dict[str, int]:
    """Printable character -> original byte, the standard byte-level table."""
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    mapped = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            mapped.append(256 + n)
            n += 1
    return {chr(c): b for b, c in zip(printable, mapped)}


def surface_to_bytes(surface: str) -> bytes | None:
    """Raw bytes of a byte-level BPE surface form; None if unmappable."""
    table = byte_decoder()
    out = bytearray()
    for ch in surface:
        b = table.get(ch)
        if b is None:
            return None
        out.append(b)
    return bytes(out)
