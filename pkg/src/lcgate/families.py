"""The four token language families."""

from __future__ import annotations

import enum


class LanguageFamily(enum.Enum):
    """Mutually exclusive language family of a vocabulary token."""

    CJ = "cj"
    LATIN = "latin"
    SYMBOLS = "symbols"
    LOWRES = "lowres"

    def __str__(self) -> str:
        return self.value


# Canonical ordering used for gate outputs and pseudo-target vectors.
FAMILY_ORDER: tuple[LanguageFamily, ...] = (
    LanguageFamily.CJ,
    LanguageFamily.LATIN,
    LanguageFamily.SYMBOLS,
    LanguageFamily.LOWRES,
)

FAMILY_INDEX: dict[LanguageFamily, int] = {f: i for i, f in enumerate(FAMILY_ORDER)}


def parse_family(name: str) -> LanguageFamily:
    try:
        return LanguageFamily(name.lower())
    except ValueError:
        raise ValueError(f"unknown language family {name!r}") from None
