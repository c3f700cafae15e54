"""Small shared helpers: stable hashing, seed derivation, canonical names."""
from __future__ import annotations

from collections.abc import Iterable

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(parts: Iterable[str | int]) -> int:
    """64-bit FNV-1a over the UTF-8 bytes of each part, NUL-separated.

    Used both for the feature-schema digest and for deriving child RNG seeds;
    must stay platform-stable, so no use of Python's salted hash().
    """
    h = _FNV_OFFSET
    for part in parts:
        for byte in str(part).encode("utf-8") + b"\x00":
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK64
    return h


def mix_seed(*parts: str | int) -> int:
    """Derive an independent 64-bit seed from a base seed plus context tags."""
    return fnv1a64(parts)


def canonical_section(name: str) -> str:
    """Canonical section name: leading dots stripped, lowercased."""
    return name.lstrip(".").lower()


def canonical_library(name: str) -> str:
    """Canonical import-library name: basename, extension stripped, uppercased."""
    base = name.replace("\\", "/").rsplit("/", 1)[-1]
    if "." in base:
        base = base.rsplit(".", 1)[0]
    return base.upper()
