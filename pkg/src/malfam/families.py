"""The nine malware families this classifier distinguishes.

Class ids follow the public corpus convention (label column values 1..9).
"""
from __future__ import annotations

FAMILY_NAMES: dict[int, str] = {
    1: "Ramnit",
    2: "Lollipop",
    3: "Kelihos_ver3",
    4: "Vundo",
    5: "Simda",
    6: "Tracur",
    7: "Kelihos_ver1",
    8: "Obfuscator.ACY",
    9: "Gatak",
}

FAMILY_IDS: tuple[int, ...] = tuple(sorted(FAMILY_NAMES))


def family_name(class_id: int) -> str:
    """Display name for a class id; unknown ids print as 'class <id>'."""
    return FAMILY_NAMES.get(class_id, f"class {class_id}")
