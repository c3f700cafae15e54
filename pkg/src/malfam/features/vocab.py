"""Train-split vocabularies for the open-ended feature groups.

Section names, import libraries, and both 4-gram alphabets are ranked by
document frequency (how many samples mention the token at least once) and
capped.  Ties break lexicographically so the cut is reproducible.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from collections.abc import Sequence

from ..asm import api_stream, load_listing, opcode_stream, parse_imports
from ..errors import CorpusError
from .extract import (
    extract_4grams,
    load_pe_summary,
    pick_source,
    section_stats_from_listing,
    section_stats_from_pe,
)
from .schema import (
    GROUP_API_4GRAM,
    GROUP_IMPORT_LIB,
    GROUP_OPCODE_4GRAM,
    GROUP_ORDER,
    GROUP_SECTION_SIZE,
)

VOCAB_VERSION = 1


@dataclass(frozen=True)
class VocabCaps:
    """Document-frequency top-k caps, one per open-ended group."""

    sections: int = 282
    libraries: int = 300
    api_grams: int = 5000
    opcode_grams: int = 5000

    def __post_init__(self) -> None:
        for name in ("sections", "libraries", "api_grams", "opcode_grams"):
            if getattr(self, name) < 1:
                raise ValueError(f"cap {name} must be >= 1")


@dataclass(frozen=True)
class Vocabulary:
    section_names: tuple[str, ...] = ()
    libraries: tuple[str, ...] = ()
    api_grams: tuple[tuple[str, ...], ...] = ()
    opcode_grams: tuple[tuple[str, ...], ...] = ()
    version: int = VOCAB_VERSION


def _top_k(freq: Counter, cap: int) -> list:
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return [token for token, _ in ranked[:cap]]


def build_vocab(
    manifest,
    caps: VocabCaps = VocabCaps(),
    groups: Sequence[str] = GROUP_ORDER,
    prefer: str = "pe",
) -> Vocabulary:
    """Scan a manifest (the train split) and rank tokens by document frequency."""
    enabled = set(groups)
    need_sections = GROUP_SECTION_SIZE in enabled
    need_libs = GROUP_IMPORT_LIB in enabled
    need_api = GROUP_API_4GRAM in enabled
    need_opc = GROUP_OPCODE_4GRAM in enabled

    section_freq: Counter = Counter()
    library_freq: Counter = Counter()
    api_freq: Counter = Counter()
    opcode_freq: Counter = Counter()

    for sample in manifest.samples:
        listing = None
        need_listing = (need_api or need_opc) and sample.asm_path is not None
        source = pick_source(sample, prefer)
        if need_listing or ((need_sections or need_libs) and source == "asm"):
            listing = load_listing(sample.asm_path)
        summary = None
        if (need_sections or need_libs) and source == "pe":
            summary = load_pe_summary(sample)

        if need_sections:
            if summary is not None:
                stats = section_stats_from_pe(summary)
            elif listing is not None:
                stats = section_stats_from_listing(listing)
            else:
                stats = {}
            section_freq.update(stats.keys())
        imports = None
        if need_libs:
            if summary is not None:
                library_freq.update(summary.import_libraries)
            elif listing is not None:
                imports = parse_imports(listing.lines)
                library_freq.update(imports.libraries)
        if need_api and listing is not None:
            if imports is None:
                imports = parse_imports(listing.lines)
            grams = extract_4grams(api_stream(listing.lines, imports))
            api_freq.update(grams.keys())
        if need_opc and listing is not None:
            grams = extract_4grams(opcode_stream(listing.lines))
            opcode_freq.update(grams.keys())

    return Vocabulary(
        section_names=tuple(_top_k(section_freq, caps.sections)) if need_sections else (),
        libraries=tuple(_top_k(library_freq, caps.libraries)) if need_libs else (),
        api_grams=tuple(_top_k(api_freq, caps.api_grams)) if need_api else (),
        opcode_grams=tuple(_top_k(opcode_freq, caps.opcode_grams)) if need_opc else (),
    )


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    doc = {
        "version": vocab.version,
        "section_names": list(vocab.section_names),
        "libraries": list(vocab.libraries),
        "api_grams": [list(g) for g in vocab.api_grams],
        "opcode_grams": [list(g) for g in vocab.opcode_grams],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"cannot read vocabulary {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != VOCAB_VERSION:
        raise CorpusError(f"unsupported vocabulary format in {path}")
    try:
        return Vocabulary(
            section_names=tuple(doc["section_names"]),
            libraries=tuple(doc["libraries"]),
            api_grams=tuple(tuple(g) for g in doc["api_grams"]),
            opcode_grams=tuple(tuple(g) for g in doc["opcode_grams"]),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed vocabulary {path}: {exc}") from exc
