"""Per-sample feature computation for the seven groups.

Sizes and compression stats come straight off the artifact files.  Section
geometry and import libraries prefer the PE when one is on disk (exact header
values) and fall back to the listing, where virtual size is the address span
and raw size is the count of listed bytes.  The two 4-gram groups always come
from the listing; a dump alone carries no token stream.
"""
from __future__ import annotations

import zlib
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..asm import Listing, api_stream, load_listing, opcode_stream, parse_imports, parse_segments
from ..corpus import Sample
from ..errors import ExtractionError, TruncatedPeError
from ..pe import PeSummary, parse_pe
from .schema import (
    FeatureSchema,
    FeatureVector,
    SCHEMA_VERSION,
    GROUP_API_4GRAM,
    GROUP_COMPLEXITY,
    GROUP_FILE_SIZE,
    GROUP_IMPORT_LIB,
    GROUP_OPCODE_4GRAM,
    GROUP_ORDER,
    GROUP_SECTION_PERM,
    GROUP_SECTION_SIZE,
    PERM_ORDER,
    group_dims,
)

N_GRAM = 4

# zlib level is part of the feature definition; changing it shifts every
# complexity value.
COMPRESSION_LEVEL = 6


@dataclass(frozen=True)
class SectionStats:
    """Aggregate geometry and permissions for one canonical section name."""

    virtual_size: int
    raw_size: int
    readable: bool
    writable: bool
    executable: bool

    @property
    def ratio(self) -> float:
        if self.raw_size == 0:
            return 0.0
        return self.virtual_size / self.raw_size


def _read_file(path: Path, sample_id: str) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ExtractionError(f"sample {sample_id}: cannot read {path}: {exc}") from exc


def _file_size(path: Path, sample_id: str) -> int:
    try:
        return path.stat().st_size
    except OSError as exc:
        raise ExtractionError(f"sample {sample_id}: cannot stat {path}: {exc}") from exc


def pick_source(sample: Sample, prefer: str = "pe") -> str:
    """Choose the section/import source: "pe", "asm", or "" when neither exists."""
    if prefer not in ("pe", "asm"):
        raise ValueError(f"prefer must be 'pe' or 'asm', not {prefer!r}")
    order = ("pe", "asm") if prefer == "pe" else ("asm", "pe")
    for kind in order:
        if kind == "pe" and sample.pe_path is not None:
            return "pe"
        if kind == "asm" and sample.asm_path is not None:
            return "asm"
    return ""


def load_pe_summary(sample: Sample) -> PeSummary:
    """Parse the sample's PE; a truncated image degrades to its partial sections."""
    data = _read_file(sample.pe_path, sample.id)
    try:
        return parse_pe(data)
    except TruncatedPeError as exc:
        return PeSummary(
            sections=exc.sections,
            import_libraries=frozenset(),
            file_size=len(data),
            pe32plus=False,
            size_of_headers=0,
            imports_degraded=True,
        )


# ---------------------------------------------------------------------------
# group computations
# ---------------------------------------------------------------------------

def feat_file_size(sample: Sample) -> np.ndarray:
    """(asm size, dump size, dump/asm ratio); a missing file contributes 0."""
    asm = _file_size(sample.asm_path, sample.id) if sample.asm_path else 0
    dump = _file_size(sample.bytes_path, sample.id) if sample.bytes_path else 0
    ratio = dump / asm if asm else 0.0
    return np.array([asm, dump, ratio], dtype=np.float64)


def _complexity_triple(path: Path | None, sample_id: str) -> tuple[float, float, float]:
    if path is None:
        return (0.0, 0.0, 0.0)
    data = _read_file(path, sample_id)
    comp = len(zlib.compress(data, COMPRESSION_LEVEL))
    return (float(len(data)), float(comp), len(data) / comp)


def feat_complexity(sample: Sample) -> np.ndarray:
    values = _complexity_triple(sample.asm_path, sample.id)
    values += _complexity_triple(sample.bytes_path, sample.id)
    return np.array(values, dtype=np.float64)


def section_stats_from_listing(listing: Listing) -> dict[str, SectionStats]:
    virtual: dict[str, int] = {}
    raw: dict[str, int] = {}
    perms: dict[str, list[bool]] = {}
    for seg in parse_segments(listing.lines):
        virtual[seg.name] = virtual.get(seg.name, 0) + seg.span
        flags = perms.setdefault(seg.name, [False, False, False])
        flags[0] |= seg.readable
        flags[1] |= seg.writable
        flags[2] |= seg.executable
    for line in listing.lines:
        raw[line.section] = raw.get(line.section, 0) + line.known_bytes
    return {
        name: SectionStats(virtual[name], raw.get(name, 0), *perms[name])
        for name in virtual
    }


def section_stats_from_pe(summary: PeSummary) -> dict[str, SectionStats]:
    virtual: dict[str, int] = {}
    raw: dict[str, int] = {}
    perms: dict[str, list[bool]] = {}
    for sec in summary.sections:
        virtual[sec.name] = virtual.get(sec.name, 0) + sec.virtual_size
        raw[sec.name] = raw.get(sec.name, 0) + sec.raw_size
        flags = perms.setdefault(sec.name, [False, False, False])
        flags[0] |= sec.readable
        flags[1] |= sec.writable
        flags[2] |= sec.executable
    return {
        name: SectionStats(virtual[name], raw[name], *perms[name])
        for name in virtual
    }


def aggregate_sections(sample: Sample, prefer: str = "pe") -> dict[str, SectionStats]:
    source = pick_source(sample, prefer)
    if source == "pe":
        return section_stats_from_pe(load_pe_summary(sample))
    if source == "asm":
        return section_stats_from_listing(load_listing(sample.asm_path))
    return {}


def feat_section_size(
    stats: Mapping[str, SectionStats], section_names: Sequence[str]
) -> np.ndarray:
    out = np.zeros(3 * len(section_names), dtype=np.float64)
    for i, name in enumerate(section_names):
        found = stats.get(name)
        if found is not None:
            out[3 * i : 3 * i + 3] = (found.virtual_size, found.raw_size, found.ratio)
    return out


def feat_section_perm(stats: Mapping[str, SectionStats]) -> np.ndarray:
    out = np.zeros(9, dtype=np.float64)
    for p, perm in enumerate(PERM_ORDER):
        attr = {"read": "readable", "write": "writable", "execute": "executable"}[perm]
        vsize = sum(s.virtual_size for s in stats.values() if getattr(s, attr))
        rsize = sum(s.raw_size for s in stats.values() if getattr(s, attr))
        out[3 * p : 3 * p + 3] = (vsize, rsize, vsize / rsize if rsize else 0.0)
    return out


def sample_libraries(sample: Sample, prefer: str = "pe") -> frozenset[str]:
    source = pick_source(sample, prefer)
    if source == "pe":
        return load_pe_summary(sample).import_libraries
    if source == "asm":
        return parse_imports(load_listing(sample.asm_path).lines).libraries
    return frozenset()


def feat_import_lib(libraries: frozenset[str], vocab_libraries: Sequence[str]) -> np.ndarray:
    return np.array([1.0 if name in libraries else 0.0 for name in vocab_libraries])


def extract_4grams(stream: Iterable[str]) -> Counter:
    """Count contiguous 4-token windows; streams shorter than 4 yield nothing."""
    tokens = list(stream)
    return Counter(
        tuple(tokens[i : i + N_GRAM]) for i in range(len(tokens) - N_GRAM + 1)
    )


def feat_ngrams(
    counts: Mapping[tuple[str, ...], int],
    grams: Sequence[tuple[str, ...]],
    binary: bool = False,
) -> np.ndarray:
    if binary:
        return np.array([1.0 if counts.get(g) else 0.0 for g in grams])
    return np.array([float(counts.get(g, 0)) for g in grams])


# ---------------------------------------------------------------------------
# full vector
# ---------------------------------------------------------------------------

def assemble(
    sample: Sample,
    schema: FeatureSchema,
    vocab,
    *,
    prefer: str = "pe",
    binary_ngrams: bool = False,
) -> FeatureVector:
    """Compute the sample's full feature vector in schema order.

    Artifacts are parsed once even when several groups draw on them.
    """
    from .vocab import VOCAB_VERSION  # local: vocab imports this module

    if schema.version != SCHEMA_VERSION:
        raise ExtractionError(f"schema version {schema.version} unsupported")
    if getattr(vocab, "version", VOCAB_VERSION) != VOCAB_VERSION:
        raise ExtractionError(f"vocabulary version {vocab.version} unsupported")

    present = set(schema.groups)
    values = np.zeros(len(schema), dtype=np.float64)

    source = pick_source(sample, prefer)
    needs_sections = present & {GROUP_SECTION_SIZE, GROUP_SECTION_PERM}
    needs_grams = present & {GROUP_API_4GRAM, GROUP_OPCODE_4GRAM}

    listing: Listing | None = None
    if sample.asm_path is not None and (
        needs_grams or (source == "asm" and (needs_sections or GROUP_IMPORT_LIB in present))
    ):
        listing = load_listing(sample.asm_path)

    summary: PeSummary | None = None
    if source == "pe" and (needs_sections or GROUP_IMPORT_LIB in present):
        summary = load_pe_summary(sample)

    stats: Mapping[str, SectionStats] = {}
    if needs_sections:
        if summary is not None:
            stats = section_stats_from_pe(summary)
        elif listing is not None:
            stats = section_stats_from_listing(listing)

    imports = None
    if listing is not None and (needs_grams or (summary is None and GROUP_IMPORT_LIB in present)):
        imports = parse_imports(listing.lines)

    for group in GROUP_ORDER:
        if group not in present:
            continue
        if group == GROUP_FILE_SIZE:
            full = feat_file_size(sample)
        elif group == GROUP_COMPLEXITY:
            full = feat_complexity(sample)
        elif group == GROUP_SECTION_SIZE:
            full = feat_section_size(stats, vocab.section_names)
        elif group == GROUP_SECTION_PERM:
            full = feat_section_perm(stats)
        elif group == GROUP_IMPORT_LIB:
            if summary is not None:
                libs = summary.import_libraries
            elif imports is not None:
                libs = imports.libraries
            else:
                libs = frozenset()
            full = feat_import_lib(libs, vocab.libraries)
        elif group == GROUP_API_4GRAM:
            counts: Mapping = {}
            if listing is not None and imports is not None:
                counts = extract_4grams(api_stream(listing.lines, imports))
            full = feat_ngrams(counts, vocab.api_grams, binary_ngrams)
        else:
            counts = {}
            if listing is not None:
                counts = extract_4grams(opcode_stream(listing.lines))
            full = feat_ngrams(counts, vocab.opcode_grams, binary_ngrams)

        idx = schema.group_indices(group)
        full_names = group_dims(group, vocab)
        if tuple(schema.names[i] for i in idx) == full_names:
            values[idx] = full
        else:
            mapping = dict(zip(full_names, full))
            try:
                values[idx] = [mapping[schema.names[i]] for i in idx]
            except KeyError as exc:
                raise ValueError(
                    f"schema names dimension {exc.args[0]!r} absent from the vocabulary"
                ) from exc

    if not np.isfinite(values).all():
        bad = schema.names[int(np.flatnonzero(~np.isfinite(values))[0])]
        raise ExtractionError(f"sample {sample.id}: non-finite value in {bad}")
    return FeatureVector(values=values)
