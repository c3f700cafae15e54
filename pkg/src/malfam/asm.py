"""Parser for IDA-style disassembly listings (.asm files).

Each content line looks like

    .text:1000110C F6 C4 44     test    ah, 44h   ; maybe a comment

i.e. a ``section:address`` prefix, an optional run of dumped byte pairs, an
optional mnemonic with operands, and an optional ``;`` comment.  The parser is
total: any line maps to exactly one of {AsmLine, blank, parse failure} and a
whole-file pass never raises, whatever bytes are thrown at it.

Disambiguation rule for the byte column: a token is a dumped byte only if it
is an uppercase hex pair or ``??``.  Data directives are printed lowercase
(``db``, ``dd``), so they always land in the mnemonic slot even though "DB"
and "DD" would be valid hex pairs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .util import canonical_library, canonical_section

# section:address prefix; section names never contain whitespace or ':'
_PREFIX_RE = re.compile(r"^\s*([^\s:]+):([0-9A-Fa-f]{1,16})(?=\s|$)")
_BYTE_TOKEN_RE = re.compile(r"^(?:[0-9A-F]{2}|\?\?)$")
_TOKEN_RE = re.compile(r"\S+")
_SEG_PERMS_RE = re.compile(r"^Segment permissions:\s*(.+?)\s*$", re.IGNORECASE)
_IMPORTS_FROM_RE = re.compile(r"^Imports from\s+(\S+)", re.IGNORECASE)
# identifier charset for operand tokens; covers IDA names incl. VC++ mangling
_NAME_TOKEN_RE = re.compile(r"[A-Za-z0-9_@?$]+")

_CALL_MNEMONICS = frozenset({"call", "jmp"})


class ParseFailure:
    """Singleton marker for lines that are neither blank nor parseable."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - repr cosmetics
        return "PARSE_FAILURE"


PARSE_FAILURE = ParseFailure()


@dataclass(frozen=True)
class AsmLine:
    """One parsed listing line.

    byte_tokens holds dumped byte values; None marks a ``??`` placeholder
    (allocated but undumped, e.g. uninitialized data).
    """

    section: str
    address: int
    byte_tokens: tuple[int | None, ...]
    mnemonic: str | None = None
    operands: str | None = None
    comment: str | None = None

    @property
    def known_bytes(self) -> int:
        return sum(1 for b in self.byte_tokens if b is not None)

    @property
    def span(self) -> int:
        """Address range the line occupies: its byte count, at least 1."""
        return max(len(self.byte_tokens), 1)


@dataclass(frozen=True)
class SegmentInfo:
    """A maximal run of consecutive lines sharing one section name."""

    name: str
    start: int
    end: int  # exclusive
    readable: bool
    writable: bool
    executable: bool
    declared_perms: bool  # True when taken from a 'Segment permissions:' comment

    @property
    def span(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ImportInfo:
    libraries: frozenset[str]
    api_symbols: frozenset[str]


@dataclass(frozen=True)
class Listing:
    lines: tuple[AsmLine, ...]
    parse_failures: int


def parse_line(text: str) -> AsmLine | None | ParseFailure:
    """Parse one listing line.

    Returns None for blank lines and PARSE_FAILURE for anything without a
    valid ``section:address`` prefix.  Never raises.
    """
    if not text.strip():
        return None
    m = _PREFIX_RE.match(text)
    if m is None:
        return PARSE_FAILURE
    section = canonical_section(m.group(1))
    if not section:
        return PARSE_FAILURE
    address = int(m.group(2), 16)

    payload = text[m.end():]
    code, semi, comment_text = payload.partition(";")
    comment = comment_text.strip() if semi else None
    if comment == "":
        comment = None

    byte_tokens: list[int | None] = []
    mnemonic: str | None = None
    operands: str | None = None
    for tok_match in _TOKEN_RE.finditer(code):
        tok = tok_match.group()
        if _BYTE_TOKEN_RE.match(tok):
            byte_tokens.append(None if tok == "??" else int(tok, 16))
            continue
        mnemonic = tok.lower()
        rest = code[tok_match.end():].strip()
        operands = rest if rest else None
        break
    return AsmLine(section, address, tuple(byte_tokens), mnemonic, operands, comment)


def parse_listing(text: str) -> Listing:
    """Parse a whole listing; counts failed lines instead of raising."""
    lines: list[AsmLine] = []
    failures = 0
    for raw in text.splitlines():
        parsed = parse_line(raw)
        if parsed is None:
            continue
        if parsed is PARSE_FAILURE:
            failures += 1
            continue
        lines.append(parsed)
    return Listing(tuple(lines), failures)


def load_listing(path: str | Path) -> Listing:
    """Read a listing file; undecodable bytes are replaced, never fatal."""
    data = Path(path).read_bytes()
    return parse_listing(data.decode("utf-8", errors="replace"))


def parse_segments(lines: tuple[AsmLine, ...] | list[AsmLine]) -> list[SegmentInfo]:
    """Group lines into segments: maximal runs sharing a section name.

    Permissions come from the first 'Segment permissions: Read/Write/Execute'
    comment inside the run.  Without one, the defaults are readable-only,
    executable only for 'text' — the convention the listings follow when the
    producer omits the banner.
    """
    segments: list[SegmentInfo] = []
    run: list[AsmLine] = []

    def flush() -> None:
        if not run:
            return
        name = run[0].section
        start = min(line.address for line in run)
        end = max(line.address + line.span for line in run)
        readable, writable, executable = True, False, name == "text"
        declared = False
        for line in run:
            if line.comment is None:
                continue
            m = _SEG_PERMS_RE.match(line.comment)
            if m is None:
                continue
            tokens = {t.strip().lower() for t in m.group(1).split("/")}
            readable = "read" in tokens
            writable = "write" in tokens
            executable = "execute" in tokens
            declared = True
            break
        segments.append(SegmentInfo(name, start, end, readable, writable, executable, declared))
        run.clear()

    for line in lines:
        if run and line.section != run[0].section:
            flush()
        run.append(line)
    flush()
    return segments


def parse_imports(lines: tuple[AsmLine, ...] | list[AsmLine]) -> ImportInfo:
    """Collect import libraries and extern API symbols.

    Libraries come from 'Imports from <name>' comments (canonicalized:
    uppercase, extension stripped).  API symbols come from
    ``extrn <symbol>:<type>`` lines with any ``__imp_`` prefix removed;
    mangled names pass through verbatim.
    """
    libraries: set[str] = set()
    symbols: set[str] = set()
    for line in lines:
        if line.comment is not None:
            m = _IMPORTS_FROM_RE.match(line.comment)
            if m is not None:
                lib = canonical_library(m.group(1))
                if lib:
                    libraries.add(lib)
        if line.mnemonic == "extrn" and line.operands:
            first = line.operands.split()[0]
            sym, colon, _type = first.rpartition(":")
            if not colon or not sym:
                continue
            if sym.startswith("__imp_"):
                sym = sym[len("__imp_"):]
            if sym:
                symbols.add(sym)
    return ImportInfo(frozenset(libraries), frozenset(symbols))


def opcode_stream(lines: tuple[AsmLine, ...] | list[AsmLine]) -> list[str]:
    """Mnemonics of every mnemonic-bearing line, in file order.

    Data directives (db, dd, ...) count: the stream mirrors what the listing
    prints, not what a CPU would execute.
    """
    return [line.mnemonic for line in lines if line.mnemonic is not None]


def api_stream(lines: tuple[AsmLine, ...] | list[AsmLine], imports: ImportInfo) -> list[str]:
    """API names referenced by call/jmp lines, in file order.

    A line emits a symbol when any operand token equals an extern symbol
    (whole-token match).  Thunks are not resolved, so indirect calls through
    local jump stubs are invisible — a known blind spot of this kind of
    static extraction.
    """
    symbols = imports.api_symbols
    if not symbols:
        return []
    stream: list[str] = []
    for line in lines:
        if line.mnemonic not in _CALL_MNEMONICS or not line.operands:
            continue
        for token in _NAME_TOKEN_RE.findall(line.operands):
            if token in symbols:
                stream.append(token)
                break
    return stream
