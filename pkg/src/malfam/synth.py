"""Synthetic corpus generator for tests, demos, and benchmarks.

Writes nine families of fake samples as .asm/.bytes pairs plus a labels CSV.
Every family has its own section layout, permission mix, import libraries,
opcode distribution, and repetitiveness (which drives the compression-ratio
features apart), so a classifier trained on the output has real structure to
find.  Output is byte-identical across runs for a given seed: every random
draw is keyed on (seed, family, index) only.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path

from . import pe
from .corpus import CorpusManifest, scan_corpus
from .families import FAMILY_IDS
from .util import mix_seed

_IMAGE_BASE = 0x00401000
_BYTES_BASE = 0x00401000

_REGISTERS = ("eax", "ebx", "ecx", "edx", "esi", "edi", "ebp")
_WORDS = ("kernel", "config", "update", "error", "socket", "module")

_LIB_APIS: dict[str, tuple[str, ...]] = {
    "KERNEL32": ("ReadFile", "WriteFile", "CreateFileA", "CloseHandle",
                 "GetProcAddress", "LoadLibraryA", "VirtualAlloc", "Sleep"),
    "USER32": ("MessageBoxA", "FindWindowA", "GetForegroundWindow", "SendMessageA"),
    "ADVAPI32": ("RegOpenKeyExA", "RegSetValueExA", "RegCloseKey", "OpenProcessToken"),
    "WS2_32": ("socket", "connect", "send", "recv", "closesocket"),
    "WININET": ("InternetOpenA", "InternetConnectA", "HttpSendRequestA"),
    "GDI32": ("BitBlt", "CreateCompatibleDC", "SelectObject"),
    "SHELL32": ("ShellExecuteA", "SHGetFolderPathA"),
    "MSVCRT": ("malloc", "free", "memcpy", "strlen"),
    "CRYPT32": ("CertOpenStore", "CryptDecodeObject", "CryptMsgOpenToDecode"),
    "MSASN1": ("ASN1_CreateModule", "ASN1_Encode"),
    "UXTHEME": ("OpenThemeData", "DrawThemeBackground"),
    "OLE32": ("CoInitialize", "CoCreateInstance", "CoUninitialize"),
    "OPENGL32": ("glBegin", "glEnd", "glVertex3f"),
}


@dataclass(frozen=True)
class _SectionPlan:
    name: str   # canonical (no dot); the emitted listing prefixes a dot
    perms: str  # subset of "RWX"
    lines: int  # base body line count, scaled per sample
    kind: str   # code | data | imports | virtual


@dataclass(frozen=True)
class _FamilyProfile:
    sections: tuple[_SectionPlan, ...]
    libraries: tuple[str, ...]
    opcode_weights: tuple[tuple[str, int], ...]
    repeat_bias: float   # share of canned, highly compressible listing lines
    bytes_repeat: float  # share of repeated motifs in the machine-code dump
    call_rate: float
    size_scale: float


def _profile(
    sections: tuple[_SectionPlan, ...],
    libraries: tuple[str, ...],
    signature_ops: tuple[tuple[str, int], ...],
    repeat_bias: float,
    bytes_repeat: float,
    call_rate: float,
    size_scale: float,
) -> _FamilyProfile:
    base_ops = (("mov", 20), ("push", 10), ("pop", 8), ("add", 7), ("sub", 6),
                ("cmp", 6), ("test", 4), ("lea", 4), ("inc", 3), ("dec", 3), ("nop", 2))
    return _FamilyProfile(sections, libraries, base_ops + signature_ops,
                          repeat_bias, bytes_repeat, call_rate, size_scale)


_PROFILES: dict[int, _FamilyProfile] = {
    1: _profile(  # Ramnit: file infector, classic layout
        (_SectionPlan("text", "RX", 220, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 80, "data"),
         _SectionPlan("rdata", "R", 40, "data")),
        ("KERNEL32", "USER32", "SHELL32"),
        (("xchg", 6), ("stosb", 5)), 0.45, 0.50, 0.12, 1.00),
    2: _profile(  # Lollipop: adware, large resource block
        (_SectionPlan("text", "RX", 260, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 60, "data"),
         _SectionPlan("rsrc", "R", 150, "data")),
        ("KERNEL32", "USER32", "WININET", "GDI32"),
        (("movzx", 7), ("shl", 4)), 0.30, 0.35, 0.15, 1.35),
    3: _profile(  # Kelihos_ver3: templated bot, highly repetitive body
        (_SectionPlan("text", "RX", 300, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 50, "data"),
         _SectionPlan("reloc", "R", 60, "data")),
        ("KERNEL32", "WS2_32", "ADVAPI32"),
        (("movsb", 8), ("lodsb", 5)), 0.75, 0.80, 0.10, 0.90),
    4: _profile(  # Vundo: writes into its own code; small trojan
        (_SectionPlan("text", "RWX", 180, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 45, "data")),
        ("KERNEL32", "USER32", "MSVCRT"),
        (("xchg", 8), ("neg", 4)), 0.40, 0.45, 0.14, 0.70),
    5: _profile(  # Simda: big writable state plus uninitialized scratch
        (_SectionPlan("text", "RX", 150, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 200, "data"),
         _SectionPlan("bss", "RW", 120, "virtual")),
        ("KERNEL32", "ADVAPI32", "WS2_32", "MSASN1"),
        (("adc", 6), ("sbb", 4)), 0.35, 0.40, 0.12, 0.85),
    6: _profile(  # Tracur: redirector with TLS callbacks
        (_SectionPlan("text", "RX", 210, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 70, "data"),
         _SectionPlan("tls", "RW", 24, "data")),
        ("KERNEL32", "WININET", "UXTHEME"),
        (("jz", 6), ("jnz", 6)), 0.50, 0.50, 0.16, 1.00),
    7: _profile(  # Kelihos_ver1: older bot, very large writable buffers
        (_SectionPlan("text", "RX", 240, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 260, "data"),
         _SectionPlan("bss", "RW", 200, "virtual")),
        ("KERNEL32", "WS2_32"),
        (("or", 7), ("and", 6)), 0.60, 0.65, 0.10, 1.10),
    8: _profile(  # Obfuscator.ACY: renamed code section, crypto imports
        (_SectionPlan("code", "RX", 320, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 40, "data"),
         _SectionPlan("tls", "RW", 20, "data"),
         _SectionPlan("bss", "RW", 60, "virtual")),
        ("KERNEL32", "CRYPT32", "MSVCRT"),
        (("xor", 14), ("ror", 8), ("rol", 8)), 0.85, 0.85, 0.08, 1.20),
    9: _profile(  # Gatak: steganography-flavored, high-entropy payload
        (_SectionPlan("text", "RX", 190, "code"),
         _SectionPlan("idata", "R", 8, "imports"),
         _SectionPlan("data", "RW", 90, "data"),
         _SectionPlan("rsrc", "R", 80, "data"),
         _SectionPlan("reloc", "R", 40, "data")),
        ("KERNEL32", "OLE32", "OPENGL32"),
        (("shr", 6), ("imul", 5)), 0.12, 0.15, 0.12, 1.00),
}

_PERM_TEXT = {"R": "Read", "W": "Write", "X": "Execute"}


def _perm_banner(perms: str) -> str:
    return "/".join(_PERM_TEXT[p] for p in "RWX" if p in perms)


def _family_apis(profile: _FamilyProfile) -> tuple[str, ...]:
    apis: list[str] = []
    for lib in profile.libraries:
        apis.extend(_LIB_APIS[lib])
    return tuple(apis)


class _ListingWriter:
    """Accumulates listing lines for one section, advancing the cursor."""

    def __init__(self, name: str, start: int):
        self.prefix = f".{name}"
        self.cursor = start
        self.lines: list[str] = []
        self.instructions = 0

    def emit(self, byte_pairs: str | None, code: str | None, comment: str | None = None) -> None:
        parts = [f"{self.prefix}:{self.cursor:08X}"]
        span = 1
        if byte_pairs:
            parts.append(byte_pairs)
            span = len(byte_pairs.split())
        if code:
            parts.append(code)
            self.instructions += 1
        if comment:
            parts.append(f"; {comment}")
        self.lines.append(" ".join(parts))
        self.cursor += span


def _hex_pairs(data: bytes) -> str:
    return " ".join(f"{b:02X}" for b in data)


def _repeat_block(family: int) -> tuple[tuple[str, str], ...]:
    """Family-constant canned instructions; repetition drives compressibility."""
    reg_a = _REGISTERS[family % len(_REGISTERS)]
    reg_b = _REGISTERS[(family + 3) % len(_REGISTERS)]
    imm = family * 0x111
    raw = bytes(((family * 41 + i * 7) & 0xFF) for i in range(8))
    return (
        (_hex_pairs(raw[0:2]), f"mov     {reg_a}, {reg_b}"),
        (_hex_pairs(raw[2:5]), f"add     {reg_a}, {imm:X}h"),
        (_hex_pairs(raw[5:7]), f"push    {reg_a}"),
        (_hex_pairs(raw[7:8]), f"pop     {reg_b}"),
    )


def _random_instruction(rng: random.Random, ops: tuple[str, ...], weights: tuple[int, ...]) -> tuple[str, str]:
    mnemonic = rng.choices(ops, weights=weights)[0]
    reg = rng.choice(_REGISTERS)
    if mnemonic in ("push", "pop", "inc", "dec", "neg"):
        code = f"{mnemonic:<7} {reg}"
    elif mnemonic == "nop" or mnemonic.endswith("sb"):
        code = mnemonic
    elif mnemonic == "lea":
        code = f"lea     {reg}, [{rng.choice(_REGISTERS)}+{rng.randrange(4, 0x80):X}h]"
    elif mnemonic in ("jz", "jnz"):
        code = f"{mnemonic:<7} short loc_{rng.randrange(0x401000, 0x420000):X}"
    elif mnemonic in ("shl", "shr", "ror", "rol"):
        code = f"{mnemonic:<7} {reg}, {rng.randrange(1, 31)}"
    elif rng.random() < 0.5:
        code = f"{mnemonic:<7} {reg}, {rng.choice(_REGISTERS)}"
    else:
        code = f"{mnemonic:<7} {reg}, {rng.getrandbits(16):X}h"
    byte_pairs = _hex_pairs(rng.randbytes(rng.randint(2, 6)))
    return byte_pairs, code


def _emit_code(writer: _ListingWriter, rng: random.Random, profile: _FamilyProfile,
               family: int, apis: tuple[str, ...], n_lines: int) -> None:
    for api in apis:
        writer.emit(_hex_pairs(b"\xff\x25" + rng.randbytes(4)), f"jmp     ds:{api}")
    ops = tuple(name for name, _ in profile.opcode_weights)
    weights = tuple(weight for _, weight in profile.opcode_weights)
    canned = _repeat_block(family)
    canned_pos = 0
    for _ in range(n_lines):
        roll = rng.random()
        if roll < profile.call_rate:
            if rng.random() < 0.75:
                writer.emit(_hex_pairs(b"\xe8" + rng.randbytes(4)),
                            f"call    ds:{rng.choice(apis)}")
            else:
                writer.emit(_hex_pairs(b"\xe8" + rng.randbytes(4)),
                            f"call    sub_{rng.randrange(0x401000, 0x420000):X}")
        elif roll < profile.call_rate + profile.repeat_bias:
            pairs, code = canned[canned_pos % len(canned)]
            canned_pos += 1
            writer.emit(pairs, code)
        else:
            pairs, code = _random_instruction(rng, ops, weights)
            writer.emit(pairs, code)
    writer.emit("C3", "retn")


def _emit_data(writer: _ListingWriter, rng: random.Random, profile: _FamilyProfile, n_lines: int) -> None:
    for _ in range(n_lines):
        roll = rng.random()
        if roll < profile.repeat_bias:
            writer.emit("00 00 00 00", "dd      0")
        elif roll < profile.repeat_bias + 0.05:
            word = rng.choice(_WORDS)
            raw = word.encode("ascii") + b"\x00"
            writer.emit(_hex_pairs(raw), f"db      '{word}',0")
        else:
            value = rng.getrandbits(32)
            writer.emit(_hex_pairs(value.to_bytes(4, "little")), f"dd      0{value:X}h")


def _emit_imports(writer: _ListingWriter, profile: _FamilyProfile) -> None:
    for lib in profile.libraries:
        writer.emit(None, None, f"Imports from {lib}.dll")
        for api in _LIB_APIS[lib]:
            writer.emit(None, f"extrn   {api}:dword")


def _emit_virtual(writer: _ListingWriter, n_lines: int) -> None:
    for _ in range(n_lines):
        writer.emit("?? ?? ?? ?? ?? ?? ?? ??", None)


def _generate_asm(family: int, index: int, seed: int) -> tuple[str, int]:
    """Build one listing; returns (text, emitted instruction count)."""
    profile = _PROFILES[family]
    rng = random.Random(mix_seed(seed, "asm", family, index))
    scale = profile.size_scale * math.exp(rng.gauss(0.0, 0.22))
    apis = _family_apis(profile)

    cursor = _IMAGE_BASE
    all_lines: list[str] = []
    instructions = 0
    for plan in profile.sections:
        start = (cursor + 0xFFF) & ~0xFFF
        writer = _ListingWriter(plan.name, start)
        writer.emit(None, None, f"Segment permissions: {_perm_banner(plan.perms)}")
        writer.cursor = start  # banner sits at the section start address
        n_lines = max(4, round(plan.lines * scale * rng.uniform(0.85, 1.18)))
        if plan.kind == "code":
            _emit_code(writer, rng, profile, family, apis, n_lines)
        elif plan.kind == "data":
            _emit_data(writer, rng, profile, n_lines)
        elif plan.kind == "imports":
            _emit_imports(writer, profile)
        elif plan.kind == "virtual":
            _emit_virtual(writer, n_lines)
        else:  # pragma: no cover - profile table is static
            raise ValueError(f"unknown section kind {plan.kind}")
        all_lines.extend(writer.lines)
        instructions += writer.instructions
        cursor = writer.cursor
    return "\n".join(all_lines) + "\n", instructions


def _generate_bytes(family: int, index: int, seed: int) -> str:
    profile = _PROFILES[family]
    rng = random.Random(mix_seed(seed, "bytes", family, index))
    target = max(256, int(2800 * profile.size_scale * math.exp(rng.gauss(0.0, 0.25))))
    motif = bytes(((family * 37 + i * 11) & 0xFF) for i in range(16))
    chunks: list[bytes] = []
    length = 0
    while length < target:
        chunk = motif if rng.random() < profile.bytes_repeat else rng.randbytes(16)
        chunks.append(chunk)
        length += len(chunk)
    return pe.dump_bytes(b"".join(chunks)[:target], _BYTES_BASE)


def _sample_id(seed: int, family: int, index: int) -> str:
    rng = random.Random(mix_seed(seed, "id", family, index))
    return "".join(rng.choice("0123456789abcdef") for _ in range(20))


def gen_synthetic(
    per_family: int,
    seed: int,
    out_root: str | Path,
    stats: dict[str, int] | None = None,
) -> CorpusManifest:
    """Write a labeled synthetic corpus and return its manifest.

    When a ``stats`` dict is passed it is filled with the exact number of
    mnemonic-bearing lines emitted per sample id, so callers can check the
    parsed opcode stream against ground truth.
    """
    if per_family < 1:
        raise ValueError(f"per_family must be >= 1, got {per_family}")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    labels: dict[str, int] = {}
    for family in FAMILY_IDS:
        for index in range(per_family):
            sample_id = _sample_id(seed, family, index)
            if sample_id in labels:
                raise RuntimeError(f"sample id collision: {sample_id}")
            asm_text, instructions = _generate_asm(family, index, seed)
            (out_root / f"{sample_id}.asm").write_bytes(asm_text.encode("ascii"))
            (out_root / f"{sample_id}.bytes").write_bytes(
                _generate_bytes(family, index, seed).encode("ascii"))
            labels[sample_id] = family
            if stats is not None:
                stats[sample_id] = instructions
    header = '"Id","Class"'
    rows = [f'"{sid}","{labels[sid]}"' for sid in sorted(labels)]
    (out_root / "labels.csv").write_bytes(("\n".join([header] + rows) + "\n").encode("ascii"))
    return scan_corpus(out_root, labels)
