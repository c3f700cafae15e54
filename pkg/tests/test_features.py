"""Feature extractor tests: each of the seven groups against small oracles,
vocabulary ranking rules, schema arithmetic, and importance-based selection."""
from __future__ import annotations

import itertools
import zlib
from collections import Counter

import numpy as np
import pytest

from malfam.corpus import Sample, scan_corpus
from malfam.errors import ExtractionError, TrainingError
from malfam.features import (
    FeatureSchema,
    VocabCaps,
    Vocabulary,
    aggregate_sections,
    assemble,
    build_schema,
    build_vocab,
    extract_4grams,
    extract_matrix,
    feat_complexity,
    feat_file_size,
    feat_import_lib,
    feat_ngrams,
    feat_section_perm,
    feat_section_size,
    load_matrix_csv,
    save_matrix_csv,
    select_by_importance,
)
from malfam.features.extract import SectionStats
from malfam.features.schema import (
    GROUP_API_4GRAM,
    GROUP_COMPLEXITY,
    GROUP_FILE_SIZE,
    GROUP_IMPORT_LIB,
    GROUP_OPCODE_4GRAM,
    GROUP_ORDER,
    GROUP_SECTION_PERM,
    GROUP_SECTION_SIZE,
    group_of_dim,
    section_dims,
)
from malfam.forest import ForestParams


def sample_with(tmp_path, sample_id="s", asm: bytes | None = None, dump: bytes | None = None) -> Sample:
    asm_path = bytes_path = None
    if asm is not None:
        asm_path = tmp_path / f"{sample_id}.asm"
        asm_path.write_bytes(asm)
    if dump is not None:
        bytes_path = tmp_path / f"{sample_id}.bytes"
        bytes_path.write_bytes(dump)
    return Sample(id=sample_id, asm_path=asm_path, bytes_path=bytes_path)


# ---------------------------------------------------------------------------
# file size
# ---------------------------------------------------------------------------

def test_file_size_triple(tmp_path):
    sample = sample_with(tmp_path, asm=b"a" * 1000, dump=b"b" * 500)
    assert feat_file_size(sample).tolist() == [1000.0, 500.0, 0.5]


def test_file_size_missing_asm(tmp_path):
    sample = sample_with(tmp_path, dump=b"b" * 500)
    assert feat_file_size(sample).tolist() == [0.0, 500.0, 0.0]


def test_file_size_equal_gives_unit_ratio(tmp_path):
    sample = sample_with(tmp_path, asm=b"x" * 64, dump=b"y" * 64)
    assert feat_file_size(sample)[2] == 1.0


def test_file_size_unreadable_names_sample(tmp_path):
    sample = Sample(id="ghost", asm_path=tmp_path / "ghost.asm")
    with pytest.raises(ExtractionError, match="ghost"):
        feat_file_size(sample)


# ---------------------------------------------------------------------------
# complexity
# ---------------------------------------------------------------------------

def test_complexity_repetitive_vs_random(tmp_path):
    line = b".text:00401000 B8 01 00 00 00 mov eax, 1\n"
    repetitive = line * (1_048_576 // len(line) + 1)
    rng = np.random.default_rng(0)
    random_hex = rng.bytes(524_289).hex().upper().encode()[:1_048_576]

    rep = feat_complexity(sample_with(tmp_path, "rep", asm=repetitive))
    rnd = feat_complexity(sample_with(tmp_path, "rnd", asm=random_hex))
    assert rep[2] > 20
    assert rnd[2] < 4
    assert rnd[2] < rep[2]


def test_complexity_matches_compressor_oracle(tmp_path):
    payload = b"some listing body\n" * 37
    sample = sample_with(tmp_path, asm=payload)
    expect_comp = len(zlib.compress(payload, 6))
    got = feat_complexity(sample)
    assert got[0] == len(payload)
    assert got[1] == expect_comp
    assert got[2] == len(payload) / expect_comp
    assert got[3:].tolist() == [0.0, 0.0, 0.0]  # no dump file


def test_complexity_empty_file(tmp_path):
    sample = sample_with(tmp_path, asm=b"")
    empty_stream = len(zlib.compress(b"", 6))
    assert feat_complexity(sample)[:3].tolist() == [0.0, float(empty_stream), 0.0]


# ---------------------------------------------------------------------------
# section aggregation
# ---------------------------------------------------------------------------

def test_aggregate_two_text_segments_add_up(tmp_path):
    rows = [".text:00401000 " + " ".join(["90"] * 16) + " nop" for _ in range(16)]
    rows = [f".text:{0x401000 + 16 * i:08X} " + " ".join(["90"] * 16) + " nop"
            for i in range(16)]
    rows += [".data:00403000 ?? db ?"]
    rows += [f".text:{0x500000 + 16 * i:08X} " + " ".join(["90"] * 16) + " nop"
             for i in range(8)]
    asm = "\n".join(rows).encode()
    stats = aggregate_sections(sample_with(tmp_path, asm=asm), prefer="asm")
    assert stats["text"].virtual_size == 0x100 + 0x80
    assert stats["text"].raw_size == 0x180  # every text byte dumped


def test_aggregate_virtual_only_section_has_zero_ratio(tmp_path):
    rows = [f".bss:{0x600000 + 16 * i:08X} " + " ".join(["??"] * 16)
            for i in range(256)]
    stats = aggregate_sections(sample_with(tmp_path, asm="\n".join(rows).encode()), prefer="asm")
    assert stats["bss"].virtual_size == 4096
    assert stats["bss"].raw_size == 0
    assert stats["bss"].ratio == 0.0


def test_aggregate_prefers_pe_summary(tmp_path):
    from pe_fixtures import SectionSpec, build_pe

    pe_path = tmp_path / "s.exe"
    pe_path.write_bytes(build_pe([SectionSpec(".text", 256, 512, executable=True)]))
    asm_path = tmp_path / "s.asm"
    asm_path.write_text(".text:00401000 90 nop\n")
    sample = Sample(id="s", asm_path=asm_path, pe_path=pe_path)

    stats = aggregate_sections(sample, prefer="pe")
    assert stats["text"].virtual_size == 256
    assert stats["text"].raw_size == 512
    assert stats["text"].ratio == 0.5
    # asm preference flips to the listing-derived numbers
    stats = aggregate_sections(sample, prefer="asm")
    assert stats["text"].virtual_size == 1


def test_section_size_vector_layout():
    stats = {"text": SectionStats(256, 512, True, False, True)}
    got = feat_section_size(stats, ["text", "data"])
    assert got.tolist() == [256.0, 512.0, 0.5, 0.0, 0.0, 0.0]
    assert feat_section_size({}, ["text", "data"]).tolist() == [0.0] * 6


def test_section_size_dimension_count():
    names = [f"s{i}" for i in range(282)]
    assert feat_section_size({}, names).shape == (846,)


def test_section_perm_overlap_counted_in_both():
    stats = {"text": SectionStats(100, 50, True, False, True)}
    got = feat_section_perm(stats)
    assert got.tolist() == [100.0, 50.0, 2.0, 0.0, 0.0, 0.0, 100.0, 50.0, 2.0]


def test_section_perm_write_hand_sum():
    stats = {
        "data": SectionStats(10, 10, True, True, False),
        "bss": SectionStats(20, 0, True, True, False),
    }
    got = feat_section_perm(stats)
    assert got[3:6].tolist() == [30.0, 10.0, 3.0]


def test_section_perm_empty():
    assert feat_section_perm({}).tolist() == [0.0] * 9


# ---------------------------------------------------------------------------
# import libraries
# ---------------------------------------------------------------------------

def test_import_lib_one_hot():
    vocab = ["KERNEL32", "CRYPT32"]
    assert feat_import_lib(frozenset({"CRYPT32"}), vocab).tolist() == [0.0, 1.0]
    assert feat_import_lib(frozenset(), vocab).tolist() == [0.0, 0.0]
    assert feat_import_lib(frozenset({"KERNEL32", "CRYPT32", "EXTRA"}), vocab).tolist() == [1.0, 1.0]


# ---------------------------------------------------------------------------
# 4-grams
# ---------------------------------------------------------------------------

def brute_force_4grams(tokens: list[str]) -> Counter:
    counts: Counter = Counter()
    for i in range(len(tokens)):
        window = tuple(tokens[i:i + 4])
        if len(window) == 4:
            counts[window] += 1
    return counts


def test_4gram_basic_windows():
    assert extract_4grams(["a", "b", "c", "d", "e"]) == Counter(
        {("a", "b", "c", "d"): 1, ("b", "c", "d", "e"): 1})
    assert extract_4grams(["a", "b", "c"]) == Counter()
    assert extract_4grams([]) == Counter()


def test_4gram_exhaustive_short_streams():
    alphabet = ["a", "b", "c", "d", "e"]
    for n in range(7):
        for tokens in itertools.product(alphabet, repeat=n):
            assert extract_4grams(list(tokens)) == brute_force_4grams(list(tokens))


def test_4gram_random_streams_match_oracle():
    rng = np.random.default_rng(21)
    alphabet = ["a", "b", "c", "d", "e"]
    for _ in range(200):
        tokens = [alphabet[int(i)] for i in rng.integers(0, 5, int(rng.integers(0, 51)))]
        counts = extract_4grams(tokens)
        oracle = brute_force_4grams(tokens)
        assert counts == oracle
        grams = sorted(set(oracle) | {("z", "z", "z", "z")})
        got = feat_ngrams(counts, grams)
        assert got.tolist() == [float(oracle.get(g, 0)) for g in grams]
        binary = feat_ngrams(counts, grams, binary=True)
        assert binary.tolist() == [1.0 if oracle.get(g) else 0.0 for g in grams]


def test_feat_ngrams_counts_and_absent():
    counts = extract_4grams(["a", "b", "c", "d", "b", "c", "d", "e"])
    assert feat_ngrams(counts, [("a", "b", "c", "d")]).tolist() == [1.0]
    assert feat_ngrams(counts, [("x", "x", "x", "x")]).tolist() == [0.0]


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

def corpus_from_asm(tmp_path, texts: dict[str, str]):
    for stem, text in texts.items():
        (tmp_path / f"{stem}.asm").write_text(text)
    return scan_corpus(tmp_path)


def test_vocab_document_frequency_not_occurrences(tmp_path):
    # gram B repeats heavily inside one sample; gram A appears once in each
    a_line = ".text:00401000 90 mov eax, 1\n"
    stream_a = ".text:00401000 90 a1 x\n.text:00401001 90 a2 x\n.text:00401002 90 a3 x\n.text:00401003 90 a4 x\n"
    stream_b = (".text:00401000 90 b1 x\n.text:00401001 90 b2 x\n"
                ".text:00401002 90 b3 x\n.text:00401003 90 b4 x\n") * 50
    manifest = corpus_from_asm(tmp_path, {"s1": stream_a, "s2": stream_a, "s3": stream_b})
    vocab = build_vocab(manifest, VocabCaps(1, 1, 1, 1), prefer="asm")
    # (a1..a4) is in two documents, (b1..b4) only in one despite 50 repeats
    assert vocab.opcode_grams == (("a1", "a2", "a3", "a4"),)


def test_vocab_tie_breaks_lexicographically(tmp_path):
    text_z = ".zz:00401000 90 nop\n"
    text_a = ".aa:00401000 90 nop\n"
    manifest = corpus_from_asm(tmp_path, {"s1": text_z + text_a})
    vocab = build_vocab(manifest, VocabCaps(sections=1, libraries=1, api_grams=1, opcode_grams=1), prefer="asm")
    assert vocab.section_names == ("aa",)


def test_vocab_caps_respected(tmp_path):
    rows = []
    for k in range(6):
        rows.append(f".sec{k}:0040100{k} 90 nop")
    manifest = corpus_from_asm(tmp_path, {"s1": "\n".join(rows)})
    vocab = build_vocab(manifest, VocabCaps(sections=4, libraries=1, api_grams=1, opcode_grams=1), prefer="asm")
    assert len(vocab.section_names) == 4
    assert vocab.section_names == ("sec0", "sec1", "sec2", "sec3")


def test_vocab_empty_corpus(tmp_path):
    manifest = scan_corpus(tmp_path)
    vocab = build_vocab(manifest)
    assert vocab.section_names == () and vocab.libraries == ()
    assert vocab.api_grams == () and vocab.opcode_grams == ()


# ---------------------------------------------------------------------------
# schema arithmetic
# ---------------------------------------------------------------------------

def small_vocab(s=2, l=2, a=2, o=2) -> Vocabulary:
    return Vocabulary(
        section_names=tuple(f"s{i}" for i in range(s)),
        libraries=tuple(f"L{i}" for i in range(l)),
        api_grams=tuple((f"a{i}", "b", "c", "d") for i in range(a)),
        opcode_grams=tuple((f"o{i}", "p", "q", "r") for i in range(o)),
    )


def test_schema_size_formula_arbitrary_caps():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s, l, a, o = (int(x) for x in rng.integers(1, 30, 4))
        schema = build_schema(small_vocab(s, l, a, o))
        assert len(schema) == 3 + 6 + 9 + 3 * s + l + a + o
        sizes = schema.group_sizes()
        assert sizes[GROUP_FILE_SIZE] == 3
        assert sizes[GROUP_COMPLEXITY] == 6
        assert sizes[GROUP_SECTION_PERM] == 9
        assert sizes[GROUP_SECTION_SIZE] == 3 * s
        assert sizes[GROUP_IMPORT_LIB] == l
        assert sizes[GROUP_API_4GRAM] == a
        assert sizes[GROUP_OPCODE_4GRAM] == o


def test_schema_group_order_is_canonical():
    schema = build_schema(small_vocab(), groups=(GROUP_OPCODE_4GRAM, GROUP_FILE_SIZE))
    groups_seen = [group_of_dim(n) for n in schema.names]
    assert groups_seen == [GROUP_FILE_SIZE] * 3 + [GROUP_OPCODE_4GRAM] * 2


def test_schema_selection_keeps_importance_order():
    vocab = small_vocab(s=4)
    keep = [section_dims("s2")[1], section_dims("s0")[0]]
    schema = build_schema(vocab, selection={GROUP_SECTION_SIZE: keep})
    section_block = [schema.names[i] for i in schema.group_indices(GROUP_SECTION_SIZE)]
    assert section_block == keep


def test_schema_selection_rejects_unknown_dims():
    with pytest.raises(ValueError, match="unknown dims"):
        build_schema(small_vocab(), selection={GROUP_SECTION_SIZE: ["sec_nope_vsize"]})


def test_schema_single_group():
    schema = build_schema(small_vocab(), groups=(GROUP_FILE_SIZE,))
    assert len(schema) == 3
    assert schema.names == ("fsz_asm", "fsz_bytes", "fsz_ratio")


def test_schema_digest_tracks_names():
    a = build_schema(small_vocab())
    b = build_schema(small_vocab())
    c = build_schema(small_vocab(s=3))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 16


def test_schema_rejects_duplicate_names():
    with pytest.raises(ValueError):
        FeatureSchema(names=("x", "x"), groups=(GROUP_FILE_SIZE, GROUP_FILE_SIZE))


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

def labeled_noise_with_perfect_dim(rng, n=120, d=8, perfect=3):
    X = rng.normal(size=(n, d))
    y = rng.integers(1, 4, size=n)
    X[:, perfect] = y * 10.0  # separates classes on its own
    return X, y


def test_selection_finds_perfect_splitter():
    rng = np.random.default_rng(0)
    X, y = labeled_noise_with_perfect_dim(rng)
    picked = select_by_importance(X, y, 3, ForestParams(n_trees=20, seed=1))
    assert picked[0] == 3


def test_selection_full_budget_is_a_ranking():
    rng = np.random.default_rng(1)
    X, y = labeled_noise_with_perfect_dim(rng, d=5)
    picked = select_by_importance(X, y, 5, ForestParams(n_trees=10, seed=2))
    assert sorted(picked) == [0, 1, 2, 3, 4]
    assert picked[0] == 3


def test_selection_deterministic():
    rng = np.random.default_rng(2)
    X, y = labeled_noise_with_perfect_dim(rng)
    a = select_by_importance(X, y, 4, ForestParams(n_trees=15, seed=7))
    b = select_by_importance(X, y, 4, ForestParams(n_trees=15, seed=7))
    assert a == b


def test_selection_rejects_single_class():
    X = np.zeros((10, 3))
    y = np.ones(10, dtype=int)
    with pytest.raises(TrainingError):
        select_by_importance(X, y, 2, ForestParams(n_trees=5, seed=0))


def test_selection_rejects_bad_k():
    X = np.zeros((4, 3))
    y = np.array([1, 1, 2, 2])
    with pytest.raises(ValueError):
        select_by_importance(X, y, 0)
    with pytest.raises(ValueError):
        select_by_importance(X, y, 4)


# ---------------------------------------------------------------------------
# assembly and matrices
# ---------------------------------------------------------------------------

def test_assemble_is_pure(small_corpus):
    vocab = build_vocab(small_corpus, VocabCaps(8, 8, 32, 32), prefer="asm")
    schema = build_schema(vocab)
    sample = small_corpus.samples[0]
    first = assemble(sample, schema, vocab, prefer="asm")
    second = assemble(sample, schema, vocab, prefer="asm")
    assert np.array_equal(first.values, second.values)
    assert np.isfinite(first.values).all()
    assert len(first.values) == len(schema)


def test_assemble_version_mismatch(small_corpus):
    vocab = build_vocab(small_corpus, VocabCaps(4, 4, 4, 4), prefer="asm")
    schema = build_schema(vocab)
    stale = FeatureSchema(names=schema.names, groups=schema.groups, version=99)
    with pytest.raises(ExtractionError, match="version"):
        assemble(small_corpus.samples[0], stale, vocab, prefer="asm")


def test_extract_matrix_thread_invariant(small_corpus):
    vocab = build_vocab(small_corpus, VocabCaps(8, 8, 16, 16), prefer="asm")
    schema = build_schema(vocab)
    one = extract_matrix(small_corpus, schema, vocab, prefer="asm", threads=1)
    four = extract_matrix(small_corpus, schema, vocab, prefer="asm", threads=4)
    assert one.ids == four.ids
    assert np.array_equal(one.values, four.values)


def test_matrix_csv_round_trip(tmp_path, small_corpus):
    vocab = build_vocab(small_corpus, VocabCaps(4, 4, 8, 8), prefer="asm")
    schema = build_schema(vocab)
    matrix = extract_matrix(small_corpus, schema, vocab, prefer="asm")
    path = tmp_path / "m.csv"
    save_matrix_csv(matrix, path)
    loaded = load_matrix_csv(path)
    assert loaded.ids == matrix.ids
    assert loaded.labels == matrix.labels
    assert loaded.schema.names == matrix.schema.names
    assert np.array_equal(loaded.values, matrix.values)
