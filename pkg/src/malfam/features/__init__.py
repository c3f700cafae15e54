"""Feature schema, vocabularies, extraction, selection, and matrices."""
from .schema import (
    COMPLEXITY_DIMS,
    FILE_SIZE_DIMS,
    FeatureSchema,
    FeatureVector,
    GROUP_API_4GRAM,
    GROUP_COMPLEXITY,
    GROUP_FILE_SIZE,
    GROUP_IMPORT_LIB,
    GROUP_OPCODE_4GRAM,
    GROUP_ORDER,
    GROUP_SECTION_PERM,
    GROUP_SECTION_SIZE,
    SECTION_PERM_DIMS,
    build_schema,
    group_dims,
    group_of_dim,
)
from .vocab import VocabCaps, Vocabulary, build_vocab, load_vocab, save_vocab
from .extract import (
    SectionStats,
    aggregate_sections,
    assemble,
    extract_4grams,
    feat_complexity,
    feat_file_size,
    feat_import_lib,
    feat_ngrams,
    feat_section_perm,
    feat_section_size,
    sample_libraries,
)
from .select import load_selection, save_selection, select_by_importance
from .matrix import FeatureMatrix, extract_matrix, load_matrix_csv, save_matrix_csv

__all__ = [
    "COMPLEXITY_DIMS",
    "FILE_SIZE_DIMS",
    "FeatureMatrix",
    "FeatureSchema",
    "FeatureVector",
    "GROUP_API_4GRAM",
    "GROUP_COMPLEXITY",
    "GROUP_FILE_SIZE",
    "GROUP_IMPORT_LIB",
    "GROUP_OPCODE_4GRAM",
    "GROUP_ORDER",
    "GROUP_SECTION_PERM",
    "GROUP_SECTION_SIZE",
    "SECTION_PERM_DIMS",
    "SectionStats",
    "VocabCaps",
    "Vocabulary",
    "aggregate_sections",
    "assemble",
    "build_schema",
    "build_vocab",
    "extract_4grams",
    "extract_matrix",
    "feat_complexity",
    "feat_file_size",
    "feat_import_lib",
    "feat_ngrams",
    "feat_section_perm",
    "feat_section_size",
    "group_dims",
    "group_of_dim",
    "load_matrix_csv",
    "load_selection",
    "load_vocab",
    "sample_libraries",
    "save_matrix_csv",
    "save_selection",
    "save_vocab",
    "select_by_importance",
]
