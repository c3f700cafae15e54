"""Shared fixtures: small synthetic corpora and a pre-trained model directory.

Session scope keeps the expensive pieces (corpus generation, forest
training) to one run each; tests that mutate state get their own tmp dirs.
"""
from __future__ import annotations

from pathlib import Path

import pytest

from malfam.config import RunConfig
from malfam.features.schema import (
    GROUP_COMPLEXITY,
    GROUP_SECTION_PERM,
    GROUP_SECTION_SIZE,
)
from malfam.forest import ForestParams
from malfam.pipeline import save_train_dir, train_pipeline
from malfam.synth import gen_synthetic


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory: pytest.TempPathFactory):
    """Nine families x 3 samples; enough to exercise every pipeline stage."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = gen_synthetic(3, seed=11, out_root=root)
    return manifest


@pytest.fixture(scope="session")
def fast_config() -> RunConfig:
    # small forest, two folds, and the 40-dim combination keep fixtures quick
    return RunConfig(
        groups=(GROUP_COMPLEXITY, GROUP_SECTION_SIZE, GROUP_SECTION_PERM),
        selection={GROUP_SECTION_SIZE: 25},
        folds=2,
        forest=ForestParams(n_trees=25, seed=0),
        seed=0,
    )


@pytest.fixture(scope="session")
def trained_dir(tmp_path_factory: pytest.TempPathFactory, fast_config: RunConfig) -> Path:
    """A saved training run over a 5-per-family corpus."""
    corpus_root = tmp_path_factory.mktemp("train_corpus")
    manifest = gen_synthetic(5, seed=23, out_root=corpus_root)
    result, train_man, test_man = train_pipeline(manifest, fast_config)
    out = tmp_path_factory.mktemp("model") / "run"
    save_train_dir(out, result, train_man, test_man)
    return out
