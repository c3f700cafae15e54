"""Config plumbing and end-to-end pipeline tests (vocab -> selection -> forest)."""
from __future__ import annotations

import numpy as np
import pytest

from malfam.config import (
    DEFAULT_SELECTION,
    RunConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
    with_overrides,
)
from malfam.errors import MalfamError, ModelError, TrainingError
from malfam.features import (
    build_vocab,
    build_schema,
    extract_matrix,
    load_selection,
    save_selection,
    VocabCaps,
)
from malfam.features.schema import (
    GROUP_COMPLEXITY,
    GROUP_SECTION_SIZE,
    group_of_dim,
)
from malfam.forest import ForestParams, predict_proba
from malfam.pipeline import (
    compute_selection,
    fit_pipeline,
    load_model_dir,
    save_train_dir,
    subset_columns,
    train_pipeline,
)
from malfam.corpus import stratified_split


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    config = RunConfig(
        groups=(GROUP_COMPLEXITY, GROUP_SECTION_SIZE),
        caps=VocabCaps(10, 20, 30, 40),
        selection={GROUP_SECTION_SIZE: 7},
        train_fraction=0.75,
        folds=3,
        forest=ForestParams(n_trees=50, max_depth=12, seed=3),
        seed=3,
        threads=2,
        prefer="asm",
        binary_ngrams=True,
    )
    path = tmp_path / "config.json"
    save_config(config, path)
    assert load_config(path) == config


def test_config_defaults_fill_in():
    config = config_from_dict({})
    assert config == RunConfig()
    assert config.selection == DEFAULT_SELECTION
    assert config.caps == VocabCaps(282, 300, 5000, 5000)


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        RunConfig(train_fraction=1.0)
    with pytest.raises(ValueError):
        RunConfig(folds=1)
    with pytest.raises(ValueError):
        RunConfig(threads=0)
    with pytest.raises(ValueError):
        RunConfig(prefer="midi")
    with pytest.raises(ValueError):
        RunConfig(groups=("nope",))
    with pytest.raises(ValueError):
        RunConfig(selection={"nope": 3})
    with pytest.raises(MalfamError):
        config_from_dict({"version": 7})
    with pytest.raises(MalfamError):
        config_from_dict({"folds": "many"})


def test_config_overrides_steer_both_seeds():
    config = with_overrides(RunConfig(), seed=17, threads=4)
    assert config.seed == 17
    assert config.forest.seed == 17
    assert config.threads == 4


def test_active_selection_ignores_disabled_groups():
    config = RunConfig(groups=(GROUP_COMPLEXITY,), selection={GROUP_SECTION_SIZE: 5})
    assert config.active_selection() == {}


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def test_fit_pipeline_rejects_overlapping_manifests(small_corpus, fast_config):
    train, _ = stratified_split(small_corpus, 0.8, seed=0)
    with pytest.raises(TrainingError, match="overlap"):
        fit_pipeline(train, train, fast_config)


def test_compute_selection_budgets_and_grouping(small_corpus, fast_config):
    vocab = build_vocab(small_corpus, fast_config.caps, fast_config.groups, prefer="asm")
    schema = build_schema(vocab, fast_config.groups)
    matrix = extract_matrix(small_corpus, schema, vocab, prefer="asm")
    selection = compute_selection(matrix, fast_config)
    assert set(selection) == {GROUP_SECTION_SIZE}
    kept = selection[GROUP_SECTION_SIZE]
    budget = fast_config.selection[GROUP_SECTION_SIZE]
    group_size = schema.group_sizes()[GROUP_SECTION_SIZE]
    assert len(kept) == min(budget, group_size)
    assert all(group_of_dim(name) == GROUP_SECTION_SIZE for name in kept)
    # deterministic given the same config
    assert compute_selection(matrix, fast_config) == selection


def test_selection_file_round_trip(tmp_path):
    selection = {GROUP_SECTION_SIZE: ["sec_data_rsize", "sec_text_vsize"]}
    path = tmp_path / "selection.json"
    save_selection(selection, path)
    assert load_selection(path) == selection


def test_load_selection_rejects_unknown_group(tmp_path):
    path = tmp_path / "selection.json"
    path.write_text('{"version": 1, "selection": {"bogus": []}}', encoding="utf-8")
    with pytest.raises(MalfamError, match="bogus"):
        load_selection(path)


def test_subset_columns_reorders_by_name(small_corpus, fast_config):
    vocab = build_vocab(small_corpus, fast_config.caps, fast_config.groups, prefer="asm")
    schema = build_schema(vocab, fast_config.groups)
    matrix = extract_matrix(small_corpus, schema, vocab, prefer="asm")
    narrow_schema = build_schema(
        vocab, fast_config.groups,
        selection={GROUP_SECTION_SIZE: [schema.names[10], schema.names[7]]},
    )
    narrow = subset_columns(matrix, narrow_schema)
    for name in narrow_schema.names:
        src = schema.names.index(name)
        dst = narrow_schema.names.index(name)
        assert np.array_equal(narrow.values[:, dst], matrix.values[:, src])


def test_train_pipeline_end_to_end(small_corpus, fast_config):
    result, train_man, test_man = train_pipeline(small_corpus, fast_config)
    assert train_man.ids() & test_man.ids() == set()
    assert len(result.schema) == 6 + 25 + 9
    # tiny corpus and forest: well above the 1/9 chance floor is enough here
    assert result.holdout.accuracy >= 0.7
    assert result.cv.per_fold is not None
    # grid off by default
    assert result.grid is None


def test_saved_run_loads_and_predicts(trained_dir):
    bundle = load_model_dir(trained_dir)
    for name in (
        "config.json", "vocab.json", "selection.json", "model.json",
        "metrics.json", "train_matrix.csv", "test_matrix.csv",
        "train_manifest.json", "test_manifest.json",
    ):
        assert (trained_dir / name).is_file(), name
    from malfam.features.matrix import load_matrix_csv

    test_matrix = load_matrix_csv(trained_dir / "test_matrix.csv")
    assert test_matrix.schema.digest() == bundle.schema.digest()
    probs = predict_proba(bundle.forest, test_matrix.values)
    assert probs.shape == (len(test_matrix.ids), 9)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_saved_config_normalizes_thread_count(tmp_path, small_corpus, fast_config):
    from dataclasses import replace as dc_replace

    config = dc_replace(fast_config, threads=4)
    result, train_man, test_man = train_pipeline(small_corpus, config)
    out = tmp_path / "run"
    save_train_dir(out, result, train_man, test_man)
    assert load_config(out / "config.json").threads == 1


def test_load_model_dir_requires_artifacts(tmp_path):
    with pytest.raises(ModelError, match="lacks"):
        load_model_dir(tmp_path)
