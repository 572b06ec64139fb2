"""
Shared fixtures: tiny model settings, encoded toy calls and a small
synthetic corpus on disk.
"""

import numpy as np
import pytest

from config.settings import ModelConfig, load_config
from core.encoder import EncodedDocument, HierarchicalModel
from core.synthetic import EffectSizes, write_synthetic
from core.text_processor import EOS_ID
from utils.validators import AUDIO_FEATURE_COUNT

TINY_VOCAB = 12


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        token_dim=8,
        sentence_dim=8,
        token_blocks=2,
        sentence_blocks=2,
        heads=2,
        ffn_dim=16,
        max_sentences=4,
        max_sentence_length=8,
    )


@pytest.fixture
def tiny_model(tiny_model_config) -> HierarchicalModel:
    return HierarchicalModel(tiny_model_config, TINY_VOCAB, outputs=2, seed=3)


@pytest.fixture
def toy_documents():
    """Two calls with two and three sentences."""
    rng = np.random.default_rng(11)
    return [
        EncodedDocument([[4, 5, 6, EOS_ID], [7, 5, EOS_ID]], rng.normal(size=(2, AUDIO_FEATURE_COUNT))),
        EncodedDocument(
            [[8, 9, EOS_ID], [10, 4, 11, 6, EOS_ID], [5, EOS_ID]],
            rng.normal(size=(3, AUDIO_FEATURE_COUNT)),
        ),
    ]


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_synthetic(path, seed=5, n_calls=40, effects=EffectSizes(1.0, 1.0, 1.0))
    return path


@pytest.fixture
def small_config(tmp_path, corpus_path):
    """Settings small enough for end-to-end runs in a few seconds."""
    return load_config(overrides={
        "CORPUS": str(corpus_path),
        "OUT": str(tmp_path / "run"),
        "SEED": 5,
        "TOKEN_DIM": 8,
        "SENTENCE_DIM": 8,
        "FFN_DIM": 16,
        "HEADS": 2,
        "MAX_SENTENCES": 8,
        "MAX_SENTENCE_LENGTH": 24,
        "EPOCHS": 1,
        "BATCH_SIZE": 8,
        "PREFERENCE_COUNT": 2,
        "INIT_MAX_ITERS": 2,
        "NCC_EPOCHS": 1,
        "MC_EPOCHS": 1,
        "PRETRAIN_BATCH_SIZE": 32,
    })
