import numpy as np
import pytest

from config.settings import PretrainConfig
from core.encoder import HierarchicalModel
from core.numerals import make_magnitude_instances, make_ncc_instances
from core.probes import (
    MagnitudeProbe,
    NccHead,
    classify_ncc,
    encode_ncc_instance,
    numeral_embeddings,
    probe_magnitude,
    train_magnitude,
    train_ncc,
)
from core.tensor import Tensor
from core.text_processor import EOS_ID, MASK, TextProcessor, Vocabulary
from utils.exceptions import ConfigurationError, DimensionError

SENTENCES = [
    "During 2020 profits increased by 13% to $205m",
    "up 13% or $2m",
    "we shipped 42 units in Q3",
    "margins rose 4% in 2019",
    "capex was $12m for the year",
    "headcount grew to 310",
]


@pytest.fixture
def tokenized():
    return TextProcessor().process_sentences(SENTENCES)


@pytest.fixture
def vocab(tokenized):
    counting = [str(n) for n in range(11, 26)]
    return Vocabulary.build(tokenized + [counting])


@pytest.fixture
def model(tiny_model_config, vocab):
    return HierarchicalModel(tiny_model_config, len(vocab), seed=1)


def test_zero_head_is_undecided(model, vocab, tokenized):
    instance = make_ncc_instances([tokenized])[0]
    probs = classify_ncc(model, NccHead(8, zero=True), instance, vocab)
    assert np.allclose(probs, 0.5)


def test_long_sentence_keeps_the_mask_in_view(vocab):
    tokens = ["w"] * 20 + [MASK] + ["w"] * 20
    instance = make_ncc_instances([[["w"] * 20 + ["7"] + ["w"] * 20]])[0]
    assert instance.tokens == tokens
    ids, values, position = encode_ncc_instance(instance, vocab, max_length=8)
    assert len(ids) == 8 and ids[-1] == EOS_ID
    assert len(values) == 8
    assert ids[position] == vocab.id_of(MASK)


def test_zero_output_probe_is_uniform():
    probe = MagnitudeProbe(6, hidden=4, rng=np.random.default_rng(0), zero_output=True)
    embeddings = Tensor(np.tile(np.linspace(-1, 1, 6), (5, 1)))
    probs = probe_magnitude(embeddings, probe).numpy()
    assert probs.shape == (5,)
    assert np.allclose(probs, 0.2)


def test_probe_output_is_a_distribution():
    probe = MagnitudeProbe(6, hidden=4, rng=np.random.default_rng(2))
    probs = probe_magnitude(Tensor(np.random.default_rng(3).normal(size=(3, 5, 6))), probe).numpy()
    assert probs.shape == (3, 5)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_probe_rejects_wrong_width():
    probe = MagnitudeProbe(6, hidden=4)
    with pytest.raises(DimensionError):
        probe_magnitude(Tensor(np.ones((5, 7))), probe)
    with pytest.raises(DimensionError):
        probe_magnitude(Tensor(np.ones((4, 6))), probe)


def test_train_ncc_reports_before_and_after(model, vocab, tokenized):
    instances = make_ncc_instances([tokenized])
    config = PretrainConfig(ncc_epochs=2, batch_size=4)
    report = train_ncc(model, NccHead(8, np.random.default_rng(0)), instances, vocab, config, seed=0)
    assert report.train_instances + report.holdout_instances == len(instances)
    assert len(report.losses) == 2 and all(np.isfinite(report.losses))
    assert 0.0 <= report.lrap_after <= 1.0
    assert set(report.to_dict()) >= {"LRAP", "ROC_AUC", "LRAP_before"}


def test_train_ncc_needs_instances(model, vocab, tokenized):
    instances = make_ncc_instances([tokenized])[:1]
    with pytest.raises(ConfigurationError):
        train_ncc(model, NccHead(8), instances, vocab, PretrainConfig())


def test_train_magnitude_keeps_final_block_frozen(model, vocab):
    instances = make_magnitude_instances([[[str(n) for n in range(11, 26)]]], seed=0)
    prefix = model.final_token_block_prefix
    before = {k: v.copy() for k, v in model.state_dict().items() if k.startswith(prefix)}
    probe = MagnitudeProbe(8, hidden=4, rng=np.random.default_rng(0))
    report = train_magnitude(model, probe, instances, vocab, PretrainConfig(mc_epochs=2, batch_size=2), seed=0)

    after = model.state_dict()
    assert before and all(np.array_equal(after[k], v) for k, v in before.items())
    assert report.train_instances + report.test_instances == 3
    assert report.counts["All"] == report.test_instances
    assert report.accuracy["Monetary"] is None
    assert list(report.to_dict())[-4:] == ["Monetary", "Temporal", "Percentage", "All"]
    assert np.any(after["token_embedding.values"] != 0.0)


def test_train_magnitude_needs_two_lists(model, vocab):
    instances = make_magnitude_instances([[[str(n) for n in range(11, 16)]]], seed=0)
    assert len(instances) == 1
    with pytest.raises(ConfigurationError, match="magnitude lists"):
        train_magnitude(model, MagnitudeProbe(8), instances, vocab, PretrainConfig())


def test_same_bucket_numerals_are_told_apart_by_their_digits(model, vocab):
    assert vocab.id_of("11") == vocab.id_of("15") == vocab.id_of("19")
    model.token_embedding.values.data[...] = np.random.default_rng(4).normal(size=model.token_embedding.values.shape)
    embedded = numeral_embeddings(model, ["11", "15", "19"], vocab).numpy()
    assert not np.allclose(embedded[0], embedded[1])
    assert not np.allclose(embedded[1], embedded[2])


def test_zero_value_channel_leaves_bucket_embeddings_shared(model, vocab):
    embedded = numeral_embeddings(model, ["11", "15"], vocab).numpy()
    assert np.allclose(embedded[0], embedded[1])
