import numpy as np
import pytest

from core.corpus import compute_labels, load_corpus, summarize, tokenized_documents
from core.numerals import TEMPORAL, make_magnitude_instances
from core.synthetic import EffectSizes, PlantedFactors, generate_synthetic, write_synthetic
from utils.exceptions import ConfigurationError


def test_generation_is_deterministic():
    a = generate_synthetic(seed=3, n_calls=5)
    b = generate_synthetic(seed=3, n_calls=5)
    assert a == b
    assert generate_synthetic(seed=4, n_calls=5)[0] != a[0]


def test_same_seed_writes_identical_files(tmp_path):
    write_synthetic(tmp_path / "a.jsonl", seed=9, n_calls=6)
    write_synthetic(tmp_path / "b.jsonl", seed=9, n_calls=6)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_calls_do_not_depend_on_corpus_size():
    short, _ = generate_synthetic(seed=2, n_calls=3)
    long, _ = generate_synthetic(seed=2, n_calls=6)
    assert long[:3] == short


def test_empty_corpus(tmp_path):
    assert generate_synthetic(seed=1, n_calls=0) == ([], [])
    path = tmp_path / "empty.jsonl"
    write_synthetic(path, seed=1, n_calls=0)
    assert load_corpus(path) == []


def test_negative_settings_are_rejected():
    with pytest.raises(ConfigurationError):
        EffectSizes(text=-0.5)
    with pytest.raises(ConfigurationError):
        generate_synthetic(seed=1, n_calls=-1)


def test_written_calls_pass_validation(tmp_path):
    path = tmp_path / "corpus.jsonl"
    records = write_synthetic(path, seed=8, n_calls=12)
    loaded = load_corpus(path, pre_event_days=5)
    assert [r.call_id for r in loaded] == [r.call_id for r in records]
    assert all(len(s.audio) == 27 for r in loaded for s in r.sentences)


def test_numerals_of_every_dated_kind_are_planted():
    records, _ = generate_synthetic(seed=6, n_calls=40)
    summary = summarize(records)
    assert summary["numerals_monetary"] >= 40
    assert summary["numerals_temporal"] > 0
    assert summary["numerals_percentage"] > 0


def test_tone_drives_returns_when_it_is_the_only_effect():
    records, factors = generate_synthetic(seed=0, n_calls=200, effects=EffectSizes(1.0, 0.0, 0.0))
    rises = np.array([compute_labels(r, (30,)).returns[30] > 0 for r in records])
    tone_up = np.array([f.tone > 0 for f in factors])
    assert np.mean(rises == tone_up) > 0.8


def test_voice_factor_shifts_the_first_audio_feature():
    records, factors = generate_synthetic(seed=1, n_calls=60)
    first = np.array([np.mean([s.audio[0] for s in r.sentences]) for r in records])
    voice = np.array([f.voice for f in factors])
    assert first[voice > 0].mean() > first[voice < 0].mean() + 0.5


def test_factor_vector_order():
    assert PlantedFactors(1, -1, 1, -1).as_vector().tolist() == [1.0, -1.0, 1.0, -1.0]


def test_years_spread_far_enough_for_temporal_lists():
    records, _ = generate_synthetic(seed=5, n_calls=200)
    instances = make_magnitude_instances(tokenized_documents(records), seed=5)
    temporal = [i for i in instances if i.category == TEMPORAL]
    assert temporal
    assert all(len(set(i.values)) == 5 for i in temporal)
