import json
import math
from datetime import date, timedelta

import pytest

from core.corpus import (
    CallRecord,
    CorpusLoader,
    compute_labels,
    load_corpus,
    split_chronological,
    summarize,
    tokenized_documents,
    write_corpus,
)
from utils.exceptions import ArtifactError, ConfigurationError, CorpusFormatError, ContractError

AUDIO = [0.1] * 27


def make_record(call_id, day=0, prices=None, event_index=3, texts=("Revenue rose 13% to $5m",)):
    if prices is None:
        prices = [100.0 + i for i in range(event_index + 31)]
    return CallRecord(
        call_id=call_id,
        ticker="ACME",
        event_date=date(2019, 1, 1) + timedelta(days=day),
        sentences=[{"text": t, "audio": AUDIO} for t in texts],
        prices=prices,
        event_index=event_index,
    )


def test_written_corpus_loads_sorted_by_date(tmp_path):
    records = [make_record("c", day=5), make_record("a", day=9), make_record("b", day=5)]
    path = write_corpus(tmp_path / "corpus.jsonl", records, seed=1)
    loader = CorpusLoader()
    loaded = loader.load(path)
    assert [r.call_id for r in loaded] == ["b", "c", "a"]
    assert loader.header.calls == 3
    assert loaded[0] == records[2]


def test_short_price_series_are_rejected(tmp_path):
    early = make_record("early", event_index=1, prices=[100.0] * 40)
    late = make_record("late", prices=[100.0] * 20)
    path = write_corpus(tmp_path / "corpus.jsonl", [early, late, make_record("ok")])
    loader = CorpusLoader(pre_event_days=3)
    assert [r.call_id for r in loader.load(path)] == ["ok"]
    assert [r["call_id"] for r in loader.rejected] == ["early", "late"]


def test_shorter_horizons_accept_shorter_series(tmp_path):
    path = write_corpus(tmp_path / "corpus.jsonl", [make_record("x", prices=[100.0] * 7)])
    assert len(load_corpus(path, horizons=(3,))) == 1
    assert load_corpus(path) == []


def test_invalid_json_reports_the_line(tmp_path):
    path = write_corpus(tmp_path / "corpus.jsonl", [make_record("x")])
    with open(path, "a", encoding="utf-8") as f:
        f.write("{not json\n")
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(path)
    assert info.value.line == 3


def test_audio_length_reports_the_field(tmp_path):
    record = make_record("x").model_dump(mode="json")
    record["sentences"][0]["audio"] = [0.0] * 26
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(path)
    assert info.value.line == 1
    assert info.value.field == "sentences.0.audio"
    assert info.value.exit_code == 3


def test_unknown_schema_version(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"kind": "header", "schema_version": 2, "calls": 0}\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(path)


def test_call_mentioning_header_is_not_taken_for_the_header(tmp_path):
    records = [make_record("header", day=0), make_record("b", day=1), make_record("c", day=2)]
    records[0] = records[0].model_copy(update={"ticker": "header"})
    path = tmp_path / "corpus.jsonl"
    lines = [json.dumps(r.model_dump(mode="json")) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    loader = CorpusLoader()
    loaded = loader.load(path)
    assert [r.call_id for r in loaded] == ["header", "b", "c"]
    assert loaded[0].ticker == "header"
    assert loader.header is None


def test_header_line_needs_its_kind(tmp_path):
    path = write_corpus(tmp_path / "corpus.jsonl", [make_record("a")], seed=3)
    header = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert header["kind"] == "header" and header["seed"] == 3
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[0] = json.dumps({"schema_version": 1, "calls": 1})
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(path)
    assert info.value.line == 1


def test_missing_corpus(tmp_path):
    with pytest.raises(ArtifactError):
        load_corpus(tmp_path / "absent.jsonl")


@pytest.mark.parametrize("n, sizes", [(10, (7, 1, 2)), (576, (403, 57, 116))])
def test_chronological_split_sizes(n, sizes):
    records = [make_record(f"c{i:04d}", day=n - i) for i in range(n)]
    train, valid, test = split_chronological(records)
    assert (len(train), len(valid), len(test)) == sizes
    assert train[-1].event_date <= valid[0].event_date <= test[0].event_date
    assert {r.call_id for r in train + valid + test} == {r.call_id for r in records}


def test_split_needs_ten_calls():
    with pytest.raises(ConfigurationError):
        split_chronological([make_record(f"c{i}", day=i) for i in range(9)])


def test_labels_from_the_event_day_close():
    prices = [90.0, 95.0, 98.0, 100.0, 110.0, 99.0, 100.0]
    labels = compute_labels(make_record("x", prices=prices), horizons=(3,))
    assert labels.returns[3] == pytest.approx(0.0)
    assert labels.movement[3] is False
    returns = [0.1, 99.0 / 110.0 - 1.0, 100.0 / 99.0 - 1.0]
    mean = sum(returns) / 3
    variance = sum((r - mean) ** 2 for r in returns) / 3
    assert labels.volatility[3] == pytest.approx(0.5 * math.log(variance))


def test_labels_need_the_whole_horizon():
    with pytest.raises(ContractError):
        compute_labels(make_record("x", prices=[100.0] * 6), horizons=(3,))


def test_summary_counts_numerals():
    records = [make_record("a"), make_record("b", texts=("During 2020 profits rose", "Thank you"))]
    summary = summarize(records)
    assert summary["calls"] == 2
    assert summary["sentences"] == 3
    assert summary["audio_features"] == 27
    assert summary["numerals_monetary"] == 1
    assert summary["numerals_percentage"] == 1
    assert summary["numerals_temporal"] == 1
    assert summary["numerals_other"] == 0


def test_documents_keep_sentence_structure():
    docs = tokenized_documents([make_record("a", texts=("Up 4%", "Thanks"))])
    assert docs == [[["Up", "4%"], ["Thanks"]]]
