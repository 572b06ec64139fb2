import pytest

from core.text_processor import (
    EOS_ID,
    RESERVED_TOKENS,
    UNK_ID,
    TextCleaner,
    TextProcessor,
    Tokenizer,
    Vocabulary,
    is_numeral_token,
    NUMERAL_FEATURE_COUNT,
    numeral_bucket,
    numeral_features,
    parse_numeral,
)


def test_clean_normalizes_whitespace_and_quotes():
    assert TextCleaner.clean("  We’re   up\n\n13%  ") == "We're up 13%"
    assert TextCleaner.clean("") == ""


def test_numeric_literals_stay_whole():
    tokens = Tokenizer().tokenize("Revenue was $205m, up 13% from 1,200.5 in 2020.")
    assert tokens == ["Revenue", "was", "$205m", ",", "up", "13%", "from", "1,200.5", "in", "2020", "."]


def test_suffix_is_not_taken_from_a_word():
    assert Tokenizer().tokenize("42million") == ["42", "million"]


@pytest.mark.parametrize("surface, value", [
    ("$205m", 205e6),
    ("13%", 13.0),
    ("1,200.5", 1200.5),
    ("2020", 2020.0),
    ("3bn", 3e9),
    ("7k", 7000.0),
])
def test_parse_numeral(surface, value):
    assert parse_numeral(surface) == pytest.approx(value)


def test_parse_numeral_rejects_words():
    assert parse_numeral("revenue") is None
    assert not is_numeral_token("revenue")


def test_numeral_buckets_group_by_magnitude():
    assert numeral_bucket(205e6) == "<num:e8:d2>"
    assert numeral_bucket(13.0) == "<num:e1:d1>"
    assert numeral_bucket(0.0) == "<num:e-2:d0>"


def test_vocabulary_reserves_ids():
    vocab = Vocabulary.build([["Revenue", "rose", "13%"], ["revenue", "14%"]])
    assert vocab.tokens[: len(RESERVED_TOKENS)] == list(RESERVED_TOKENS)
    assert vocab.id_of("REVENUE") == vocab.id_of("revenue")
    assert vocab.id_of("13%") == vocab.id_of("14%")
    assert vocab.id_of("unseen") == UNK_ID


def test_encode_truncates_and_appends_eos():
    vocab = Vocabulary.build([["a", "b", "c", "d"]])
    ids = vocab.encode(["a", "b", "c", "d"], max_length=3)
    assert len(ids) == 3 and ids[-1] == EOS_ID
    assert vocab.encode([], max_length=3) == [EOS_ID]


def test_vocabulary_dict_round_trip():
    vocab = Vocabulary.build([["guidance", "$5m", "raised"]])
    restored = Vocabulary.from_dict(vocab.to_dict())
    assert restored.tokens == vocab.tokens
    assert restored.id_of("raised") == vocab.id_of("raised")


def test_from_dict_needs_reserved_prefix():
    with pytest.raises(ValueError):
        Vocabulary.from_dict({"tokens": ["a", "b"]})


def test_process_sentences():
    assert TextProcessor().process_sentences(["up 13%", "In 2020"]) == [["up", "13%"], ["In", "2020"]]


def test_numeral_features_carry_exponent_and_digits():
    assert numeral_features("$205m") == pytest.approx([8 / 12, 0.2, 0.0, 0.5, 0.0, 0.0])
    assert numeral_features("2015") == pytest.approx([3 / 12, 0.2, 0.0, 0.1, 0.5, 0.0])
    assert numeral_features("revenue") == [0.0] * NUMERAL_FEATURE_COUNT
    assert numeral_features("0") == [0.0] * NUMERAL_FEATURE_COUNT


@pytest.mark.parametrize("a, b", [("2009", "2015"), ("11", "19"), ("$205m", "$208m"), ("13%", "14%")])
def test_same_bucket_numerals_get_distinct_features(a, b):
    vocab = Vocabulary.build([[a, b]])
    assert vocab.id_of(a) == vocab.id_of(b)
    assert numeral_features(a) != numeral_features(b)


def test_encode_values_aligns_with_ids():
    vocab = Vocabulary.build([["up", "13%", "and", "$5m"]])
    tokens = ["up", "13%", "and", "$5m"]
    ids = vocab.encode(tokens, max_length=4)
    values = vocab.encode_values(tokens, max_length=4)
    assert len(values) == len(ids) == 4
    assert values[1] == numeral_features("13%")
    assert values[0] == values[-1] == [0.0] * NUMERAL_FEATURE_COUNT
