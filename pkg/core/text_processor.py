"""
NumHTML - Text Processor

Handles text cleaning, tokenization and vocabulary construction for
earnings-call sentences. Numeric literals survive tokenization as single
tokens, are mapped to magnitude buckets by the vocabulary and keep their
significant digits in a separate value channel.
"""

import math
import re
import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence

logger = logging.getLogger(__name__)

PAD, UNK, EOS, MASK = "[PAD]", "[UNK]", "[EOS]", "[MASK]"
RESERVED_TOKENS = (PAD, UNK, EOS, MASK)
PAD_ID, UNK_ID, EOS_ID, MASK_ID = range(4)

MAGNITUDE_SUFFIXES = {"k": 1e3, "m": 1e6, "mm": 1e6, "b": 1e9, "bn": 1e9}

NUMERAL_PATTERN = r"\$?\d+(?:,\d{3})*(?:\.\d+)?(?:%|(?:mm|bn|k|m|b)(?![A-Za-z]))?"
TOKEN_RE = re.compile(rf"{NUMERAL_PATTERN}|[A-Za-z]+\d*(?:'[A-Za-z]+)?|[^\w\s]|_")
NUMERAL_RE = re.compile(rf"^{NUMERAL_PATTERN}$")
BARE_NUMBER_RE = re.compile(r"^\d+(?:,\d{3})*(?:\.\d+)?$")

BUCKET_MIN_EXPONENT = -2
BUCKET_MAX_EXPONENT = 12

NUMERAL_DIGITS = 5
NUMERAL_FEATURE_COUNT = NUMERAL_DIGITS + 1


class TextCleaner:
    """Cleans and normalizes text content."""

    @staticmethod
    def clean(text: str) -> str:
        """
        Clean text by normalizing whitespace and quote characters.

        Args:
            text: Raw text to clean

        Returns:
            Cleaned text
        """
        if not text:
            return ""

        text = text.replace("\r", "")
        text = TextCleaner.normalize_quotes(text)

        # Normalize runs of whitespace (newlines included) to a single space
        text = re.sub(r"\s+", " ", text)

        return text.strip()

    @staticmethod
    def normalize_quotes(text: str) -> str:
        """Normalize different quote characters to standard quotes."""
        text = text.replace("“", '"').replace("”", '"')  # Double quotes
        text = text.replace("‘", "'").replace("’", "'")  # Single quotes
        return text


class Tokenizer:
    """Whitespace and punctuation tokenizer that keeps numeric literals whole."""

    def __init__(self):
        self.cleaner = TextCleaner()

    def tokenize(self, text: str) -> List[str]:
        """
        Split text into tokens.

        ``$205m``, ``13%``, ``1,200.5`` and ``2020`` each come out as one token;
        other punctuation becomes its own token.

        Args:
            text: Raw sentence text

        Returns:
            List of tokens in order
        """
        return TOKEN_RE.findall(self.cleaner.clean(text))


def is_numeral_token(token: str) -> bool:
    """Whether ``token`` is a single numeric literal."""
    return bool(NUMERAL_RE.match(token))


def parse_numeral(surface: str) -> Optional[float]:
    """
    Parse a numeric literal into a real value.

    Magnitude suffixes are applied (k, m/mm, b/bn); percent signs and
    currency symbols are dropped, so ``13%`` parses to 13.0.

    Args:
        surface: Literal such as ``$205m`` or ``1,200.5``

    Returns:
        The value, or None if ``surface`` is not a numeral
    """
    text = surface.strip().lower().replace("$", "").replace(",", "").rstrip("%")
    scale = 1.0
    for suffix in ("mm", "bn", "k", "m", "b"):
        if text.endswith(suffix):
            scale = MAGNITUDE_SUFFIXES[suffix]
            text = text[: -len(suffix)]
            break
    try:
        return float(text) * scale
    except ValueError:
        return None


def numeral_bucket(value: float) -> str:
    """Magnitude bucket token ``<num:e{exponent}:d{leading digit}>`` for a value."""
    magnitude = abs(value)
    if magnitude == 0 or not math.isfinite(magnitude):
        return f"<num:e{BUCKET_MIN_EXPONENT}:d0>"
    exponent = math.floor(math.log10(magnitude))
    exponent = min(max(exponent, BUCKET_MIN_EXPONENT), BUCKET_MAX_EXPONENT)
    lead = int(magnitude / 10.0 ** exponent)
    lead = min(max(lead, 0), 9)
    return f"<num:e{exponent}:d{lead}>"


def numeral_features(token: str) -> List[float]:
    """
    Value channel of a token.

    Numerals inside one bucket share a vocabulary id, so the model also sees
    the scaled decimal exponent followed by the first ``NUMERAL_DIGITS``
    significant digits (each divided by 10). Other tokens get zeros.

    Example:
        ``$205m`` -> ``[8/12, 0.2, 0.0, 0.5, 0.0, 0.0]``
    """
    features = [0.0] * NUMERAL_FEATURE_COUNT
    if not is_numeral_token(token):
        return features
    value = parse_numeral(token)
    if value is None or value == 0 or not math.isfinite(value):
        return features
    mantissa, exponent = f"{abs(value):.{NUMERAL_DIGITS - 1}e}".split("e")
    exponent = min(max(int(exponent), BUCKET_MIN_EXPONENT), BUCKET_MAX_EXPONENT)
    features[0] = exponent / BUCKET_MAX_EXPONENT
    features[1:] = [int(d) / 10.0 for d in mantissa.replace(".", "")]
    return features


def vocabulary_key(token: str) -> str:
    """Key a token is stored under: its numeral bucket, a reserved name, or lower-case text."""
    if token in RESERVED_TOKENS:
        return token
    if is_numeral_token(token):
        value = parse_numeral(token)
        if value is not None:
            return numeral_bucket(value)
    return token.lower()


class Vocabulary:
    """Token to id mapping with reserved ids for padding, unknown, end-of-sentence and mask."""

    def __init__(self, tokens: Optional[Sequence[str]] = None):
        self.tokens: List[str] = list(RESERVED_TOKENS)
        self.index: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        for token in tokens or ():
            self.add(token)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return vocabulary_key(token) in self.index

    def add(self, token: str) -> int:
        key = vocabulary_key(token)
        if key not in self.index:
            self.index[key] = len(self.tokens)
            self.tokens.append(key)
        return self.index[key]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 1) -> "Vocabulary":
        """
        Build a vocabulary from tokenized sentences.

        Args:
            sentences: Token lists (normally the training split only)
            min_count: Minimum frequency for a key to get its own id

        Returns:
            Vocabulary with keys in first-seen order
        """
        counts: Counter = Counter()
        order: List[str] = []
        for tokens in sentences:
            for token in tokens:
                key = vocabulary_key(token)
                if key not in counts:
                    order.append(key)
                counts[key] += 1

        vocab = cls()
        for key in order:
            if counts[key] >= min_count and key not in vocab.index:
                vocab.index[key] = len(vocab.tokens)
                vocab.tokens.append(key)

        logger.info(f"Vocabulary built: {len(vocab)} entries from {sum(counts.values())} tokens")
        return vocab

    def id_of(self, token: str) -> int:
        return self.index.get(vocabulary_key(token), UNK_ID)

    def encode(self, tokens: Sequence[str], max_length: int) -> List[int]:
        """
        Map tokens to ids, truncate and append the end-of-sentence id.

        Args:
            tokens: Sentence tokens
            max_length: Maximum sequence length including ``[EOS]``

        Returns:
            Id list of length ``min(len(tokens) + 1, max_length)`` ending in EOS
        """
        ids = [self.id_of(t) for t in tokens[: max(max_length - 1, 0)]]
        ids.append(EOS_ID)
        return ids

    def encode_values(self, tokens: Sequence[str], max_length: int) -> List[List[float]]:
        """Per-position ``numeral_features`` aligned with ``encode`` (zeros at ``[EOS]``)."""
        rows = [numeral_features(t) for t in tokens[: max(max_length - 1, 0)]]
        rows.append([0.0] * NUMERAL_FEATURE_COUNT)
        return rows

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        tokens = list(data["tokens"])
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError("vocabulary does not start with the reserved tokens")
        vocab = cls()
        for key in tokens[len(RESERVED_TOKENS):]:
            vocab.index[key] = len(vocab.tokens)
            vocab.tokens.append(key)
        return vocab


class TextProcessor:
    """Main text processor that combines cleaning and tokenization."""

    def __init__(self):
        self.tokenizer = Tokenizer()

    def process_sentences(self, texts: Iterable[str]) -> List[List[str]]:
        """
        Tokenize sentences.

        Args:
            texts: Raw sentence texts

        Returns:
            Token lists, one per sentence
        """
        return [self.tokenizer.tokenize(t) for t in texts]

