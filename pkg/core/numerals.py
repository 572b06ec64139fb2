"""
NumHTML - Numerals

Financial numeral detection, rule-based category tagging and the instance
generators for the two numeral pre-training tasks (category classification
around a masked numeral, and magnitude comparison over five-number lists).
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import ArtifactError, ContractError
from .text_processor import MAGNITUDE_SUFFIXES, MASK, is_numeral_token, parse_numeral

logger = logging.getLogger(__name__)

MONETARY, TEMPORAL, PERCENTAGE, OTHER = "monetary", "temporal", "percentage", "other"
CATEGORIES = (MONETARY, TEMPORAL, PERCENTAGE, OTHER)
GROUP_SIZE = 5

CURRENCY_TRIGGERS = {"$", "usd", "dollar", "dollars", "cent", "cents"}
PERCENT_TRIGGERS = {"percent", "percentage", "pct", "bps"}
MONTHS = {
    "january", "february", "march", "april", "may", "june", "july", "august",
    "september", "october", "november", "december",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
}
TEMPORAL_TRIGGERS = {"year", "years", "quarter", "quarters", "fiscal", "fy", "q1", "q2", "q3", "q4"} | MONTHS
YEAR_RANGE = (1900, 2100)

# A document here is a sequence of tokenized sentences.
TokenDocument = Sequence[Sequence[str]]


@dataclass
class NumeralSpan:
    """A detected number inside a tokenized sentence."""
    surface: str
    value: float
    start: int
    end: int
    categories: Tuple[str, ...] = (OTHER,)

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "value": self.value,
            "start": self.start,
            "end": self.end,
            "categories": list(self.categories),
        }


def _neighbours(tokens: Sequence[str], start: int, end: int) -> List[str]:
    around = []
    if start > 0:
        around.append(tokens[start - 1].lower())
    if end < len(tokens):
        around.append(tokens[end].lower())
    return around


def categorize(tokens: Sequence[str], start: int, end: int, surface: str) -> Tuple[str, ...]:
    """
    Apply the trigger-token rules to the numeral ``tokens[start:end]``.

    monetary: a currency symbol in the literal, or an adjacent currency word.
    percentage: a percent sign in the literal, or an adjacent percent word.
    temporal: a bare four-digit integer in [1900, 2100], or an adjacent
    year/quarter/month/fiscal word.
    other: none of the above.

    Returns:
        Categories in canonical order, never empty
    """
    around = _neighbours(tokens, start, end)
    found = set()

    if "$" in surface or any(t in CURRENCY_TRIGGERS for t in around):
        found.add(MONETARY)
    if "%" in surface or any(t in PERCENT_TRIGGERS for t in around):
        found.add(PERCENTAGE)

    is_year = surface.isdigit() and len(surface) == 4 and YEAR_RANGE[0] <= int(surface) <= YEAR_RANGE[1]
    if is_year or any(t in TEMPORAL_TRIGGERS for t in around):
        found.add(TEMPORAL)

    if not found:
        return (OTHER,)
    return tuple(c for c in CATEGORIES if c in found)


def detect_numerals(tokens: Sequence[str]) -> List[NumeralSpan]:
    """
    Find every numeric literal in a tokenized sentence.

    A separate ``$`` token directly before a number, and a separate ``%`` or
    magnitude-suffix token directly after it, are merged into the span.

    Args:
        tokens: Sentence tokens

    Returns:
        Non-overlapping spans in sentence order (empty if there are none)
    """
    spans: List[NumeralSpan] = []
    n = len(tokens)
    i = 0
    while i < n:
        token = tokens[i]
        if not is_numeral_token(token):
            i += 1
            continue

        start, end = i, i + 1
        if start > 0 and tokens[start - 1] == "$" and not token.startswith("$"):
            if not spans or spans[-1].end <= start - 1:
                start -= 1
        bare_tail = token[-1].isdigit()
        if end < n and bare_tail and tokens[end] == "%":
            end += 1
        elif end < n and bare_tail and tokens[end].lower() in MAGNITUDE_SUFFIXES:
            end += 1

        surface = "".join(tokens[start:end])
        value = parse_numeral(surface)
        if value is not None:
            spans.append(NumeralSpan(surface, value, start, end, categorize(tokens, start, end, surface)))
        i = end

    return spans


def count_categories(documents: Iterable[TokenDocument]) -> Dict[str, int]:
    """Number of detected numerals carrying each category."""
    counts = Counter({c: 0 for c in CATEGORIES})
    for document in documents:
        for tokens in document:
            for span in detect_numerals(tokens):
                counts.update(span.categories)
    return dict(counts)


# ---------------------------------------------------------------------------
# Numeral category classification
# ---------------------------------------------------------------------------


@dataclass
class NccInstance:
    """A sentence with one numeral replaced by ``[MASK]`` and that numeral's categories."""
    tokens: List[str]
    mask_index: int
    labels: Tuple[str, ...]

    def __post_init__(self):
        if sum(1 for t in self.tokens if t == MASK) != 1 or self.tokens[self.mask_index] != MASK:
            raise ContractError("an NCC instance must contain exactly one mask token")

    def label_vector(self) -> np.ndarray:
        return np.array([1.0 if c in self.labels else 0.0 for c in CATEGORIES])

    def to_dict(self) -> dict:
        return {"tokens": self.tokens, "mask_index": self.mask_index, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> "NccInstance":
        return cls(list(data["tokens"]), int(data["mask_index"]), tuple(data["labels"]))


def make_ncc_instances(documents: Iterable[TokenDocument]) -> List[NccInstance]:
    """
    Build one masked instance per numeral span.

    Args:
        documents: Tokenized documents

    Returns:
        Instances in document, sentence and span order
    """
    instances = []
    for document in documents:
        for tokens in document:
            for span in detect_numerals(tokens):
                masked = list(tokens[: span.start]) + [MASK] + list(tokens[span.end:])
                instances.append(NccInstance(masked, span.start, span.categories))
    logger.debug(f"Built {len(instances)} NCC instances")
    return instances


# ---------------------------------------------------------------------------
# Magnitude comparison
# ---------------------------------------------------------------------------


def max_index(values: Sequence[float]) -> int:
    """Index of the largest value; ties go to the lowest index."""
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


@dataclass
class MagnitudeInstance:
    """Five same-category numerals and the one-hot position of the largest."""
    values: Tuple[float, ...]
    category: str
    label: Tuple[int, ...] = ()
    surfaces: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.values) != GROUP_SIZE:
            raise ContractError(f"a magnitude instance holds exactly {GROUP_SIZE} values")
        if self.category not in CATEGORIES:
            raise ContractError(f"unknown numeral category {self.category!r}")
        if not self.label:
            best = max_index(self.values)
            self.label = tuple(1 if i == best else 0 for i in range(GROUP_SIZE))
        if not self.surfaces:
            self.surfaces = tuple(_format_value(v) for v in self.values)

    @property
    def label_index(self) -> int:
        return self.label.index(1)

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "category": self.category,
            "label": list(self.label),
            "surfaces": list(self.surfaces),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MagnitudeInstance":
        return cls(
            tuple(float(v) for v in data["values"]),
            data["category"],
            tuple(int(v) for v in data.get("label", ())),
            tuple(data.get("surfaces", ())),
        )


def _format_value(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def magnitude_bucket(value: float) -> int:
    """Power-of-ten bucket of a value (zero gets its own bucket)."""
    if value == 0:
        return -999
    return int(math.floor(math.log10(abs(value))))


def make_magnitude_instances(
    documents: Iterable[TokenDocument],
    seed: int,
    group_size: int = GROUP_SIZE,
) -> List[MagnitudeInstance]:
    """
    Sample five-number comparison lists from the numerals of a corpus.

    Numerals are pooled per category, de-duplicated by value and split into
    power-of-ten buckets. Each bucket is shuffled with the seeded generator
    and cut into consecutive groups, so every numeral is drawn at most once.

    Args:
        documents: Tokenized documents
        seed: Seed of the sampling generator
        group_size: List length (five)

    Returns:
        Instances ordered by category then bucket; empty, with a warning,
        when no category has enough numerals in any bucket
    """
    pools: Dict[str, Dict[float, str]] = {c: {} for c in CATEGORIES}
    for document in documents:
        for tokens in document:
            for span in detect_numerals(tokens):
                for category in span.categories:
                    pools[category].setdefault(span.value, span.surface)

    rng = np.random.default_rng(seed)
    instances: List[MagnitudeInstance] = []
    for category in CATEGORIES:
        buckets: Dict[int, List[Tuple[float, str]]] = {}
        for value, surface in pools[category].items():
            buckets.setdefault(magnitude_bucket(value), []).append((value, surface))
        for bucket in sorted(buckets):
            items = buckets[bucket]
            order = rng.permutation(len(items))
            for g in range(len(items) // group_size):
                picked = [items[j] for j in order[g * group_size:(g + 1) * group_size]]
                instances.append(MagnitudeInstance(
                    values=tuple(v for v, _ in picked),
                    category=category,
                    surfaces=tuple(s for _, s in picked),
                ))

    if not instances:
        logger.warning(f"Not enough numerals of any category for {group_size}-value magnitude lists")
    else:
        per_category = Counter(inst.category for inst in instances)
        logger.info(f"Built {len(instances)} magnitude instances: {dict(per_category)}")
    return instances


# ---------------------------------------------------------------------------
# Line-delimited round trip
# ---------------------------------------------------------------------------


_INSTANCE_TYPES = {"ncc": NccInstance, "mc": MagnitudeInstance}


def write_instances(path: str | Path, instances: Sequence) -> Path:
    """Write instances as one JSON object per line."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for inst in instances:
                f.write(json.dumps(inst.to_dict(), sort_keys=True) + "\n")
    except OSError as e:
        raise ArtifactError(f"cannot write instances to {path}: {e}") from e
    return path


def read_instances(path: str | Path, kind: str) -> List:
    """
    Read instances written by ``write_instances``.

    Args:
        path: JSONL file
        kind: ``"ncc"`` or ``"mc"``
    """
    cls = _INSTANCE_TYPES.get(kind)
    if cls is None:
        raise ContractError(f"unknown instance kind {kind!r}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [cls.from_dict(json.loads(line)) for line in f if line.strip()]
    except OSError as e:
        raise ArtifactError(f"cannot read instances from {path}: {e}") from e
