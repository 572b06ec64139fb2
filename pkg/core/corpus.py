"""
NumHTML - Corpus

Handles the earnings-call corpus file:
- Schema of one call (sentences with audio features, adjusted closes)
- Loading with per-line validation and rejection of short price series
- Chronological 7:1:2 splitting
- Return and volatility labels per horizon

The file is line-delimited JSON: a header line followed by one call per line.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator

from utils.exceptions import ArtifactError, ConfigurationError, CorpusFormatError
from utils.validators import AUDIO_FEATURE_COUNT, SUPPORTED_HORIZONS, validate_audio_vector, validate_price_series
from .metrics import PriceWindow, n_day_return, volatility
from .numerals import CATEGORIES, count_categories
from .text_processor import TextProcessor

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_SPLIT_RECORDS = 10


class SentenceRecord(BaseModel):
    """One transcript sentence and its 27 audio features."""
    model_config = ConfigDict(extra="forbid")

    text: str
    audio: List[float]

    @field_validator("audio")
    @classmethod
    def _audio_length(cls, value: List[float]) -> List[float]:
        ok, err = validate_audio_vector(value)
        if not ok:
            raise ValueError(err)
        return value


class CallRecord(BaseModel):
    """One earnings call: transcript sentences plus the ticker's adjusted closes around the call."""
    model_config = ConfigDict(extra="forbid")

    call_id: str = Field(min_length=1)
    ticker: str = Field(min_length=1)
    event_date: date
    sentences: List[SentenceRecord] = Field(min_length=1)
    prices: List[float] = Field(min_length=2)
    event_index: int = Field(ge=0)

    @property
    def post_event_prices(self) -> List[float]:
        """Adjusted closes from the event day (day 0) onwards."""
        return self.prices[self.event_index:]

    def window(self) -> PriceWindow:
        return PriceWindow(tuple(self.post_event_prices))


class CorpusHeader(BaseModel):
    """First line of a corpus file, told apart from calls by ``"kind": "header"``."""

    model_config = ConfigDict(extra="allow")

    kind: Literal["header"]
    schema_version: int = SCHEMA_VERSION
    calls: int = 0


def _header_object(line: str) -> Optional[Dict[str, Any]]:
    """The parsed line if it is a JSON object whose ``kind`` is ``header``."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError:
        return None
    if isinstance(data, dict) and data.get("kind") == "header":
        return data
    return None


def _error_field(error: PydanticValidationError) -> Tuple[str, str]:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return location, first["msg"]


class CorpusLoader:
    """Loads and validates call records from a corpus file."""

    def __init__(self, horizons: Sequence[int] = SUPPORTED_HORIZONS, pre_event_days: int = 3):
        """
        Initialize the loader.

        Args:
            horizons: Post-event horizons every record's prices must cover
            pre_event_days: Trading days required before the event
        """
        self.horizons = tuple(horizons)
        self.pre_event_days = pre_event_days
        self.rejected: List[Dict[str, Any]] = []
        self.header: Optional[CorpusHeader] = None

    def parse_line(self, line: str, line_number: int) -> Optional[CallRecord]:
        """
        Parse one non-header line.

        Returns:
            The record, or None if its price series is too short (recorded in ``rejected``)

        Raises:
            CorpusFormatError: If the line is not valid JSON or violates the schema
        """
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"invalid JSON ({e.msg})", line=line_number) from e
        if not isinstance(data, dict):
            raise CorpusFormatError("expected a JSON object", line=line_number)

        try:
            record = CallRecord.model_validate(data)
        except PydanticValidationError as e:
            location, message = _error_field(e)
            raise CorpusFormatError(message, line=line_number, field=location) from e

        ok, err = validate_price_series(record.prices, record.event_index, self.horizons, self.pre_event_days)
        if not ok:
            logger.warning(f"Rejected call {record.call_id} (line {line_number}): {err}")
            self.rejected.append({"line": line_number, "call_id": record.call_id, "reason": err})
            return None
        return record

    def load(self, path: str | Path) -> List[CallRecord]:
        """
        Load a corpus file.

        Args:
            path: Corpus JSONL file

        Returns:
            Valid records sorted by (event date, call id)

        Raises:
            ArtifactError: If the file cannot be read
            CorpusFormatError: On the first malformed line
        """
        path = Path(path)
        self.rejected = []
        self.header = None
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.readlines()
        except OSError as e:
            raise ArtifactError(f"cannot read corpus {path}: {e}") from e

        records: List[CallRecord] = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            if number == 1:
                data = _header_object(line)
                if data is not None:
                    self.header = self._parse_header(data)
                    continue
            record = self.parse_line(line, number)
            if record is not None:
                records.append(record)

        if self.header is None and records:
            logger.debug(f"{path}: no header line, assuming schema version {SCHEMA_VERSION}")
        records.sort(key=lambda r: (r.event_date, r.call_id))
        logger.info(f"Loaded {len(records)} calls from {path} ({len(self.rejected)} rejected)")
        return records

    @staticmethod
    def _parse_header(data: Dict[str, Any]) -> CorpusHeader:
        try:
            header = CorpusHeader.model_validate(data)
        except PydanticValidationError as e:
            location, message = _error_field(e)
            raise CorpusFormatError(message, line=1, field=location) from e
        if header.schema_version != SCHEMA_VERSION:
            raise CorpusFormatError(
                f"unsupported schema version {header.schema_version} (expected {SCHEMA_VERSION})",
                line=1,
                field="schema_version",
            )
        return header


def load_corpus(
    path: str | Path,
    horizons: Sequence[int] = SUPPORTED_HORIZONS,
    pre_event_days: int = 3,
) -> List[CallRecord]:
    """Load, validate and date-sort the calls of a corpus file."""
    return CorpusLoader(horizons, pre_event_days).load(path)


def write_corpus(path: str | Path, records: Iterable[CallRecord], **header_fields: Any) -> Path:
    """
    Write a header line and one call per line.

    Args:
        path: Target file
        records: Calls to write, in order
        **header_fields: Extra header entries (seed, effect sizes, ...)
    """
    records = list(records)
    path = Path(path)
    header = CorpusHeader(kind="header", calls=len(records), **header_fields)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(header.model_dump(mode="json")) + "\n")
            for record in records:
                f.write(json.dumps(record.model_dump(mode="json")) + "\n")
    except OSError as e:
        raise ArtifactError(f"cannot write corpus {path}: {e}") from e
    logger.info(f"Wrote {len(records)} calls to {path}")
    return path


def split_chronological(records: Sequence[CallRecord]) -> Tuple[List[CallRecord], List[CallRecord], List[CallRecord]]:
    """
    Split calls 7:1:2 in time order.

    Records are re-sorted by (event date, call id); the boundaries are
    ``floor(0.7 n)`` and ``floor(0.8 n)``.

    Raises:
        ConfigurationError: If fewer than 10 records are given
    """
    n = len(records)
    if n < MIN_SPLIT_RECORDS:
        raise ConfigurationError(f"a chronological split needs at least {MIN_SPLIT_RECORDS} calls, got {n}")
    ordered = sorted(records, key=lambda r: (r.event_date, r.call_id))
    train_end = n * 7 // 10
    valid_end = n * 8 // 10
    return ordered[:train_end], ordered[train_end:valid_end], ordered[valid_end:]


@dataclass
class LabeledExample:
    """A call with its n-day return and log-volatility targets."""
    record: CallRecord
    returns: Dict[int, float] = field(default_factory=dict)
    volatility: Dict[int, float] = field(default_factory=dict)

    @property
    def movement(self) -> Dict[int, bool]:
        """Rise (True) iff the n-day return is strictly positive."""
        return {n: r > 0 for n, r in self.returns.items()}

    @property
    def horizons(self) -> Tuple[int, ...]:
        return tuple(sorted(self.returns))


def compute_labels(record: CallRecord, horizons: Sequence[int] = SUPPORTED_HORIZONS) -> LabeledExample:
    """
    Labels from the adjusted closes: ``p_n / p_0 - 1`` and the log-volatility
    of daily returns on days 1..n, with ``p_0`` the event-day close.

    Raises:
        ContractError: If the prices do not reach the longest horizon
    """
    window = record.window()
    return LabeledExample(
        record=record,
        returns={n: n_day_return(window, n) for n in horizons},
        volatility={n: volatility(window, n) for n in horizons},
    )


def tokenized_documents(records: Iterable[CallRecord], processor: Optional[TextProcessor] = None) -> List[List[List[str]]]:
    """Token lists per sentence per call."""
    processor = processor or TextProcessor()
    return [processor.process_sentences(s.text for s in record.sentences) for record in records]


def summarize(records: Sequence[CallRecord]) -> Dict[str, Any]:
    """
    Corpus statistics printed by ``gen-data``.

    Returns:
        Call and sentence counts plus numeral counts per category
    """
    documents = tokenized_documents(records)
    numerals = count_categories(documents)
    summary: Dict[str, Any] = {
        "calls": len(records),
        "sentences": sum(len(r.sentences) for r in records),
        "audio_features": AUDIO_FEATURE_COUNT,
    }
    for category in CATEGORIES:
        summary[f"numerals_{category}"] = numerals[category]
    return summary
