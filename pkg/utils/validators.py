"""
NumHTML - Validation Utilities

Provides input validation helpers. The ``validate_*`` functions return an
``(is_valid, error_message)`` tuple; ``collect_errors`` gathers the failures.
"""

import math
import logging
from typing import Iterable, List, Optional, Sequence

logger = logging.getLogger(__name__)

AUDIO_FEATURE_COUNT = 27
SUPPORTED_HORIZONS = (3, 7, 15, 30)


def validate_audio_vector(values: Sequence[float]) -> tuple[bool, Optional[str]]:
    """
    Validate a per-sentence audio feature vector.

    Args:
        values: Audio features of one sentence

    Returns:
        Tuple of (is_valid, error_message)
    """
    if len(values) != AUDIO_FEATURE_COUNT:
        return False, f"expected {AUDIO_FEATURE_COUNT} audio features, got {len(values)}"

    if not all(math.isfinite(float(v)) for v in values):
        return False, "audio features must be finite"

    return True, None


def validate_price_series(
    prices: Sequence[float],
    event_index: int,
    horizons: Iterable[int] = SUPPORTED_HORIZONS,
    pre_event_days: int = 3,
) -> tuple[bool, Optional[str]]:
    """
    Validate that an adjusted-close series covers the event window.

    Args:
        prices: Adjusted closing prices in trading-day order
        event_index: Position of the event day inside ``prices``
        horizons: Post-event horizons that must be covered
        pre_event_days: Trading days required before the event

    Returns:
        Tuple of (is_valid, error_message)
    """
    if event_index < pre_event_days:
        return False, f"needs {pre_event_days} days before the event, has {event_index}"

    longest = max(horizons)
    after = len(prices) - 1 - event_index
    if after < longest:
        return False, f"needs {longest} days after the event, has {after}"

    for i, price in enumerate(prices):
        if price is None or not math.isfinite(price) or price <= 0:
            return False, f"price at position {i} must be a positive number"

    return True, None


def validate_horizons(horizons: Iterable[int]) -> tuple[bool, Optional[str]]:
    """
    Validate a horizon selection.

    Args:
        horizons: Requested n-day horizons

    Returns:
        Tuple of (is_valid, error_message)
    """
    horizons = list(horizons)
    if not horizons:
        return False, "at least one horizon is required"

    unknown = sorted(set(horizons) - set(SUPPORTED_HORIZONS))
    if unknown:
        return False, f"unsupported horizons {unknown}; choose from {list(SUPPORTED_HORIZONS)}"

    return True, None


def validate_positive(name: str, value: float) -> tuple[bool, Optional[str]]:
    """Validate that a numeric setting is strictly positive."""
    if value is None or value <= 0:
        return False, f"{name} must be positive"
    return True, None


def collect_errors(checks: Iterable[tuple[bool, Optional[str]]]) -> List[str]:
    """
    Gather the messages of failed checks.

    Args:
        checks: Results of ``validate_*`` calls

    Returns:
        List of error messages (empty if everything passed)
    """
    return [err for ok, err in checks if not ok and err]
