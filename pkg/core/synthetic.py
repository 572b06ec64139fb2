"""
NumHTML - Synthetic Corpus

Seeded generator of earnings calls with planted signal. Each call carries
four latent factors:
- tone: polarity of the template phrases
- guidance: whether the guided figure beats last quarter's figure
- voice: mean shift of audio feature 0
- uncertainty: an uncertainty phrase and a mean shift of audio feature 1

Tone, guidance and voice set the drift of the post-event price path;
uncertainty widens its daily noise. Every call draws from its own RNG
substream, so a call's content does not depend on how many calls precede it.
"""

import logging
import math
from dataclasses import dataclass, asdict
from datetime import date, timedelta
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from utils.exceptions import ConfigurationError
from utils.validators import AUDIO_FEATURE_COUNT, SUPPORTED_HORIZONS
from .corpus import CallRecord, SentenceRecord, write_corpus

logger = logging.getLogger(__name__)

START_DATE = date(2017, 1, 3)
TICKERS = ("ACME", "BOLT", "CRUX", "DYNA", "EMBR", "FLUX", "GRID", "HALO", "IONX", "JADE")
SEGMENTS = ("cloud", "retail", "services", "hardware", "international", "consumer")

DRIFT_SCALE = 0.004
BASE_SIGMA = 0.012
UNCERTAINTY_SCALE = 0.35
AUDIO_SHIFT = 0.8

POSITIVE_PHRASES = (
    "We delivered strong growth in our {segment} business this quarter.",
    "Demand in {segment} remained robust and customers expanded their commitments.",
    "We are very pleased with the momentum we see across {segment}.",
)
NEGATIVE_PHRASES = (
    "We saw weak demand in our {segment} business this quarter.",
    "Results in {segment} were disappointing and customers delayed orders.",
    "Margins in {segment} declined sharply against a difficult backdrop.",
)
UNCERTAIN_PHRASES = (
    "There is significant uncertainty around the outlook for next quarter.",
    "Visibility remains limited and conditions could change quickly.",
)
CLEAR_PHRASES = (
    "Visibility into next quarter remains clear.",
    "Our pipeline gives us good visibility for the rest of the year.",
)
FILLER = (
    "Let me now turn to the details of the quarter.",
    "I will hand the call over to our chief financial officer.",
    "Thank you all for joining us today.",
)


@dataclass(frozen=True)
class PlantedFactors:
    """Latent factors of one call, each in {-1, +1}."""
    tone: int
    guidance: int
    voice: int
    uncertainty: int

    def to_dict(self) -> dict:
        return asdict(self)

    def as_vector(self) -> np.ndarray:
        return np.array([self.tone, self.guidance, self.voice, self.uncertainty], dtype=np.float64)


@dataclass(frozen=True)
class EffectSizes:
    text: float = 1.0
    numeral: float = 1.0
    audio: float = 1.0

    def __post_init__(self):
        if min(self.text, self.numeral, self.audio) < 0:
            raise ConfigurationError("effect sizes must be non-negative")

    def drift(self, factors: PlantedFactors) -> float:
        """Daily drift of the post-event path."""
        return DRIFT_SCALE * (
            self.text * factors.tone + self.numeral * factors.guidance + self.audio * factors.voice
        )

    def sigma(self, factors: PlantedFactors) -> float:
        """Daily return noise of the post-event path."""
        return BASE_SIGMA * math.exp(UNCERTAINTY_SCALE * 0.5 * (self.text + self.audio) * factors.uncertainty)


def _sign(rng: np.random.Generator) -> int:
    return 1 if rng.random() < 0.5 else -1


def _money(rng: np.random.Generator, low: int = 20, high: int = 900) -> int:
    return int(rng.integers(low, high))


def _numeral_sentences(rng: np.random.Generator, year: int) -> List[str]:
    """Sentences whose numerals span the four categories; years reach decades before ``year``."""
    fiscal = year - int(rng.integers(0, 4))
    target = year + int(rng.integers(1, 4))
    founded = int(rng.integers(1985, year - 1))
    return [
        f"Revenue for the quarter was ${_money(rng)}m, and operating expenses were ${_money(rng, 5, 200)}m.",
        f"Gross margin came in at {int(rng.integers(20, 70))}% and churn was {int(rng.integers(1, 9))} percent.",
        f"In fiscal {fiscal} we opened {int(rng.integers(3, 60))} new stores across {int(rng.integers(2, 12))} regions.",
        f"We expect to complete the program by {rng.choice(['March', 'June', 'September', 'December'])} {target}.",
        f"Our team now serves {int(rng.integers(100, 5000)):,} customers from {int(rng.integers(2, 30))} offices.",
        f"We have operated in this market since {founded}.",
    ]


def _guidance_sentence(rng: np.random.Generator, guidance: int) -> str:
    previous = _money(rng, 100, 800)
    gap = int(rng.integers(10, 60))
    current = previous + gap if guidance > 0 else previous - gap
    return f"We now expect revenue guidance of ${current}m versus ${previous}m last quarter."


def _audio(rng: np.random.Generator, factors: PlantedFactors) -> List[float]:
    features = rng.normal(size=AUDIO_FEATURE_COUNT)
    features[0] += AUDIO_SHIFT * factors.voice
    features[1] += AUDIO_SHIFT * factors.uncertainty
    return [round(float(v), 6) for v in features]


def _prices(
    rng: np.random.Generator,
    effects: EffectSizes,
    factors: PlantedFactors,
    pre_event_days: int,
    post_event_days: int,
) -> List[float]:
    price = float(rng.uniform(20.0, 200.0))
    path = [price]
    for _ in range(pre_event_days):
        price *= 1.0 + float(rng.normal(0.0, BASE_SIGMA))
        path.append(price)
    drift, sigma = effects.drift(factors), effects.sigma(factors)
    for _ in range(post_event_days):
        step = max(drift + sigma * float(rng.normal()), -0.5)
        price *= 1.0 + step
        path.append(price)
    return [round(p, 4) for p in path]


def generate_call(
    index: int,
    seed_sequence: np.random.SeedSequence,
    effects: EffectSizes,
    horizons: Sequence[int] = SUPPORTED_HORIZONS,
    pre_event_days: int = 5,
) -> Tuple[CallRecord, PlantedFactors]:
    """
    Generate one call from its own RNG substream.

    Args:
        index: Position of the call; fixes its id and date
        seed_sequence: Substream for this call
        effects: Planted effect sizes
        horizons: Horizons the price path must cover
        pre_event_days: Trading days before the event

    Returns:
        The record and its latent factors
    """
    rng = np.random.default_rng(seed_sequence)
    factors = PlantedFactors(tone=_sign(rng), guidance=_sign(rng), voice=_sign(rng), uncertainty=_sign(rng))
    event_date = START_DATE + timedelta(days=2 * index)
    segment = str(rng.choice(SEGMENTS))

    tone_pool = POSITIVE_PHRASES if factors.tone > 0 else NEGATIVE_PHRASES
    risk_pool = UNCERTAIN_PHRASES if factors.uncertainty > 0 else CLEAR_PHRASES
    texts = [str(rng.choice(FILLER))]
    texts += [str(p).format(segment=segment) for p in rng.permutation(tone_pool)[:2]]
    texts.append(_guidance_sentence(rng, factors.guidance))
    texts += [str(t) for t in rng.permutation(_numeral_sentences(rng, event_date.year - 1))[: int(rng.integers(2, 5))]]
    texts.append(str(rng.choice(risk_pool)))
    texts.append(str(rng.choice(FILLER)))

    sentences = [SentenceRecord(text=t, audio=_audio(rng, factors)) for t in texts]
    record = CallRecord(
        call_id=f"call-{index:05d}",
        ticker=TICKERS[int(rng.integers(len(TICKERS)))],
        event_date=event_date,
        sentences=sentences,
        prices=_prices(rng, effects, factors, pre_event_days, max(horizons)),
        event_index=pre_event_days,
    )
    return record, factors


def generate_synthetic(
    seed: int,
    n_calls: int,
    effects: EffectSizes = EffectSizes(),
    horizons: Sequence[int] = SUPPORTED_HORIZONS,
    pre_event_days: int = 5,
) -> Tuple[List[CallRecord], List[PlantedFactors]]:
    """
    Generate a planted-signal corpus in memory.

    Returns:
        Records in date order and their latent factors

    Raises:
        ConfigurationError: If ``n_calls`` is negative
    """
    if n_calls < 0:
        raise ConfigurationError(f"n_calls must be non-negative, got {n_calls}")
    streams = np.random.SeedSequence(seed).spawn(n_calls)
    calls = [generate_call(i, s, effects, horizons, pre_event_days) for i, s in enumerate(streams)]
    logger.info(f"Generated {n_calls} synthetic calls (seed={seed}, effects={asdict(effects)})")
    return [c[0] for c in calls], [c[1] for c in calls]


def write_synthetic(
    path: str | Path,
    seed: int,
    n_calls: int,
    effects: EffectSizes = EffectSizes(),
    horizons: Sequence[int] = SUPPORTED_HORIZONS,
    pre_event_days: int = 5,
) -> List[CallRecord]:
    """Generate a corpus and write it with its generation settings in the header."""
    records, _ = generate_synthetic(seed, n_calls, effects, horizons, pre_event_days)
    write_corpus(
        path,
        records,
        seed=seed,
        generator="synthetic",
        effects=asdict(effects),
        pre_event_days=pre_event_days,
    )
    return records
