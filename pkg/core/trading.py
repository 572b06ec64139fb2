"""
NumHTML - Trading Simulation

Single-share trades driven by movement predictions:
- Buy on the event day and sell tau days later when a rise is predicted
- Short on the event day and cover tau days later when a fall is predicted
- Baselines: buy-all, short-all and a seeded coin flip
- Cumulative profit and Sharpe ratio of a ledger
- Paired sign test of per-event profits against a reference ledger

No fees, no position sizing, no intra-day trading.
"""

import math
import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import ConfigurationError, ContractError
from .corpus import CallRecord
from .metrics import SignTestResult, sign_test

logger = logging.getLogger(__name__)

LONG = 0
SHORT = 1
STRATEGIES = ("model", "buy-all", "short-all", "random")


@dataclass(frozen=True)
class TradingEvent:
    """An earnings call as seen by the simulator: adjusted closes from the event day on."""
    event_id: str
    ticker: str
    event_date: date
    prices: Tuple[float, ...]

    @classmethod
    def from_record(cls, record: CallRecord) -> "TradingEvent":
        return cls(record.call_id, record.ticker, record.event_date, tuple(record.post_event_prices))

    def price_on(self, day: int) -> Optional[float]:
        """Close on a day after the event, or None if unavailable."""
        if day < 0 or day >= len(self.prices):
            return None
        price = self.prices[day]
        if price is None or not math.isfinite(price) or price <= 0:
            return None
        return float(price)


@dataclass(frozen=True)
class Trade:
    """
    One round trip of a single share.

    ``action`` is 0 for a long position (predicted rise) and 1 for a short
    sale (predicted fall). Days are counted from the event day.
    """
    event_id: str
    ticker: str
    entry_day: int
    exit_day: int
    entry_price: float
    exit_price: float
    action: int

    def __post_init__(self):
        if self.entry_day >= self.exit_day:
            raise ContractError(f"trade {self.event_id}: entry day {self.entry_day} is not before exit day {self.exit_day}")
        if self.entry_price <= 0 or self.exit_price <= 0:
            raise ContractError(f"trade {self.event_id}: prices must be positive")
        if self.action not in (LONG, SHORT):
            raise ContractError(f"trade {self.event_id}: action must be 0 or 1, got {self.action}")

    @property
    def profit(self) -> float:
        """``(exit - entry) * (-1)^action``."""
        change = self.exit_price - self.entry_price
        return -change if self.action == SHORT else change

    @property
    def return_rate(self) -> float:
        """Profit relative to the entry price."""
        return self.profit / self.entry_price

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "ticker": self.ticker,
            "entry_day": self.entry_day,
            "exit_day": self.exit_day,
            "entry_price": self.entry_price,
            "exit_price": self.exit_price,
            "action": self.action,
            "profit": self.profit,
        }


@dataclass
class TradeLedger:
    """Ordered trades plus the events that could not be traded."""
    trades: List[Trade] = field(default_factory=list)
    skipped: List[Dict[str, str]] = field(default_factory=list)
    comparison: Optional[SignTestResult] = None

    @property
    def profits(self) -> List[float]:
        return [t.profit for t in self.trades]

    @property
    def cumulative_profit(self) -> float:
        # fsum is correctly rounded, so the total does not depend on trade order
        return math.fsum(self.profits)

    @property
    def return_rates(self) -> List[float]:
        return [t.return_rate for t in self.trades]

    def to_records(self) -> List[Dict[str, Any]]:
        """One JSON-ready row per trade, then one per skipped event, then the sign test if attached."""
        rows = [{"kind": "trade", **t.to_dict()} for t in self.trades]
        rows += [{"kind": "skipped", **s} for s in self.skipped]
        if self.comparison is not None:
            rows.append({"kind": "sign_test", **self.comparison.to_dict()})
        return rows

    def summary(self, risk_free_rate: float = 0.0) -> Dict[str, Any]:
        """Profit and Sharpe ratio, with trade and skip counts and the sign test when one was attached."""
        summary = {
            "Profit": self.cumulative_profit,
            "Sharpe Ratio": sharpe(self, risk_free_rate),
            "trades": len(self.trades),
            "skipped": len(self.skipped),
        }
        if self.comparison is not None:
            summary["Sign Test Wins"] = self.comparison.positives
            summary["Sign Test Losses"] = self.comparison.negatives
            summary["Sign Test p"] = self.comparison.p_value
        return summary


def simulate(
    events: Iterable[TradingEvent],
    predictions: Mapping[str, bool],
    tau: int = 3,
) -> TradeLedger:
    """
    Trade one share per event according to the predicted movement.

    Args:
        events: Events to trade, in ledger order
        predictions: Event id -> predicted rise
        tau: Holding period in trading days

    Returns:
        The ledger; events without a prediction or without both prices are skipped
    """
    if tau < 1:
        raise ConfigurationError(f"tau must be at least 1, got {tau}")

    ledger = TradeLedger()
    for event in events:
        if event.event_id not in predictions:
            _skip(ledger, event, "no prediction")
            continue
        entry, exit_ = event.price_on(0), event.price_on(tau)
        if entry is None or exit_ is None:
            _skip(ledger, event, f"missing price on day {0 if entry is None else tau}")
            continue
        action = LONG if predictions[event.event_id] else SHORT
        ledger.trades.append(Trade(event.event_id, event.ticker, 0, tau, entry, exit_, action))

    logger.info(
        f"Simulated {len(ledger.trades)} trades (tau={tau}, skipped={len(ledger.skipped)}): "
        f"profit {ledger.cumulative_profit:.4f}"
    )
    return ledger


def _skip(ledger: TradeLedger, event: TradingEvent, reason: str) -> None:
    logger.warning(f"Skipping event {event.event_id} ({event.ticker}): {reason}")
    ledger.skipped.append({"event_id": event.event_id, "ticker": event.ticker, "reason": reason})


def baseline_predictions(strategy: str, events: Sequence[TradingEvent], seed: int = 0) -> Dict[str, bool]:
    """
    Predictions of a baseline strategy.

    Args:
        strategy: ``buy-all``, ``short-all`` or ``random`` (underscores accepted)
        events: Events to predict
        seed: Seed of the fair coin for ``random``

    Raises:
        ConfigurationError: For an unknown strategy
    """
    name = strategy.replace("_", "-")
    if name == "buy-all":
        return {e.event_id: True for e in events}
    if name == "short-all":
        return {e.event_id: False for e in events}
    if name == "random":
        rng = np.random.default_rng(seed)
        return {e.event_id: bool(rng.random() < 0.5) for e in events}
    raise ConfigurationError(f"unknown baseline strategy '{strategy}'")


def baseline(strategy: str, events: Sequence[TradingEvent], tau: int = 3, seed: int = 0) -> TradeLedger:
    """Simulate a baseline strategy."""
    return simulate(events, baseline_predictions(strategy, events, seed), tau)


def compare_ledgers(ledger: TradeLedger, reference: TradeLedger) -> SignTestResult:
    """
    Paired sign test of per-event profits against a reference ledger.

    Only events traded in both ledgers are paired; the positive count is the
    number of events where ``ledger`` earned more than ``reference``.
    """
    reference_profits = {t.event_id: t.profit for t in reference.trades}
    paired = [(t.profit, reference_profits[t.event_id]) for t in ledger.trades if t.event_id in reference_profits]
    ours = [a for a, _ in paired]
    theirs = [b for _, b in paired]
    result = sign_test(ours, theirs)
    logger.info(
        f"Sign test over {len(paired)} paired events: {result.positives} better, "
        f"{result.negatives} worse, p={result.p_value:.4f}"
    )
    return result


def oracle_predictions(events: Iterable[TradingEvent], tau: int = 3) -> Dict[str, bool]:
    """Perfect-foresight calls: rise iff the day-tau close is above the event-day close."""
    predictions = {}
    for event in events:
        entry, exit_ = event.price_on(0), event.price_on(tau)
        if entry is not None and exit_ is not None:
            predictions[event.event_id] = exit_ > entry
    return predictions


def sharpe(ledger: TradeLedger | Sequence[float], risk_free_rate: float = 0.0) -> Optional[float]:
    """
    ``(mean(r) - R_f) / std(r)`` over per-trade return rates, sample std.

    Returns:
        The ratio, or None with fewer than two trades or zero variance
    """
    rates = ledger.return_rates if isinstance(ledger, TradeLedger) else list(ledger)
    if len(rates) < 2:
        return None
    r = np.asarray(rates, dtype=np.float64)
    std = float(np.std(r, ddof=1))
    if std == 0.0 or not math.isfinite(std):
        return None
    return (float(np.mean(r)) - risk_free_rate) / std
