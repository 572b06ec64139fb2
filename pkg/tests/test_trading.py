from datetime import date

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from core.corpus import CallRecord
from core.trading import (
    LONG,
    SHORT,
    Trade,
    TradeLedger,
    TradingEvent,
    baseline,
    baseline_predictions,
    compare_ledgers,
    oracle_predictions,
    sharpe,
    simulate,
)
from utils.exceptions import ConfigurationError, ContractError


def event(event_id, *prices):
    return TradingEvent(event_id, "ACME", date(2020, 1, 1), tuple(prices))


EVENTS = [
    event("a", 10.0, 11.0, 12.0, 13.0),
    event("b", 20.0, 19.0, 18.0, 17.5),
    event("c", 5.0, 5.0, 5.5, 5.0),
]


def test_long_and_short_profits():
    ledger = simulate(EVENTS[:2], {"a": True, "b": False}, tau=3)
    assert ledger.profits == pytest.approx([3.0, 2.5])
    assert [t.action for t in ledger.trades] == [LONG, SHORT]
    assert ledger.cumulative_profit == pytest.approx(5.5)


def test_holding_period_picks_the_exit_day():
    ledger = simulate(EVENTS[:1], {"a": True}, tau=1)
    assert ledger.trades[0].exit_price == 11.0
    assert ledger.trades[0].exit_day == 1


def test_buy_all_and_short_all_mirror_each_other():
    long_profit = baseline("buy-all", EVENTS).cumulative_profit
    short_profit = baseline("short_all", EVENTS).cumulative_profit
    assert long_profit == pytest.approx(-short_profit)
    assert long_profit == pytest.approx(0.5)


def test_random_baseline_is_seeded():
    assert baseline_predictions("random", EVENTS, seed=4) == baseline_predictions("random", EVENTS, seed=4)


def test_unknown_strategy():
    with pytest.raises(ConfigurationError):
        baseline_predictions("momentum", EVENTS)


def test_oracle_never_loses():
    ledger = simulate(EVENTS, oracle_predictions(EVENTS), tau=3)
    assert all(p >= 0 for p in ledger.profits)
    assert ledger.cumulative_profit >= baseline("buy-all", EVENTS).cumulative_profit


def test_events_without_prices_or_predictions_are_skipped():
    short_window = event("d", 10.0, 10.5)
    ledger = simulate(EVENTS[:1] + [short_window], {"d": True}, tau=3)
    assert ledger.trades == []
    assert [s["event_id"] for s in ledger.skipped] == ["a", "d"]
    assert ledger.skipped[0]["reason"] == "no prediction"
    assert ledger.skipped[1]["reason"] == "missing price on day 3"
    assert [r["kind"] for r in ledger.to_records()] == ["skipped", "skipped"]


def test_holding_period_must_be_positive():
    with pytest.raises(ConfigurationError):
        simulate(EVENTS, {}, tau=0)


def test_trade_rejects_unknown_action():
    with pytest.raises(ContractError):
        Trade("a", "ACME", 0, 3, 10.0, 13.0, action=2)
    with pytest.raises(ContractError):
        Trade("a", "ACME", 3, 3, 10.0, 13.0, action=LONG)


def test_sharpe_ratio():
    assert sharpe([0.1, 0.2, 0.3]) == pytest.approx(2.0)
    assert sharpe([0.1, 0.3], risk_free_rate=0.2) == pytest.approx(0.0)
    assert sharpe([0.1]) is None
    assert sharpe([0.1, 0.1]) is None


def test_summary_fields():
    ledger = simulate(EVENTS, {"a": True, "b": False, "c": True}, tau=3)
    summary = ledger.summary()
    assert summary["trades"] == 3 and summary["skipped"] == 0
    assert summary["Profit"] == pytest.approx(5.5)
    assert summary["Sharpe Ratio"] == pytest.approx(sharpe(ledger.return_rates))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=1.0, max_value=500.0), min_size=2, max_size=12), st.randoms())
def test_cumulative_profit_ignores_trade_order(exits, random):
    trades = [Trade(str(i), "ACME", 0, 3, 100.0, p, LONG if i % 2 else SHORT) for i, p in enumerate(exits)]
    shuffled = list(trades)
    random.shuffle(shuffled)
    assert TradeLedger(trades).cumulative_profit == TradeLedger(shuffled).cumulative_profit


def test_event_from_record_starts_on_the_event_day():
    record = CallRecord(
        call_id="x1",
        ticker="ACME",
        event_date=date(2020, 3, 2),
        sentences=[{"text": "Revenue rose 4%", "audio": [0.0] * 27}],
        prices=[9.0, 9.5, 10.0, 10.5, 11.0, 12.0],
        event_index=2,
    )
    ev = TradingEvent.from_record(record)
    assert ev.prices == (10.0, 10.5, 11.0, 12.0)
    assert simulate([ev], {"x1": True}, tau=3).profits == pytest.approx([2.0])


def random_events(seed, count=30, days=8):
    rng = np.random.default_rng(seed)
    events = []
    for i in range(count):
        steps = rng.normal(0.0, 0.03, size=days)
        prices = 50.0 * np.exp(np.cumsum(np.concatenate([[0.0], steps])))
        events.append(event(f"e{i}", *prices.tolist()))
    return events


@pytest.mark.parametrize("seed", range(20))
def test_perfect_foresight_beats_every_strategy(seed):
    events = random_events(seed)
    for tau in (1, 3, 7):
        best = simulate(events, oracle_predictions(events, tau), tau).cumulative_profit
        for strategy in ("buy-all", "short-all", "random"):
            assert best >= baseline(strategy, events, tau, seed=seed).cumulative_profit - 1e-9


def test_compare_ledgers_pairs_events_by_id():
    ours = simulate(EVENTS, {"a": True, "b": False, "c": True}, tau=3)
    reference = baseline("buy-all", EVENTS[:2], tau=3)
    result = compare_ledgers(ours, reference)
    assert (result.positives, result.negatives, result.ties) == (1, 0, 1)
    assert result.p_value == pytest.approx(1.0)


def test_sign_test_is_reported_in_summary_and_records():
    ours = simulate(EVENTS, {"a": True, "b": False, "c": True}, tau=3)
    ours.comparison = compare_ledgers(ours, baseline("buy-all", EVENTS, tau=3))
    summary = ours.summary()
    assert (summary["Sign Test Wins"], summary["Sign Test Losses"]) == (1, 0)
    assert summary["Sign Test p"] == pytest.approx(1.0)
    assert ours.to_records()[-1]["kind"] == "sign_test"
    assert "Sign Test p" not in baseline("buy-all", EVENTS).summary()
