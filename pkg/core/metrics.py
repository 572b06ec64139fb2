"""
NumHTML - Metrics

Classification, regression and ranking metrics for the forecasting and
numeral tasks, plus the price-window label helpers (n-day return and
realized log-volatility).
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binomtest
from sklearn.metrics import label_ranking_average_precision_score, roc_auc_score

from utils.exceptions import ContractError

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts; the positive class is a price rise."""
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion_matrix(predicted: Sequence[bool], actual: Sequence[bool]) -> ConfusionMatrix:
    """Count agreements between predicted and actual rises."""
    if len(predicted) != len(actual):
        raise ContractError(f"{len(predicted)} predictions for {len(actual)} outcomes")
    p = np.asarray(predicted, dtype=bool)
    a = np.asarray(actual, dtype=bool)
    return ConfusionMatrix(
        tp=int(np.sum(p & a)),
        tn=int(np.sum(~p & ~a)),
        fp=int(np.sum(p & ~a)),
        fn=int(np.sum(~p & a)),
    )


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    denominator = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if denominator == 0:
        return 0.0
    return (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denominator)


def f1(cm: ConfusionMatrix) -> float:
    """F1 of the rise class; 0 when there is no positive prediction or outcome."""
    denominator = 2 * cm.tp + cm.fp + cm.fn
    return 2 * cm.tp / denominator if denominator else 0.0


# ---------------------------------------------------------------------------
# Price windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriceWindow:
    """Adjusted closes ``p_0..p_n`` from the event day onwards."""
    prices: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if not self.prices:
            raise ContractError("a price window needs at least one price")
        if any(not math.isfinite(p) or p <= 0 for p in self.prices):
            raise ContractError("prices must be positive and finite")

    @property
    def returns(self) -> np.ndarray:
        """Simple daily returns ``r_i = p_i / p_{i-1} - 1``."""
        p = np.asarray(self.prices)
        return p[1:] / p[:-1] - 1.0

    def __len__(self) -> int:
        return len(self.prices)


def log_volatility(returns: Sequence[float]) -> float:
    """``0.5 * ln(var)`` of the returns around their own mean (population variance, floored)."""
    r = np.asarray(returns, dtype=np.float64)
    if r.size == 0:
        raise ContractError("volatility needs at least one return")
    variance = float(np.mean((r - r.mean()) ** 2))
    return 0.5 * math.log(max(variance, VARIANCE_FLOOR))


def volatility(window: PriceWindow, n: int) -> float:
    """
    Realized log-volatility of the first ``n`` daily returns after the event.

    Raises:
        ContractError: If the window holds fewer than ``n`` returns
    """
    if n < 1 or len(window) < n + 1:
        raise ContractError(f"volatility over {n} days needs {n + 1} prices, window has {len(window)}")
    return log_volatility(window.returns[:n])


def n_day_return(window: PriceWindow, n: int) -> float:
    """Cumulative simple return ``p_n / p_0 - 1``."""
    if n < 0 or len(window) < n + 1:
        raise ContractError(f"no price for day {n} in a window of {len(window)}")
    return window.prices[n] / window.prices[0] - 1.0


def mse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Mean squared error."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if p.size != t.size or p.size == 0:
        raise ContractError(f"mse needs equal non-empty lengths, got {p.size} and {t.size}")
    return float(np.mean((p - t) ** 2))


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------


def lrap(scores, labels) -> float:
    """
    Label ranking average precision.

    For every sample and every relevant label, the share of labels ranked at
    or above it that are relevant; averaged over relevant labels, then over
    samples. Samples whose labels are all relevant or all irrelevant score 1.

    Args:
        scores: (samples, labels) real scores
        labels: (samples, labels) 0/1 relevance
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 2 or s.shape[0] == 0:
        raise ContractError(f"lrap needs matching (samples, labels) arrays, got {s.shape} and {y.shape}")
    return float(label_ranking_average_precision_score(y.astype(int), s))


def binary_roc_auc(scores, labels) -> Optional[float]:
    """Area under the ROC curve for one label; None without both classes."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if s.size != y.size:
        raise ContractError(f"{s.size} scores for {y.size} labels")
    if y.all() or not y.any():
        return None
    return float(roc_auc_score(y.astype(int), s))


def roc_auc(scores, labels) -> Optional[float]:
    """
    ROC AUC; for (samples, labels) inputs the macro average over labels with a defined AUC.

    Returns:
        The area, or None when no label has both classes
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim == 1:
        return binary_roc_auc(s, y)
    if s.shape != y.shape:
        raise ContractError(f"roc_auc needs matching arrays, got {s.shape} and {y.shape}")
    per_label = [binary_roc_auc(s[:, j], y[:, j]) for j in range(s.shape[1])]
    defined = [a for a in per_label if a is not None]
    if len(defined) < len(per_label):
        logger.debug(f"roc_auc: {len(per_label) - len(defined)} labels without both classes skipped")
    return float(np.mean(defined)) if defined else None


# ---------------------------------------------------------------------------
# Paired sign test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignTestResult:
    positives: int
    negatives: int
    ties: int
    p_value: float

    def to_dict(self) -> dict:
        return {"positives": self.positives, "negatives": self.negatives, "ties": self.ties, "p_value": self.p_value}


def sign_test(a: Sequence[float], b: Sequence[float]) -> SignTestResult:
    """
    Two-sided paired sign test of ``a`` against ``b`` (ties dropped).

    Returns:
        Counts of a > b, a < b, ties and the exact binomial p-value
    """
    if len(a) != len(b):
        raise ContractError(f"sign test needs paired samples, got {len(a)} and {len(b)}")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    positives = int(np.sum(diff > 0))
    negatives = int(np.sum(diff < 0))
    ties = int(diff.size - positives - negatives)
    n = positives + negatives
    if n == 0:
        return SignTestResult(positives, negatives, ties, 1.0)
    p_value = binomtest(positives, n, 0.5, alternative="two-sided").pvalue
    return SignTestResult(positives, negatives, ties, float(p_value))

