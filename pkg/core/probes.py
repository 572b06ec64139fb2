"""
NumHTML - Numeral Probes

Structured adaptive pre-training of the token-level encoder:

- numeral category classification (NCC): a linear head reads the final token
  block's output at the ``[MASK]`` position and predicts four independent
  category probabilities;
- magnitude comparison (MC): a BiLSTM probe reads the encoder's embeddings of
  five numerals and predicts which position holds the largest.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import PretrainConfig
from utils.exceptions import ConfigurationError, DimensionError, NumericError
from .encoder import TOKEN_LEVEL_PREFIXES, HierarchicalModel
from .layers import BiLSTM, Linear, Module
from .metrics import lrap, roc_auc
from .numerals import CATEGORIES, GROUP_SIZE, MONETARY, PERCENTAGE, TEMPORAL, MagnitudeInstance, NccInstance
from .optim import Adam
from .tensor import (
    Tensor,
    backward,
    binary_cross_entropy,
    nll_from_probabilities,
    reshape,
    sigmoid,
    softmax,
)
from .text_processor import EOS_ID, NUMERAL_FEATURE_COUNT, PAD_ID, Vocabulary, numeral_features

logger = logging.getLogger(__name__)

MC_COLUMNS = (("Monetary", MONETARY), ("Temporal", TEMPORAL), ("Percentage", PERCENTAGE), ("All", None))


def _pad(sequences: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    length = max(len(s) for s in sequences)
    ids = np.full((len(sequences), length), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), length))
    for i, s in enumerate(sequences):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def _pad_values(rows: Sequence[Sequence[Sequence[float]]], length: int) -> np.ndarray:
    values = np.zeros((len(rows), length, NUMERAL_FEATURE_COUNT))
    for i, r in enumerate(rows):
        values[i, : len(r)] = r
    return values


def _split(count: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded (train, held-out) index split; keeps at least one item on each side when possible."""
    order = np.random.default_rng(seed).permutation(count)
    held = int(round(count * fraction))
    if count >= 2:
        held = min(max(held, 1), count - 1)
    return np.sort(order[held:]), np.sort(order[:held])


def _fit(
    loss_fn: Callable[[List], Tensor],
    items: Sequence,
    params: Dict[str, Tensor],
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
    label: str,
    frozen: Iterable[str] = (),
) -> List[float]:
    """Mini-batch Adam loop shared by both probes; returns the mean loss per epoch."""
    rng = np.random.default_rng(seed)
    optimizer = Adam(params, lr=lr, frozen=frozen)
    history: List[float] = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(items))
        total = 0.0
        for start in range(0, len(items), batch_size):
            batch = [items[i] for i in order[start:start + batch_size]]
            optimizer.zero_grad()
            loss = loss_fn(batch)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"{label} loss is not finite", step=step, lr=lr, losses=[value])
            backward(loss)
            optimizer.step()
            total += value * len(batch)
            step += 1
        history.append(total / len(items))
        logger.info(f"{label} epoch {epoch + 1}/{epochs}: loss={history[-1]:.4f}")
    return history


def token_level_parameters(model: HierarchicalModel) -> Dict[str, Tensor]:
    return {
        name: p
        for name, p in model.named_parameters()
        if name.startswith(TOKEN_LEVEL_PREFIXES)
    }


# ---------------------------------------------------------------------------
# Numeral category classification
# ---------------------------------------------------------------------------


class NccHead(Module):
    """Linear map from a token state to four category logits."""

    def __init__(self, dim: int, rng: Optional[np.random.Generator] = None, zero: bool = False):
        super().__init__()
        self.linear = self.child("linear", Linear(dim, len(CATEGORIES), rng or np.random.default_rng(0), zero=zero))

    def __call__(self, states: Tensor) -> Tensor:
        return self.linear(states)


def encode_ncc_instance(
    instance: NccInstance,
    vocab: Vocabulary,
    max_length: int,
) -> Tuple[List[int], List[List[float]], int]:
    """
    Token ids, value channel and mask position of an NCC instance.

    Sentences longer than the encoder allows are cut to a window around the mask.
    """
    limit = max_length - 1
    tokens, position = instance.tokens, instance.mask_index
    if len(tokens) > limit:
        start = min(max(position - limit // 2, 0), len(tokens) - limit)
        tokens = tokens[start:start + limit]
        position -= start
    return vocab.encode(tokens, max_length), vocab.encode_values(tokens, max_length), position


def ncc_probabilities(
    model: HierarchicalModel,
    head: NccHead,
    instances: Sequence[NccInstance],
    vocab: Vocabulary,
) -> Tensor:
    """Category probabilities, (instances, 4)."""
    encoded = [encode_ncc_instance(inst, vocab, model.config.max_sentence_length) for inst in instances]
    ids, mask = _pad([e[0] for e in encoded])
    values = _pad_values([e[1] for e in encoded], ids.shape[1])
    positions = np.array([e[2] for e in encoded], dtype=np.int64)
    states = model.token_layers(ids, mask, values)[-1]
    at_mask = states[np.arange(len(instances)), positions]
    return sigmoid(head(at_mask))


def classify_ncc(model: HierarchicalModel, head: NccHead, instance: NccInstance, vocab: Vocabulary) -> np.ndarray:
    """
    Independent probabilities for monetary, temporal, percentage and other.

    The multi-label prediction is every category with probability >= 0.5.
    """
    return ncc_probabilities(model, head, [instance], vocab).numpy()[0]


def evaluate_ncc(
    model: HierarchicalModel,
    head: NccHead,
    instances: Sequence[NccInstance],
    vocab: Vocabulary,
    batch_size: int = 64,
) -> Tuple[float, Optional[float]]:
    """(LRAP, macro ROC AUC) of the head on ``instances``."""
    scores = np.concatenate([
        ncc_probabilities(model, head, instances[i:i + batch_size], vocab).numpy()
        for i in range(0, len(instances), batch_size)
    ])
    labels = np.stack([inst.label_vector() for inst in instances])
    return lrap(scores, labels), roc_auc(scores, labels)


@dataclass
class NccReport:
    train_instances: int
    holdout_instances: int
    lrap_before: float
    roc_auc_before: Optional[float]
    lrap_after: float
    roc_auc_after: Optional[float]
    losses: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train_instances": self.train_instances,
            "holdout_instances": self.holdout_instances,
            "LRAP_before": self.lrap_before,
            "ROC_AUC_before": self.roc_auc_before,
            "LRAP": self.lrap_after,
            "ROC_AUC": self.roc_auc_after,
        }


def train_ncc(
    model: HierarchicalModel,
    head: NccHead,
    instances: Sequence[NccInstance],
    vocab: Vocabulary,
    config: PretrainConfig,
    seed: int = 0,
) -> NccReport:
    """
    Train the token-level encoder and NCC head with binary cross-entropy.

    Held-out LRAP and ROC AUC are measured before the first epoch and after the last.
    """
    if len(instances) < 2:
        raise ConfigurationError(
            f"NCC pre-training needs at least 2 masked numerals, the corpus yields {len(instances)}"
        )
    train_idx, held_idx = _split(len(instances), config.holdout_fraction, seed)
    train = [instances[i] for i in train_idx]
    held = [instances[i] for i in held_idx]
    logger.info(f"NCC: {len(train)} training / {len(held)} held-out instances")

    lrap_before, auc_before = evaluate_ncc(model, head, held, vocab)

    def loss_fn(batch: List[NccInstance]) -> Tensor:
        probs = ncc_probabilities(model, head, batch, vocab)
        return binary_cross_entropy(probs, np.stack([inst.label_vector() for inst in batch]))

    params = {**token_level_parameters(model), **{f"ncc_head.{k}": v for k, v in head.named_parameters()}}
    losses = _fit(loss_fn, train, params, config.ncc_epochs, config.batch_size, config.lr, seed, "NCC")

    lrap_after, auc_after = evaluate_ncc(model, head, held, vocab)
    logger.info(f"NCC held-out LRAP {lrap_before:.4f} -> {lrap_after:.4f}")
    return NccReport(len(train), len(held), lrap_before, auc_before, lrap_after, auc_after, losses)


# ---------------------------------------------------------------------------
# Magnitude comparison
# ---------------------------------------------------------------------------


class MagnitudeProbe(Module):
    """BiLSTM over five numeral embeddings with a per-position scoring layer."""

    def __init__(self, dim: int, hidden: int = 16, rng: Optional[np.random.Generator] = None, zero_output: bool = False):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.input_dim = dim
        self.bilstm = self.child("bilstm", BiLSTM(dim, hidden, rng))
        self.scorer = self.child("scorer", Linear(2 * hidden, 1, rng, zero=zero_output))


def probe_magnitude(embeddings: Tensor, probe: MagnitudeProbe) -> Tensor:
    """
    Softmax over the five list positions.

    Args:
        embeddings: (5, d) or (batch, 5, d) numeral embeddings
        probe: Trained or fresh probe

    Raises:
        DimensionError: If the list length or embedding width does not fit the probe
    """
    if embeddings.shape[-1] != probe.input_dim or embeddings.shape[-2] != GROUP_SIZE:
        raise DimensionError(
            f"probe expects ({GROUP_SIZE}, {probe.input_dim}) embeddings, got {embeddings.shape}"
        )
    single = embeddings.ndim == 2
    x = reshape(embeddings, (1,) + embeddings.shape) if single else embeddings
    states = probe.bilstm(x)
    scores = probe.scorer(reshape(states, (-1, states.shape[-1])))
    probs = softmax(reshape(scores, (x.shape[0], GROUP_SIZE)))
    return reshape(probs, (GROUP_SIZE,)) if single else probs


def numeral_embeddings(model: HierarchicalModel, surfaces: Sequence[str], vocab: Vocabulary) -> Tensor:
    """Final token-block output at position 0 of ``[numeral, EOS]`` for each surface, (n, d)."""
    ids = np.array([[vocab.id_of(s), EOS_ID] for s in surfaces], dtype=np.int64)
    values = np.zeros(ids.shape + (NUMERAL_FEATURE_COUNT,))
    values[:, 0] = [numeral_features(s) for s in surfaces]
    states = model.token_layers(ids, None, values)[-1]
    return states[:, 0, :]


def magnitude_probabilities(
    model: HierarchicalModel,
    probe: MagnitudeProbe,
    instances: Sequence[MagnitudeInstance],
    vocab: Vocabulary,
) -> Tensor:
    surfaces = [s for inst in instances for s in inst.surfaces]
    flat = numeral_embeddings(model, surfaces, vocab)
    return probe_magnitude(reshape(flat, (len(instances), GROUP_SIZE, flat.shape[-1])), probe)


@dataclass
class McReport:
    train_instances: int
    test_instances: int
    accuracy: Dict[str, Optional[float]]
    counts: Dict[str, int]
    losses: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train_instances": self.train_instances,
            "test_instances": self.test_instances,
            **{f"{column}": value for column, value in self.accuracy.items()},
        }


def magnitude_accuracy(
    model: HierarchicalModel,
    probe: MagnitudeProbe,
    instances: Sequence[MagnitudeInstance],
    vocab: Vocabulary,
) -> Tuple[Dict[str, Optional[float]], Dict[str, int]]:
    """Argmax accuracy per report column (Monetary, Temporal, Percentage, All)."""
    if instances:
        probs = magnitude_probabilities(model, probe, instances, vocab).numpy()
        correct = np.argmax(probs, axis=1) == np.array([inst.label_index for inst in instances])
    else:
        correct = np.zeros(0, dtype=bool)

    accuracy: Dict[str, Optional[float]] = {}
    counts: Dict[str, int] = {}
    for column, category in MC_COLUMNS:
        chosen = [i for i, inst in enumerate(instances) if category is None or inst.category == category]
        counts[column] = len(chosen)
        accuracy[column] = float(np.mean(correct[chosen])) if chosen else None
    return accuracy, counts


def train_magnitude(
    model: HierarchicalModel,
    probe: MagnitudeProbe,
    instances: Sequence[MagnitudeInstance],
    vocab: Vocabulary,
    config: PretrainConfig,
    seed: int = 0,
) -> McReport:
    """
    Train the MC probe (and the unfrozen token-level layers) with negative log-likelihood.

    The final token block stays frozen. Instances are split 8:2 for training
    and accuracy reporting.
    """
    if len(instances) < 2:
        raise ConfigurationError(
            f"MC pre-training needs at least 2 magnitude lists, the corpus yields {len(instances)}; "
            f"each list takes {GROUP_SIZE} distinct same-category numerals of one power of ten"
        )
    train_idx, test_idx = _split(len(instances), 0.2, seed)
    train = [instances[i] for i in train_idx]
    test = [instances[i] for i in test_idx]

    frozen_prefix = model.final_token_block_prefix
    params = {**token_level_parameters(model), **{f"mc_probe.{k}": v for k, v in probe.named_parameters()}}
    frozen = [name for name in params if name.startswith(frozen_prefix)]
    logger.info(f"MC: {len(train)} training / {len(test)} test instances, {frozen_prefix}* frozen")

    def loss_fn(batch: List[MagnitudeInstance]) -> Tensor:
        probs = magnitude_probabilities(model, probe, batch, vocab)
        return nll_from_probabilities(probs, [inst.label_index for inst in batch])

    losses = _fit(loss_fn, train, params, config.mc_epochs, config.batch_size, config.lr, seed, "MC", frozen)

    accuracy, counts = magnitude_accuracy(model, probe, test, vocab)
    logger.info(f"MC accuracy: {accuracy}")
    return McReport(len(train), len(test), accuracy, counts, losses)
