"""
NumHTML - Pipeline

Orchestrates the stages behind the command-line interface:
- Featurisation of calls (vocabulary, audio and target normalisation)
- Structured adaptive pre-training (NCC, then MC) with checkpoints
- Pareto multi-task training of one model per preference sub-region and
  selection of the deployed model on the validation split
- Evaluation per horizon and trading simulation
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Config, ModelConfig, ParetoConfig, TrainingConfig
from utils.exceptions import ArtifactError, ConfigurationError, ContractError, DimensionError
from utils.validators import AUDIO_FEATURE_COUNT
from .corpus import CallRecord, LabeledExample, compute_labels, load_corpus, split_chronological, tokenized_documents
from .encoder import (
    TOKEN_LEVEL_PREFIXES,
    EncodedBatch,
    EncodedDocument,
    HierarchicalModel,
    collate,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .metrics import confusion_matrix, f1, mcc, mse
from .numerals import make_magnitude_instances, make_ncc_instances, write_instances
from .pareto import ParetoResult, make_preferences, train_pareto
from .probes import MagnitudeProbe, NccHead, train_magnitude, train_ncc
from .tensor import Tensor, backward, squared_error
from .text_processor import TextProcessor, Vocabulary
from .trading import TradeLedger, TradingEvent, baseline, compare_ledgers, simulate

logger = logging.getLogger(__name__)

NO_PARETO_ALPHAS = (0.5, 0.5)
EVAL_CHUNK = 64
PRETRAIN_TASKS = ("ncc", "mc")


# ---------------------------------------------------------------------------
# Featurisation
# ---------------------------------------------------------------------------


def _safe_std(values: np.ndarray, axis: int = 0) -> np.ndarray:
    std = np.std(values, axis=axis)
    return np.where(std > 0, std, 1.0)


@dataclass
class FeatureStats:
    """Training-split statistics for audio z-scores and target normalisation."""
    audio_mean: np.ndarray
    audio_std: np.ndarray
    return_scale: np.ndarray
    volatility_mean: np.ndarray
    volatility_std: np.ndarray

    @classmethod
    def fit(cls, examples: Sequence[LabeledExample], horizons: Sequence[int]) -> "FeatureStats":
        if not examples:
            raise ContractError("feature statistics need at least one training example")
        audio = np.array([s.audio for ex in examples for s in ex.record.sentences], dtype=np.float64)
        returns = np.array([[ex.returns[n] for n in horizons] for ex in examples])
        vols = np.array([[ex.volatility[n] for n in horizons] for ex in examples])
        return cls(
            audio_mean=audio.mean(axis=0),
            audio_std=_safe_std(audio),
            return_scale=_safe_std(returns),
            volatility_mean=vols.mean(axis=0),
            volatility_std=_safe_std(vols),
        )

    def targets(self, examples: Sequence[LabeledExample], horizons: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Normalised (returns, volatility) targets, each (examples, horizons)."""
        returns = np.array([[ex.returns[n] for n in horizons] for ex in examples], dtype=np.float64)
        vols = np.array([[ex.volatility[n] for n in horizons] for ex in examples], dtype=np.float64)
        return returns / self.return_scale, (vols - self.volatility_mean) / self.volatility_std

    def denormalise(self, returns: np.ndarray, vols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return returns * self.return_scale, vols * self.volatility_std + self.volatility_mean

    def to_dict(self) -> Dict[str, List[float]]:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "FeatureStats":
        return cls(**{k: np.asarray(data[k], dtype=np.float64) for k in (
            "audio_mean", "audio_std", "return_scale", "volatility_mean", "volatility_std"
        )})


class Featurizer:
    """Turns call records into model inputs."""

    def __init__(
        self,
        vocab: Vocabulary,
        stats: Optional[FeatureStats],
        model_config: ModelConfig,
        text_only: bool = False,
    ):
        self.vocab = vocab
        self.stats = stats
        self.model_config = model_config
        self.text_only = text_only
        self.processor = TextProcessor()

    def encode(self, record: CallRecord) -> EncodedDocument:
        tokens = self.processor.process_sentences(s.text for s in record.sentences)
        max_length = self.model_config.max_sentence_length
        ids = [self.vocab.encode(t, max_length) for t in tokens]
        values = [self.vocab.encode_values(t, max_length) for t in tokens]
        if self.text_only:
            audio = np.zeros((len(ids), AUDIO_FEATURE_COUNT))
        else:
            audio = np.array([s.audio for s in record.sentences], dtype=np.float64)
            if self.stats is not None:
                audio = (audio - self.stats.audio_mean) / self.stats.audio_std
        return EncodedDocument(ids, audio, values)

    def encode_all(self, records: Sequence[CallRecord]) -> List[EncodedDocument]:
        return [self.encode(r) for r in records]


def build_vocabulary(records: Sequence[CallRecord]) -> Vocabulary:
    """Vocabulary over every sentence of the given (training) calls."""
    return Vocabulary.build(s for doc in tokenized_documents(records) for s in doc)


# ---------------------------------------------------------------------------
# Model as a two-objective problem
# ---------------------------------------------------------------------------


class ModelParetoProblem:
    """
    The hierarchical model as a ``ParetoProblem``: parameters flattened into
    one vector, losses (L1 return MSE, L2 volatility MSE) on normalised targets.
    """

    def __init__(
        self,
        model: HierarchicalModel,
        documents: Sequence[EncodedDocument],
        return_targets: np.ndarray,
        volatility_targets: np.ndarray,
        batch_size: int,
    ):
        if len(documents) == 0:
            raise ContractError("training needs at least one call")
        self.model = model
        self.documents = list(documents)
        self.return_targets = np.asarray(return_targets, dtype=np.float64)
        self.volatility_targets = np.asarray(volatility_targets, dtype=np.float64)
        self.batch_size = batch_size
        self.params = model.parameters()
        self.names = list(self.params)
        self.sizes = [self.params[n].data.size for n in self.names]

    def initial_parameters(self) -> np.ndarray:
        return self.flatten()

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.params[n].data.reshape(-1) for n in self.names])

    def load(self, theta: np.ndarray) -> None:
        offset = 0
        for name, size in zip(self.names, self.sizes):
            p = self.params[name]
            p.data[...] = theta[offset:offset + size].reshape(p.shape)
            offset += size

    def _flat_grad(self) -> np.ndarray:
        return np.concatenate([
            (self.params[n].grad if self.params[n].grad is not None else np.zeros_like(self.params[n].data)).reshape(-1)
            for n in self.names
        ])

    def losses(self, indices: Sequence[int]) -> Tuple[Tensor, Tensor]:
        batch = collate([self.documents[i] for i in indices], self.model.config.max_sentences)
        ret, vol = self.model(batch)
        return (
            squared_error(ret, self.return_targets[indices]),
            squared_error(vol, self.volatility_targets[indices]),
        )

    def _evaluate_chunk(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        l1, l2 = self.losses(indices)
        grads = []
        for loss in (l1, l2):
            self.model.zero_grad()
            backward(loss)
            grads.append(self._flat_grad())
        return np.array([l1.item(), l2.item()]), np.stack(grads)

    def evaluate(self, theta: np.ndarray, batch=None) -> Tuple[np.ndarray, np.ndarray]:
        self.load(theta)
        if batch is not None:
            return self._evaluate_chunk(np.asarray(batch))
        # Full-data losses are size-weighted means of chunk losses.
        total = len(self.documents)
        losses, grads = np.zeros(2), np.zeros((2, theta.size))
        for start in range(0, total, EVAL_CHUNK):
            idx = np.arange(start, min(start + EVAL_CHUNK, total))
            l, g = self._evaluate_chunk(idx)
            weight = len(idx) / total
            losses += weight * l
            grads += weight * g
        return losses, grads

    def batches(self, epoch: int, rng: np.random.Generator) -> List[np.ndarray]:
        order = rng.permutation(len(self.documents))
        return [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)]


@dataclass
class SubproblemTask:
    """Everything one preference sub-region needs, in picklable form."""
    k: int
    model_config: ModelConfig
    vocab_size: int
    outputs: int
    initial_state: Dict[str, np.ndarray]
    documents: List[EncodedDocument]
    return_targets: np.ndarray
    volatility_targets: np.ndarray
    training: TrainingConfig
    pareto: ParetoConfig
    seed: int
    fixed_alphas: Optional[Tuple[float, float]] = None


def run_subproblem(task: SubproblemTask) -> ParetoResult:
    """Train the model of one sub-region (or the equal-weight model)."""
    model = HierarchicalModel(task.model_config, task.vocab_size, task.outputs, task.seed)
    model.load_state_dict(task.initial_state)
    problem = ModelParetoProblem(
        model, task.documents, task.return_targets, task.volatility_targets, task.training.batch_size
    )
    prefs = None if task.fixed_alphas is not None else make_preferences(task.pareto.preference_count)
    return train_pareto(problem, prefs, task.k, task.training, task.pareto, task.seed, task.fixed_alphas)


def run_subproblems(tasks: Sequence[SubproblemTask], workers: int = 1) -> List[ParetoResult]:
    """Run subproblems sequentially or in a process pool; results come back in task order."""
    if workers > 1 and len(tasks) > 1:
        logger.info(f"Running {len(tasks)} subproblems on {workers} worker processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_subproblem, tasks))
    return [run_subproblem(t) for t in tasks]


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------


def predict_documents(
    model: HierarchicalModel,
    documents: Sequence[EncodedDocument],
    stats: FeatureStats,
) -> Tuple[np.ndarray, np.ndarray]:
    """Raw-scale (returns, volatility) predictions, each (documents, horizons)."""
    if not documents:
        return np.zeros((0, model.outputs)), np.zeros((0, model.outputs))
    rets, vols = [], []
    for start in range(0, len(documents), EVAL_CHUNK):
        batch: EncodedBatch = collate(documents[start:start + EVAL_CHUNK], model.config.max_sentences)
        ret, vol = model(batch)
        rets.append(ret.numpy())
        vols.append(vol.numpy())
    return stats.denormalise(np.concatenate(rets), np.concatenate(vols))


@dataclass
class HorizonReport:
    horizon: int
    count: int
    mcc: float
    f1: float
    volatility_mse: float
    confusion: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            f"MCC_{self.horizon}": self.mcc,
            f"F1_{self.horizon}": self.f1,
            f"VOL_MSE_{self.horizon}": self.volatility_mse,
        }


def evaluate_predictions(
    predicted_returns: np.ndarray,
    predicted_volatility: np.ndarray,
    examples: Sequence[LabeledExample],
    horizons: Sequence[int],
) -> Dict[int, HorizonReport]:
    """
    MCC and F1 of the movement calls plus volatility MSE, per horizon.

    Columns follow ``horizons``; horizons with no labelled example are
    omitted with a warning.
    """
    reports: Dict[int, HorizonReport] = {}
    for j, n in enumerate(horizons):
        rows = [i for i, ex in enumerate(examples) if n in ex.returns]
        if not rows:
            logger.warning(f"No labels for horizon {n}; omitted from the report")
            continue
        actual = [examples[i].returns[n] > 0 for i in rows]
        predicted = [bool(predicted_returns[i, j] > 0) for i in rows]
        cm = confusion_matrix(predicted, actual)
        vol_mse = mse(predicted_volatility[rows, j], [examples[i].volatility[n] for i in rows])
        reports[n] = HorizonReport(n, len(rows), mcc(cm), f1(cm), vol_mse, cm.to_dict())
    return reports


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class TrainOutcome:
    best_k: int
    results: List[ParetoResult]
    validation_mse: Dict[int, float]
    model: HierarchicalModel
    stats: FeatureStats
    vocab: Vocabulary

    def summary(self) -> dict:
        return {
            "best_k": self.best_k,
            "validation_return_mse": {str(k): v for k, v in self.validation_mse.items()},
            "subproblems": [r.summary() for r in self.results],
        }


class NumHTMLPipeline:
    """
    Complete pipeline from corpus file to evaluated model and trading ledger.
    """

    def __init__(self, config: Config):
        """
        Initialize the pipeline.

        Args:
            config: Resolved and validated configuration
        """
        self.config = config
        self.records: List[CallRecord] = []
        self.splits: Dict[str, List[CallRecord]] = {}
        self.is_initialized = False

    @property
    def horizons(self) -> Tuple[int, ...]:
        return tuple(self.config.data.horizons)

    def initialize(self, corpus_path: Optional[str | Path] = None) -> bool:
        """
        Load the corpus and split it chronologically.

        Returns:
            True if successful
        """
        path = corpus_path or self.config.data.corpus_path
        self.records = load_corpus(path, self.horizons, self.config.data.pre_event_days)
        train, valid, test = split_chronological(self.records)
        self.splits = {"train": train, "valid": valid, "test": test}
        self.is_initialized = True
        logger.info(f"Pipeline initialized: {len(train)} train / {len(valid)} valid / {len(test)} test calls")
        return True

    def split(self, name: str) -> List[CallRecord]:
        if not self.is_initialized:
            raise ContractError("pipeline not initialized")
        if name not in self.splits:
            raise ConfigurationError(f"unknown split '{name}' (expected train, valid or test)")
        return self.splits[name]

    def labeled(self, name: str) -> List[LabeledExample]:
        return [compute_labels(r, self.horizons) for r in self.split(name)]

    # -- pre-training ------------------------------------------------------

    def pretrain(self, task: str, checkpoint: str | Path, seed: Optional[int] = None) -> Dict[str, Any]:
        """
        Run one pre-training task on the training split and update the checkpoint.

        ``ncc`` starts from a fresh model (or the checkpoint, if present);
        ``mc`` requires the checkpoint of an earlier run.

        Returns:
            The task's metric report
        """
        if task not in PRETRAIN_TASKS:
            raise ConfigurationError(f"unknown pre-training task '{task}'")
        seed = self.config.data.seed if seed is None else seed
        train = self.split("train")
        documents = tokenized_documents(train)
        cfg = self.config.pretrain
        checkpoint = Path(checkpoint)
        out_dir = checkpoint.parent

        if checkpoint.is_file():
            model, meta = model_from_checkpoint(checkpoint)
            vocab = Vocabulary.from_dict(meta["vocabulary"])
            tasks = list(meta.get("pretrain_tasks", []))
            logger.info(f"Continuing from {checkpoint} (tasks so far: {tasks})")
        elif task == "mc":
            raise ArtifactError(f"MC pre-training needs the checkpoint of an NCC run: {checkpoint} not found")
        else:
            vocab = build_vocabulary(train)
            model = HierarchicalModel(self.config.model, len(vocab), len(self.horizons), seed)
            tasks = []

        rng = np.random.default_rng(seed)
        if task == "ncc":
            instances = make_ncc_instances(documents)
            write_instances(out_dir / "ncc_instances.jsonl", instances)
            head = NccHead(self.config.model.token_dim, rng)
            report = train_ncc(model, head, instances, vocab, cfg, seed).to_dict()
        else:
            instances = make_magnitude_instances(documents, seed)
            write_instances(out_dir / "mc_instances.jsonl", instances)
            probe = MagnitudeProbe(self.config.model.token_dim, cfg.probe_hidden, rng)
            report = train_magnitude(model, probe, instances, vocab, cfg, seed).to_dict()

        tasks.append(task)
        save_checkpoint(checkpoint, model.state_dict(), {
            "model": asdict(self.config.model),
            "vocabulary": vocab.to_dict(),
            "horizons": list(self.horizons),
            "pretrain_tasks": tasks,
            "seed": seed,
        })
        return report

    # -- training ----------------------------------------------------------

    def _initial_model(self, vocab_size: int, seed: int, pretrained: Optional[Path]) -> HierarchicalModel:
        model = HierarchicalModel(self.config.model, vocab_size, len(self.horizons), seed)
        if pretrained is None:
            return model
        state, _ = load_checkpoint(pretrained)
        token_state = {k: v for k, v in state.items() if k.startswith(TOKEN_LEVEL_PREFIXES)}
        try:
            loaded = model.load_state_dict(token_state, strict=False)
        except DimensionError as e:
            raise ConfigurationError(f"{pretrained} was built with another model configuration: {e}") from e
        logger.info(f"Loaded {len(loaded)} pre-trained token-level tensors from {pretrained}")
        return model

    def train(self, pretrained: Optional[Path] = None, seed: Optional[int] = None) -> TrainOutcome:
        """
        Train one model per preference sub-region (or one equal-weight model)
        and keep the one with the lowest validation return MSE.

        Args:
            pretrained: Checkpoint whose token-level weights and vocabulary to start from
            seed: Overrides the configured seed
        """
        seed = self.config.data.seed if seed is None else seed
        training, pareto = self.config.training, self.config.pareto
        train_ex, valid_ex = self.labeled("train"), self.labeled("valid")

        if pretrained is not None:
            _, meta = load_checkpoint(pretrained)
            vocab = Vocabulary.from_dict(meta["vocabulary"])
        else:
            vocab = build_vocabulary(self.split("train"))
        stats = FeatureStats.fit(train_ex, self.horizons)
        featurizer = Featurizer(vocab, stats, self.config.model, training.text_only)
        documents = featurizer.encode_all(self.split("train"))
        ret_targets, vol_targets = stats.targets(train_ex, self.horizons)

        base = self._initial_model(len(vocab), seed, pretrained)
        initial_state = base.state_dict()

        if training.use_pareto:
            ks = list(range(pareto.preference_count))
            fixed = None
        else:
            ks, fixed = [0], NO_PARETO_ALPHAS
        tasks = [
            SubproblemTask(
                k, self.config.model, len(vocab), len(self.horizons), initial_state, documents,
                ret_targets, vol_targets, training, pareto, seed, fixed,
            )
            for k in ks
        ]
        results = run_subproblems(tasks, training.workers)

        if fixed is None and not any(r.feasible for r in results):
            report = ", ".join(f"k={r.k}: {r.summary()}" for r in results)
            raise ConfigurationError(f"no sub-region produced a feasible solution ({report})")

        valid_docs = featurizer.encode_all(self.split("valid"))
        true_returns = np.array([[ex.returns[n] for n in self.horizons] for ex in valid_ex])
        problem = ModelParetoProblem(base, documents, ret_targets, vol_targets, training.batch_size)
        validation: Dict[int, float] = {}
        for result in results:
            if fixed is None and not result.feasible:
                continue
            problem.load(result.theta)
            predicted, _ = predict_documents(base, valid_docs, stats)
            validation[result.k] = mse(predicted, true_returns)
            logger.info(f"k={result.k}: validation return MSE {validation[result.k]:.6g}")

        best_k = min(validation, key=lambda k: (validation[k], k))
        problem.load(next(r.theta for r in results if r.k == best_k))
        logger.info(f"Selected k={best_k}")
        return TrainOutcome(best_k, results, validation, base, stats, vocab)

    def save_model(self, outcome: TrainOutcome, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        return save_checkpoint(path, outcome.model.state_dict(), {
            "model": asdict(self.config.model),
            "vocabulary": outcome.vocab.to_dict(),
            "stats": outcome.stats.to_dict(),
            "horizons": list(self.horizons),
            "text_only": self.config.training.text_only,
            "best_k": outcome.best_k,
            **(extra or {}),
        })

    # -- evaluation and trading --------------------------------------------

    def load_model(self, path: Path) -> Tuple[HierarchicalModel, Featurizer, Tuple[int, ...]]:
        model, meta = model_from_checkpoint(path)
        if "stats" not in meta:
            raise ArtifactError(f"{path} is not a trained model (no normalisation statistics)")
        featurizer = Featurizer(
            Vocabulary.from_dict(meta["vocabulary"]),
            FeatureStats.from_dict(meta["stats"]),
            model.config,
            bool(meta.get("text_only", False)),
        )
        return model, featurizer, tuple(meta.get("horizons", self.horizons))

    def evaluate(self, model_path: Path, split: str = "test") -> Dict[int, HorizonReport]:
        model, featurizer, horizons = self.load_model(model_path)
        records = self.split(split)
        examples = [compute_labels(r, [n for n in horizons if n in self.horizons]) for r in records]
        returns, vols = predict_documents(model, featurizer.encode_all(records), featurizer.stats)
        return evaluate_predictions(returns, vols, examples, horizons)

    def model_predictions(self, model_path: Path, split: str, tau: int) -> Dict[str, bool]:
        """Movement calls at horizon ``tau`` for every call of a split."""
        model, featurizer, horizons = self.load_model(model_path)
        if tau not in horizons:
            raise ConfigurationError(f"the model predicts horizons {list(horizons)}, not tau={tau}")
        records = self.split(split)
        returns, _ = predict_documents(model, featurizer.encode_all(records), featurizer.stats)
        column = horizons.index(tau)
        return {r.call_id: bool(returns[i, column] > 0) for i, r in enumerate(records)}

    def simulate(
        self,
        strategy: str,
        tau: int,
        model_path: Optional[Path] = None,
        split: str = "test",
        seed: Optional[int] = None,
    ) -> TradeLedger:
        events = [TradingEvent.from_record(r) for r in self.split(split)]
        if strategy == "model":
            if model_path is None:
                raise ConfigurationError("the model strategy needs --model")
            ledger = simulate(events, self.model_predictions(model_path, split, tau), tau)
            ledger.comparison = compare_ledgers(ledger, baseline("buy-all", events, tau))
            return ledger
        return baseline(strategy, events, tau, self.config.data.seed if seed is None else seed)

    def get_stats(self) -> dict:
        """Get statistics about the loaded corpus."""
        return {
            "is_initialized": self.is_initialized,
            "calls": len(self.records),
            **{f"{name}_calls": len(records) for name, records in self.splits.items()},
        }
