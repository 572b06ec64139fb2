"""
NumHTML - Core Module

This module contains the model, training and evaluation components.
"""

from .tensor import (
    Tensor,
    Tape,
    backward,
    numerical_gradient,
    gradient_mismatch,
)
from .optim import (
    Adam,
    AdamState,
    ExponentialDecay,
    adam_step,
)
from .text_processor import (
    TextCleaner,
    Tokenizer,
    TextProcessor,
    Vocabulary,
)
from .numerals import (
    NumeralSpan,
    NccInstance,
    MagnitudeInstance,
    detect_numerals,
    make_ncc_instances,
    make_magnitude_instances,
)
from .encoder import (
    HierarchicalModel,
    embed_tokens,
    encode_sentence,
    fuse,
    encode_document,
    predict,
)
from .pareto import (
    PreferenceSet,
    make_preferences,
    in_subregion,
    min_norm_direction,
    pareto_step,
    find_initial_solution,
    train_pareto,
)
from .metrics import (
    ConfusionMatrix,
    PriceWindow,
    mcc,
    f1,
    mse,
    volatility,
    lrap,
    roc_auc,
)
from .trading import (
    Trade,
    TradeLedger,
    TradingEvent,
    simulate,
    baseline,
    sharpe,
)
from .corpus import (
    CallRecord,
    LabeledExample,
    load_corpus,
    split_chronological,
    compute_labels,
)
from .synthetic import (
    EffectSizes,
    generate_synthetic,
)
from .pipeline import NumHTMLPipeline

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "numerical_gradient",
    "gradient_mismatch",
    "Adam",
    "AdamState",
    "ExponentialDecay",
    "adam_step",
    "TextCleaner",
    "Tokenizer",
    "TextProcessor",
    "Vocabulary",
    "NumeralSpan",
    "NccInstance",
    "MagnitudeInstance",
    "detect_numerals",
    "make_ncc_instances",
    "make_magnitude_instances",
    "HierarchicalModel",
    "embed_tokens",
    "encode_sentence",
    "fuse",
    "encode_document",
    "predict",
    "PreferenceSet",
    "make_preferences",
    "in_subregion",
    "min_norm_direction",
    "pareto_step",
    "find_initial_solution",
    "train_pareto",
    "ConfusionMatrix",
    "PriceWindow",
    "mcc",
    "f1",
    "mse",
    "volatility",
    "lrap",
    "roc_auc",
    "Trade",
    "TradeLedger",
    "TradingEvent",
    "simulate",
    "baseline",
    "sharpe",
    "CallRecord",
    "LabeledExample",
    "load_corpus",
    "split_chronological",
    "compute_labels",
    "EffectSizes",
    "generate_synthetic",
    "NumHTMLPipeline",
]
