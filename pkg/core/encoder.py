"""
NumHTML - Hierarchical Encoder

Token-level transformer -> sentence text vector -> fusion with the sentence's
audio features -> sentence-level transformer -> pooled call vector -> return
and volatility regression heads. Also owns batching of encoded calls and
checkpoint files.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import ModelConfig
from utils.exceptions import ArtifactError, ConfigurationError, ContractError, DimensionError
from utils.validators import AUDIO_FEATURE_COUNT
from .layers import Linear, Module, TransformerStack
from .tensor import Tensor, as_tensor, concat, embedding_lookup, mean_pool, reshape
from .text_processor import EOS_ID, NUMERAL_FEATURE_COUNT, PAD_ID, UNK_ID

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
META_KEY = "__meta__"
TOKEN_LEVEL_PREFIXES = ("token_embedding.", "token_encoder.")


@dataclass
class TokenSequence:
    """Token ids of one sentence; the last id is always end-of-sentence."""
    ids: List[int]

    def __post_init__(self):
        if not self.ids or self.ids[-1] != EOS_ID:
            raise ContractError("a token sequence must end with the end-of-sentence id")

    def __len__(self) -> int:
        return len(self.ids)


class EmbeddingTable(Module):
    """
    Token embeddings ``e(.)``, learned token-position embeddings ``p_1..p_Lmax``
    and a projection of the numeral value channel (zero at start).
    """

    def __init__(self, vocab_size: int, dim: int, max_length: int, rng: np.random.Generator, scale: float = 0.1):
        super().__init__()
        self.tokens = self.param("tokens", rng.normal(0.0, scale, size=(vocab_size, dim)))
        self.positions = self.param("positions", rng.normal(0.0, scale, size=(max_length, dim)))
        self.values = self.param("values", np.zeros((NUMERAL_FEATURE_COUNT, dim)))

    @property
    def vocab_size(self) -> int:
        return self.tokens.shape[0]

    @property
    def max_length(self) -> int:
        return self.positions.shape[0]


def embed_tokens(ids, table: EmbeddingTable, values=None) -> Tensor:
    """
    Row ``j`` is ``e(w_j) + p_j``, plus ``v_j V`` when a value channel is given.

    Args:
        ids: Token ids shaped (length,) or (batch, length); ids outside the
            vocabulary fall back to the unknown id
        table: Embedding table
        values: Optional numeral features shaped ``ids.shape + (F,)``

    Returns:
        Tensor shaped ``ids.shape + (d,)``
    """
    ids = np.asarray(ids.ids if isinstance(ids, TokenSequence) else ids, dtype=np.int64)
    length = ids.shape[-1]
    if length > table.max_length:
        raise ContractError(f"sequence of {length} tokens exceeds the {table.max_length} positions")
    ids = np.where((ids < 0) | (ids >= table.vocab_size), UNK_ID, ids)
    positions = np.broadcast_to(np.arange(length), ids.shape)
    out = embedding_lookup(table.tokens, ids) + embedding_lookup(table.positions, positions)
    if values is None:
        return out
    values = np.asarray(values, dtype=np.float64)
    if values.shape != ids.shape + (NUMERAL_FEATURE_COUNT,):
        raise DimensionError(f"value channel {values.shape} does not match token ids {ids.shape}")
    return out + as_tensor(values) @ table.values


def _check_blocks(blocks: TransformerStack) -> None:
    if len(blocks) < 2:
        raise ConfigurationError("sentence vectors pool the second-last block, so at least 2 blocks are needed")


def encode_sentence(embedded: Tensor, blocks: TransformerStack, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Text vector of a sentence: mean over token positions of the second-last block's output.

    Args:
        embedded: Output of ``embed_tokens``, (length, d) or (batch, length, d)
        blocks: Token-level transformer blocks
        mask: Optional (batch, length) 0/1 token mask

    Returns:
        (d,) or (batch, d)
    """
    _check_blocks(blocks)
    single = embedded.ndim == 2
    x = reshape(embedded, (1,) + embedded.shape) if single else embedded
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64).reshape(x.shape[:2])
    layers = blocks(x, mask)
    pooled = mean_pool(layers[-2], mask)
    return reshape(pooled, (pooled.shape[-1],)) if single else pooled


def fuse(text: Tensor, audio, projection: Linear, position: Tensor) -> Tensor:
    """
    Sentence representation ``projection(concat(T, A)) + P``.

    Args:
        text: Text vectors, (d_t,) or (n, d_t)
        audio: Audio features, (27,) or (n, 27)
        projection: Linear map (d_t + 27) -> d_s
        position: Sentence-position embeddings matching the output shape

    Raises:
        ContractError: If an audio vector does not have 27 entries
    """
    audio = as_tensor(audio)
    if audio.shape[-1] != AUDIO_FEATURE_COUNT:
        raise ContractError(f"expected {AUDIO_FEATURE_COUNT} audio features, got {audio.shape[-1]}")
    if audio.shape[:-1] != text.shape[:-1]:
        raise DimensionError(f"text {text.shape} and audio {audio.shape} cover different sentences")
    fused = projection(concat([text, audio], axis=-1))
    if position.shape != fused.shape:
        raise DimensionError(f"position embedding {position.shape} does not match fused {fused.shape}")
    return fused + position


def encode_document(rows: Tensor, mask, blocks: TransformerStack) -> Tensor:
    """
    Masked mean over real sentence rows of the final sentence-level block output.

    Args:
        rows: Sentence representations padded to M rows, (M, d_s) or (batch, M, d_s)
        mask: 0/1 sentence mask, (M,) or (batch, M)
        blocks: Sentence-level transformer blocks

    Raises:
        ContractError: If a document has no real sentence
    """
    single = rows.ndim == 2
    x = reshape(rows, (1,) + rows.shape) if single else rows
    mask = np.asarray(mask, dtype=np.float64).reshape(x.shape[:2])
    if np.any(mask.sum(axis=-1) <= 0):
        raise ContractError("a document has no real sentence rows")
    layers = blocks(x, mask)
    pooled = mean_pool(layers[-1], mask)
    return reshape(pooled, (pooled.shape[-1],)) if single else pooled


def predict(pooled: Tensor, return_head: Linear, volatility_head: Linear) -> Tuple[Tensor, Tensor]:
    """Two independent linear heads over the pooled call vector."""
    return return_head(pooled), volatility_head(pooled)


def movement(predicted_return: float) -> bool:
    """Rise iff the predicted return is strictly positive."""
    return predicted_return > 0


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


@dataclass
class EncodedDocument:
    """One call as model input: sentence id lists, their audio vectors and optional value channels."""
    sentences: List[List[int]]
    audio: np.ndarray
    values: Optional[List[List[List[float]]]] = None

    def __post_init__(self):
        if not self.sentences:
            raise ContractError("a document needs at least one sentence")
        self.audio = np.asarray(self.audio, dtype=np.float64).reshape(len(self.sentences), -1)
        if self.audio.shape[1] != AUDIO_FEATURE_COUNT:
            raise ContractError(f"expected {AUDIO_FEATURE_COUNT} audio features, got {self.audio.shape[1]}")
        if self.values is not None:
            if [len(v) for v in self.values] != [len(s) for s in self.sentences]:
                raise DimensionError("value channels must align with the sentence token ids")


@dataclass
class EncodedBatch:
    """Flattened sentences of several calls plus the indices that regroup them."""
    token_ids: np.ndarray
    token_mask: np.ndarray
    audio: np.ndarray
    document_index: np.ndarray
    sentence_position: np.ndarray
    document_count: int
    max_sentences: int
    token_values: Optional[np.ndarray] = None

    @property
    def sentence_mask(self) -> np.ndarray:
        mask = np.zeros((self.document_count, self.max_sentences))
        mask[self.document_index, self.sentence_position] = 1.0
        return mask

    def scatter_matrix(self) -> np.ndarray:
        """0/1 matrix placing sentence ``n`` at row ``doc * M + position``."""
        scatter = np.zeros((self.document_count * self.max_sentences, len(self.document_index)))
        rows = self.document_index * self.max_sentences + self.sentence_position
        scatter[rows, np.arange(len(rows))] = 1.0
        return scatter


def collate(documents: Sequence[EncodedDocument], max_sentences: int) -> EncodedBatch:
    """
    Pack documents into one batch; calls longer than ``max_sentences`` keep their first sentences.

    Args:
        documents: Encoded calls
        max_sentences: Sentence slots per call (M)
    """
    if not documents:
        raise ContractError("cannot collate an empty batch")
    sentences, values, audio, doc_index, positions = [], [], [], [], []
    for d, document in enumerate(documents):
        for s, ids in enumerate(document.sentences[:max_sentences]):
            sentences.append(ids)
            values.append(document.values[s] if document.values is not None else None)
            audio.append(document.audio[s])
            doc_index.append(d)
            positions.append(s)

    length = max(len(ids) for ids in sentences)
    token_ids = np.full((len(sentences), length), PAD_ID, dtype=np.int64)
    token_mask = np.zeros((len(sentences), length))
    for n, ids in enumerate(sentences):
        token_ids[n, : len(ids)] = ids
        token_mask[n, : len(ids)] = 1.0

    token_values = None
    if any(v is not None for v in values):
        token_values = np.zeros((len(sentences), length, NUMERAL_FEATURE_COUNT))
        for n, rows in enumerate(values):
            if rows is not None:
                token_values[n, : len(rows)] = rows

    return EncodedBatch(
        token_ids=token_ids,
        token_mask=token_mask,
        audio=np.asarray(audio, dtype=np.float64),
        document_index=np.asarray(doc_index, dtype=np.int64),
        sentence_position=np.asarray(positions, dtype=np.int64),
        document_count=len(documents),
        max_sentences=max_sentences,
        token_values=token_values,
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class HierarchicalModel(Module):
    """The full two-level encoder with return and volatility heads (one output per horizon)."""

    def __init__(self, config: ModelConfig, vocab_size: int, outputs: int = 1, seed: int = 0):
        super().__init__()
        if config.token_blocks < 2:
            raise ConfigurationError("TOKEN_BLOCKS must be at least 2")
        self.config = config
        self.outputs = outputs
        rng = np.random.default_rng(seed)
        d_t, d_s = config.token_dim, config.sentence_dim

        self.token_embedding = self.child(
            "token_embedding",
            EmbeddingTable(vocab_size, d_t, config.max_sentence_length, rng, config.init_scale),
        )
        self.token_encoder = self.child(
            "token_encoder", TransformerStack(config.token_blocks, d_t, config.heads, config.ffn_dim, rng)
        )
        self.fusion = self.child("fusion", Linear(d_t + config.audio_dim, d_s, rng))
        self.sentence_positions = self.param(
            "sentence_positions", rng.normal(0.0, config.init_scale, size=(config.max_sentences, d_s))
        )
        self.sentence_encoder = self.child(
            "sentence_encoder", TransformerStack(config.sentence_blocks, d_s, config.heads, config.ffn_dim, rng)
        )
        self.return_head = self.child("return_head", Linear(d_s, outputs, rng))
        self.volatility_head = self.child("volatility_head", Linear(d_s, outputs, rng))

    @property
    def final_token_block_prefix(self) -> str:
        return f"token_encoder.block{len(self.token_encoder) - 1}."

    def token_layers(
        self,
        token_ids: np.ndarray,
        token_mask: Optional[np.ndarray] = None,
        token_values: Optional[np.ndarray] = None,
    ) -> List[Tensor]:
        """Every token-level layer output for a (batch, length) id matrix."""
        return self.token_encoder(embed_tokens(token_ids, self.token_embedding, token_values), token_mask)

    def sentence_vectors(self, batch: EncodedBatch) -> Tensor:
        embedded = embed_tokens(batch.token_ids, self.token_embedding, batch.token_values)
        text = encode_sentence(embedded, self.token_encoder, batch.token_mask)
        position = embedding_lookup(self.sentence_positions, batch.sentence_position)
        return fuse(text, batch.audio, self.fusion, position)

    def pooled(self, batch: EncodedBatch) -> Tensor:
        fused = self.sentence_vectors(batch)
        rows = as_tensor(batch.scatter_matrix()) @ fused
        rows = reshape(rows, (batch.document_count, batch.max_sentences, fused.shape[-1]))
        return encode_document(rows, batch.sentence_mask, self.sentence_encoder)

    def __call__(self, batch: EncodedBatch) -> Tuple[Tensor, Tensor]:
        """
        Forward pass.

        Returns:
            (returns, volatility) predictions, each (documents, outputs)
        """
        return predict(self.pooled(batch), self.return_head, self.volatility_head)

    def token_level_state(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.state_dict().items() if k.startswith(TOKEN_LEVEL_PREFIXES)}


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, state: Dict[str, np.ndarray], meta: Dict[str, Any]) -> Path:
    """
    Write named float64 arrays plus a JSON metadata string to an ``.npz`` file.

    Args:
        path: Target file
        state: Parameter arrays by dotted name
        meta: JSON-serialisable metadata (config, vocabulary, statistics)

    Returns:
        The written path
    """
    path = Path(path)
    meta = {"format_version": CHECKPOINT_FORMAT_VERSION, **meta}
    arrays = {name: np.asarray(value, dtype=np.float64) for name, value in state.items()}
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise ArtifactError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Checkpoint saved: {path} ({len(state)} tensors)")
    return path


def load_checkpoint(path: str | Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Returns:
        (state, meta)

    Raises:
        ArtifactError: If the file is missing, unreadable or of another format version
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive[META_KEY]))
            state = {name: archive[name].copy() for name in archive.files if name != META_KEY}
    except (OSError, ValueError, KeyError) as e:
        raise ArtifactError(f"cannot read checkpoint {path}: {e}") from e
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported checkpoint format {meta.get('format_version')}")
    return state, meta


def model_from_checkpoint(path: str | Path) -> Tuple[HierarchicalModel, Dict[str, Any]]:
    """Rebuild a ``HierarchicalModel`` and its metadata from a checkpoint."""
    state, meta = load_checkpoint(path)
    try:
        model_config = ModelConfig(**meta["model"])
        vocab_size = state["token_embedding.tokens"].shape[0]
        outputs = state["return_head.bias"].shape[0]
    except (KeyError, TypeError) as e:
        raise ArtifactError(f"{path}: checkpoint does not describe a full model ({e})") from e
    model = HierarchicalModel(model_config, vocab_size, outputs)
    model.load_state_dict(state)
    return model, meta
