"""The trainable tagger: embeddings -> BiLSTM -> affine emission projection
-> CRF (or an optional per-token softmax head), plus the training loop and
the SCMP checkpoint format.

Training is single-threaded and deterministic for a fixed seed and input
order; mini-batches larger than one sentence are realized by accumulating
per-sentence gradients before a single optimizer step, which is the same
objective as padded batching without any padding to get wrong. Arithmetic is
float64 in memory; checkpoints store float32 per the file format.
"""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import crf, nn
from .corpus import LABEL_DELETE, LABEL_KEEP, LabeledSentence, apply_labels
from .embeddings import ContextualStore, EmbeddingTable, embed
from .errors import SentcompError
from .metrics import EvalCounts

log = logging.getLogger(__name__)

SCMP_MAGIC = b"SCMP"
SCMP_VERSION = 1

# Emission / CRF label indexing: column 0 scores keep, column 1 delete.
LABEL_INDEX = {LABEL_KEEP: 0, LABEL_DELETE: 1}
INDEX_LABEL = {idx: lab for lab, idx in LABEL_INDEX.items()}


class CheckpointError(SentcompError):
    """Checkpoint file is corrupt, truncated, or inconsistent."""


class TrainingError(SentcompError):
    """Training aborted; carries the offending sentence id when known."""


@dataclass(frozen=True)
class ModelConfig:
    static_dim: int
    contextual_dim: int = 0
    hidden_size: int = 256
    label_count: int = 2
    epochs: int = 100
    lr: float = 1e-3
    clip_norm: float = 5.0
    batch_size: int = 1
    dropout: float = 0.0
    seed: int = 0
    head: str = "crf"
    patience: int = 10
    max_len: int = 512

    def __post_init__(self):
        if self.static_dim < 1 or self.contextual_dim < 0:
            raise ValueError("embedding dimensions must be positive")
        if self.hidden_size < 1 or self.label_count < 2:
            raise ValueError("hidden_size and label_count must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout <= 0.5:
            raise ValueError("dropout must be in [0, 0.5]")
        if self.head not in ("crf", "softmax"):
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def input_dim(self) -> int:
        return self.static_dim + self.contextual_dim


@dataclass
class ModelParams:
    """Every trainable tensor of the tagger."""

    lstm_fwd: nn.LstmParams
    lstm_bwd: nn.LstmParams
    w_emit: np.ndarray  # (2H, K)
    b_emit: np.ndarray  # (K,)
    transitions: np.ndarray  # (K, K)
    start: np.ndarray  # (K,)
    stop: np.ndarray  # (K,)

    def tensors(self) -> dict[str, np.ndarray]:
        """Named tensors in the fixed checkpoint manifest order."""
        return {
            "lstm_fwd.w_ih": self.lstm_fwd.w_ih,
            "lstm_fwd.w_hh": self.lstm_fwd.w_hh,
            "lstm_fwd.b": self.lstm_fwd.b,
            "lstm_bwd.w_ih": self.lstm_bwd.w_ih,
            "lstm_bwd.w_hh": self.lstm_bwd.w_hh,
            "lstm_bwd.b": self.lstm_bwd.b,
            "emit.w": self.w_emit,
            "emit.b": self.b_emit,
            "crf.transitions": self.transitions,
            "crf.start": self.start,
            "crf.stop": self.stop,
        }

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    e, h, k = config.input_dim, config.hidden_size, config.label_count
    per_dir = {"w_ih": (4 * h, e), "w_hh": (4 * h, h), "b": (4 * h,)}
    shapes: dict[str, tuple[int, ...]] = {}
    for prefix in ("lstm_fwd", "lstm_bwd"):
        for name, shape in per_dir.items():
            shapes[f"{prefix}.{name}"] = shape
    shapes["emit.w"] = (2 * h, k)
    shapes["emit.b"] = (k,)
    shapes["crf.transitions"] = (k, k)
    shapes["crf.start"] = (k,)
    shapes["crf.stop"] = (k,)
    return shapes


def init_params(config: ModelConfig, seed: int | None = None) -> ModelParams:
    """Glorot weights, zero biases except LSTM forget gates at 1.0, zero CRF
    potentials. Deterministic per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    e, h, k = config.input_dim, config.hidden_size, config.label_count
    return ModelParams(
        lstm_fwd=nn.init_lstm(rng, e, h),
        lstm_bwd=nn.init_lstm(rng, e, h),
        w_emit=nn.glorot_uniform(rng, 2 * h, k),
        b_emit=np.zeros(k),
        transitions=np.zeros((k, k)),
        start=np.zeros(k),
        stop=np.zeros(k),
    )


@dataclass
class _ForwardCache:
    bilstm_out: np.ndarray
    bilstm_cache: nn.BilstmCache


def forward(params: ModelParams, inputs: np.ndarray) -> crf.CrfLattice:
    """Map a (T, E) embedding matrix to the per-sentence lattice."""
    lattice, _ = _forward_with_cache(params, inputs)
    return lattice


def _forward_with_cache(
    params: ModelParams, inputs: np.ndarray
) -> tuple[crf.CrfLattice, _ForwardCache]:
    out, cache = nn.bilstm_forward(params.lstm_fwd, params.lstm_bwd, inputs)
    emissions = out @ params.w_emit + params.b_emit
    lattice = crf.CrfLattice(
        emissions=emissions,
        transitions=params.transitions,
        start=params.start,
        stop=params.stop,
    )
    return lattice, _ForwardCache(bilstm_out=out, bilstm_cache=cache)


def _softmax_rows(emissions: np.ndarray) -> np.ndarray:
    shifted = emissions - emissions.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def loss_and_grads(
    params: ModelParams, inputs: np.ndarray, gold: Sequence[int], head: str = "crf"
) -> tuple[float, dict[str, np.ndarray]]:
    """Sentence loss plus gradients for every tensor in params.

    The CRF head uses the sequence negative log-likelihood; the softmax head
    sums per-token cross-entropies and leaves the CRF potentials untouched.
    """
    lattice, fwd_cache = _forward_with_cache(params, inputs)
    T = lattice.length
    if head == "crf":
        loss, crf_grads = crf.nll_and_grad(lattice, gold)
        d_emissions = crf_grads.emissions
        d_trans, d_start, d_stop = crf_grads.transitions, crf_grads.start, crf_grads.stop
    else:
        probs = _softmax_rows(lattice.emissions)
        gold_idx = np.asarray(gold, dtype=np.intp)
        loss = float(-np.log(probs[np.arange(T), gold_idx]).sum())
        d_emissions = probs
        d_emissions[np.arange(T), gold_idx] -= 1.0
        k = params.transitions.shape[0]
        d_trans, d_start, d_stop = np.zeros((k, k)), np.zeros(k), np.zeros(k)

    d_out = d_emissions @ params.w_emit.T
    dw_emit = fwd_cache.bilstm_out.T @ d_emissions
    db_emit = d_emissions.sum(axis=0)
    grads_f, grads_b, _ = nn.bilstm_backward(
        params.lstm_fwd, params.lstm_bwd, fwd_cache.bilstm_cache, d_out
    )
    grads = {
        "lstm_fwd.w_ih": grads_f.w_ih,
        "lstm_fwd.w_hh": grads_f.w_hh,
        "lstm_fwd.b": grads_f.b,
        "lstm_bwd.w_ih": grads_b.w_ih,
        "lstm_bwd.w_hh": grads_b.w_hh,
        "lstm_bwd.b": grads_b.b,
        "emit.w": dw_emit,
        "emit.b": db_emit,
        "crf.transitions": d_trans,
        "crf.start": d_start,
        "crf.stop": d_stop,
    }
    return loss, grads


def decode(params: ModelParams, inputs: np.ndarray, head: str = "crf") -> list[int]:
    """Label indices for one sentence, via Viterbi or per-token argmax."""
    lattice = forward(params, inputs)
    if head == "crf":
        return list(crf.viterbi(lattice).labels)
    return [int(i) for i in np.argmax(lattice.emissions, axis=1)]


def predict(
    params: ModelParams,
    config: ModelConfig,
    tokens: Sequence[str],
    static: EmbeddingTable,
    contextual: ContextualStore | None = None,
    sentence_id: str | None = None,
) -> tuple[list[str], list[str]]:
    """Decode one sentence into (labels, compression tokens)."""
    inputs = embed(tokens, static, contextual, sentence_id)
    indices = decode(params, inputs, head=config.head)
    labels = [INDEX_LABEL[i] for i in indices]
    return labels, apply_labels(tokens, labels)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_precision: float
    val_recall: float
    val_f1: float
    val_compression_rate: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    skipped_too_long: int = 0
    skipped_missing_context: int = 0

    def to_json(self) -> str:
        payload = {
            "best_epoch": self.best_epoch,
            "skipped_too_long": self.skipped_too_long,
            "skipped_missing_context": self.skipped_missing_context,
            "epochs": [asdict(rec) for rec in self.epochs],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _gold_indices(sentence: LabeledSentence) -> list[int]:
    return [LABEL_INDEX[lab] for lab in sentence.labels]


def _evaluate(
    params: ModelParams,
    config: ModelConfig,
    sentences: Sequence[LabeledSentence],
    matrices: Sequence[np.ndarray],
) -> tuple[float, float, float, float]:
    counts = EvalCounts()
    for sent, mat in zip(sentences, matrices):
        indices = decode(params, mat, head=config.head)
        pred = [INDEX_LABEL[i] for i in indices]
        counts.add(pred, sent.labels)
    precision, recall, f1 = counts.precision_recall_f1()
    rate = counts.comp_len / counts.orig_len if counts.orig_len else 0.0
    return precision, recall, f1, rate


def train(
    config: ModelConfig,
    train_set: Sequence[LabeledSentence],
    static: EmbeddingTable,
    contextual: ContextualStore | None = None,
    val_set: Sequence[LabeledSentence] | None = None,
    progress: Callable[[EpochRecord], None] | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train end to end and return the parameters of the best validation F1.

    Each epoch shuffles with a seeded generator, then per batch: forward ->
    loss/gradients -> global-norm clip -> Adam. Validation runs after every
    epoch; training stops early when F1 has not improved for ``patience``
    epochs. Sentences longer than ``max_len`` tokens are skipped and counted.
    """
    if not train_set:
        raise TrainingError("training set is empty")
    if config.input_dim != static.dim + (contextual.dim if contextual else 0):
        raise TrainingError(
            f"config expects input width {config.input_dim} but providers supply "
            f"{static.dim + (contextual.dim if contextual else 0)}"
        )

    report = TrainReport()
    usable = [s for s in train_set if len(s.tokens) <= config.max_len]
    report.skipped_too_long = len(train_set) - len(usable)
    if report.skipped_too_long:
        log.info("skipped %d sentences longer than %d tokens",
                 report.skipped_too_long, config.max_len)
    if not usable:
        raise TrainingError(f"no sentence is shorter than max_len={config.max_len}")

    rng = np.random.default_rng(config.seed)
    if val_set is None:
        # Hold out a seeded 5% (at least one sentence) for validation.
        order = rng.permutation(len(usable))
        n_val = max(1, len(usable) // 20)
        val_set = [usable[i] for i in order[:n_val]]
        usable = [usable[i] for i in order[n_val:]]
        if not usable:
            raise TrainingError("training set too small to hold out validation data")

    def matrix_for(sent: LabeledSentence) -> np.ndarray:
        return embed(sent.tokens, static, contextual, sent.id)

    train_mats = [matrix_for(s) for s in usable]
    val_mats = [matrix_for(s) for s in val_set]
    gold = [_gold_indices(s) for s in usable]

    params = init_params(config)
    state = nn.AdamState.for_params(params.tensors(), lr=config.lr)
    best_f1 = -1.0
    best_params = params.copy()
    best_epoch = 0
    since_best = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(usable))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc: dict[str, np.ndarray] | None = None
            batch_loss = 0.0
            for idx in batch:
                inputs = train_mats[idx]
                if config.dropout > 0.0:
                    keep = 1.0 - config.dropout
                    mask = rng.random(inputs.shape) < keep
                    inputs = inputs * mask / keep
                loss, grads = loss_and_grads(params, inputs, gold[idx], head=config.head)
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss on sentence {usable[idx].id!r}")
                batch_loss += loss
                if acc is None:
                    acc = grads
                else:
                    for name in acc:
                        acc[name] += grads[name]
            assert acc is not None
            scale = 1.0 / len(batch)
            for name in acc:
                acc[name] *= scale
            nn.clip_gradients(acc, config.clip_norm)
            try:
                nn.adam_step(params.tensors(), acc, state)
            except nn.GradientError as err:
                raise TrainingError(f"{err} (batch starting at sentence "
                                    f"{usable[batch[0]].id!r})") from err
            epoch_loss += batch_loss
        epoch_loss /= len(usable)

        precision, recall, f1, rate = _evaluate(params, config, val_set, val_mats)
        record = EpochRecord(
            epoch=epoch,
            train_loss=epoch_loss,
            val_precision=precision,
            val_recall=recall,
            val_f1=f1,
            val_compression_rate=rate,
        )
        report.epochs.append(record)
        if progress is not None:
            progress(record)

        if f1 > best_f1:
            best_f1 = f1
            best_params = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                log.info("early stop at epoch %d (no F1 improvement for %d epochs)",
                         epoch, config.patience)
                break

    report.best_epoch = best_epoch
    return best_params, report


def _config_to_dict(config: ModelConfig) -> dict:
    return asdict(config)


def _config_from_dict(data: dict) -> ModelConfig:
    known = {f: data[f] for f in ModelConfig.__dataclass_fields__ if f in data}
    missing = set(ModelConfig.__dataclass_fields__) - set(known)
    if missing:
        raise CheckpointError(f"config missing fields: {sorted(missing)}")
    return ModelConfig(**known)


def save_checkpoint(params: ModelParams, config: ModelConfig, path: str) -> None:
    """Write an SCMP file: magic, version u32, header-length u32, JSON header
    (config + ordered tensor manifest), then float32 payloads in manifest
    order. All little-endian."""
    tensors = params.tensors()
    manifest = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()]
    header = json.dumps(
        {"config": _config_to_dict(config), "tensors": manifest},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SCMP_MAGIC)
        fh.write(struct.pack("<II", SCMP_VERSION, len(header)))
        fh.write(header)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> tuple[ModelParams, ModelConfig]:
    """Read an SCMP file; any inconsistency raises CheckpointError and no
    partial model is returned."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise CheckpointError(f"{path}: truncated header")
    if data[:4] != SCMP_MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != SCMP_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if len(data) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated JSON header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
        config = _config_from_dict(header["config"])
        manifest = header["tensors"]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as err:
        raise CheckpointError(f"{path}: unreadable header ({err})") from err

    shapes = expected_shapes(config)
    if [entry["name"] for entry in manifest] != list(shapes):
        raise CheckpointError(f"{path}: tensor manifest does not match the model layout")
    arrays: dict[str, np.ndarray] = {}
    offset = 12 + header_len
    for entry in manifest:
        name, shape = entry["name"], tuple(entry["shape"])
        if shape != shapes[name]:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {shape}, config implies {shapes[name]}"
            )
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
        arrays[name] = (
            np.frombuffer(data[offset:offset + nbytes], dtype="<f4")
            .reshape(shape)
            .astype(np.float64)
        )
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")

    params = ModelParams(
        lstm_fwd=nn.LstmParams(
            arrays["lstm_fwd.w_ih"], arrays["lstm_fwd.w_hh"], arrays["lstm_fwd.b"]
        ),
        lstm_bwd=nn.LstmParams(
            arrays["lstm_bwd.w_ih"], arrays["lstm_bwd.w_hh"], arrays["lstm_bwd.b"]
        ),
        w_emit=arrays["emit.w"],
        b_emit=arrays["emit.b"],
        transitions=arrays["crf.transitions"],
        start=arrays["crf.start"],
        stop=arrays["crf.stop"],
    )
    return params, config
