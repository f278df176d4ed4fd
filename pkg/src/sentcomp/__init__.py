"""Deletion-based sentence compression: pair alignment into keep/delete
labels, a BiLSTM-CRF tagger over concatenated static and contextual
embeddings, and deletion F1 / compression-rate evaluation."""

from .corpus import (
    LABEL_DELETE,
    LABEL_KEEP,
    LabeledSentence,
    SentencePair,
    align,
    apply_labels,
    parse_pairs,
)
from .embeddings import (
    ContextualStore,
    EmbeddingTable,
    embed,
    load_contextual_store,
    load_static_table,
    write_contextual_store,
)
from .errors import SentcompError
from .metrics import compression_rate, deletion_f1, metrics_report
from .model import (
    ModelConfig,
    ModelParams,
    TrainReport,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "LABEL_DELETE",
    "LABEL_KEEP",
    "LabeledSentence",
    "SentencePair",
    "align",
    "apply_labels",
    "parse_pairs",
    "ContextualStore",
    "EmbeddingTable",
    "embed",
    "load_contextual_store",
    "load_static_table",
    "write_contextual_store",
    "SentcompError",
    "compression_rate",
    "deletion_f1",
    "metrics_report",
    "ModelConfig",
    "ModelParams",
    "TrainReport",
    "init_params",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train",
    "__version__",
]
