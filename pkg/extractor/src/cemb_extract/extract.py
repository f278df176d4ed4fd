"""Run an encoder over every input sentence and emit one CEMB store."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cemb import write_cemb
from .encoders import MisalignmentError, build_encoder
from .inputs import read_sentences

log = logging.getLogger("cemb_extract")


@dataclass
class ExtractionJob:
    model: str
    input_path: str
    output_path: str
    pool: str = "mean"
    layer: int = -1
    seed: int = 0
    batch_size: int = 8


@dataclass
class ExtractReport:
    dim: int
    written: int = 0
    skipped: list[str] = field(default_factory=list)


def extract(job: ExtractionJob) -> ExtractReport:
    """Embed every sentence and write the store in one pass.

    Sentences whose tokens cannot be aligned with the encoder's pieces are
    skipped and reported instead of corrupting the store.
    """
    sentences = read_sentences(job.input_path)
    encoder = build_encoder(job.model, seed=job.seed, layer=job.layer)
    report = ExtractReport(dim=encoder.dim)
    entries: list[tuple[str, np.ndarray]] = []
    for start in range(0, len(sentences), job.batch_size):
        batch = sentences[start:start + job.batch_size]
        try:
            matrices = encoder.embed_batch([tokens for _, tokens in batch], job.pool)
        except MisalignmentError:
            # Retry one by one so only the offending sentences are dropped.
            matrices = []
            kept = []
            for sent_id, tokens in batch:
                try:
                    matrices.append(encoder.embed_batch([tokens], job.pool)[0])
                    kept.append((sent_id, tokens))
                except MisalignmentError as err:
                    report.skipped.append(sent_id)
                    log.warning("skipping %s: %s", sent_id, err)
            batch = kept
        for (sent_id, tokens), mat in zip(batch, matrices):
            assert mat.shape == (len(tokens), encoder.dim)
            entries.append((sent_id, mat))
    write_cemb(entries, dim=encoder.dim, path=job.output_path)
    report.written = len(entries)
    return report
