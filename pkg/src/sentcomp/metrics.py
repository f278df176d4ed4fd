"""Deletion precision/recall/F1 and token-level compression rate.

A deletion counts as correct only when model and gold delete the same token
position. Corpus scores are micro-averaged (pooled counts); macro averages
over sentences are computed alongside for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import LABEL_DELETE
from .errors import SentcompError


class EvalError(SentcompError):
    """Prediction/gold sequences cannot be compared."""


@dataclass
class EvalCounts:
    """Pooled deletion counts; merging is associative so counts may be
    accumulated in parallel and combined."""

    correct_del: int = 0
    all_del: int = 0      # deletions in gold
    pred_del: int = 0     # deletions proposed by the model
    orig_len: int = 0
    comp_len: int = 0
    sentences: int = 0

    def add(self, pred: Sequence[str], gold: Sequence[str]) -> None:
        if len(pred) != len(gold):
            raise EvalError(f"{len(pred)} predicted labels for {len(gold)} gold labels")
        for p, g in zip(pred, gold):
            p_del = p == LABEL_DELETE
            g_del = g == LABEL_DELETE
            self.correct_del += p_del and g_del
            self.all_del += g_del
            self.pred_del += p_del
        self.orig_len += len(gold)
        self.comp_len += sum(1 for p in pred if p != LABEL_DELETE)
        self.sentences += 1

    def merge(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(
            correct_del=self.correct_del + other.correct_del,
            all_del=self.all_del + other.all_del,
            pred_del=self.pred_del + other.pred_del,
            orig_len=self.orig_len + other.orig_len,
            comp_len=self.comp_len + other.comp_len,
            sentences=self.sentences + other.sentences,
        )

    def precision_recall_f1(self) -> tuple[float, float, float]:
        return _prf(self.correct_del, self.all_del, self.pred_del)


def _prf(correct: int, all_del: int, pred_del: int) -> tuple[float, float, float]:
    # Degenerate denominators resolve to 0 so the identity model scores 0.
    precision = correct / pred_del if pred_del else 0.0
    recall = correct / all_del if all_del else 0.0
    f1 = 2.0 * recall * precision / (recall + precision) if (recall + precision) else 0.0
    return precision, recall, f1


def deletion_f1(
    pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]
) -> tuple[float, float, float]:
    """Micro-averaged (P, R, F1) over deleted token positions."""
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted sentences for {len(gold)} gold sentences")
    counts = EvalCounts()
    for p, g in zip(pred, gold):
        counts.add(p, g)
    return counts.precision_recall_f1()


def macro_deletion_f1(
    pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]
) -> tuple[float, float, float]:
    """Mean of per-sentence (P, R, F1); secondary to the micro scores."""
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted sentences for {len(gold)} gold sentences")
    if not pred:
        raise EvalError("empty corpus")
    totals = [0.0, 0.0, 0.0]
    for p, g in zip(pred, gold):
        counts = EvalCounts()
        counts.add(p, g)
        for i, value in enumerate(counts.precision_recall_f1()):
            totals[i] += value
    n = len(pred)
    return totals[0] / n, totals[1] / n, totals[2] / n


def compression_rate(
    compressions: Sequence[Sequence[str]], originals: Sequence[Sequence[str]]
) -> float:
    """Total compressed tokens divided by total original tokens."""
    if len(compressions) != len(originals):
        raise EvalError(f"{len(compressions)} compressions for {len(originals)} originals")
    if not originals:
        raise EvalError("empty corpus")
    total_orig = sum(len(o) for o in originals)
    if total_orig == 0:
        raise EvalError("originals contain no tokens")
    return sum(len(c) for c in compressions) / total_orig


def metrics_report(
    pred: Sequence[Sequence[str]],
    gold: Sequence[Sequence[str]],
    skipped: int = 0,
) -> dict:
    """Flat JSON-ready report; micro scores under the primary keys."""
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted sentences for {len(gold)} gold sentences")
    if not gold:
        raise EvalError("empty corpus")
    counts = EvalCounts()
    for p, g in zip(pred, gold):
        counts.add(p, g)
    precision, recall, f1 = counts.precision_recall_f1()
    macro_p, macro_r, macro_f1 = macro_deletion_f1(pred, gold)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "compression_rate": counts.comp_len / counts.orig_len,
        "macro_precision": macro_p,
        "macro_recall": macro_r,
        "macro_f1": macro_f1,
        "sentences": len(gold),
        "skipped": skipped,
    }
