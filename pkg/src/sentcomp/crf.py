"""Linear-chain CRF over a small label set: path scoring, log-partition,
posterior marginals, Viterbi decoding, and the exact negative-log-likelihood
gradient.

All computations run in log space with log-sum-exp stabilization so that
sequences of 1000+ tokens do not underflow. Label index 0 is the keep label;
ties in decoding break toward it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CrfLattice:
    """Potentials for one sentence: emissions (T, K), transitions (K, K)
    from->to, and start/stop boundary vectors (K,)."""

    emissions: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    def __post_init__(self):
        T, K = self.emissions.shape
        if self.transitions.shape != (K, K):
            raise ValueError(f"transitions shape {self.transitions.shape}, expected ({K}, {K})")
        if self.start.shape != (K,) or self.stop.shape != (K,):
            raise ValueError("start/stop must be length-K vectors")

    @property
    def length(self) -> int:
        return self.emissions.shape[0]

    @property
    def n_labels(self) -> int:
        return self.emissions.shape[1]


@dataclass(frozen=True)
class LabelPath:
    """A decoded label sequence together with its lattice score."""

    labels: tuple[int, ...]
    score: float


@dataclass
class CrfGrads:
    """Gradients of the NLL with the same shapes as the lattice potentials."""

    emissions: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray


def _logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def _check_path(lattice: CrfLattice, labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (lattice.length,):
        raise ValueError(f"path length {labels.shape} != lattice length {lattice.length}")
    if labels.size and (labels.min() < 0 or labels.max() >= lattice.n_labels):
        raise ValueError("label index out of range")
    return labels


def score_path(lattice: CrfLattice, labels: Sequence[int]) -> float:
    """Unnormalized score: start + per-position emissions + label-bigram
    transitions + stop."""
    y = _check_path(lattice, labels)
    score = lattice.start[y[0]] + lattice.stop[y[-1]]
    score += lattice.emissions[np.arange(lattice.length), y].sum()
    score += lattice.transitions[y[:-1], y[1:]].sum()
    return float(score)


def _forward_scores(lattice: CrfLattice) -> np.ndarray:
    """alpha[t, k] = log sum over paths ending in label k at position t."""
    T = lattice.length
    alpha = np.empty_like(lattice.emissions)
    alpha[0] = lattice.start + lattice.emissions[0]
    for t in range(1, T):
        # alpha[t-1, j] + transitions[j, k], reduced over j
        alpha[t] = lattice.emissions[t] + _logsumexp(
            alpha[t - 1][:, None] + lattice.transitions, axis=0
        )
    return alpha


def _backward_scores(lattice: CrfLattice) -> np.ndarray:
    """beta[t, j] = log sum over path suffixes starting from label j at t."""
    T = lattice.length
    beta = np.empty_like(lattice.emissions)
    beta[T - 1] = lattice.stop
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(
            lattice.transitions + (lattice.emissions[t + 1] + beta[t + 1])[None, :],
            axis=1,
        )
    return beta


def log_partition(lattice: CrfLattice) -> float:
    """log of the summed exponentiated scores over all K^T label paths."""
    alpha = _forward_scores(lattice)
    return float(_logsumexp(alpha[-1] + lattice.stop))


def marginals(lattice: CrfLattice) -> np.ndarray:
    """Posterior P(y_t = k | X) for every position and label; rows sum to 1."""
    alpha = _forward_scores(lattice)
    beta = _backward_scores(lattice)
    log_z = _logsumexp(alpha[-1] + lattice.stop)
    return np.exp(alpha + beta - log_z)


def viterbi(lattice: CrfLattice) -> LabelPath:
    """Highest-scoring path; exact ties resolve to the lower label index at
    every backtrack step and at the final position."""
    T, K = lattice.emissions.shape
    best = lattice.start + lattice.emissions[0]
    back = np.empty((T, K), dtype=np.intp)
    for t in range(1, T):
        cand = best[:, None] + lattice.transitions  # (from, to)
        back[t] = np.argmax(cand, axis=0)  # argmax picks the lowest index on ties
        best = lattice.emissions[t] + cand[back[t], np.arange(K)]
    best = best + lattice.stop
    labels = np.empty(T, dtype=np.intp)
    labels[-1] = np.argmax(best)
    for t in range(T - 1, 0, -1):
        labels[t - 1] = back[t, labels[t]]
    path = tuple(int(y) for y in labels)
    return LabelPath(labels=path, score=score_path(lattice, path))


def nll_and_grad(lattice: CrfLattice, gold: Sequence[int]) -> tuple[float, CrfGrads]:
    """Negative log-likelihood of the gold path and its exact gradient.

    loss = logZ - score(gold) >= 0. The emission gradient is the posterior
    marginals minus the gold one-hot; transition/start/stop gradients are the
    corresponding expected counts minus observed counts.
    """
    y = _check_path(lattice, gold)
    T, K = lattice.emissions.shape
    alpha = _forward_scores(lattice)
    beta = _backward_scores(lattice)
    log_z = float(_logsumexp(alpha[-1] + lattice.stop))
    loss = log_z - score_path(lattice, y)

    unary = np.exp(alpha + beta - log_z)
    d_emissions = unary.copy()
    d_emissions[np.arange(T), y] -= 1.0

    d_trans = np.zeros_like(lattice.transitions)
    if T > 1:
        # Pairwise posteriors P(y_t=j, y_{t+1}=k), summed over t: (T-1, K, K)
        pair = np.exp(
            alpha[:-1, :, None]
            + lattice.transitions[None, :, :]
            + (lattice.emissions[1:] + beta[1:])[:, None, :]
            - log_z
        )
        d_trans = pair.sum(axis=0)
        # subtract.at accumulates repeated gold bigrams, plain indexing wouldn't
        np.subtract.at(d_trans, (y[:-1], y[1:]), 1.0)

    d_start = unary[0].copy()
    d_start[y[0]] -= 1.0
    d_stop = unary[-1].copy()
    d_stop[y[-1]] -= 1.0
    return float(loss), CrfGrads(d_emissions, d_trans, d_start, d_stop)
