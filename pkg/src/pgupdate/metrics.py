"""Evaluation metrics: confusion matrices, error reductions, map summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed by (true label, predicted label)."""

    labels: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    def per_class_accuracy(self) -> dict[str, float]:
        """Recall per true label; NaN for labels absent from the truth."""
        row = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore"):
            rec = np.where(row > 0, np.diag(self.counts) / np.maximum(row, 1), np.nan)
        return dict(zip(self.labels, rec.tolist()))


def confusion(true_labels, pred_labels, labels=None) -> ConfusionMatrix:
    """Confusion matrix over an explicit or inferred label order."""
    t = np.asarray(true_labels)
    p = np.asarray(pred_labels)
    if t.shape != p.shape:
        raise DataError("label sequences differ in length")
    if t.size == 0:
        raise DataError("empty label sequences")
    if labels is None:
        labels = sorted(set(t.tolist()) | set(p.tolist()))
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    k = len(labels)
    counts = np.zeros((k, k), dtype=np.int64)
    ti = np.fromiter((index[x] for x in t.tolist()), dtype=np.int64, count=t.size)
    pi = np.fromiter((index[x] for x in p.tolist()), dtype=np.int64, count=p.size)
    np.add.at(counts, (ti, pi), 1)
    return ConfusionMatrix(labels, counts)


def mse(pred, obs) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DataError("prediction and observation vectors differ in length")
    return float(np.mean((pred - obs) ** 2))


def mse_reduction(prior_pred, updated_pred, observations) -> float:
    """Percent MSE reduction, 100 * (1 - MSE_updated / MSE_prior)."""
    prior = mse(prior_pred, observations)
    updated = mse(updated_pred, observations)
    if prior == 0:
        raise DataError("prior MSE is zero; reduction undefined")
    return 100.0 * (1.0 - updated / prior)


def r2(pred, obs) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot (can be negative)."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.size < 2:
        raise DataError("r2 needs at least two observations")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        raise DataError("observations have zero variance; r2 undefined")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def probability_and_accuracy_maps(domain_codes, n_domains: int, truth_codes=None):
    """Per-block modal label, its frequency, and optional match-rate vs truth.

    Parameters
    ----------
    domain_codes : ndarray (n_real, n_blocks) of int
        Domain code per realization and block.
    n_domains : int
        Size of the configured domain order; modal ties break toward the
        lower code (earlier in that order).
    truth_codes : ndarray (n_blocks,) of int, optional

    Returns
    -------
    (modal, probability, accuracy) where accuracy is None without truth.
    """
    codes = np.asarray(domain_codes)
    if codes.ndim != 2 or codes.shape[0] < 1:
        raise DataError("domain codes must be (n_real >= 1, n_blocks)")
    n_real = codes.shape[0]
    freq = np.zeros((n_domains, codes.shape[1]), dtype=np.int64)
    for d in range(n_domains):
        freq[d] = np.sum(codes == d, axis=0)
    modal = np.argmax(freq, axis=0)  # first maximum = earliest label wins ties
    probability = freq[modal, np.arange(codes.shape[1])] / n_real
    accuracy = None
    if truth_codes is not None:
        truth_codes = np.asarray(truth_codes)
        if truth_codes.shape != (codes.shape[1],):
            raise DataError("truth grid length mismatch")
        accuracy = np.mean(codes == truth_codes[None, :], axis=0)
    return modal, probability, accuracy
