"""Truncation-threshold optimization against accumulated observations.

Candidate threshold vectors are scored by truncating every realization's
Gaussian pair at the observation locations, taking the per-location most
probable label and combining macro-F1 with the geometric mean of per-class
recalls. The searcher is a seeded uniform random search over a box around
the prior thresholds with the prior vector always evaluated first, so the
returned rule can never score below the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .truncation import TruncationRule


@dataclass(frozen=True)
class ScoreWeights:
    """Weights of the F1 and G-Mean terms; must sum to 1."""

    w1: float = 0.5
    w2: float = 0.5

    def __post_init__(self) -> None:
        if self.w1 < 0 or self.w2 < 0:
            raise DataError("score weights must be >= 0")
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise DataError("score weights must sum to 1")


def classification_score(labels_true, labels_pred, weights: ScoreWeights = ScoreWeights()) -> float:
    """Weighted combination of macro-F1 and G-Mean in [0, 1].

    Macro-F1 averages per-class F1 over classes present in either sequence;
    G-Mean is the geometric mean of recalls over classes present in the
    truth, so a single entirely-missed class zeroes that term.
    """
    t = np.asarray(labels_true)
    p = np.asarray(labels_pred)
    if t.size == 0 or t.shape != p.shape:
        raise DataError("label sequences must be equal-length and non-empty")
    classes = sorted(set(t.tolist()) | set(p.tolist()))
    f1s = []
    recalls = []
    for c in classes:
        tp = int(np.sum((t == c) & (p == c)))
        fn = int(np.sum((t == c) & (p != c)))
        fp = int(np.sum((t != c) & (p == c)))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
        if tp + fn > 0:
            recalls.append(tp / (tp + fn))
    macro_f1 = float(np.mean(f1s))
    gmean = float(np.prod(recalls) ** (1.0 / len(recalls))) if recalls else 0.0
    return weights.w1 * macro_f1 + weights.w2 * gmean


@dataclass(frozen=True)
class ThresholdSearchSpace:
    """Per-threshold box around the prior values, trial budget and seed."""

    lower: np.ndarray
    upper: np.ndarray
    budget: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DataError("search bounds must be equal-length vectors")
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise DataError("search bounds must be finite")
        if np.any(lower >= upper):
            raise DataError("each lower bound must be below its upper bound")
        if self.budget < 1:
            raise DataError("search budget must be >= 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def around(cls, rule: TruncationRule, margin: float = 0.6, budget: int = 200, seed: int = 0):
        theta = rule.threshold_vector()
        return cls(theta - margin, theta + margin, budget=budget, seed=seed)


def most_probable_codes(codes: np.ndarray, n_domains: int) -> np.ndarray:
    """Modal code per column of an (n_real, n) code matrix; ties to lower code."""
    freq = np.zeros((n_domains, codes.shape[1]), dtype=np.int64)
    for d in range(n_domains):
        freq[d] = np.sum(codes == d, axis=0)
    return np.argmax(freq, axis=0)


def optimise_thresholds(
    g_ensemble: np.ndarray,
    labels_true,
    rule: TruncationRule,
    space: ThresholdSearchSpace,
    weights: ScoreWeights = ScoreWeights(),
):
    """Search for thresholds maximising the classification score.

    Parameters
    ----------
    g_ensemble : ndarray (n_real, n_obs, 2)
        Updated (g1, g2) values of every realization at the observation
        locations.
    labels_true : sequence of str, length n_obs
    rule : TruncationRule
        Incumbent rule; its thresholds are evaluated as trial 0 and must
        lie inside the search box.
    space : ThresholdSearchSpace
    weights : ScoreWeights

    Returns
    -------
    (best_rule, best_score, trials)
        ``trials`` is the audit list of (trial index, threshold vector,
        score). Ties in score break toward the smallest L-infinity
        distance from the prior thresholds.
    """
    g = np.asarray(g_ensemble, dtype=np.float64)
    if g.ndim != 3 or g.shape[2] != 2:
        raise DataError("ensemble values must be (n_real, n_obs, 2)")
    labels_true = np.asarray(labels_true)
    if labels_true.shape[0] != g.shape[1]:
        raise DataError("labels and ensemble observation count disagree")
    prior_theta = rule.threshold_vector()
    if np.any(prior_theta < space.lower) or np.any(prior_theta > space.upper):
        raise DataError("search space excludes the prior thresholds")
    if prior_theta.size != space.lower.size:
        raise DataError("search space dimension differs from the rule")

    rng = np.random.default_rng(space.seed)
    n_domains = len(rule.domains)
    domain_arr = np.asarray(rule.domains, dtype=object)
    g1 = g[:, :, 0]
    g2 = g[:, :, 1]

    best = None  # (score, -linf) maximised lexicographically
    best_rule = rule
    trials = []
    for trial in range(space.budget):
        if trial == 0:
            theta = prior_theta
        else:
            theta = rng.uniform(space.lower, space.upper)
        cand = rule.with_thresholds(theta)
        codes = cand.truncate_codes(g1, g2)
        modal = most_probable_codes(codes, n_domains)
        score = classification_score(labels_true, domain_arr[modal], weights)
        trials.append((trial, cand.threshold_vector().copy(), score))
        linf = float(np.max(np.abs(cand.threshold_vector() - prior_theta)))
        key = (score, -linf)
        if best is None or key > best:
            best = key
            best_rule = cand
    return best_rule, best[0], trials
