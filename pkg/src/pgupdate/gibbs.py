"""Gibbs sampler converting domain labels into Gaussian field values.

Each observation carries an interval per Gaussian field, read off the
truncation rule for its label. Values start as independent truncated
standard-normal draws and are then resampled point by point from the
kriging conditional, truncated so every value stays inside its interval at
every iteration. Truncating the output therefore reproduces the input
labels exactly, by construction.

The two fields are independent in the axis-aligned rule, so each has its
own chain. Because the point set is fixed for a run, the kriging weights
are geometry-only: one precision matrix per field replaces per-point
neighbour solves, making a full-conditioning sweep O(n) per point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DataError
from .kriging import precision_matrix
from .truncation import TruncationRule
from .variogram import VariogramModel

#: Smallest truncated-interval probability mass treated as non-degenerate.
_MIN_MASS = 1e-300


def truncated_standard_normal(rng: np.random.Generator, lower, upper) -> np.ndarray:
    """Inverse-CDF sampling of N(0,1) restricted to [lower, upper].

    Intervals entirely in the upper tail are mirrored into the lower tail,
    where the normal CDF keeps full relative precision down to ~1e-308,
    so far-tail intervals (|bound| > 6) sample accurately instead of
    collapsing onto one bound.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(upper < lower):
        raise DataError("truncation interval has upper < lower")
    scalar = lower.ndim == 0 and upper.ndim == 0
    lower, upper = np.atleast_1d(lower), np.atleast_1d(upper)
    lower, upper = np.broadcast_arrays(lower, upper)

    # Mirror intervals whose mass sits in the upper tail; a two-sided
    # infinite interval needs no flip.
    with np.errstate(invalid="ignore"):
        flip = np.nan_to_num(lower + upper, nan=-1.0) > 0
    lo = np.where(flip, -upper, lower)
    hi = np.where(flip, -lower, upper)
    p_lo = ndtr(lo)
    p_hi = ndtr(hi)
    mass = np.maximum(p_hi - p_lo, _MIN_MASS)
    u = rng.uniform(size=lo.shape)
    x = ndtri(p_lo + u * mass)
    # Degenerate far-tail mass: fall back to the nearer finite bound.
    bad = ~np.isfinite(x)
    if np.any(bad):
        x = np.where(bad, np.where(np.isfinite(lo), lo, hi), x)
    x = np.clip(x, lo, hi)
    out = np.where(flip, -x, x)
    # Intervals are closed below, open above: never return a finite upper
    # bound, or truncating the value would flip the label.
    at_top = np.isfinite(upper) & (out >= upper)
    if np.any(at_top):
        out = np.where(at_top, np.nextafter(upper, -np.inf), out)
        out = np.maximum(out, lower)
    if scalar:
        return float(out[0])
    return out


@dataclass
class GibbsState:
    """Mutable chain state: one (g1, g2) pair per observation."""

    values: np.ndarray  # (n, 2)
    intervals: np.ndarray  # (n, 2, 2) -> [point, grf, (lower, upper)]
    iteration: int
    rng: np.random.Generator

    def in_interval(self) -> bool:
        """Closed-below, open-above, matching the truncation convention."""
        lo = self.intervals[:, :, 0]
        hi = self.intervals[:, :, 1]
        return bool(np.all((self.values >= lo) & (self.values < hi)))


class GibbsSampler:
    """Sampler bound to a truncation rule and per-field variogram models.

    Parameters
    ----------
    rule : TruncationRule
    variograms : (VariogramModel, VariogramModel)
        Models of the first and second Gaussian fields.
    iterations : int
        Sweeps per run (default 1000).
    """

    def __init__(self, rule: TruncationRule, variograms, iterations: int = 1000):
        if iterations < 1:
            raise DataError("gibbs iterations must be >= 1")
        self.rule = rule
        self.variograms: tuple[VariogramModel, VariogramModel] = tuple(variograms)
        if len(self.variograms) != 2:
            raise DataError("need one variogram model per Gaussian field")
        self.iterations = int(iterations)

    def _intervals(self, labels) -> np.ndarray:
        out = np.empty((len(labels), 2, 2), dtype=np.float64)
        for i, lab in enumerate(labels):
            out[i, 0] = self.rule.domain_interval(lab, 1)
            out[i, 1] = self.rule.domain_interval(lab, 2)
        return out

    def initialise(self, labels, seed=None) -> GibbsState:
        """Independent truncated standard-normal start values."""
        rng = np.random.default_rng(seed)
        intervals = self._intervals(labels)
        values = np.column_stack([
            truncated_standard_normal(rng, intervals[:, f, 0], intervals[:, f, 1])
            for f in (0, 1)
        ])
        return GibbsState(values=values, intervals=intervals, iteration=0, rng=rng)

    def sweep(self, state: GibbsState, precisions) -> GibbsState:
        """Visit every point once in a fresh random order and resample it."""
        n = state.values.shape[0]
        order = state.rng.permutation(n)
        for f in (0, 1):
            q = precisions[f]
            x = state.values[:, f]
            diag = np.diag(q)
            for i in order:
                sigma2 = 1.0 / diag[i]
                mean = x[i] - (q[i] @ x) * sigma2
                sigma = np.sqrt(sigma2)
                a, b = state.intervals[i, f]
                r = truncated_standard_normal(
                    state.rng, (a - mean) / sigma, (b - mean) / sigma
                )
                val = mean + sigma * r
                # Guard the rescaling against rounding onto the open bound.
                if val >= b:
                    val = np.nextafter(b, -np.inf)
                x[i] = max(val, a)
        state.iteration += 1
        return state

    def run(self, locations, labels, seed=None) -> np.ndarray:
        """Full chain for one observation set; returns (n, 2) Gaussian values.

        Deterministic given the seed. Duplicate locations only warn: the
        jittered precision matrix keeps the conditionals proper.
        """
        locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
        labels = list(labels)
        if len(labels) != locations.shape[0]:
            raise DataError("labels and locations differ in length")
        if not labels:
            return np.empty((0, 2), dtype=np.float64)
        if len(labels) > 1:
            d = locations[:, None, :] - locations[None, :, :]
            dist2 = np.sum(d * d, axis=-1)
            dist2[np.diag_indices_from(dist2)] = np.inf
            if np.min(dist2) == 0.0:
                warnings.warn("duplicate observation locations in Gibbs run", stacklevel=2)
        state = self.initialise(labels, seed=seed)
        if len(labels) == 1:
            # No neighbours: every sweep is a fresh truncated prior draw.
            precisions = (np.ones((1, 1)), np.ones((1, 1)))
        else:
            precisions = tuple(precision_matrix(v, locations) for v in self.variograms)
        for _ in range(self.iterations):
            self.sweep(state, precisions)
            if not state.in_interval():
                raise DataError("gibbs sweep left a value outside its interval")
        return state.values
