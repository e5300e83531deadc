"""Truncation rules mapping two Gaussian fields to domain labels.

The rule topology is hierarchical: the first domain occupies the half-plane
``g1 < t`` and the remaining domains are stacked along the g2 axis on the
other side, bottom to top in declared order. Thresholds come from domain
proportions through the standard-normal quantile, so rectangle
probabilities under independent standard-normal (g1, g2) reproduce the
target proportions exactly.

Intervals are closed below and open above, so a value exactly on a
threshold belongs to the rectangle above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DataError

#: Tolerated deviation of the input proportion sum from 1 before
#: normalisation (proportions quoted as rounded percentages rarely sum
#: to exactly 100).
PROPORTION_SUM_TOL = 1e-3

_COVER_POINTS = 100_000
_COVER_SEED = 170_839


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned cell of the (g1, g2) plane; infinities allowed."""

    g1_min: float
    g1_max: float
    g2_min: float
    g2_max: float

    def contains(self, g1, g2):
        return (
            (g1 >= self.g1_min) & (g1 < self.g1_max)
            & (g2 >= self.g2_min) & (g2 < self.g2_max)
        )

    def probability(self) -> float:
        """Standard-normal product probability of the rectangle."""
        return float(
            (ndtr(self.g1_max) - ndtr(self.g1_min))
            * (ndtr(self.g2_max) - ndtr(self.g2_min))
        )

    def interval(self, grf_index: int) -> tuple[float, float]:
        if grf_index == 1:
            return (self.g1_min, self.g1_max)
        if grf_index == 2:
            return (self.g2_min, self.g2_max)
        raise DataError(f"grf_index must be 1 or 2, got {grf_index}")


class TruncationRule:
    """Partition of the (g1, g2) plane into one rectangle per domain.

    Parameters
    ----------
    domains : sequence of str
        Ordered labels. The first listed domain is split off on g1; the
        rest stack along g2.
    g1_threshold : float
        Boundary between the first domain and the stack.
    g2_thresholds : sequence of float
        Ascending boundaries inside the stack (len(domains) - 2 values).
    """

    def __init__(self, domains, g1_threshold: float, g2_thresholds=(), *, validate: bool = True):
        domains = tuple(str(d) for d in domains)
        if len(domains) < 2:
            raise ConfigError("a truncation rule needs at least two domains")
        if len(set(domains)) != len(domains):
            raise ConfigError("duplicate domain labels in truncation rule")
        g2_thresholds = tuple(float(t) for t in g2_thresholds)
        if len(g2_thresholds) != len(domains) - 2:
            raise ConfigError(
                f"{len(domains)} domains need {len(domains) - 2} g2 thresholds, "
                f"got {len(g2_thresholds)}"
            )
        if any(b < a for a, b in zip(g2_thresholds, g2_thresholds[1:])):
            raise ConfigError("g2 thresholds must be ascending")
        self.domains = domains
        self.g1_threshold = float(g1_threshold)
        self.g2_thresholds = g2_thresholds
        t = self.g1_threshold
        cuts = (-np.inf,) + g2_thresholds + (np.inf,)
        rects = [Rectangle(-np.inf, t, -np.inf, np.inf)]
        rects += [
            Rectangle(t, np.inf, cuts[i], cuts[i + 1])
            for i in range(len(domains) - 1)
        ]
        self.rectangles = tuple(rects)
        if validate:
            self._check_cover()

    def _check_cover(self) -> None:
        """Monte Carlo check that the rectangles partition the plane."""
        rng = np.random.default_rng(_COVER_SEED)
        g1 = rng.standard_normal(_COVER_POINTS)
        g2 = rng.standard_normal(_COVER_POINTS)
        hits = np.zeros(_COVER_POINTS, dtype=np.int64)
        for r in self.rectangles:
            hits += r.contains(g1, g2)
        if not np.all(hits == 1):
            raise ConfigError("truncation rectangles do not partition the plane")

    # -- threshold bookkeeping -------------------------------------------

    @property
    def threshold_names(self) -> tuple[str, ...]:
        return ("t_g1",) + tuple(f"t_g2_{i + 1}" for i in range(len(self.g2_thresholds)))

    def threshold_vector(self) -> np.ndarray:
        return np.array((self.g1_threshold,) + self.g2_thresholds, dtype=np.float64)

    def with_thresholds(self, vector) -> "TruncationRule":
        """Same topology with new threshold values (g2 part re-sorted)."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != len(self.g2_thresholds) + 1:
            raise DataError("threshold vector length mismatch")
        return TruncationRule(
            self.domains, vector[0], np.sort(vector[1:]), validate=False
        )

    # -- queries ----------------------------------------------------------

    def truncate_codes(self, g1, g2) -> np.ndarray:
        """Domain codes (positions in ``domains``) for value pairs."""
        g1 = np.asarray(g1, dtype=np.float64)
        g2 = np.asarray(g2, dtype=np.float64)
        stack = 1 + np.searchsorted(np.asarray(self.g2_thresholds), g2, side="right")
        return np.where(g1 < self.g1_threshold, 0, stack)

    def truncate(self, g1, g2):
        """Domain labels for value pairs; scalar in, scalar out."""
        codes = self.truncate_codes(g1, g2)
        labels = np.asarray(self.domains, dtype=object)[codes]
        if np.ndim(g1) == 0 and np.ndim(g2) == 0:
            return str(labels if np.ndim(labels) == 0 else labels.item())
        return labels

    def domain_code(self, domain: str) -> int:
        try:
            return self.domains.index(domain)
        except ValueError:
            raise DataError(f"unknown domain {domain!r}") from None

    def domain_interval(self, domain: str, grf_index: int) -> tuple[float, float]:
        """Rectangle bounds of a domain on one GRF axis; infinities allowed."""
        return self.rectangles[self.domain_code(domain)].interval(grf_index)

    def proportions(self) -> np.ndarray:
        """Analytic standard-normal probability of each domain rectangle."""
        return np.array([r.probability() for r in self.rectangles])


def thresholds_from_proportions(domains, proportions) -> TruncationRule:
    """Build the rule whose rectangle probabilities match the proportions.

    Proportions must be positive and sum to 1 within ``PROPORTION_SUM_TOL``
    (rounded inputs are renormalised before solving). The first domain's
    proportion fixes the g1 threshold; the rest are renormalised into
    conditional proportions and solved cumulatively along g2.
    """
    p = np.asarray(proportions, dtype=np.float64)
    if p.size != len(tuple(domains)):
        raise ConfigError("one proportion per domain required")
    if np.any(p <= 0):
        raise ConfigError("domain proportions must all be > 0")
    total = p.sum()
    if abs(total - 1.0) > PROPORTION_SUM_TOL:
        raise ConfigError(f"proportions sum to {total}, expected 1")
    p = p / total
    t1 = float(ndtri(p[0]))
    conditional = p[1:] / (1.0 - p[0])
    cuts = ndtri(np.cumsum(conditional)[:-1])
    return TruncationRule(domains, t1, cuts)


def truncate(g1, g2, rule: TruncationRule):
    return rule.truncate(g1, g2)


def domain_interval(rule: TruncationRule, domain: str, grf_index: int):
    return rule.domain_interval(domain, grf_index)


def rule_proportions(rule: TruncationRule) -> np.ndarray:
    return rule.proportions()
