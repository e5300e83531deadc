"""Synthetic case-study generator: truth model, drill data, observations.

The truth is one unconditional pluri-Gaussian realization under its own
variograms and (optionally shifted) thresholds, deliberately different
from the prior's parameters so the updating problem stays honest. Grades
are domain-conditional lognormal fields driven by spatially correlated
latent Gaussians shared across variables, moment-matched per domain to
the configured mean/SD targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .grid import GridSpec
from .gsim import simulate_conditional
from .observations import ObservationRecord, ObservationSet
from .rng import STAGE_SAMPLE, STAGE_TRUTH, derive_rng
from .truncation import TruncationRule


@dataclass
class SyntheticTruth:
    grid: GridSpec
    rule: TruncationRule
    g1: np.ndarray
    g2: np.ndarray
    domain_codes: np.ndarray
    grades: dict  # variable name -> flat grid


def generate_truth(
    grid: GridSpec,
    rule: TruncationRule,
    variograms: dict,
    grade_targets: dict,
    variables,
    latent_correlation: float = 0.6,
    threshold_shift: tuple[str, float] | None = None,
    seed: int = 0,
) -> SyntheticTruth:
    """Build the ground-truth domain and grade model.

    Parameters
    ----------
    variograms : dict
        Needs keys ``g1``, ``g2`` and, when grades are requested,
        ``latent``.
    grade_targets : dict
        Per-domain ``(means, sds)`` tuples aligned with ``variables``.
    threshold_shift : (name, delta), optional
        Applied to one named threshold of the rule so the truth is
        slightly inconsistent with the prior rule.
    """
    truth_rule = rule
    if threshold_shift is not None:
        name, delta = threshold_shift
        names = list(rule.threshold_names)
        if name not in names:
            raise ConfigError(f"unknown threshold {name!r}; rule has {names}")
        theta = rule.threshold_vector()
        theta[names.index(name)] += float(delta)
        truth_rule = rule.with_thresholds(theta)

    g1 = simulate_conditional(grid, None, None, variograms["g1"], seed=derive_rng(seed, STAGE_TRUTH, 0))
    g2 = simulate_conditional(grid, None, None, variograms["g2"], seed=derive_rng(seed, STAGE_TRUTH, 1))
    codes = truth_rule.truncate_codes(g1, g2)

    variables = tuple(variables)
    grades: dict[str, np.ndarray] = {}
    if variables:
        if "latent" not in variograms:
            raise ConfigError("truth grades need a [variogram.truth.latent] model")
        missing = [d for d in rule.domains if d not in grade_targets]
        if missing:
            raise ConfigError(f"no truth grade targets for domain(s) {missing}")
        rho = float(latent_correlation)
        shared = simulate_conditional(
            grid, None, None, variograms["latent"], seed=derive_rng(seed, STAGE_TRUTH, 2)
        )
        for j, var in enumerate(variables):
            own = simulate_conditional(
                grid, None, None, variograms["latent"], seed=derive_rng(seed, STAGE_TRUTH, 3 + j)
            )
            w = np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * own
            grade = np.empty(grid.n_blocks)
            for code, dom in enumerate(rule.domains):
                mask = codes == code
                if not np.any(mask):
                    continue
                mean_t, sd_t = grade_targets[dom][0][j], grade_targets[dom][1][j]
                # lognormal parameters hitting the (mean, sd) target
                s2 = np.log1p((sd_t / mean_t) ** 2)
                mu = np.log(mean_t) - 0.5 * s2
                wd = w[mask]
                # standardise within the domain, then pin the sample mean
                wd = (wd - wd.mean()) / (wd.std() if wd.std() > 0 else 1.0)
                raw = np.exp(mu + np.sqrt(s2) * wd)
                grade[mask] = raw * (mean_t / raw.mean())
            grades[var] = grade
    return SyntheticTruth(grid, truth_rule, g1, g2, codes, grades)


def _records_from_blocks(truth: SyntheticTruth, blocks, periods, variables) -> list:
    cents = truth.grid.centroids(blocks)
    recs = []
    m = len(variables)
    for (x, y, z), b, t in zip(cents, blocks, periods):
        grades = tuple(float(truth.grades[v][b]) for v in variables) if m else ()
        recs.append(
            ObservationRecord(
                x=float(x), y=float(y), z=float(z), period=int(t),
                domain=truth.rule.domains[int(truth.domain_codes[b])],
                grades=grades, error_sd=(None,) * m, block=int(b),
            )
        )
    return recs


def sample_observations(
    truth: SyntheticTruth,
    fraction: float,
    n_periods: int,
    seed: int = 0,
    variables=(),
) -> ObservationSet:
    """Random block sample of the truth, split into spatial period clusters.

    Blocks are drawn uniformly without replacement; periods come from a
    seeded k-means over the sampled coordinates, with clusters ordered by
    centroid so period numbering is reproducible.
    """
    if not 0 < fraction <= 1:
        raise DataError("sampling fraction must lie in (0, 1]")
    n_blocks = truth.grid.n_blocks
    n_sample = int(round(fraction * n_blocks))
    if n_sample < 1:
        raise DataError("sampling fraction yields zero observations")
    if n_periods > n_sample:
        raise DataError("more periods than sampled observations")
    rng = derive_rng(seed, STAGE_SAMPLE, 0)
    blocks = np.sort(rng.choice(n_blocks, size=n_sample, replace=False))
    coords = truth.grid.centroids(blocks)
    periods = _cluster_periods(coords, n_periods, rng)
    return ObservationSet(
        tuple(variables),
        _records_from_blocks(truth, blocks, periods, tuple(variables)),
        grid=truth.grid,
    )


def sample_drill(truth: SyntheticTruth, fraction: float, seed: int = 0, variables=()) -> ObservationSet:
    """Sparse single-period sample standing in for exploration drilling."""
    if not 0 < fraction <= 1:
        raise DataError("drill fraction must lie in (0, 1]")
    n_blocks = truth.grid.n_blocks
    n_sample = max(1, int(round(fraction * n_blocks)))
    rng = derive_rng(seed, STAGE_SAMPLE, 1)
    blocks = np.sort(rng.choice(n_blocks, size=n_sample, replace=False))
    periods = np.zeros(n_sample, dtype=np.int64)
    return ObservationSet(
        tuple(variables),
        _records_from_blocks(truth, blocks, periods, tuple(variables)),
        grid=truth.grid,
    )


def _cluster_periods(coords: np.ndarray, n_periods: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd k-means on coordinates; cluster ids ordered by centroid."""
    n = coords.shape[0]
    if n_periods == 1:
        return np.zeros(n, dtype=np.int64)
    centers = coords[rng.choice(n, size=n_periods, replace=False)].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(25):
        d2 = np.sum((coords[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        # keep every period non-empty: empty clusters steal the point
        # farthest from its centre among clusters that can spare one
        sizes = np.bincount(new_assign, minlength=n_periods)
        for k in range(n_periods):
            if sizes[k] == 0:
                own = d2[np.arange(n), new_assign]
                own[sizes[new_assign] <= 1] = -np.inf
                far = int(np.argmax(own))
                sizes[new_assign[far]] -= 1
                new_assign[far] = k
                sizes[k] = 1
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(n_periods):
            centers[k] = coords[assign == k].mean(axis=0)
    order = np.lexsort((centers[:, 2], centers[:, 1], centers[:, 0]))
    remap = np.empty(n_periods, dtype=np.int64)
    remap[order] = np.arange(n_periods)
    return remap[assign]
