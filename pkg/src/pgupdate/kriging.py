"""Simple kriging with the zero-mean (standard GRF) convention.

This is the engine behind the Gibbs sampler and sequential simulation: a
point estimate ``k C^-1 z`` and variance ``C(0) - k C^-1 k`` from a set of
neighbouring data. Systems are solved by Cholesky factorisation with a
small diagonal jitter; near-duplicate neighbours that still defeat the
jitter are dropped one at a time.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DataError
from .variogram import VariogramModel, covariance_matrix

#: Relative diagonal jitter applied before factorisation. Gibbs sweeps solve
#: nearly-duplicate systems repeatedly; without jitter they go singular.
JITTER = 1e-10

DEFAULT_MAX_NEIGHBORS = 32


def simple_krige(target, locations, values, model: VariogramModel):
    """Simple kriging estimate and variance at one target location.

    Parameters
    ----------
    target : array-like, shape (3,)
    locations : array-like, shape (n, 3)
        Neighbour coordinates; should be distinct from each other.
    values : array-like, shape (n,)
    model : VariogramModel

    Returns
    -------
    (estimate, variance) : tuple of float
        With zero neighbours this is ``(0, C(0))``. The variance is clamped
        to ``[0, C(0)]``.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    c0 = model.total_sill
    if values.size == 0:
        return 0.0, c0
    if locations.shape[0] != values.size:
        raise DataError("kriging neighbour locations and values disagree in length")
    target = np.asarray(target, dtype=np.float64).reshape(3)

    keep = np.arange(values.size)
    while True:
        locs = locations[keep]
        # one covariance evaluation covers the system and the rhs vector
        joint = covariance_matrix(model, np.concatenate([target[None, :], locs]))
        cov = joint[1:, 1:]
        k = joint[0, 1:]
        n = cov.shape[0]
        cov.flat[:: n + 1] += JITTER * c0
        try:
            factor = cho_factor(cov, lower=True, check_finite=False)
            break
        except LinAlgError:
            if keep.size <= 1:
                raise DataError("kriging system singular after duplicate removal")
            keep = np.delete(keep, _nearest_duplicate(locs))

    weights = cho_solve(factor, k, check_finite=False)
    estimate = float(weights @ values[keep])
    variance = float(c0 - weights @ k)
    return estimate, min(max(variance, 0.0), c0)


def _nearest_duplicate(locs: np.ndarray) -> int:
    """Index of one member of the closest pair of locations."""
    d = locs[:, None, :] - locs[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    dist2[np.diag_indices_from(dist2)] = np.inf
    i, j = np.unravel_index(np.argmin(dist2), dist2.shape)
    return max(i, j)


def precision_matrix(model: VariogramModel, locations) -> np.ndarray:
    """Inverse covariance of a point set (jittered), for Gibbs conditionals.

    The conditional of one point given all others is simple kriging from all
    others; with a fixed point set the weights depend only on geometry, so a
    single O(n^3) inversion replaces per-point solves.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    cov = covariance_matrix(model, locations)
    cov[np.diag_indices_from(cov)] += JITTER * model.total_sill
    return np.linalg.inv(cov)
