"""Rotation-based iterative Gaussianisation.

Alternates marginal normal-score maps with PCA rotations until the sample
looks like independent standard normals, storing every iteration so the
transform inverts exactly. The estimator follows the scikit-learn
transformer protocol (``fit`` / ``transform`` / ``inverse_transform``), so
a fitted instance can be dropped into ordinary preprocessing pipelines.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import kurtosis, skew
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError

_DEGENERATE_SPAN = 1e-12


class MarginalGaussianizer:
    """Invertible univariate normal-score map.

    Fitted as an empirical-quantile table: sorted data values against
    standard-normal quantiles at Hazen plotting positions
    ``(rank - 0.5) / n``. Between knots the map interpolates linearly; past
    the outermost knots it extends linearly with the last inter-knot slope.
    A zero-variance column is flagged degenerate and maps to zeros.
    """

    def __init__(self) -> None:
        self.data_knots: np.ndarray | None = None
        self.gauss_knots: np.ndarray | None = None
        self.degenerate = False
        self._constant = 0.0

    def fit(self, x) -> "MarginalGaussianizer":
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size < 2:
            raise DataError("marginal gaussianisation needs at least 2 samples")
        if not np.all(np.isfinite(x)):
            raise DataError("marginal gaussianisation input contains non-finite values")
        xs = np.sort(x)
        if xs[-1] - xs[0] < _DEGENERATE_SPAN:
            self.degenerate = True
            self._constant = float(xs[0])
            return self
        g = ndtri((np.arange(x.size) + 0.5) / x.size)
        # Tied data values collapse to one knot at the mean Gaussian
        # quantile, keeping both columns strictly increasing.
        uniq, start = np.unique(xs, return_index=True)
        if uniq.size != xs.size:
            sums = np.add.reduceat(g, start)
            counts = np.diff(np.append(start, xs.size))
            g = sums / counts
            xs = uniq
        self.data_knots = xs
        self.gauss_knots = g
        return self

    def _slopes(self):
        x, g = self.data_knots, self.gauss_knots
        lo = (g[1] - g[0]) / (x[1] - x[0])
        hi = (g[-1] - g[-2]) / (x[-1] - x[-2])
        return lo, hi

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.degenerate:
            return np.zeros_like(x)
        xd, gd = self.data_knots, self.gauss_knots
        out = np.interp(x, xd, gd)
        lo, hi = self._slopes()
        out = np.where(x < xd[0], gd[0] + (x - xd[0]) * lo, out)
        out = np.where(x > xd[-1], gd[-1] + (x - xd[-1]) * hi, out)
        return out

    def inverse(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if self.degenerate:
            return np.full_like(g, self._constant)
        xd, gd = self.data_knots, self.gauss_knots
        out = np.interp(g, gd, xd)
        lo, hi = self._slopes()
        out = np.where(g < gd[0], xd[0] + (g - gd[0]) / lo, out)
        out = np.where(g > gd[-1], xd[-1] + (g - gd[-1]) / hi, out)
        return out


def _non_gaussianity(x: np.ndarray) -> float:
    """Sum over columns of |skewness| + |excess kurtosis|."""
    return float(np.sum(np.abs(skew(x, axis=0)) + np.abs(kurtosis(x, axis=0))))


class IterativeGaussianizer(BaseEstimator, TransformerMixin):
    """Fit an invertible map from data to independent multi-Gaussian factors.

    Parameters
    ----------
    max_iterations : int
        Upper bound on marginal+rotation iterations (at least one is
        always kept).
    tol : float or None
        Stop when the summed |skew| + |excess kurtosis| over columns drops
        below this; ``None`` means ``0.05 * n_features``.

    Attributes
    ----------
    iterations_ : list of (list of MarginalGaussianizer, ndarray)
        Fitted maps and the orthonormal rotation of each iteration.
    trace_ : ndarray
        Non-Gaussianity measure after each stored iteration;
        non-increasing by construction (an iteration that would raise it
        is discarded and fitting stops).
    """

    def __init__(self, max_iterations: int = 30, tol: float | None = None):
        self.max_iterations = max_iterations
        self.tol = tol

    def fit(self, X, y=None) -> "IterativeGaussianizer":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("expected a 2D sample matrix")
        n, m = X.shape
        if n < 10 * m:
            raise DataError(f"need at least {10 * m} samples to fit {m} variables")
        if not np.all(np.isfinite(X)):
            raise DataError("input contains NaN or infinite values")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        tol = 0.05 * m if self.tol is None else self.tol

        self.n_features_in_ = m
        self.iterations_ = []
        trace = []
        current = X
        for _ in range(self.max_iterations):
            maps = [MarginalGaussianizer().fit(current[:, j]) for j in range(m)]
            gaussed = np.column_stack([maps[j].transform(current[:, j]) for j in range(m)])
            rotation = _pca_rotation(gaussed)
            rotated = gaussed @ rotation
            measure = _non_gaussianity(rotated)
            if trace and measure > trace[-1] + 1e-9:
                break  # no further improvement; keep the shorter transform
            self.iterations_.append((maps, rotation))
            trace.append(measure)
            current = rotated
            if measure < tol:
                break
        self.trace_ = np.asarray(trace)
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise DataError("column count differs from the fitted sample")
        out = X
        for maps, rotation in self.iterations_:
            out = np.column_stack([maps[j].transform(out[:, j]) for j in range(len(maps))])
            out = out @ rotation
        return out[0] if squeeze else out

    def inverse_transform(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        squeeze = F.ndim == 1
        if squeeze:
            F = F[None, :]
        if F.shape[1] != self.n_features_in_:
            raise DataError("factor column count differs from the fitted sample")
        if not np.all(np.isfinite(F)):
            raise DataError("factors contain NaN or infinite values")
        out = F
        for maps, rotation in reversed(self.iterations_):
            out = out @ rotation.T
            out = np.column_stack([maps[j].inverse(out[:, j]) for j in range(len(maps))])
        return out[0] if squeeze else out


def _pca_rotation(x: np.ndarray) -> np.ndarray:
    """Orthonormal PCA rotation with a deterministic sign convention."""
    cov = np.cov(x, rowvar=False)
    cov = np.atleast_2d(cov)
    _, vecs = np.linalg.eigh(cov)
    vecs = vecs[:, ::-1]  # descending variance
    # Flip each eigenvector so its largest-magnitude component is positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_forward(data, max_iterations: int = 30, tol: float | None = None):
    """Fit on a sample and return (factors, fitted transform)."""
    tr = IterativeGaussianizer(max_iterations=max_iterations, tol=tol).fit(data)
    return tr.transform(data), tr


def inverse(transform: IterativeGaussianizer, factors) -> np.ndarray:
    """Map factors back to the original space."""
    return transform.inverse_transform(factors)


_SER_MAGIC = b"RBG1"


def serialize_transform(tr: IterativeGaussianizer) -> bytes:
    """Pack a fitted transform for the ensemble container's aux section."""
    import struct

    m = tr.n_features_in_
    parts = [_SER_MAGIC, struct.pack("<HH", m, len(tr.iterations_))]
    parts.append(struct.pack("<H", tr.trace_.size))
    parts.append(tr.trace_.astype("<f8").tobytes())
    for maps, rotation in tr.iterations_:
        parts.append(np.ascontiguousarray(rotation, dtype="<f8").tobytes())
        for mg in maps:
            if mg.degenerate:
                parts.append(struct.pack("<BId", 1, 0, mg._constant))
            else:
                n = mg.data_knots.size
                parts.append(struct.pack("<BId", 0, n, 0.0))
                parts.append(mg.data_knots.astype("<f8").tobytes())
                parts.append(mg.gauss_knots.astype("<f8").tobytes())
    return b"".join(parts)


def deserialize_transform(blob: bytes) -> IterativeGaussianizer:
    """Inverse of :func:`serialize_transform`."""
    import struct

    if blob[:4] != _SER_MAGIC:
        raise DataError("not a serialized Gaussianisation transform")
    m, n_iter = struct.unpack_from("<HH", blob, 4)
    off = 8
    (n_trace,) = struct.unpack_from("<H", blob, off)
    off += 2
    trace = np.frombuffer(blob, dtype="<f8", count=n_trace, offset=off).copy()
    off += 8 * n_trace
    tr = IterativeGaussianizer()
    tr.n_features_in_ = m
    tr.trace_ = trace
    tr.iterations_ = []
    for _ in range(n_iter):
        rotation = np.frombuffer(blob, dtype="<f8", count=m * m, offset=off)
        rotation = rotation.reshape(m, m).copy()
        off += 8 * m * m
        maps = []
        for _ in range(m):
            degenerate, n, const = struct.unpack_from("<BId", blob, off)
            off += struct.calcsize("<BId")
            mg = MarginalGaussianizer()
            if degenerate:
                mg.degenerate = True
                mg._constant = const
            else:
                mg.data_knots = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
                off += 8 * n
                mg.gauss_knots = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
                off += 8 * n
            maps.append(mg)
        tr.iterations_.append((maps, rotation))
    return tr


__all__ = [
    "MarginalGaussianizer",
    "IterativeGaussianizer",
    "fit_forward",
    "inverse",
]
