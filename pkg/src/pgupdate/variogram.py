"""Stationary variogram / covariance models for standard Gaussian fields.

Three structure types are supported: spherical, exponential and gaussian.
Exponential and gaussian use the practical-range convention (95% of the
sill contribution is reached at the stated range). Anisotropy is a ZXZ
rotation (angles in degrees) followed by per-axis scaling by the ranges,
applied to the lag before evaluating the unit-range structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

STRUCTURE_KINDS = ("spherical", "exponential", "gaussian")


def rotation_matrix(angles_deg) -> np.ndarray:
    """ZXZ rotation matrix for angles (a1, a2, a3) in degrees."""
    a1, a2, a3 = np.radians(np.asarray(angles_deg, dtype=np.float64))

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def rx(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    return rz(a1) @ rx(a2) @ rz(a3)


@dataclass(frozen=True)
class Structure:
    """One nested structure: kind, sill contribution, ranges and angles."""

    kind: str
    sill: float
    ranges: tuple[float, float, float]
    angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    _transform: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in STRUCTURE_KINDS:
            raise ConfigError(f"unknown variogram structure kind {self.kind!r}")
        if not self.sill > 0:
            raise ConfigError("structure sill contribution must be > 0")
        if len(self.ranges) != 3 or any(not r > 0 for r in self.ranges):
            raise ConfigError("structure ranges must be three values > 0")
        # Rotate into the structure frame, then normalise by the ranges;
        # |transform @ h| is the anisotropy-normalised lag length.
        t = np.diag(1.0 / np.asarray(self.ranges, dtype=np.float64))
        t = t @ rotation_matrix(self.angles).T
        object.__setattr__(self, "_transform", t)

    def normalised_distance(self, h: np.ndarray) -> np.ndarray:
        """Anisotropy-normalised lag length r = |h'| for lags h (..., 3)."""
        hp = np.asarray(h, dtype=np.float64) @ self._transform.T
        return np.sqrt(np.sum(hp * hp, axis=-1))

    def gamma_unit(self, r: np.ndarray) -> np.ndarray:
        """Unit-sill variogram value at normalised distance r."""
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "spherical":
            rc = np.minimum(r, 1.0)
            return 1.5 * rc - 0.5 * rc**3
        if self.kind == "exponential":
            return 1.0 - np.exp(-3.0 * r)
        return 1.0 - np.exp(-3.0 * r * r)


@dataclass(frozen=True)
class VariogramModel:
    """Nugget plus nested structures; total sill = nugget + sum of sills."""

    nugget: float
    structures: tuple[Structure, ...]

    def __post_init__(self) -> None:
        if self.nugget < 0:
            raise ConfigError("nugget must be >= 0")
        if not self.structures and self.nugget == 0:
            raise ConfigError("variogram model needs a nugget or at least one structure")
        object.__setattr__(self, "structures", tuple(self.structures))

    @property
    def total_sill(self) -> float:
        return self.nugget + sum(s.sill for s in self.structures)

    def require_standard(self, what: str = "model") -> None:
        """Raise unless the total sill is 1 (standard GRF convention)."""
        if abs(self.total_sill - 1.0) > 1e-9:
            raise ConfigError(f"{what} must have total sill 1, got {self.total_sill}")

    def gamma(self, h) -> np.ndarray:
        """Variogram value at lag(s) h with shape (..., 3); gamma(0) = 0."""
        h = np.asarray(h, dtype=np.float64)
        if self.nugget == 0.0:
            # structures all satisfy gamma(0) = 0, no origin test needed
            out = 0.0
            for s in self.structures:
                out = out + s.sill * s.gamma_unit(s.normalised_distance(h))
            return np.asarray(out, dtype=np.float64)
        nonzero = np.any(h != 0.0, axis=-1)
        out = np.where(nonzero, self.nugget, 0.0)
        for s in self.structures:
            out = out + np.where(nonzero, s.sill * s.gamma_unit(s.normalised_distance(h)), 0.0)
        return out

    def covariance(self, h) -> np.ndarray:
        """C(h) = total sill - gamma(h)."""
        return self.total_sill - self.gamma(h)

    def anisotropy_transform(self) -> np.ndarray:
        """Coordinate transform of the first structure, for neighbour metrics."""
        if not self.structures:
            return np.eye(3)
        return self.structures[0]._transform


def gamma(model: VariogramModel, h) -> np.ndarray:
    return model.gamma(h)


def covariance(model: VariogramModel, h) -> np.ndarray:
    return model.covariance(h)


def covariance_matrix(model: VariogramModel, locs_a, locs_b=None) -> np.ndarray:
    """Pairwise covariance between two location sets, shape (na, nb)."""
    a = np.asarray(locs_a, dtype=np.float64)
    b = a if locs_b is None else np.asarray(locs_b, dtype=np.float64)
    lags = a[:, None, :] - b[None, :, :]
    return model.covariance(lags)
