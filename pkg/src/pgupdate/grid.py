"""Regular 3D block grid geometry and neighbourhood extraction.

Blocks are indexed x-fastest: ``linear = ix + nx * (iy + ny * iz)``. The
grid origin is the minimum corner; block centroids sit at
``origin + (i + 0.5) * size`` along each axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a regular block model.

    Parameters
    ----------
    nx, ny, nz : int
        Block counts per axis, all >= 1.
    dx, dy, dz : float
        Block sizes in metres, all > 0.
    origin : tuple of float
        Minimum-corner coordinate of the grid.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 1:
                raise DataError(f"grid {name} must be a positive integer, got {n!r}")
        for name in ("dx", "dy", "dz"):
            d = getattr(self, name)
            if not d > 0:
                raise DataError(f"grid {name} must be > 0, got {d!r}")
        if len(self.origin) != 3:
            raise DataError("grid origin must be a 3-coordinate")

    @property
    def n_blocks(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    def linear_index(self, ix, iy, iz):
        """Map per-axis indices to the linear (x-fastest) index."""
        ix = np.asarray(ix)
        iy = np.asarray(iy)
        iz = np.asarray(iz)
        if (
            np.any(ix < 0) or np.any(ix >= self.nx)
            or np.any(iy < 0) or np.any(iy >= self.ny)
            or np.any(iz < 0) or np.any(iz >= self.nz)
        ):
            raise DataError("block index out of range")
        return ix + self.nx * (iy + self.ny * iz)

    def block_coords(self, index):
        """Inverse of :meth:`linear_index`."""
        index = np.asarray(index)
        if np.any(index < 0) or np.any(index >= self.n_blocks):
            raise DataError("linear block index out of range")
        ix = index % self.nx
        iy = (index // self.nx) % self.ny
        iz = index // (self.nx * self.ny)
        return ix, iy, iz

    def centroids(self, index=None) -> np.ndarray:
        """Centroid coordinates, shape (n, 3), of the given (or all) blocks."""
        if index is None:
            index = np.arange(self.n_blocks)
        ix, iy, iz = self.block_coords(index)
        ox, oy, oz = self.origin
        out = np.empty(np.shape(ix) + (3,), dtype=np.float64)
        out[..., 0] = ox + (np.asarray(ix) + 0.5) * self.dx
        out[..., 1] = oy + (np.asarray(iy) + 0.5) * self.dy
        out[..., 2] = oz + (np.asarray(iz) + 0.5) * self.dz
        return out

    def block_containing(self, x, y, z):
        """Linear index of the block containing a point; DataError outside."""
        ox, oy, oz = self.origin
        ix = np.floor((np.asarray(x, dtype=np.float64) - ox) / self.dx).astype(np.int64)
        iy = np.floor((np.asarray(y, dtype=np.float64) - oy) / self.dy).astype(np.int64)
        iz = np.floor((np.asarray(z, dtype=np.float64) - oz) / self.dz).astype(np.int64)
        # Points exactly on the max face belong to the last block.
        ix = np.where(np.asarray(x) == ox + self.nx * self.dx, self.nx - 1, ix)
        iy = np.where(np.asarray(y) == oy + self.ny * self.dy, self.ny - 1, iy)
        iz = np.where(np.asarray(z) == oz + self.nz * self.dz, self.nz - 1, iz)
        if (
            np.any(ix < 0) or np.any(ix >= self.nx)
            or np.any(iy < 0) or np.any(iy >= self.ny)
            or np.any(iz < 0) or np.any(iz >= self.nz)
        ):
            raise DataError("coordinate outside grid")
        return ix + self.nx * (iy + self.ny * iz)


def extract_neighbourhood(grid: GridSpec, blocks, k: int) -> np.ndarray:
    """Blocks within Chebyshev block distance <= k of any of the given blocks.

    Parameters
    ----------
    grid : GridSpec
    blocks : array-like of int
        Linear indices of the observation blocks; must be non-empty.
    k : int
        Block radius, >= 0.

    Returns
    -------
    numpy.ndarray
        Sorted, deduplicated linear indices, clipped at grid boundaries.
    """
    blocks = np.atleast_1d(np.asarray(blocks, dtype=np.int64))
    if blocks.size == 0:
        raise DataError("cannot extract a neighbourhood of an empty observation set")
    if k < 0:
        raise DataError("neighbourhood radius must be >= 0")
    ix, iy, iz = grid.block_coords(blocks)
    offs = np.arange(-k, k + 1)
    wx = np.clip(ix[:, None] + offs[None, :], 0, grid.nx - 1)
    wy = np.clip(iy[:, None] + offs[None, :], 0, grid.ny - 1)
    wz = np.clip(iz[:, None] + offs[None, :], 0, grid.nz - 1)
    # Cartesian product of the clipped per-axis windows, per observation.
    gx = wx[:, :, None, None]
    gy = wy[:, None, :, None]
    gz = wz[:, None, None, :]
    lin = gx + grid.nx * (gy + grid.ny * gz)
    return np.unique(lin.ravel())
