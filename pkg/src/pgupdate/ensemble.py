"""Ensemble container and on-disk formats.

Binary layout (little-endian), magic ``PGUE``:

    magic[4] | version u16 | n_real u32 | n_vars u16 | nx u32 ny u32 nz u32
    | per variable: name length u8 + UTF-8 name bytes
    | payload: float32, realization-major, variable-major, x-fastest

Values are held in memory as float64; the payload is float32 to halve file
size, so a written-then-read ensemble is reproduced bit-exactly only at
float32 resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .grid import GridSpec

MAGIC = b"PGUE"
FORMAT_VERSION = 1


@dataclass
class Ensemble:
    """n_real realizations of n_vars flat grids, as (n_real, n_vars, n_blocks)."""

    grid: GridSpec
    variables: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.variables = tuple(str(v) for v in self.variables)
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.values.shape[0], len(self.variables), self.grid.n_blocks)
        if self.values.shape != expected:
            raise DataError(f"ensemble array shape {self.values.shape}, expected {expected}")
        if len(set(self.variables)) != len(self.variables):
            raise DataError("duplicate ensemble variable names")

    @classmethod
    def allocate(cls, grid: GridSpec, variables, n_real: int) -> "Ensemble":
        variables = tuple(variables)
        return cls(grid, variables, np.zeros((n_real, len(variables), grid.n_blocks)))

    @property
    def n_real(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def var_index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise DataError(f"ensemble has no variable {name!r}") from None

    def get(self, name: str) -> np.ndarray:
        """View of one variable, shape (n_real, n_blocks)."""
        return self.values[:, self.var_index(name), :]

    def set(self, name: str, data) -> None:
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (self.n_real, self.grid.n_blocks):
            raise DataError(f"variable data must be (n_real, n_blocks), got {data.shape}")
        self.values[:, self.var_index(name), :] = data

    def mean(self, name: str) -> np.ndarray:
        """E-type (per-block ensemble mean) of a variable."""
        return self.get(name).mean(axis=0)

    def copy(self) -> "Ensemble":
        return Ensemble(self.grid, self.variables, self.values.copy())

    def assert_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise DataError("ensemble contains non-finite values")


AUX_MAGIC = b"PGUX"


def write_ensemble(path, ens: Ensemble, aux: bytes | None = None) -> None:
    """Write the binary container described in the module docstring.

    ``aux`` is an optional auxiliary section (length-prefixed, after the
    payload) used e.g. for fitted transform tables.
    """
    g = ens.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIH", FORMAT_VERSION, ens.n_real, ens.n_vars))
        fh.write(struct.pack("<III", g.nx, g.ny, g.nz))
        for name in ens.variables:
            raw = name.encode("utf-8")
            if len(raw) > 255:
                raise DataError(f"variable name too long: {name!r}")
            fh.write(struct.pack("<B", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(ens.values, dtype="<f4").tobytes())
        if aux is not None:
            fh.write(AUX_MAGIC)
            fh.write(struct.pack("<I", len(aux)))
            fh.write(aux)


def read_ensemble(path, grid: GridSpec | None = None) -> Ensemble:
    """Read an ensemble file; validates magic, sizes and payload length.

    When ``grid`` is given its dimensions must match the header; block
    sizes and origin are taken from it (the file stores counts only).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an ensemble file")
    off = 4
    try:
        version, n_real, n_vars = struct.unpack_from("<HIH", blob, off)
        off += 8
        nx, ny, nz = struct.unpack_from("<III", blob, off)
        off += 12
        names = []
        for _ in range(n_vars):
            (ln,) = struct.unpack_from("<B", blob, off)
            off += 1
            names.append(blob[off:off + ln].decode("utf-8"))
            off += ln
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if grid is None:
        grid = GridSpec(nx, ny, nz, 1.0, 1.0, 1.0)
    elif (grid.nx, grid.ny, grid.nz) != (nx, ny, nz):
        raise FormatError(
            f"{path}: grid {nx}x{ny}x{nz} does not match bound grid "
            f"{grid.nx}x{grid.ny}x{grid.nz}"
        )
    n_blocks = nx * ny * nz
    expected = n_real * n_vars * n_blocks * 4
    payload = blob[off:off + expected]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
        )
    _check_trailer(path, blob, off + expected)
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    values = values.reshape(n_real, n_vars, n_blocks)
    return Ensemble(grid, tuple(names), values)


def _check_trailer(path, blob: bytes, off: int) -> None:
    rest = blob[off:]
    if not rest:
        return
    if rest[:4] != AUX_MAGIC or len(rest) < 8:
        raise FormatError(f"{path}: trailing bytes after declared payload")
    (length,) = struct.unpack_from("<I", rest, 4)
    if len(rest) != 8 + length:
        raise FormatError(f"{path}: auxiliary section length mismatch")


def read_aux(path) -> bytes | None:
    """Auxiliary section of an ensemble file, or None when absent."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an ensemble file")
    try:
        _, n_real, n_vars = struct.unpack_from("<HIH", blob, 4)
        nx, ny, nz = struct.unpack_from("<III", blob, 12)
        off = 24
        for _ in range(n_vars):
            (ln,) = struct.unpack_from("<B", blob, off)
            off += 1 + ln
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    off += n_real * n_vars * nx * ny * nz * 4
    rest = blob[off:]
    if not rest:
        return None
    if rest[:4] != AUX_MAGIC or len(rest) < 8:
        raise FormatError(f"{path}: malformed auxiliary section")
    (length,) = struct.unpack_from("<I", rest, 4)
    return rest[8:8 + length]


def write_raster_csv(path, grid: GridSpec, flat_values, fmt: str = "%.9g") -> None:
    """Per-variable CSV raster: nz*ny rows of nx comma-separated values."""
    flat_values = np.asarray(flat_values)
    if flat_values.shape != (grid.n_blocks,):
        raise DataError("raster values must be one flat grid")
    rows = flat_values.reshape(grid.nz * grid.ny, grid.nx)
    np.savetxt(path, rows, fmt=fmt, delimiter=",")


def read_raster_csv(path, grid: GridSpec) -> np.ndarray:
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    if values.shape != (grid.nz * grid.ny, grid.nx):
        raise FormatError(
            f"{path}: raster shape {values.shape} does not match grid "
            f"({grid.nz * grid.ny}, {grid.nx})"
        )
    return values.reshape(grid.n_blocks)


def write_raster_pgm(path, grid: GridSpec, flat_values, lo=None, hi=None) -> None:
    """16-bit binary PGM (big-endian samples per netpbm), for quick viewing."""
    flat_values = np.asarray(flat_values, dtype=np.float64)
    if flat_values.shape != (grid.n_blocks,):
        raise DataError("raster values must be one flat grid")
    lo = float(np.min(flat_values)) if lo is None else float(lo)
    hi = float(np.max(flat_values)) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((flat_values - lo) / span, 0.0, 1.0)
    pixels = np.round(scaled * 65535).astype(">u2")
    rows = pixels.reshape(grid.nz * grid.ny, grid.nx)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.nx} {grid.nz * grid.ny}\n65535\n".encode("ascii"))
        fh.write(rows.tobytes())
