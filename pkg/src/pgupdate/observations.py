"""Observation records and the observations CSV format.

CSV header: ``x,y,z,period,domain,<var1>,...,<varm>[,err_<var1>,...]``.
Empty cells mean "absent". When a grid is bound, records are upscaled to
block support: grades at the same (block, period) are averaged, domains
are decided by majority vote with ties broken toward the globally more
abundant domain.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .grid import GridSpec


@dataclass(frozen=True)
class ObservationRecord:
    x: float
    y: float
    z: float
    period: int
    domain: str | None
    grades: tuple  # one float-or-None per variable
    error_sd: tuple  # one float-or-None per variable
    block: int | None = None


class ObservationSet:
    """Period-tagged point observations, optionally bound to a grid.

    Periods live on the contiguous axis ``0..max(period)``; an integer in
    that range with no records is an empty period, which the pipeline
    processes as a no-op.
    """

    def __init__(self, variables, records, grid: GridSpec | None = None):
        self.variables = tuple(str(v) for v in variables)
        self.records = list(records)
        self.grid = grid
        if any(r.period < 0 for r in self.records):
            raise DataError("periods must be >= 0")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_periods(self) -> int:
        return 1 + max((r.period for r in self.records), default=-1)

    def for_period(self, t: int) -> "ObservationSet":
        sub = [replace(r, period=0) for r in self.records if r.period == t]
        return ObservationSet(self.variables, sub, grid=self.grid)

    @property
    def block_indices(self) -> np.ndarray:
        if any(r.block is None for r in self.records):
            raise DataError("observation set is not bound to a grid")
        return np.asarray([r.block for r in self.records], dtype=np.int64)

    @property
    def locations(self) -> np.ndarray:
        return np.asarray([(r.x, r.y, r.z) for r in self.records], dtype=np.float64)

    @property
    def domains(self) -> list:
        return [r.domain for r in self.records]

    def grades_matrix(self) -> np.ndarray:
        """(n, m) grade matrix with NaN for absent values."""
        out = np.full((len(self.records), len(self.variables)), np.nan)
        for i, r in enumerate(self.records):
            for j, g in enumerate(r.grades):
                if g is not None:
                    out[i, j] = g
        return out

    def bind(self, grid: GridSpec) -> "ObservationSet":
        """Map records to blocks and upscale duplicates to block support."""
        mapped = []
        for r in self.records:
            block = int(grid.block_containing(r.x, r.y, r.z))
            mapped.append(replace(r, block=block))
        global_counts = Counter(r.domain for r in mapped if r.domain is not None)
        groups: dict[tuple[int, int], list[ObservationRecord]] = {}
        for r in mapped:
            groups.setdefault((r.period, r.block), []).append(r)
        merged = []
        m = len(self.variables)
        for (period, block), rows in sorted(groups.items()):
            if len(rows) == 1:
                merged.append(rows[0])
                continue
            cx, cy, cz = grid.centroids(np.array([block]))[0]
            grades = tuple(_mean_present([r.grades[j] for r in rows]) for j in range(m))
            errs = tuple(_mean_present([r.error_sd[j] for r in rows]) for j in range(m))
            merged.append(
                ObservationRecord(
                    x=float(cx), y=float(cy), z=float(cz), period=period,
                    domain=_majority(rows, global_counts),
                    grades=grades, error_sd=errs, block=block,
                )
            )
        return ObservationSet(self.variables, merged, grid=grid)


def _mean_present(values):
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _majority(rows, global_counts):
    labels = [r.domain for r in rows if r.domain is not None]
    if not labels:
        return None
    local = Counter(labels)
    top = max(local.values())
    tied = [lab for lab, c in local.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    # Tie: the globally more abundant domain wins; alphabetical last resort.
    return max(sorted(tied), key=lambda lab: global_counts[lab])


def load_observations(
    path, grid: GridSpec | None = None, domains=None, variables=None
) -> ObservationSet:
    """Parse an observations CSV; errors carry 1-based line numbers.

    ``domains``, when given, is the set of valid labels. ``variables``
    pins the expected grade columns; otherwise they are read off the
    header. Binding to a grid validates coordinates and upscales.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty observations file") from None
        header = [h.strip() for h in header]
        if header[:5] != ["x", "y", "z", "period", "domain"]:
            raise DataError(f"{path}: header must start with x,y,z,period,domain")
        rest = header[5:]
        n_err = sum(1 for h in rest if h.startswith("err_"))
        var_names = rest[: len(rest) - n_err]
        err_names = rest[len(rest) - n_err:]
        if err_names and err_names != [f"err_{v}" for v in var_names]:
            raise DataError(f"{path}: err_ columns must mirror the grade columns")
        if variables is not None and list(variables) != var_names:
            raise DataError(
                f"{path}: grade columns {var_names} do not match expected {list(variables)}"
            )
        m = len(var_names)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                x, y, z = (float(row[i]) for i in range(3))
                period = int(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed coordinate or period") from exc
            if period < 0:
                raise DataError(f"{path}:{lineno}: period must be >= 0")
            domain = row[4].strip() or None
            if domain is not None and domains is not None and domain not in domains:
                raise DataError(f"{path}:{lineno}: unknown domain label {domain!r}")
            try:
                grades = tuple(
                    float(row[5 + j]) if row[5 + j].strip() else None for j in range(m)
                )
                errs = tuple(
                    float(row[5 + m + j]) if err_names and row[5 + m + j].strip() else None
                    for j in range(m)
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed grade value") from exc
            try:
                records.append(
                    ObservationRecord(x, y, z, period, domain, grades, errs)
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    obs = ObservationSet(var_names, records)
    if grid is not None:
        try:
            obs = obs.bind(grid)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return obs


def write_observations(path, obs: ObservationSet, include_errors: bool = False) -> None:
    """Write the CSV format read by :func:`load_observations`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["x", "y", "z", "period", "domain", *obs.variables]
        if include_errors:
            header += [f"err_{v}" for v in obs.variables]
        writer.writerow(header)
        for r in obs.records:
            row = [repr(r.x), repr(r.y), repr(r.z), str(r.period), r.domain or ""]
            row += ["" if g is None else repr(float(g)) for g in r.grades]
            if include_errors:
                row += ["" if e is None else repr(float(e)) for e in r.error_sd]
            writer.writerow(row)
