"""Spectral indices, vigour levels and multi-date change composites."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .grid import DEFAULT_NODATA, Grid, LandCoverMap, export_ppm, require_same_geometry


def normalized_difference(a: Grid, b: Grid) -> Grid:
    """(a - b) / (a + b) per cell. Zero denominator or missing input -> nodata."""
    require_same_geometry(a, b, context="normalized_difference")
    num = a.values - b.values
    den = a.values + b.values
    ok = a.valid & b.valid & (den != 0.0)
    out = np.full(a.shape, DEFAULT_NODATA)
    out[ok] = num[ok] / den[ok]
    return a.with_values(out, nodata_value=DEFAULT_NODATA)


def ndvi(nir: Grid, red: Grid) -> Grid:
    return normalized_difference(nir, red)


def ndii(nir: Grid, mir: Grid) -> Grid:
    return normalized_difference(nir, mir)


def ndim(ndvi_grid: Grid, ndii_grid: Grid, weight: float = 0.5) -> Grid:
    """Moisture-adjusted vegetation signal: weighted mean of the two indices.

    weight is the NDVI share; the default 0.5 is the plain average.
    """
    require_same_geometry(ndvi_grid, ndii_grid, context="ndim")
    if not 0.0 <= weight <= 1.0:
        raise DataError(f"weight must be in [0, 1], got {weight}")
    ok = ndvi_grid.valid & ndii_grid.valid
    out = np.full(ndvi_grid.shape, DEFAULT_NODATA)
    out[ok] = weight * ndvi_grid.values[ok] + (1.0 - weight) * ndii_grid.values[ok]
    return ndvi_grid.with_values(out, nodata_value=DEFAULT_NODATA)


def ternary_thresholds(grid: Grid, low_q: float = 1.0 / 3.0, high_q: float = 2.0 / 3.0) -> tuple[float, float]:
    """Per-date default cut points: quantiles of the valid cells."""
    vals = grid.values[grid.valid]
    if vals.size == 0:
        raise DataError("cannot take thresholds of an all-nodata grid")
    if not 0.0 <= low_q <= high_q <= 1.0:
        raise DataError(f"quantiles must satisfy 0 <= low <= high <= 1, got {low_q}, {high_q}")
    return float(np.quantile(vals, low_q)), float(np.quantile(vals, high_q))


def ternarize(grid: Grid, t_low: float, t_high: float) -> Grid:
    """Cut a continuous grid into vigour levels 0 (low), 1 (medium), 2 (high).

    v < t_low -> 0; t_low <= v < t_high -> 1; v >= t_high -> 2.
    """
    if not t_low <= t_high:
        raise DataError(f"thresholds out of order: {t_low} > {t_high}")
    v = grid.values
    levels = np.where(v < t_low, 0.0, np.where(v < t_high, 1.0, 2.0))
    levels[~grid.valid] = grid.nodata_value
    return grid.with_values(levels)


def _check_levels(grid: Grid, name: str) -> None:
    vals = grid.values[grid.valid]
    if vals.size and not np.all((vals == 0.0) | (vals == 1.0) | (vals == 2.0)):
        raise DataError(f"{name} holds non-ternary values")


def change_composite(l1: Grid, l2: Grid, l3: Grid, ppm_path=None) -> Grid:
    """Combine three dated level grids into trajectory codes 0..26.

    code = 9*l1 + 3*l2 + l3, nodata wherever any date is missing. When
    ppm_path is given, also renders the dates to R/G/B with levels drawn
    at intensities 0/128/255.
    """
    require_same_geometry(l1, l2, l3, context="change_composite")
    for g, name in ((l1, "date 1"), (l2, "date 2"), (l3, "date 3")):
        _check_levels(g, name)
    ok = l1.valid & l2.valid & l3.valid
    codes = 9.0 * l1.values + 3.0 * l2.values + l3.values
    out = np.where(ok, codes, DEFAULT_NODATA)
    code_grid = l1.with_values(out, nodata_value=DEFAULT_NODATA)

    if ppm_path is not None:
        channels = []
        for g in (l1, l2, l3):
            vals = np.where(ok, g.values, DEFAULT_NODATA)
            channels.append(g.with_values(vals, nodata_value=DEFAULT_NODATA))
        export_ppm(channels[0], channels[1], channels[2], ((0, 2), (0, 2), (0, 2)), ppm_path)
    return code_grid


_DEFAULT_CATEGORY_NAMES = {
    0: "stable cleared/stressed",
    1: "stable medium vigour",
    2: "stable high vigour",
    3: "steady loss",
    4: "loss after t1",
    5: "loss after t2",
    6: "regrowth after t1",
    7: "regrowth after t2",
    8: "loss then regrowth",
    9: "regrowth then loss",
}


@dataclass(frozen=True)
class DynamicsGrouping:
    """Mapping of the 27 trajectory codes onto named dynamics categories.

    category_of[code] gives the category id; names must cover exactly the
    ids used and ids must run contiguously from 0.
    """

    category_of: tuple[int, ...]
    names: dict[int, str]

    def __post_init__(self):
        table = tuple(int(c) for c in self.category_of)
        if len(table) != 27:
            raise DataError(f"grouping must cover all 27 codes, got {len(table)}")
        used = sorted(set(table))
        names = {int(k): str(v) for k, v in dict(self.names).items()}
        if used != list(range(len(used))):
            raise DataError(f"category ids must be contiguous from 0, got {used}")
        if sorted(names) != used:
            raise DataError(f"names cover ids {sorted(names)} but table uses {used}")
        object.__setattr__(self, "category_of", table)
        object.__setattr__(self, "names", names)


def default_grouping() -> DynamicsGrouping:
    """Ten-category trajectory summary of the 27 level triplets."""
    table = []
    for code in range(27):
        a, rest = divmod(code, 9)
        b, c = divmod(rest, 3)
        if a == b == c:
            cat = a  # 0 cleared, 1 medium, 2 high
        elif a > b > c:
            cat = 3
        elif a > b and b == c:
            cat = 4
        elif a == b and b > c:
            cat = 5
        elif a < b and b <= c:
            cat = 6  # strictly rising trajectories land here too
        elif a == b and b < c:
            cat = 7
        elif a > b and b < c:
            cat = 8
        else:  # a < b > c
            cat = 9
        table.append(cat)
    return DynamicsGrouping(tuple(table), dict(_DEFAULT_CATEGORY_NAMES))


def group_dynamics(codes: Grid, grouping: DynamicsGrouping | None = None) -> LandCoverMap:
    """Collapse trajectory codes into a categorical dynamics map."""
    grouping = default_grouping() if grouping is None else grouping
    vals = codes.values
    ok = codes.valid
    data = vals[ok]
    if data.size:
        if not np.all(data == np.floor(data)) or data.min() < 0 or data.max() > 26:
            raise DataError("codes grid holds values outside 0..26")
    lut = np.asarray(grouping.category_of, dtype=np.float64)
    out = np.full(codes.shape, codes.nodata_value)
    out[ok] = lut[vals[ok].astype(np.int64)]
    return LandCoverMap(codes.with_values(out), dict(grouping.names))


def read_grouping_csv(path) -> DynamicsGrouping:
    path = str(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["code", "category_id", "category_name"]:
        raise DataError(f"{path}: grouping CSV needs a 'code,category_id,category_name' header")
    table = [-1] * 27
    names: dict[int, str] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DataError(f"{path}:{i}: expected 3 columns")
        try:
            code, cat = int(row[0]), int(row[1])
        except ValueError:
            raise DataError(f"{path}:{i}: non-integer code or category id") from None
        if not 0 <= code <= 26:
            raise DataError(f"{path}:{i}: code {code} outside 0..26")
        if table[code] != -1:
            raise DataError(f"{path}:{i}: duplicate code {code}")
        if cat in names and names[cat] != row[2]:
            raise DataError(f"{path}:{i}: category {cat} renamed from {names[cat]!r} to {row[2]!r}")
        table[code] = cat
        names[cat] = row[2]
    if any(c == -1 for c in table):
        missing = [i for i, c in enumerate(table) if c == -1]
        raise DataError(f"{path}: grouping misses codes {missing}")
    return DynamicsGrouping(tuple(table), names)


def write_grouping_csv(grouping: DynamicsGrouping, path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "category_id", "category_name"])
        for code, cat in enumerate(grouping.category_of):
            w.writerow([code, cat, grouping.names[cat]])
