"""Core raster types and file I/O.

Grids are single-band float64 rasters with square cells. Row 0 is the
northernmost row. Cells holding exactly ``nodata_value`` are missing.
Instances are immutable: the backing array is marked read-only, so grids
can be shared freely between threads; every operation returns new grids.

The on-disk format is a plain-text grid: six header lines (NCOLS, NROWS,
XLLCORNER, YLLCORNER, CELLSIZE, NODATA_VALUE, any case, any order) followed
by NROWS lines of NCOLS whitespace-separated decimal values, first line =
northernmost row. Values are written in shortest round-trip form, so a
write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, GeometryError, GridFormatError

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class Grid:
    values: np.ndarray
    cell_size: float
    x_origin: float = 0.0
    y_origin: float = 0.0
    nodata_value: float = DEFAULT_NODATA

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise DataError("grid values must form a non-empty 2-D array")
        if not float(self.cell_size) > 0.0:
            raise DataError(f"cell_size must be positive, got {self.cell_size}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "x_origin", float(self.x_origin))
        object.__setattr__(self, "y_origin", float(self.y_origin))
        object.__setattr__(self, "nodata_value", float(self.nodata_value))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        """Boolean array, True where the cell holds data."""
        return self.values != self.nodata_value

    def with_values(self, values, nodata_value=None) -> "Grid":
        """New grid with this grid's geometry and the given cell values."""
        nd = self.nodata_value if nodata_value is None else nodata_value
        return Grid(values, self.cell_size, self.x_origin, self.y_origin, nd)

    def same_geometry(self, other: "Grid") -> bool:
        return (
            self.shape == other.shape
            and self.cell_size == other.cell_size
            and self.x_origin == other.x_origin
            and self.y_origin == other.y_origin
        )


def require_same_geometry(*grids: Grid, context: str = "operation") -> None:
    first = grids[0]
    for i, g in enumerate(grids[1:], start=1):
        if not first.same_geometry(g):
            raise GeometryError(
                f"{context}: grid {i} geometry {g.shape}/{g.cell_size} does not match "
                f"grid 0 geometry {first.shape}/{first.cell_size}"
            )


def grids_equal(a: Grid, b: Grid) -> bool:
    """Exact equality: metadata and every cell value, bit-for-bit semantics."""
    return (
        a.same_geometry(b)
        and a.nodata_value == b.nodata_value
        and bool(np.array_equal(a.values, b.values))
    )


@dataclass(frozen=True, eq=False)
class BinaryMask(Grid):
    """Grid whose cells are all 0 or 1. 1 means 'selected'."""

    def __post_init__(self):
        super().__post_init__()
        vals = self.values
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise DataError("mask values must all be 0 or 1")

    @property
    def selected(self) -> np.ndarray:
        return self.values == 1.0


def mask_like(grid: Grid, values) -> BinaryMask:
    return BinaryMask(values, grid.cell_size, grid.x_origin, grid.y_origin, grid.nodata_value)


@dataclass(frozen=True, eq=False)
class MultiBandImage:
    """Co-registered bands sharing one geometry. Labels are free-form and unique."""

    bands: tuple[Grid, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        bands = tuple(self.bands)
        labels = tuple(str(x) for x in self.labels)
        if len(bands) == 0:
            raise DataError("image needs at least one band")
        if len(bands) != len(labels):
            raise DataError(f"{len(bands)} bands but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise DataError(f"duplicate band labels in {labels}")
        for i, b in enumerate(bands[1:], start=1):
            if not bands[0].same_geometry(b):
                raise GeometryError(f"band {i} ({labels[i]!r}) geometry does not match band 0")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "labels", labels)

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def geometry(self) -> Grid:
        return self.bands[0]

    def band(self, label: str) -> Grid:
        try:
            return self.bands[self.labels.index(label)]
        except ValueError:
            raise DataError(f"no band labeled {label!r}; have {self.labels}") from None


def stack_bands(grids, labels) -> MultiBandImage:
    return MultiBandImage(tuple(grids), tuple(labels))


@dataclass(frozen=True, eq=False)
class LandCoverMap:
    """Categorical raster: integer class ids plus a legend naming every id."""

    grid: Grid
    legend: dict[int, str]
    date_tag: str = ""

    def __post_init__(self):
        legend = {}
        for k, v in dict(self.legend).items():
            ik = int(k)
            if ik < 0 or ik != k:
                raise DataError(f"class ids must be non-negative integers, got {k!r}")
            legend[ik] = str(v)
        vals = self.grid.values
        valid = self.grid.valid
        data = vals[valid]
        if data.size and not np.all(data == np.floor(data)):
            raise DataError("land cover map holds non-integer class values")
        present = set(np.unique(data).astype(np.int64).tolist())
        unknown = present - set(legend)
        if unknown:
            raise DataError(f"map values {sorted(unknown)} missing from legend {sorted(legend)}")
        object.__setattr__(self, "legend", legend)

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.legend)

    @property
    def labels(self) -> np.ndarray:
        """int64 class ids with -1 at nodata cells."""
        out = np.full(self.grid.shape, -1, dtype=np.int64)
        v = self.grid.valid
        out[v] = self.grid.values[v].astype(np.int64)
        return out

    def class_counts(self) -> dict[int, int]:
        lab = self.labels
        return {c: int(np.count_nonzero(lab == c)) for c in self.class_ids}


# ---------------------------------------------------------------------------
# text grid I/O


def _format_value(v: float) -> str:
    v = float(v)
    # compact digit form for moderate integers, exact repr otherwise; both
    # parse back to the identical float64
    if math.isfinite(v) and v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def read_ascii_grid(path) -> Grid:
    path = str(path)
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()

    header: dict[str, float] = {}
    lineno = 0
    for raw in lines:
        parts = raw.split()
        if not parts or parts[0].lower() not in _HEADER_KEYS:
            break
        lineno += 1
        key = parts[0].lower()
        if key in header:
            raise GridFormatError(f"{path}:{lineno}: duplicate header key {parts[0]}")
        if len(parts) != 2:
            raise GridFormatError(f"{path}:{lineno}: header line needs exactly one value, got {raw!r}")
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise GridFormatError(
                f"{path}:{lineno}: non-numeric header value {parts[1]!r} for {parts[0]}"
            ) from None

    missing = [k.upper() for k in _HEADER_KEYS if k not in header]
    if missing:
        raise GridFormatError(f"{path}: missing header key(s): {', '.join(missing)}")

    for key in ("ncols", "nrows"):
        if header[key] != int(header[key]) or header[key] < 1:
            raise GridFormatError(f"{path}: {key.upper()} must be a positive integer, got {header[key]}")
    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])

    rows = []
    data_lines = 0
    for i, raw in enumerate(lines[lineno:], start=lineno + 1):
        tokens = raw.split()
        if not tokens:
            continue  # tolerate blank lines after the data block
        data_lines += 1
        if data_lines > n_rows:
            raise GridFormatError(f"{path}:{i}: expected {n_rows} data rows, found extra data")
        if len(tokens) != n_cols:
            raise GridFormatError(
                f"{path}:{i}: value count mismatch, expected {n_cols} values, got {len(tokens)}"
            )
        try:
            rows.append(np.array(tokens, dtype=np.float64))
        except ValueError:
            for t in tokens:
                try:
                    float(t)
                except ValueError:
                    raise GridFormatError(f"{path}:{i}: non-numeric token {t!r}") from None
            raise
    if data_lines < n_rows:
        raise GridFormatError(f"{path}: expected {n_rows} data rows, found {data_lines}")

    return Grid(
        np.vstack(rows),
        cell_size=header["cellsize"],
        x_origin=header["xllcorner"],
        y_origin=header["yllcorner"],
        nodata_value=header["nodata_value"],
    )


def write_ascii_grid(grid: Grid, path) -> None:
    path = str(path)
    out = [
        f"NCOLS {grid.n_cols}",
        f"NROWS {grid.n_rows}",
        f"XLLCORNER {_format_value(grid.x_origin)}",
        f"YLLCORNER {_format_value(grid.y_origin)}",
        f"CELLSIZE {_format_value(grid.cell_size)}",
        f"NODATA_VALUE {_format_value(grid.nodata_value)}",
    ]
    for r in range(grid.n_rows):
        out.append(" ".join(_format_value(v) for v in grid.values[r]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# PPM export


def _stretch_to_bytes(grid: Grid, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise DataError(f"degenerate stretch range ({lo}, {hi})")
    x = np.clip((grid.values - lo) / (hi - lo), 0.0, 1.0)
    return np.floor(255.0 * x + 0.5).astype(np.uint8)


def export_ppm(r: Grid, g: Grid, b: Grid, stretch, path) -> None:
    """Write a binary P6 image, one channel per grid.

    stretch is ((rmin, rmax), (gmin, gmax), (bmin, bmax)); each channel is
    scaled linearly and clamped. Cells missing in any channel come out black.
    """
    require_same_geometry(r, g, b, context="export_ppm")
    channels = []
    joint = r.valid & g.valid & b.valid
    for grid, (lo, hi) in zip((r, g, b), stretch):
        byte = _stretch_to_bytes(grid, float(lo), float(hi))
        byte[~joint] = 0
        channels.append(byte)
    body = np.stack(channels, axis=-1).tobytes()
    header = f"P6\n{r.n_cols} {r.n_rows}\n255\n".encode("ascii")
    with open(str(path), "wb") as fh:
        fh.write(header + body)


# ---------------------------------------------------------------------------
# masking and legends


def apply_mask(grid: Grid, mask: BinaryMask) -> Grid:
    """Set cells to nodata wherever the mask is 0."""
    require_same_geometry(grid, mask, context="apply_mask")
    vals = grid.values.copy()
    vals[~mask.selected] = grid.nodata_value
    return grid.with_values(vals)


def read_legend(path) -> dict[int, str]:
    path = str(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or [c.strip().lower() for c in rows[0]] != ["id", "name"]:
        raise DataError(f"{path}: legend CSV must start with an 'id,name' header")
    legend: dict[int, str] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"{path}:{i}: legend rows need exactly 'id,name'")
        try:
            cid = int(row[0])
        except ValueError:
            raise DataError(f"{path}:{i}: bad class id {row[0]!r}") from None
        if cid in legend:
            raise DataError(f"{path}:{i}: duplicate class id {cid}")
        legend[cid] = row[1]
    return legend


def write_legend(legend: dict[int, str], path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "name"])
        for cid in sorted(legend):
            writer.writerow([cid, legend[cid]])
