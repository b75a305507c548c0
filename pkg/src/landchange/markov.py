"""Transition analysis between dated land cover maps.

Cross-tabulation of two maps gives transition counts; row normalization
gives first-order probabilities tied to the observation span. Transitions
can be rescaled linearly to a different span, extended to second order
from three dates, expanded into per-pixel conditional probability maps,
and turned into expected class areas for allocation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .grid import BinaryMask, Grid, LandCoverMap, require_same_geometry


def largest_remainder(reals: np.ndarray, total: int) -> np.ndarray:
    """Integerize non-negative reals to the given total: floor everything,
    then hand out the shortfall by largest fractional part, ties to the
    lowest index."""
    reals = np.asarray(reals, dtype=np.float64)
    if np.any(reals < 0):
        raise DataError("largest_remainder needs non-negative values")
    floors = np.floor(reals).astype(np.int64)
    short = int(total) - int(floors.sum())
    if short < 0:
        raise DataError(f"floors already exceed the total by {-short}")
    if short > reals.size:
        raise DataError(f"shortfall {short} exceeds entry count {reals.size}")
    fracs = reals - floors
    order = np.lexsort((np.arange(reals.size), -fracs))  # by frac desc, then index asc
    out = floors.copy()
    out[order[:short]] += 1
    return out


def _shared_ids(a: LandCoverMap, b: LandCoverMap, context: str) -> list[int]:
    if set(a.class_ids) != set(b.class_ids):
        raise DataError(
            f"{context}: maps must share a legend, got {a.class_ids} vs {b.class_ids}"
        )
    return a.class_ids


def crosstab(
    map_a: LandCoverMap, map_b: LandCoverMap, mask: BinaryMask | None = None
) -> tuple[np.ndarray, list[int]]:
    """Counts[i, j] = pixels going from class ids[i] in map_a to ids[j] in map_b."""
    require_same_geometry(map_a.grid, map_b.grid, context="crosstab")
    ids = _shared_ids(map_a, map_b, "crosstab")
    sel = map_a.grid.valid & map_b.grid.valid
    if mask is not None:
        require_same_geometry(map_a.grid, mask, context="crosstab")
        sel &= mask.selected
    if not sel.any():
        raise DataError("crosstab: no jointly valid pixels")
    pos = np.full(max(ids) + 1, -1, dtype=np.int64)
    for i, cid in enumerate(ids):
        pos[cid] = i
    k = len(ids)
    a = pos[map_a.labels[sel]]
    b = pos[map_b.labels[sel]]
    counts = np.bincount(a * k + b, minlength=k * k).reshape(k, k)
    return counts, ids


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic transition probabilities over time_span."""

    probs: np.ndarray
    time_span: float
    class_ids: tuple[int, ...]
    counts: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        ids = tuple(int(c) for c in self.class_ids)
        k = len(ids)
        if p.shape != (k, k):
            raise DataError(f"probability matrix shape {p.shape} does not match {k} classes")
        if np.any(p < 0) or np.any(p > 1):
            raise DataError("transition probabilities must lie in [0, 1]")
        rs = p.sum(axis=1)
        if np.max(np.abs(rs - 1.0)) > 1e-9:
            raise DataError(f"transition rows must sum to 1 within 1e-9, got {rs}")
        if not float(self.time_span) > 0:
            raise DataError(f"time_span must be positive, got {self.time_span}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "time_span", float(self.time_span))

    def row(self, class_id: int) -> np.ndarray:
        try:
            return self.probs[self.class_ids.index(int(class_id))]
        except ValueError:
            raise DataError(f"class {class_id} absent from transition matrix") from None


def transition_probabilities(counts: np.ndarray, class_ids, time_span: float) -> TransitionMatrix:
    """Row-normalize transition counts. A class with no observations keeps
    itself (self-transition 1)."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise DataError("negative transition counts")
    k = counts.shape[0]
    probs = np.eye(k)
    totals = counts.sum(axis=1)
    nz = totals > 0
    probs[nz] = counts[nz] / totals[nz, None]
    return TransitionMatrix(probs, time_span, tuple(class_ids), counts=counts.astype(np.int64))


def scale_transition(tm: TransitionMatrix, target_span: float) -> TransitionMatrix:
    """Linear annualization: off-diagonals scale by target_span/time_span,
    diagonals absorb the remainder.

    If any single off-diagonal would exceed 1 the caller must split the
    projection into shorter steps; if a row's scaled off-diagonals exceed 1
    in total they are renormalized to sum 1 (diagonal 0).
    """
    if not float(target_span) > 0:
        raise DataError(f"target_span must be positive, got {target_span}")
    r = float(target_span) / tm.time_span
    p = tm.probs.copy()
    k = p.shape[0]
    off = p * r
    np.fill_diagonal(off, 0.0)
    if off.max() > 1.0 + 1e-12:
        i, j = np.unravel_index(int(np.argmax(off)), off.shape)
        raise NumericalError(
            f"scaling {tm.time_span} -> {target_span} pushes transition "
            f"{tm.class_ids[i]}->{tm.class_ids[j]} to {off[i, j]:.4f} > 1; split into shorter steps"
        )
    out = np.zeros_like(p)
    for i in range(k):
        row = off[i]
        s = float(row.sum())
        if s > 1.0:
            row = row / s
            s = float(row.sum())
        out[i] = row
        out[i, i] = max(0.0, 1.0 - s)  # diagonal absorbs whatever the off-diagonals leave
    return TransitionMatrix(out, float(target_span), tm.class_ids, counts=None)


@dataclass(frozen=True)
class SecondOrderTable:
    """P(next | previous, current) plus a fallback flag per (prev, curr) pair
    and the first-order matrix answering unsupported pairs."""

    probs: np.ndarray  # (k, k, k): [prev, curr, next]
    fallback: np.ndarray  # (k, k) bool, True where the pair had no support
    class_ids: tuple[int, ...]
    first_order: TransitionMatrix


def second_order_transitions(
    m1: LandCoverMap, m2: LandCoverMap, m3: LandCoverMap, time_span: float = 1.0
) -> SecondOrderTable:
    require_same_geometry(m1.grid, m2.grid, m3.grid, context="second_order_transitions")
    ids = _shared_ids(m1, m2, "second_order_transitions")
    _shared_ids(m2, m3, "second_order_transitions")
    sel = m1.grid.valid & m2.grid.valid & m3.grid.valid
    if not sel.any():
        raise DataError("second_order_transitions: no jointly valid pixels")
    pos = np.full(max(ids) + 1, -1, dtype=np.int64)
    for i, cid in enumerate(ids):
        pos[cid] = i
    k = len(ids)
    a = pos[m1.labels[sel]]
    b = pos[m2.labels[sel]]
    c = pos[m3.labels[sel]]
    counts = np.bincount((a * k + b) * k + c, minlength=k**3).reshape(k, k, k).astype(np.float64)

    fo_counts, _ = crosstab(m2, m3)
    first = transition_probabilities(fo_counts, ids, time_span)

    support = counts.sum(axis=2)
    fallback = support == 0
    probs = np.empty_like(counts)
    for i in range(k):
        for j in range(k):
            if fallback[i, j]:
                probs[i, j] = first.probs[j]
            else:
                probs[i, j] = counts[i, j] / support[i, j]
    return SecondOrderTable(probs, fallback, tuple(ids), first)


def conditional_probability_maps(
    current: LandCoverMap,
    transitions: TransitionMatrix | SecondOrderTable,
    previous: LandCoverMap | None = None,
) -> dict[int, Grid]:
    """Per-class grids of the probability that each pixel becomes that class.

    With a first-order matrix each pixel takes its current class's row.
    With a second-order table, previous must be given and each pixel takes
    the (previous, current) conditional row.
    """
    if isinstance(transitions, SecondOrderTable):
        if previous is None:
            raise DataError("second-order probabilities need the previous map")
        require_same_geometry(current.grid, previous.grid, context="conditional_probability_maps")
        ids = list(transitions.class_ids)
        pos = np.full(max(ids) + 1, -1, dtype=np.int64)
        for i, cid in enumerate(ids):
            pos[cid] = i
        for m in (previous, current):
            extra = set(m.class_ids) - set(ids)
            if extra:
                raise DataError(f"classes {sorted(extra)} absent from transition table")
        sel = current.grid.valid & previous.grid.valid
        rows = np.zeros((len(ids), *current.grid.shape))
        pc = pos[previous.labels[sel]]
        cc = pos[current.labels[sel]]
        block = transitions.probs[pc, cc]  # (n_sel, k)
    else:
        ids = list(transitions.class_ids)
        pos = np.full(max(ids) + 1, -1, dtype=np.int64)
        for i, cid in enumerate(ids):
            pos[cid] = i
        extra = set(current.class_ids) - set(ids)
        if extra:
            raise DataError(f"classes {sorted(extra)} absent from transition matrix")
        sel = current.grid.valid
        cc = pos[current.labels[sel]]
        block = transitions.probs[cc]  # (n_sel, k)

    out: dict[int, Grid] = {}
    for i, cid in enumerate(ids):
        vals = np.full(current.grid.shape, current.grid.nodata_value)
        vals[sel] = block[:, i]
        out[cid] = current.grid.with_values(vals)
    return out


def expected_areas(
    current: LandCoverMap, tm: TransitionMatrix
) -> tuple[dict[int, float], dict[int, int]]:
    """Projected class pixel counts after one application of the matrix.

    Returns (real-valued expectations, integer targets). Integer targets
    use largest-remainder rounding and sum exactly to the valid pixel count.
    """
    ids = list(tm.class_ids)
    extra = set(current.class_ids) - set(ids)
    if extra:
        raise DataError(f"classes {sorted(extra)} absent from transition matrix")
    counts = current.class_counts()
    n = np.array([counts.get(cid, 0) for cid in ids], dtype=np.float64)
    expect = n @ tm.probs
    ints = largest_remainder(expect, int(n.sum()))
    return (
        {cid: float(e) for cid, e in zip(ids, expect)},
        {cid: int(t) for cid, t in zip(ids, ints)},
    )


# ---------------------------------------------------------------------------
# CSV I/O


def write_transition_csv(tm: TransitionMatrix, path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# time_span: {repr(float(tm.time_span))}\n")
        w = csv.writer(fh)
        w.writerow(["class"] + [str(c) for c in tm.class_ids])
        for cid, row in zip(tm.class_ids, tm.probs):
            w.writerow([cid] + [repr(float(v)) for v in row])


def read_transition_csv(path) -> TransitionMatrix:
    path = str(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# time_span:"):
            raise DataError(f"{path}: missing '# time_span:' comment line")
        try:
            span = float(first.split(":", 1)[1])
        except ValueError:
            raise DataError(f"{path}: bad time_span value") from None
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0][0] != "class":
        raise DataError(f"{path}: missing 'class' header row")
    try:
        ids = [int(c) for c in rows[0][1:]]
        probs = []
        for row in rows[1:]:
            if int(row[0]) != ids[len(probs)]:
                raise DataError(f"{path}: row order does not match header order")
            probs.append([float(v) for v in row[1:]])
    except ValueError:
        raise DataError(f"{path}: non-numeric matrix entry") from None
    if len(probs) != len(ids):
        raise DataError(f"{path}: expected {len(ids)} rows, got {len(probs)}")
    return TransitionMatrix(np.asarray(probs), span, tuple(ids))


def write_second_order_csv(table: SecondOrderTable, path) -> None:
    ids = table.class_ids
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["previous", "current", "next", "probability", "fallback"])
        for i, p in enumerate(ids):
            for j, c in enumerate(ids):
                for m, nx in enumerate(ids):
                    w.writerow([p, c, nx, repr(float(table.probs[i, j, m])), int(table.fallback[i, j])])


def write_expected_areas_csv(reals: dict[int, float], ints: dict[int, int], path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_id", "expected_pixels", "target_pixels"])
        for cid in sorted(reals):
            w.writerow([cid, repr(float(reals[cid])), int(ints[cid])])
