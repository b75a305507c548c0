"""Supervised classification and accuracy assessment.

Gaussian signatures are estimated per class from a training map, pixels
get the class with the highest log-posterior score, and an optional
iterated conditional modes pass trades spectral evidence against
8-neighbor label agreement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .grid import BinaryMask, Grid, LandCoverMap, MultiBandImage, mask_like, require_same_geometry

SCORE_NODATA = -1e300  # -9999 is a reachable log-score, so score grids use their own sentinel


@dataclass(frozen=True)
class ClassSignature:
    class_id: int
    mean: np.ndarray
    covariance: np.ndarray
    prior: float
    sample_count: int


def estimate_signatures(
    image: MultiBandImage, training: LandCoverMap, mask: BinaryMask | None = None
) -> list[ClassSignature]:
    """Per-class sample mean and covariance (divisor N-1) from training pixels.

    The covariance diagonal gets a floor of 1e-6 * trace/dim (absolute 1e-6
    when the trace is zero, e.g. constant samples) so scores stay defined.
    Each class needs at least band_count + 1 training pixels.
    """
    require_same_geometry(image.geometry, training.grid, context="estimate_signatures")
    sel = np.ones(image.geometry.shape, dtype=bool)
    if mask is not None:
        require_same_geometry(image.geometry, mask, context="estimate_signatures")
        sel = mask.selected
    for band in image.bands:
        sel = sel & band.valid
    labels = training.labels
    b = image.n_bands
    cube = np.stack([band.values for band in image.bands], axis=-1)

    sigs = []
    total = 0
    for cid in training.class_ids:
        pick = sel & (labels == cid)
        n = int(np.count_nonzero(pick))
        if n == 0:
            continue
        if n < b + 1:
            raise DataError(
                f"class {cid} ({training.legend[cid]!r}) has {n} training pixels, needs at least {b + 1}"
            )
        x = cube[pick]
        mean = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
        trace = float(np.trace(cov))
        delta = 1e-6 * trace / b if trace > 0.0 else 1e-6
        cov = cov + delta * np.eye(b)
        sign, _ = np.linalg.slogdet(cov)
        if sign <= 0:
            raise NumericalError(f"class {cid}: covariance singular after regularization")
        sigs.append(ClassSignature(cid, mean, cov, 0.0, n))
        total += n
    if not sigs:
        raise DataError("no class has any valid training pixels")
    return [
        ClassSignature(s.class_id, s.mean, s.covariance, s.sample_count / total, s.sample_count)
        for s in sigs
    ]


def maxlike(
    image: MultiBandImage,
    signatures: list[ClassSignature],
    priors_mode: str = "empirical",
    legend: dict[int, str] | None = None,
) -> tuple[LandCoverMap, dict[int, Grid]]:
    """Gaussian maximum likelihood labeling.

    Per class: score = ln(prior) - 0.5*ln(det(cov)) - 0.5*mahalanobis^2.
    The label is the best score; exact ties go to the lowest class id.
    Returns the map and the per-class score grids.
    """
    if priors_mode not in ("empirical", "equal"):
        raise DataError(f"priors_mode must be 'empirical' or 'equal', got {priors_mode!r}")
    if not signatures:
        raise DataError("no signatures given")
    sigs = sorted(signatures, key=lambda s: s.class_id)
    if len({s.class_id for s in sigs}) != len(sigs):
        raise DataError("duplicate class ids in signatures")
    b = image.n_bands
    if any(s.mean.shape != (b,) for s in sigs):
        raise DataError("signature dimensionality does not match band count")

    geometry = image.geometry
    valid = np.ones(geometry.shape, dtype=bool)
    for band in image.bands:
        valid &= band.valid
    cube = np.stack([band.values for band in image.bands], axis=-1)
    x = cube[valid]

    k = len(sigs)
    scores = np.empty((k, x.shape[0]))
    for idx, sig in enumerate(sigs):
        prior = 1.0 / k if priors_mode == "equal" else sig.prior
        if prior <= 0.0:
            raise NumericalError(f"class {sig.class_id} has non-positive prior {prior}")
        sign, logdet = np.linalg.slogdet(sig.covariance)
        if sign <= 0:
            raise NumericalError(f"class {sig.class_id}: covariance not positive definite")
        inv = np.linalg.inv(sig.covariance)
        d = x - sig.mean
        maha = np.einsum("nb,bc,nc->n", d, inv, d)
        scores[idx] = np.log(prior) - 0.5 * logdet - 0.5 * maha

    best = np.argmax(scores, axis=0)  # first max wins, ids ascend, so ties pick the lowest id
    class_ids = [s.class_id for s in sigs]
    out = np.full(geometry.shape, geometry.nodata_value)
    out[valid] = np.asarray(class_ids, dtype=np.float64)[best]
    if legend is None:
        legend = {cid: f"class {cid}" for cid in class_ids}
    lc = LandCoverMap(geometry.with_values(out), legend)

    score_grids = {}
    for idx, sig in enumerate(sigs):
        sv = np.full(geometry.shape, SCORE_NODATA)
        sv[valid] = scores[idx]
        score_grids[sig.class_id] = geometry.with_values(sv, nodata_value=SCORE_NODATA)
    return lc, score_grids


def potts_objective(lc: LandCoverMap, scores: dict[int, Grid], beta: float) -> float:
    """Labeling quality used by icm: sum of per-pixel scores plus beta times
    the number of 8-adjacent same-label pairs.

    Each agreeing pair counts once. A per-pixel neighbor-count sum would
    count pairs twice and is not monotone under sequential updates; this
    form increases by exactly the local improvement at every single-site
    move, which makes per-sweep monotonicity exact.
    """
    labels = lc.labels
    total = 0.0
    for cid, g in scores.items():
        pick = (labels == cid) & g.valid
        total += float(g.values[pick].sum())
    n_rows, n_cols = labels.shape
    pad = np.full((n_rows + 2, n_cols + 2), -1, dtype=np.int64)
    pad[1:-1, 1:-1] = labels
    center = pad[1:-1, 1:-1]
    pairs = 0
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):  # E, S, SE, SW covers all 8-adjacency once
        nb = pad[1 + dr : 1 + dr + n_rows, 1 + dc : 1 + dc + n_cols]
        pairs += int(np.count_nonzero((center == nb) & (center >= 0)))
    return total + beta * pairs


def icm(
    initial: LandCoverMap,
    scores: dict[int, Grid],
    beta: float = 1.5,
    max_sweeps: int = 10,
) -> LandCoverMap:
    """Iterated conditional modes smoothing of a labeling.

    Raster-order sequential sweeps; each pixel takes the class maximizing
    score + beta * (8-neighbors currently holding that class). Stops when a
    sweep changes nothing or after max_sweeps. beta 0 reduces to the plain
    score argmax. Deterministic; ties go to the lowest class id.
    """
    if beta < 0:
        raise DataError(f"beta must be non-negative, got {beta}")
    if max_sweeps < 1:
        raise DataError(f"max_sweeps must be at least 1, got {max_sweeps}")
    class_ids = sorted(scores)
    if not class_ids:
        raise DataError("icm needs at least one score grid")
    for cid in class_ids:
        require_same_geometry(initial.grid, scores[cid], context="icm")
    labels = initial.labels
    present = set(np.unique(labels[labels >= 0]).tolist())
    if not present <= set(class_ids):
        raise DataError(f"initial map holds classes {sorted(present - set(class_ids))} without scores")

    n_rows, n_cols = initial.grid.shape
    w = n_cols + 2  # padded width
    k = len(class_ids)
    ids_arr = np.asarray(class_ids, dtype=np.int64)

    # pixels get updated only where every class has a score; other labeled
    # cells stay frozen but still count as neighbors
    active = labels >= 0
    for cid in class_ids:
        active &= scores[cid].valid

    lab = np.full((n_rows + 2, n_cols + 2), -1, dtype=np.int64)
    inner = lab[1:-1, 1:-1]
    labeled = labels >= 0
    inner[labeled] = np.searchsorted(ids_arr, labels[labeled])
    flat = lab.ravel().tolist()

    score_flat = []
    for cid in class_ids:
        buf = np.zeros((n_rows + 2, n_cols + 2))
        buf[1:-1, 1:-1] = scores[cid].values
        score_flat.append(buf.ravel().tolist())

    order = [(r + 1) * w + (c + 1) for r in range(n_rows) for c in range(n_cols) if active[r, c]]
    offsets = (-w - 1, -w, -w + 1, -1, 1, w - 1, w, w + 1)

    for _ in range(max_sweeps):
        changed = 0
        for p in order:
            counts = [0] * k
            for off in offsets:
                q = flat[p + off]
                if q >= 0:
                    counts[q] += 1
            best_k = 0
            best_v = score_flat[0][p] + beta * counts[0]
            for j in range(1, k):
                v = score_flat[j][p] + beta * counts[j]
                if v > best_v:
                    best_v = v
                    best_k = j
            if best_k != flat[p]:
                flat[p] = best_k
                changed += 1
        if changed == 0:
            break

    out_lab = np.asarray(flat, dtype=np.int64).reshape(n_rows + 2, n_cols + 2)[1:-1, 1:-1]
    out = np.full(initial.grid.shape, initial.grid.nodata_value)
    out[active] = ids_arr.astype(np.float64)[out_lab[active]]
    keep = initial.grid.valid & ~active  # labeled cells without full score coverage pass through
    out[keep] = initial.grid.values[keep]
    return LandCoverMap(initial.grid.with_values(out), dict(initial.legend), initial.date_tag)


# ---------------------------------------------------------------------------
# accuracy assessment


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = pixels with reference class_ids[i] predicted as class_ids[j]."""

    counts: np.ndarray
    class_ids: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(
    predicted: LandCoverMap, reference: LandCoverMap, mask: BinaryMask | None = None
) -> ConfusionMatrix:
    require_same_geometry(predicted.grid, reference.grid, context="confusion")
    sel = predicted.grid.valid & reference.grid.valid
    if mask is not None:
        require_same_geometry(predicted.grid, mask, context="confusion")
        sel &= mask.selected
    if not sel.any():
        raise DataError("no jointly valid pixels to compare")
    ids = sorted(set(predicted.class_ids) | set(reference.class_ids))
    pos = {cid: i for i, cid in enumerate(ids)}
    p = predicted.labels[sel]
    r = reference.labels[sel]
    k = len(ids)
    flat = np.array([pos[c] for c in r], dtype=np.int64) * k + np.array(
        [pos[c] for c in p], dtype=np.int64
    )
    counts = np.bincount(flat, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, tuple(ids))


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa: (p_o - p_e) / (1 - p_e) with p_e from the marginals."""
    n = cm.total
    if n == 0:
        raise DataError("empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    p_o = float(np.trace(counts)) / n
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    p_e = float(np.dot(rows, cols)) / (n * n)
    if p_e == 1.0:
        raise NumericalError("kappa undefined: expected agreement is exactly 1")
    return (p_o - p_e) / (1.0 - p_e)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts)) / cm.total


def residual_map(predicted: LandCoverMap, reference: LandCoverMap) -> tuple[BinaryMask, dict[int, float]]:
    """Disagreement mask (1 where jointly valid labels differ) and per-class
    producer accuracy over the reference classes."""
    require_same_geometry(predicted.grid, reference.grid, context="residual_map")
    sel = predicted.grid.valid & reference.grid.valid
    p = predicted.labels
    r = reference.labels
    diff = np.zeros(predicted.grid.shape)
    diff[sel & (p != r)] = 1.0
    rates = {}
    for cid in reference.class_ids:
        pick = sel & (r == cid)
        n = int(np.count_nonzero(pick))
        if n:
            rates[cid] = float(np.count_nonzero(p[pick] == cid)) / n
    return mask_like(predicted.grid, diff), rates


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["reference\\predicted"] + [str(c) for c in cm.class_ids])
        for cid, row in zip(cm.class_ids, cm.counts):
            w.writerow([cid] + [int(v) for v in row])


def write_signatures_csv(signatures: list[ClassSignature], path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_id", "sample_count", "prior", "field", "values"])
        for s in sorted(signatures, key=lambda s: s.class_id):
            w.writerow([s.class_id, s.sample_count, repr(float(s.prior)), "mean",
                        " ".join(repr(float(v)) for v in s.mean)])
            for i, row in enumerate(s.covariance):
                w.writerow([s.class_id, s.sample_count, repr(float(s.prior)), f"cov_{i}",
                            " ".join(repr(float(v)) for v in row)])
