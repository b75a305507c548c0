"""Gaussian signatures, maximum likelihood, ICM smoothing, accuracy scores."""

import numpy as np
import pytest

from landchange.classify import (
    SCORE_NODATA,
    ClassSignature,
    ConfusionMatrix,
    confusion,
    estimate_signatures,
    icm,
    kappa,
    maxlike,
    overall_accuracy,
    potts_objective,
    residual_map,
    write_confusion_csv,
    write_signatures_csv,
)
from landchange.errors import DataError, NumericalError
from landchange.grid import Grid, LandCoverMap, stack_bands


def _image(*band_values):
    grids = [Grid(np.asarray(v, dtype=np.float64), 1.0) for v in band_values]
    return stack_bands(grids, [f"b{i}" for i in range(len(grids))])


def _map(vals, legend):
    return LandCoverMap(Grid(np.asarray(vals, dtype=np.float64), 1.0), legend)


def test_signatures_match_numpy_moments():
    rng = np.random.default_rng(0)
    a = rng.normal(10, 2, size=(8, 8))
    b = rng.normal(30, 5, size=(8, 8))
    labels = np.zeros((8, 8))
    labels[4:, :] = 1.0
    img = _image(a, b)
    sigs = estimate_signatures(img, _map(labels, {0: "lo", 1: "hi"}))
    assert [s.class_id for s in sigs] == [0, 1]
    s0 = sigs[0]
    x = np.column_stack([a[:4].ravel(), b[:4].ravel()])
    assert s0.sample_count == 32
    assert s0.prior == 0.5
    np.testing.assert_allclose(s0.mean, x.mean(axis=0), rtol=0, atol=0)
    cov = np.cov(x, rowvar=False, ddof=1)
    delta = 1e-6 * np.trace(cov) / 2
    np.testing.assert_allclose(s0.covariance, cov + delta * np.eye(2), rtol=0, atol=0)


def test_signatures_constant_class_gets_absolute_floor():
    img = _image(np.full((4, 4), 7.0))
    labels = np.zeros((4, 4))
    labels[2:, :] = 1.0
    sigs = estimate_signatures(img, _map(labels, {0: "a", 1: "b"}))
    # zero covariance trace would leave the matrix singular
    assert sigs[0].covariance[0, 0] == 1e-6


def test_signatures_errors():
    img = _image(np.zeros((2, 2)), np.zeros((2, 2)))
    labels = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(DataError, match="needs at least 3"):
        estimate_signatures(img, _map(labels, {0: "a", 1: "b"}))
    masked = _map(np.full((2, 2), -9999.0), {0: "a"})
    with pytest.raises(DataError, match="no class"):
        estimate_signatures(_image(np.zeros((2, 2))), masked)


def _two_sigs(prior0=0.5):
    s0 = ClassSignature(0, np.array([0.0]), np.array([[1.0]]), prior0, 10)
    s1 = ClassSignature(1, np.array([4.0]), np.array([[1.0]]), 1.0 - prior0, 10)
    return [s0, s1]


def test_maxlike_matches_hand_scores():
    img = _image([[0.0, 4.0, 2.0, -9999.0]])
    lc, scores = maxlike(img, _two_sigs())
    # midpoint 2.0 is an exact tie, which goes to the lower id
    assert lc.grid.values.tolist() == [[0.0, 1.0, 0.0, -9999.0]]
    # score = ln(prior) - 0.5*ln(det) - 0.5*(x-mean)^2 / var
    expect = np.log(0.5) - 0.5 * 0.0 - 0.5 * (np.array([0.0, 4.0, 2.0]) - 0.0) ** 2
    np.testing.assert_allclose(scores[0].values[0, :3], expect, rtol=0, atol=1e-15)
    assert scores[0].values[0, 3] == SCORE_NODATA
    assert scores[0].nodata_value == SCORE_NODATA


def test_maxlike_priors_shift_the_boundary():
    img = _image([[2.0]])
    lc_emp, _ = maxlike(img, _two_sigs(prior0=0.9))
    assert lc_emp.grid.values[0, 0] == 0.0  # heavy prior pulls the tie
    lc_eq, _ = maxlike(img, _two_sigs(prior0=0.9), priors_mode="equal")
    assert lc_eq.grid.values[0, 0] == 0.0  # equal priors keep the exact tie, lower id
    lc_her, _ = maxlike(img, _two_sigs(prior0=0.1))
    assert lc_her.grid.values[0, 0] == 1.0


def test_maxlike_errors():
    img = _image([[0.0]])
    with pytest.raises(DataError):
        maxlike(img, [])
    with pytest.raises(DataError, match="priors_mode"):
        maxlike(img, _two_sigs(), priors_mode="flat")
    dup = _two_sigs() + [_two_sigs()[0]]
    with pytest.raises(DataError, match="duplicate"):
        maxlike(img, dup)
    with pytest.raises(NumericalError, match="non-positive prior"):
        maxlike(img, [ClassSignature(0, np.array([0.0]), np.array([[1.0]]), 0.0, 1)])
    bad_cov = [ClassSignature(0, np.array([0.0]), np.array([[-1.0]]), 1.0, 1)]
    with pytest.raises(NumericalError, match="positive definite"):
        maxlike(img, bad_cov)


def test_potts_objective_counts_pairs_once():
    lc = _map(np.zeros((2, 2)), {0: "a"})
    zero = {0: Grid(np.zeros((2, 2)), 1.0, nodata_value=SCORE_NODATA)}
    # 2 horizontal + 2 vertical + 2 diagonal same-label pairs
    assert potts_objective(lc, zero, beta=1.5) == 1.5 * 6
    mixed = _map(np.array([[0.0, 1.0], [1.0, 0.0]]), {0: "a", 1: "b"})
    scores = {
        0: Grid(np.full((2, 2), 2.0), 1.0, nodata_value=SCORE_NODATA),
        1: Grid(np.full((2, 2), 3.0), 1.0, nodata_value=SCORE_NODATA),
    }
    # checkerboard: only the two diagonals agree; scores 2+3+3+2
    assert potts_objective(mixed, scores, beta=0.5) == 10.0 + 0.5 * 2


def test_icm_beta_zero_is_plain_argmax():
    rng = np.random.default_rng(3)
    img = _image(rng.normal(0, 3, size=(6, 6)))
    lc, scores = maxlike(img, _two_sigs())
    out = icm(lc, scores, beta=0.0, max_sweeps=5)
    assert np.array_equal(out.grid.values, lc.grid.values)


def test_icm_flips_isolated_pixel():
    labels = np.zeros((3, 3))
    labels[1, 1] = 1.0
    lc = _map(labels, {0: "a", 1: "b"})
    # the center weakly prefers its own label, neighbors outweigh it
    s0 = np.zeros((3, 3))
    s1 = np.full((3, 3), -10.0)
    s1[1, 1] = 1.0
    scores = {
        0: Grid(s0, 1.0, nodata_value=SCORE_NODATA),
        1: Grid(s1, 1.0, nodata_value=SCORE_NODATA),
    }
    out = icm(lc, scores, beta=1.0, max_sweeps=5)
    assert out.grid.values[1, 1] == 0.0


def test_icm_objective_never_decreases():
    rng = np.random.default_rng(9)
    for _ in range(3):
        k = 3
        scores = {
            c: Grid(rng.normal(size=(10, 10)), 1.0, nodata_value=SCORE_NODATA) for c in range(k)
        }
        init = _map(rng.integers(0, k, size=(10, 10)).astype(float), {c: str(c) for c in range(k)})
        prev = potts_objective(init, scores, beta=1.5)
        state = init
        for _sweep in range(4):
            state = icm(state, scores, beta=1.5, max_sweeps=1)
            cur = potts_objective(state, scores, beta=1.5)
            assert cur >= prev
            prev = cur


def test_icm_validation():
    lc = _map(np.zeros((2, 2)), {0: "a"})
    scores = {0: Grid(np.zeros((2, 2)), 1.0, nodata_value=SCORE_NODATA)}
    with pytest.raises(DataError):
        icm(lc, scores, beta=-1.0)
    with pytest.raises(DataError):
        icm(lc, scores, max_sweeps=0)
    with pytest.raises(DataError):
        icm(lc, {})
    lc2 = _map(np.array([[0.0, 1.0]]), {0: "a", 1: "b"})
    with pytest.raises(DataError, match="without scores"):
        icm(lc2, {0: Grid(np.zeros((1, 2)), 1.0, nodata_value=SCORE_NODATA)})


def test_kappa_reference_values():
    assert kappa(ConfusionMatrix(np.array([[2, 0], [0, 2]]), (0, 1))) == pytest.approx(1.0, abs=1e-12)
    assert kappa(ConfusionMatrix(np.array([[1, 1], [1, 1]]), (0, 1))) == pytest.approx(0.0, abs=1e-12)
    assert kappa(ConfusionMatrix(np.array([[0, 2], [2, 0]]), (0, 1))) == pytest.approx(-1.0, abs=1e-12)


def test_kappa_degenerate():
    with pytest.raises(NumericalError):
        kappa(ConfusionMatrix(np.array([[4]]), (0,)))
    with pytest.raises(DataError):
        kappa(ConfusionMatrix(np.zeros((1, 1), dtype=int), (0,)))


def test_confusion_and_accuracy():
    pred = _map(np.array([[0.0, 1.0], [1.0, -9999.0]]), {0: "a", 1: "b"})
    ref = _map(np.array([[0.0, 0.0], [1.0, 1.0]]), {0: "a", 1: "b"})
    cm = confusion(pred, ref)
    assert cm.counts.tolist() == [[1, 1], [0, 1]]  # rows reference, columns predicted
    assert cm.total == 3
    assert overall_accuracy(cm) == pytest.approx(2.0 / 3.0)


def test_confusion_union_legend_and_errors():
    pred = _map(np.array([[2.0]]), {2: "c"})
    ref = _map(np.array([[0.0]]), {0: "a"})
    cm = confusion(pred, ref)
    assert cm.class_ids == (0, 2)
    nd = _map(np.array([[-9999.0]]), {0: "a"})
    with pytest.raises(DataError, match="no jointly valid"):
        confusion(nd, nd)


def test_residual_map():
    pred = _map(np.array([[0.0, 1.0, 1.0]]), {0: "a", 1: "b"})
    ref = _map(np.array([[0.0, 0.0, 1.0]]), {0: "a", 1: "b"})
    mask, producer = residual_map(pred, ref)
    assert mask.values.tolist() == [[0.0, 1.0, 0.0]]
    assert producer == {0: 0.5, 1: 1.0}


def test_csv_outputs(tmp_path):
    cm = ConfusionMatrix(np.array([[2, 0], [1, 3]]), (0, 1))
    write_confusion_csv(cm, tmp_path / "cm.csv")
    text = (tmp_path / "cm.csv").read_text()
    assert "reference\\predicted,0,1" in text and "1,1,3" in text
    sigs = _two_sigs()
    write_signatures_csv(sigs, tmp_path / "sig.csv")
    lines = (tmp_path / "sig.csv").read_text().splitlines()
    assert lines[0] == "class_id,sample_count,prior,field,values"
    assert len(lines) == 5  # header + (mean + 1 cov row) per class
