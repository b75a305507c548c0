"""Command-line interface: exit codes and artifact wiring."""

import numpy as np
import pytest

from landchange import __version__
from landchange.cli import main
from landchange.grid import Grid, write_ascii_grid


def _w(path, vals, cell=30.0):
    write_ascii_grid(Grid(np.asarray(vals, dtype=np.float64), cell), path)
    return str(path)


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert f"landchange {__version__}" in capsys.readouterr().out


def test_synth_then_run(tmp_path):
    sc = tmp_path / "sc"
    assert main(["synth", "--rows", "16", "--cols", "16", "--out", str(sc), "--quiet"]) == 0
    ini = sc / "pipeline.ini"
    assert ini.is_file()
    out = tmp_path / "out"
    assert main(["run", "--config", str(ini), "--out", str(out), "--quiet"]) == 0
    assert (out / "report.txt").is_file()
    assert (out / "validation.csv").is_file()


def test_config_errors(tmp_path):
    assert main(["run", "--quiet"]) == 2  # no --config
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--quiet"]) == 2


def test_stage_out_of_order(tmp_path):
    sc = tmp_path / "sc"
    main(["synth", "--rows", "12", "--cols", "12", "--out", str(sc), "--quiet"])
    code = main(
        ["predict", "--config", str(sc / "pipeline.ini"), "--out", str(tmp_path / "o"), "--quiet"]
    )
    assert code == 3  # markov artifacts missing


def test_numerical_failure_exit_code(tmp_path):
    # one-year calibration with heavy change cannot stretch over 49 years
    m2000 = [[0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]
    m2001 = [[1.0, 1.0, 1.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0, 1.0]]
    _w(tmp_path / "m2000.asc", m2000)
    _w(tmp_path / "m2001.asc", m2001)
    _w(tmp_path / "m2050.asc", m2001)
    ini = tmp_path / "pipe.ini"
    ini.write_text(
        "[maps]\n2000 = m2000.asc\n2001 = m2001.asc\n2050 = m2050.asc\n",
        encoding="ascii",
    )
    code = main(["markov", "--config", str(ini), "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 4


def test_preprocess_and_oif(tmp_path):
    b1 = _w(tmp_path / "b1.asc", [[5.0, 6.0, 9.0], [7.0, 8.0, 12.0]])
    b2 = _w(tmp_path / "b2.asc", [[3.0, 4.0, 8.0], [5.0, 9.0, 2.0]])
    b3 = _w(tmp_path / "b3.asc", [[1.0, 7.0, 2.0], [6.0, 3.0, 4.0]])
    ref = _w(tmp_path / "ref.asc", [[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    out = tmp_path / "pre"
    code = main(["preprocess", b1, b2, b3, "--reference", ref, "--out", str(out), "--quiet"])
    assert code == 0
    for fn in ("corrected_band1.asc", "dark_values.csv", "band_stats.csv", "correlation.csv"):
        assert (out / fn).is_file(), fn

    out2 = tmp_path / "oif"
    assert main(["oif", b1, b2, b3, "--out", str(out2), "--quiet"]) == 0
    text = (out2 / "oif.csv").read_text(encoding="utf-8")
    assert text.splitlines()[0] == "b1,b2,b3,oif"

    # label count must match band count
    assert main(["oif", b1, b2, b3, "--labels", "a,b", "--out", str(out2), "--quiet"]) == 2


def test_bad_reference_mask(tmp_path):
    b1 = _w(tmp_path / "b1.asc", [[5.0, 6.0], [7.0, 8.0]])
    b2 = _w(tmp_path / "b2.asc", [[3.0, 4.0], [5.0, 9.0]])
    ref = _w(tmp_path / "ref.asc", [[2.0, 0.0], [0.0, 0.0]])
    assert main(["preprocess", b1, b2, "--reference", ref, "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_indices_and_change(tmp_path):
    red = _w(tmp_path / "red.asc", [[10.0, 20.0], [30.0, 40.0]])
    nir = _w(tmp_path / "nir.asc", [[50.0, 40.0], [30.0, 80.0]])
    swir = _w(tmp_path / "swir.asc", [[20.0, 10.0], [15.0, 25.0]])
    out = tmp_path / "idx"
    assert main(["indices", "--red", red, "--nir", nir, "--swir", swir, "--out", str(out), "--quiet"]) == 0
    for fn in ("ndvi.asc", "ndii.asc", "ndim.asc"):
        assert (out / fn).is_file(), fn

    d1 = _w(tmp_path / "d1.asc", [[0.1, 0.5, 0.9], [0.2, 0.6, 0.8]])
    d2 = _w(tmp_path / "d2.asc", [[0.9, 0.5, 0.1], [0.3, 0.7, 0.4]])
    d3 = _w(tmp_path / "d3.asc", [[0.5, 0.1, 0.9], [0.8, 0.2, 0.6]])
    out2 = tmp_path / "chg"
    assert main(["change", d1, d2, d3, "--ppm", "--out", str(out2), "--quiet"]) == 0
    for fn in ("levels_1.asc", "levels_2.asc", "levels_3.asc", "change_code.asc", "dynamics.asc", "dynamics_legend.csv", "grouping.csv", "change.ppm"):
        assert (out2 / fn).is_file(), fn


def test_classify(tmp_path):
    left_right = lambda lo, hi, jitter: [
        [lo, lo + jitter, hi, hi + jitter],
        [lo + jitter, lo, hi + jitter, hi],
        [lo, lo + jitter, hi, hi + jitter],
    ]
    b1 = _w(tmp_path / "b1.asc", left_right(1.0, 10.0, 1.0))
    b2 = _w(tmp_path / "b2.asc", left_right(3.0, 20.0, 2.0))
    training = _w(
        tmp_path / "train.asc",
        [[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]],
    )
    out = tmp_path / "cls"
    code = main(["classify", b1, b2, "--training", training, "--out", str(out), "--quiet"])
    assert code == 0
    for fn in ("signatures.csv", "classified_ml.asc", "classified_icm.asc", "classified_legend.csv"):
        assert (out / fn).is_file(), fn


def test_criteria_subcommand(tmp_path):
    mask = _w(tmp_path / "roads.asc", [[0.0, 1.0], [0.0, 0.0]])
    out = tmp_path / "crit"
    code = main(
        [
            "criteria",
            "--distance-to",
            mask,
            "--name",
            "roads",
            "--fuzzy",
            "linear,decreasing,0,60",
            "--out",
            str(out),
            "--quiet",
        ]
    )
    assert code == 0
    assert (out / "roads.asc").is_file()
    assert (out / "roads_fuzzy.asc").is_file()

    dem = _w(tmp_path / "dem.asc", [[100.0, 200.0], [300.0, 400.0]])
    code = main(
        ["criteria", "--input", dem, "--name", "dem", "--constraint-min", "250",
         "--out", str(out), "--quiet"]
    )
    assert code == 0
    assert (out / "dem_constraint.asc").is_file()

    assert main(["criteria", "--input", dem, "--fuzzy", "linear,up,0", "--out", str(out), "--quiet"]) == 2
