"""INI config loading and validation."""

import numpy as np
import pytest

from landchange.config import load_config, validate_config
from landchange.errors import ConfigError
from landchange.grid import Grid, write_ascii_grid, write_legend

BASE = """\
[run]
seed = 3

[maps]
2000 = a.asc
2010 = b.asc
"""

CRIT = """\
[criteria]
slope = c.asc

[fuzzy.slope]
shape = linear
direction = decreasing
a = 0
b = 10
"""


def _write(tmp_path, text, name="pipe.ini", grids=("a.asc", "b.asc", "c.asc")):
    g = Grid(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    for fn in grids:
        write_ascii_grid(g, tmp_path / fn)
    p = tmp_path / name
    p.write_text(text, encoding="ascii")
    return p


def test_minimal_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, BASE))
    assert cfg.seed == 3
    assert cfg.model == "ca_markov"
    assert cfg.years == (2000, 2010)
    assert cfg.out_dir == tmp_path / "out"
    assert cfg.legend_path is None
    assert cfg.criteria == {}
    assert cfg.mce_method == "wlc"
    assert cfg.order_weights is None
    assert cfg.iterations == 5 and cfg.kernel == 5
    assert cfg.mlp_hidden == 8 and cfg.mlp_epochs == 300
    assert cfg.mlp_focal is None and cfg.mlp_threshold == 0.5


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(_write(tmp_path, BASE + "\n[frobnicate]\nx = 1\n"))
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(_write(tmp_path, "[run]\nseed = 1\nbogus = 2\n\n[maps]\n2000 = a.asc\n2010 = b.asc\n"))
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(_write(tmp_path, BASE + CRIT + "frills = 1\n"))


def test_maps_validation(tmp_path):
    with pytest.raises(ConfigError, match="at least two"):
        load_config(_write(tmp_path, "[maps]\n2000 = a.asc\n"))
    with pytest.raises(ConfigError, match="missing \\[maps\\]"):
        load_config(_write(tmp_path, "[run]\nseed = 1\n"))
    with pytest.raises(ConfigError, match="years"):
        load_config(_write(tmp_path, "[maps]\nfirst = a.asc\nsecond = b.asc\n"))
    with pytest.raises(ConfigError, match="strictly increasing"):
        load_config(_write(tmp_path, "[maps]\n2010 = a.asc\n2000 = b.asc\n"))
    with pytest.raises(ConfigError, match="file not found"):
        load_config(_write(tmp_path, "[maps]\n2000 = a.asc\n2010 = gone.asc\n"))


def test_out_dir_resolution(tmp_path):
    ini = _write(tmp_path, BASE + "\n")
    assert load_config(ini).out_dir == tmp_path / "out"
    ini2 = _write(tmp_path, "[run]\nout_dir = results\n\n[maps]\n2000 = a.asc\n2010 = b.asc\n", name="p2.ini")
    assert load_config(ini2).out_dir == tmp_path / "results"
    # an explicit out_dir argument is caller-relative, not config-relative
    from pathlib import Path

    assert load_config(ini, out_dir="elsewhere").out_dir == Path("elsewhere")


def test_seed_override(tmp_path):
    ini = _write(tmp_path, BASE)
    assert load_config(ini, seed=42).seed == 42


def test_run_validation(tmp_path):
    with pytest.raises(ConfigError, match="run.model"):
        load_config(_write(tmp_path, "[run]\nmodel = cellular\n\n[maps]\n2000 = a.asc\n2010 = b.asc\n"))
    with pytest.raises(ConfigError, match="integer"):
        load_config(_write(tmp_path, "[run]\nseed = many\n\n[maps]\n2000 = a.asc\n2010 = b.asc\n"))


def test_fuzzy_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown criterion"):
        load_config(_write(tmp_path, BASE + "[fuzzy.slope]\na = 0\nb = 1\n"))
    bad = BASE + CRIT.replace("b = 10", "b = 0")  # a == b
    with pytest.raises(ConfigError, match=r"\[fuzzy.slope\]"):
        load_config(_write(tmp_path, bad))
    cfg = load_config(_write(tmp_path, BASE + CRIT))
    assert cfg.fuzzy["slope"].direction == "decreasing"


def test_mce_validation(tmp_path):
    with pytest.raises(ConfigError, match="mce.method"):
        load_config(_write(tmp_path, BASE + "[mce]\nmethod = borda\n"))
    with pytest.raises(ConfigError, match="order_weights"):
        load_config(_write(tmp_path, BASE + "[mce]\nmethod = owa\n"))
    with pytest.raises(ConfigError, match="comma-separated"):
        load_config(_write(tmp_path, BASE + "[mce]\nmethod = owa\norder_weights = a,b\n"))
    cfg = load_config(_write(tmp_path, BASE + "[mce]\nmethod = owa\norder_weights = 0.5,0.5\n"))
    assert cfg.order_weights == (0.5, 0.5)


def test_suitability_validation(tmp_path):
    with pytest.raises(ConfigError, match="class ids"):
        load_config(_write(tmp_path, BASE + CRIT + "\n[suitability]\nurban = slope\n"))
    with pytest.raises(ConfigError, match="unknown criterion"):
        load_config(_write(tmp_path, BASE + CRIT + "\n[suitability]\n0 = roads\n"))
    two_crit = BASE + CRIT.replace("slope = c.asc", "slope = c.asc\naspect = c.asc")
    with pytest.raises(ConfigError, match="no \\[fuzzy"):
        load_config(_write(tmp_path, two_crit + "\n[suitability]\n0 = aspect\n"))
    with pytest.raises(ConfigError, match="lists no criteria"):
        load_config(_write(tmp_path, BASE + CRIT + "\n[suitability]\n0 = ,\n"))
    cfg = load_config(_write(tmp_path, BASE + CRIT + "\n[suitability]\n0 = slope\n"))
    assert cfg.suitability == {0: ("slope",)}


def test_predict_validation(tmp_path):
    with pytest.raises(ConfigError, match="odd"):
        load_config(_write(tmp_path, BASE + "[predict]\nkernel = 4\n"))
    with pytest.raises(ConfigError, match=">= 1"):
        load_config(_write(tmp_path, BASE + "[predict]\niterations = 0\n"))
    cfg = load_config(_write(tmp_path, BASE + "[predict]\niterations = 2\nkernel = 3\n"))
    assert (cfg.iterations, cfg.kernel) == (2, 3)


def test_mlp_section(tmp_path):
    text = BASE.replace("seed = 3", "seed = 3\nmodel = mlp")
    text += "[mlp]\nhidden = 4\nlearning_rate = 0.1\nepochs = 50\nfocal_class = 1\nthreshold = 0.6\n"
    cfg = load_config(_write(tmp_path, text))
    assert cfg.mlp_hidden == 4
    assert cfg.mlp_learning_rate == 0.1
    assert cfg.mlp_epochs == 50
    assert cfg.mlp_focal == 1
    assert cfg.mlp_threshold == 0.6


def test_echo_uses_basenames(tmp_path):
    sub = tmp_path / "data"
    sub.mkdir()
    g = Grid(np.array([[0.0, 1.0]]), 1.0)
    for fn in ("a.asc", "b.asc", "c.asc", "k.asc"):
        write_ascii_grid(g, sub / fn)
    write_legend({0: "a", 1: "b"}, sub / "legend.csv")
    text = (
        "[run]\nseed = 1\n\n[maps]\n2000 = data/a.asc\n2010 = data/b.asc\n\n"
        "[legend]\nfile = data/legend.csv\n\n"
        "[criteria]\nslope = data/c.asc\n\n[constraints]\nmask = data/k.asc\n\n"
        "[fuzzy.slope]\na = 0\nb = 9\n"
    )
    cfg = load_config(_write(tmp_path, text, grids=()))
    rows = dict(cfg.echo())
    assert rows["maps.2000"] == "a.asc"
    assert rows["legend.file"] == "legend.csv"
    assert rows["criteria.slope"] == "c.asc"
    assert rows["constraints.mask"] == "k.asc"
    assert rows["fuzzy.slope"] == "linear increasing 0.0 9.0"
    assert not any(k.startswith("mlp.") for k in rows)  # ca_markov run

    mlp_cfg = load_config(_write(tmp_path, BASE.replace("seed = 3", "seed = 3\nmodel = both"), name="m.ini"))
    mrows = dict(mlp_cfg.echo())
    assert mrows["mlp.focal_class"] == "(highest id)"
    assert mrows["legend.file"] == "(derived)"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.ini")
    p = tmp_path / "broken.ini"
    p.write_text("seed = 1\n", encoding="ascii")  # key before any section header
    with pytest.raises(ConfigError):
        load_config(p)
