"""Command-line entry point.

One subcommand per pipeline stage plus the synthetic-scenario generator.
Stage subcommands share a config file and an output directory, and the
monolithic `run` equals the chained stages byte for byte because every
stage talks to the others only through files.

Exit codes: 0 success, 2 configuration error, 3 input data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import estimate_signatures, icm, maxlike, write_signatures_csv
from .config import load_config
from .criteria import FuzzySpec, distance_transform, fuzzy_standardize, make_constraint
from .errors import ConfigError, LandchangeError, NumericalError
from .grid import (
    LandCoverMap,
    mask_like,
    read_ascii_grid,
    read_legend,
    stack_bands,
    write_ascii_grid,
    write_legend,
)
from .indices import (
    change_composite,
    default_grouping,
    group_dynamics,
    ndim,
    ndvi,
    ndii,
    ternarize,
    ternary_thresholds,
    write_grouping_csv,
)
from .pipeline import run_pipeline, run_stage
from .preprocess import (
    band_statistics,
    dark_object_values,
    dos_correct,
    oif_rank,
    write_band_stats_csv,
    write_correlation_csv,
    write_dark_values_csv,
    write_oif_csv,
)
from .synth import SynthSpec, drift_matrix, generate_synthetic_landscape, write_scenario

log = logging.getLogger("landchange")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _band_labels(args, n: int) -> list[str]:
    if args.labels:
        labels = [t.strip() for t in args.labels.split(",")]
        if len(labels) != n:
            raise ConfigError(f"--labels names {len(labels)} bands but {n} were given")
        return labels
    return [f"band{i + 1}" for i in range(n)]


def _read_image(paths, labels):
    return stack_bands([read_ascii_grid(p) for p in paths], labels)


def _read_mask(path, what: str):
    g = read_ascii_grid(path)
    try:
        return mask_like(g, g.values)
    except LandchangeError:
        raise ConfigError(f"{what}: {path} must hold only 0/1 values") from None


# ---------------------------------------------------------------------------
# classification-side subcommands


def cmd_preprocess(args) -> int:
    out = _outdir(args)
    labels = _band_labels(args, len(args.bands))
    image = _read_image(args.bands, labels)
    reference = _read_mask(args.reference, "--reference")
    dark = dark_object_values(image, reference, args.percentile)
    corrected = dos_correct(image, dark)
    for band, label in zip(corrected.bands, corrected.labels):
        write_ascii_grid(band, out / f"corrected_{label}.asc")
    write_dark_values_csv(labels, dark, out / "dark_values.csv")
    stats = band_statistics(corrected)
    write_band_stats_csv(stats, out / "band_stats.csv")
    write_correlation_csv(stats, out / "correlation.csv")
    log.info("preprocess: %d bands corrected (dark values %s)", len(labels), dark)
    return 0


def cmd_oif(args) -> int:
    out = _outdir(args)
    labels = _band_labels(args, len(args.bands))
    image = _read_image(args.bands, labels)
    mask = _read_mask(args.mask, "--mask") if args.mask else None
    stats = band_statistics(image, mask)
    write_band_stats_csv(stats, out / "band_stats.csv")
    write_correlation_csv(stats, out / "correlation.csv")
    ranking = oif_rank(stats)
    write_oif_csv(ranking, out / "oif.csv")
    best = ranking.triples[0]
    log.info(
        "oif: best triple %s (score %s)",
        "/".join(labels[i] for i in best),
        repr(ranking.scores[0]),
    )
    return 0


def cmd_indices(args) -> int:
    out = _outdir(args)
    red = read_ascii_grid(args.red)
    nir = read_ascii_grid(args.nir)
    swir = read_ascii_grid(args.swir)
    v = ndvi(nir, red)
    i = ndii(nir, swir)
    m = ndim(v, i, args.weight)
    write_ascii_grid(v, out / "ndvi.asc")
    write_ascii_grid(i, out / "ndii.asc")
    write_ascii_grid(m, out / "ndim.asc")
    log.info("indices: wrote ndvi.asc, ndii.asc, ndim.asc")
    return 0


def cmd_change(args) -> int:
    out = _outdir(args)
    grids = [read_ascii_grid(p) for p in args.ndim]
    levels = []
    for g in grids:
        if args.low is not None and args.high is not None:
            lo, hi = args.low, args.high
        else:
            lo, hi = ternary_thresholds(g)
        levels.append(ternarize(g, lo, hi))
    for i, lv in enumerate(levels, start=1):
        write_ascii_grid(lv, out / f"levels_{i}.asc")
    ppm = (out / "change.ppm") if args.ppm else None
    codes = change_composite(levels[0], levels[1], levels[2], ppm_path=ppm)
    write_ascii_grid(codes, out / "change_code.asc")
    dynamics = group_dynamics(codes)
    write_ascii_grid(dynamics.grid, out / "dynamics.asc")
    write_legend(dynamics.legend, out / "dynamics_legend.csv")
    write_grouping_csv(default_grouping(), out / "grouping.csv")
    log.info("change: %d coded pixels", int(np.count_nonzero(codes.valid)))
    return 0


def cmd_classify(args) -> int:
    out = _outdir(args)
    labels = _band_labels(args, len(args.bands))
    image = _read_image(args.bands, labels)
    legend = read_legend(args.legend) if args.legend else None
    training_grid = read_ascii_grid(args.training)
    if legend is None:
        vals = training_grid.values[training_grid.valid]
        legend = {int(c): f"class {int(c)}" for c in sorted(set(vals.tolist()))}
    training = LandCoverMap(training_grid, legend)
    signatures = estimate_signatures(image, training)
    write_signatures_csv(signatures, out / "signatures.csv")
    priors = "equal" if args.equal_priors else "empirical"
    labeled, scores = maxlike(image, signatures, priors_mode=priors, legend=legend)
    write_ascii_grid(labeled.grid, out / "classified_ml.asc")
    smoothed = icm(labeled, scores, beta=args.beta, max_sweeps=args.sweeps)
    write_ascii_grid(smoothed.grid, out / "classified_icm.asc")
    write_legend(legend, out / "classified_legend.csv")
    log.info("classify: %d classes, beta=%s", len(signatures), args.beta)
    return 0


def _parse_fuzzy(text: str) -> FuzzySpec:
    parts = [t.strip() for t in text.split(",")]
    if len(parts) not in (4, 6):
        raise ConfigError(
            "--fuzzy takes shape,direction,a,b or shape,direction,a,b,c,d"
        )
    try:
        nums = [float(t) for t in parts[2:]]
    except ValueError:
        raise ConfigError(f"--fuzzy control points must be numbers, got {parts[2:]}") from None
    c, d = (nums[2], nums[3]) if len(nums) == 4 else (None, None)
    try:
        return FuzzySpec(parts[0], parts[1], nums[0], nums[1], c, d)
    except LandchangeError as e:
        raise ConfigError(f"--fuzzy: {e}") from None


def cmd_criteria(args) -> int:
    out = _outdir(args)
    name = args.name
    if args.distance_to:
        targets = _read_mask(args.distance_to, "--distance-to")
        grid = distance_transform(targets)
        write_ascii_grid(grid, out / f"{name}.asc")
    else:
        grid = read_ascii_grid(args.input)
    if args.fuzzy:
        spec = _parse_fuzzy(args.fuzzy)
        suit = fuzzy_standardize(grid, spec)
        write_ascii_grid(suit, out / f"{name}_fuzzy.asc")
    if args.constraint_min is not None:
        cons = make_constraint(grid, threshold=args.constraint_min, op=">=")
        write_ascii_grid(cons, out / f"{name}_constraint.asc")
    elif args.constraint_categories:
        cats = [int(t) for t in args.constraint_categories.split(",")]
        cons = make_constraint(grid, categories=cats)
        write_ascii_grid(cons, out / f"{name}_constraint.asc")
    log.info("criteria: wrote %s outputs", name)
    return 0


# ---------------------------------------------------------------------------
# config-driven pipeline subcommands


def _cfg(args):
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    return load_config(args.config, out_dir=args.out, seed=args.seed)


def _stage_command(name: str):
    def handler(args) -> int:
        cfg = _cfg(args)
        run_stage(name, cfg)
        log.info("%s: outputs in %s", name, cfg.out_dir)
        return 0

    return handler


def cmd_run(args) -> int:
    cfg = _cfg(args)
    report = run_pipeline(cfg)
    for name, k in report.kappas.items():
        log.info("run: %s kappa %.4f (random baseline %.4f)", name, k, report.baseline_kappa)
    log.info("run: report at %s", report.report_path)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_rows=args.rows,
        n_cols=args.cols,
        n_classes=args.classes,
        transition=drift_matrix(args.classes, args.stay),
        n_maps=args.maps,
        seeds_per_class=args.seeds_per_class,
        noise=args.noise,
        cell_size=args.cell_size,
        seed=args.seed if args.seed is not None else 0,
        start_year=args.start_year,
        year_step=args.year_step,
    )
    result = generate_synthetic_landscape(spec)
    ini = write_scenario(result, args.out, model=args.model)
    log.info("synth: scenario at %s", ini)
    print(ini)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, config: bool = False) -> None:
    if config:
        p.add_argument("--config", help="pipeline config file (INI)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None if config else "out", help="output directory")
    p.add_argument("--quiet", action="store_true", help="only warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="landchange",
        description="Land-cover change analysis and prediction on plain-text grids.",
    )
    ap.add_argument("--version", action="version", version=f"landchange {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="dark-object subtraction and band statistics")
    p.add_argument("bands", nargs="+", help="band grids, darkest-reference order")
    p.add_argument("--reference", required=True, help="0/1 mask of dark reference pixels")
    p.add_argument("--percentile", type=float, default=0.0, help="dark-object percentile")
    p.add_argument("--labels", help="comma-separated band names")
    _add_common(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("oif", help="rank band triples by the optimum index factor")
    p.add_argument("bands", nargs="+", help="band grids")
    p.add_argument("--mask", help="restrict statistics to this 0/1 mask")
    p.add_argument("--labels", help="comma-separated band names")
    _add_common(p)
    p.set_defaults(fn=cmd_oif)

    p = sub.add_parser("indices", help="vegetation/moisture indices and their blend")
    p.add_argument("--red", required=True)
    p.add_argument("--nir", required=True)
    p.add_argument("--swir", required=True)
    p.add_argument("--weight", type=float, default=0.5, help="blend weight for the first index")
    _add_common(p)
    p.set_defaults(fn=cmd_indices)

    p = sub.add_parser("change", help="three-date change coding and dynamics classes")
    p.add_argument("ndim", nargs=3, help="blended index grids for the three dates")
    p.add_argument("--low", type=float, help="fixed low ternary threshold")
    p.add_argument("--high", type=float, help="fixed high ternary threshold")
    p.add_argument("--ppm", action="store_true", help="also write an RGB composite")
    _add_common(p)
    p.set_defaults(fn=cmd_change)

    p = sub.add_parser("classify", help="gaussian maximum likelihood plus smoothing")
    p.add_argument("bands", nargs="+", help="image band grids")
    p.add_argument("--training", required=True, help="training class grid")
    p.add_argument("--legend", help="training legend CSV (id,name)")
    p.add_argument("--labels", help="comma-separated band names")
    p.add_argument("--beta", type=float, default=1.5, help="neighbor agreement weight")
    p.add_argument("--sweeps", type=int, default=10, help="max smoothing sweeps")
    p.add_argument("--equal-priors", action="store_true", help="ignore training class sizes")
    _add_common(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("criteria", help="distance, fuzzy and constraint layers")
    p.add_argument("--name", default="criterion", help="basename for outputs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--distance-to", help="0/1 target mask; output is distance to nearest 1")
    src.add_argument("--input", help="use this grid directly")
    p.add_argument("--fuzzy", help="shape,direction,a,b[,c,d] membership spec")
    p.add_argument("--constraint-min", type=float, help="1 where value >= this")
    p.add_argument("--constraint-categories", help="1 where value in this id list")
    _add_common(p)
    p.set_defaults(fn=cmd_criteria)

    for name, help_text in (
        ("mce", "weights and per-class suitability grids"),
        ("markov", "transition estimation and area projection"),
        ("predict", "cellular allocation of projected areas"),
        ("mlp-train", "fit the perceptron to the calibration pair"),
        ("mlp-predict", "apply the trained perceptron"),
        ("validate", "compare predictions against the held-out map"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p, config=True)
        p.set_defaults(fn=_stage_command(name))

    p = sub.add_parser("run", help="full calibrate-predict-validate pipeline")
    _add_common(p, config=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic test scenario")
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--maps", type=int, default=3)
    p.add_argument("--stay", type=float, default=0.9, help="diagonal transition probability")
    p.add_argument("--seeds-per-class", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--cell-size", type=float, default=30.0)
    p.add_argument("--start-year", type=int, default=1988)
    p.add_argument("--year-step", type=int, default=6)
    p.add_argument("--model", default="ca_markov", choices=("ca_markov", "mlp", "both"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True, help="scenario directory")
    p.set_defaults(fn=cmd_synth)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return 2
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return 4
    except LandchangeError as e:
        log.error("data error: %s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
