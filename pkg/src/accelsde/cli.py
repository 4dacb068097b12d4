"""``accelsde <experiment> [--config FILE] [--seed N] [--out DIR] [--samples M] [--threads T]``

Every experiment writes one or more CSV files with the columns
``experiment,label,n_or_level,value,std_error,samples,seed,wall_time_ms``
preceded by a ``#`` manifest line. Exit codes: 0 success, 2 configuration
error, 3 more than 1% of paths excluded as non-finite.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, validate_config
from .experiments import (
    error_table,
    gbm_expectation,
    ratio_rows,
    sabr_path_demo,
    sabr_strong_errors,
    sweep_variants,
)
from .mlmc import LevelSpec, level_diagnostics, run_mlmc
from .models import (
    gbm_call_price,
    gbm_digital_price,
    gbm_smoothed_digital_price,
    sabr_logvol_model,
)
from .payoffs import digital, european_call, localize, smoothed_digital, tanh_payoff

__all__ = ["COLUMNS", "main", "run_experiment"]

COLUMNS = ("experiment", "label", "n_or_level", "value", "std_error", "samples", "seed",
           "wall_time_ms")
EXIT_OK, EXIT_CONFIG, EXIT_EXPLOSION = 0, 2, 3
EXCLUSION_LIMIT = 0.01


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def _manifest(cfg: ExperimentConfig) -> str:
    seed_note = " (default)" if cfg.seed_defaulted else ""
    return (f"# manifest experiment={cfg.experiment} config_sha256={cfg.digest()} "
            f"seed={cfg.seed}{seed_note} accelsde={__version__} numpy={np.__version__} "
            f"python={platform.python_version()}")


def write_csv(path: Path, cfg: ExperimentConfig, rows) -> Path:
    buf = io.StringIO()
    buf.write(_manifest(cfg) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _row(cfg, label, n, value, se, samples, ms=0):
    return (cfg.experiment, label, int(n), float(value), float(se), int(samples), cfg.seed,
            int(ms))


def _strong_rows(cfg, data, variant, mode, timing, labels):
    table = error_table(data, variant, mode, cfg.p, timing)
    return [_row(cfg, labels.get(r.estimator_label, r.estimator_label), r.n, r.error,
                 r.std_error, r.samples, r.wall_time_ms) for r in table.rows]


def _exclusion_row(cfg, excluded, total):
    return _row(cfg, "excluded_paths", 0, float(excluded), 0.0, total)


def _run_strong(cfg, timing):
    data = sabr_strong_errors({"base": cfg.params}, cfg.grids, cfg.n_ref, cfg.samples, cfg.seed,
                              cfg.base_grid, ("standard", "tilde"), cfg.threads)
    labels = {"tilde": "accelerated"}
    tables = {
        "strong_error": _strong_rows(cfg, data, "base", "terminal", timing, labels),
        "strong_error_sup": _strong_rows(cfg, data, "base", "sup", timing, labels),
    }
    for rows in tables.values():
        rows.append(_exclusion_row(cfg, data.excluded, cfg.samples))
    return tables, data.excluded, cfg.samples


def _run_sweep(cfg, timing):
    if cfg.experiment == "nu_sweep":
        variants = sweep_variants(cfg.params, "nu", cfg.sweep_nu)
        schemes = ("standard", "tilde")
    else:
        variants = sweep_variants(cfg.params, "beta", cfg.sweep_beta, cfg.alpha0_base)
        schemes = ("standard", "tilde", "check")
    t0 = time.perf_counter()
    data = sabr_strong_errors(variants, cfg.grids, cfg.n_ref, cfg.samples, cfg.seed,
                              cfg.base_grid, schemes, cfg.threads)
    ms = int(1000 * (time.perf_counter() - t0)) if timing else 0
    rows = []
    for name in variants:
        for scheme in schemes[1:]:
            for n, pct, se in ratio_rows(data, name, scheme):
                rows.append(_row(cfg, f"{scheme}_ratio_{name}", n, pct, se, data.retained, ms))
    rows.append(_exclusion_row(cfg, data.excluded, cfg.samples))
    return {cfg.experiment: rows}, data.excluded, cfg.samples


def _run_demo(cfg, timing):
    paths = sabr_path_demo(cfg.params, cfg.demo_n, cfg.n_ref, cfg.seed, cfg.path_index,
                           cfg.reference_points)
    labels = {"reference": "reference", "standard": "standard", "tilde": "accelerated",
              "check": "check"}
    rows = []
    for key, label in labels.items():
        for i, v in enumerate(paths[key]):
            rows.append(_row(cfg, label, i, v, 0.0, 1))
    bad = int(any(not np.all(np.isfinite(v)) for v in paths.values()))
    return {"path_demo": rows}, bad, 1


def _payoffs(cfg):
    """Payoff, optional localisation and the closed-form base expectations."""
    pay = cfg.payoff
    params = cfg.params
    vol = math.sqrt(params.alpha0) * params.s0 ** (params.beta - 1.0)
    s0, T = params.s0, params.horizon
    closed = params.beta == 1.0
    localized, c_smooth = None, None
    if pay["type"] == "call":
        f = european_call(pay["strike"])
        c = gbm_call_price(s0, pay["strike"], vol, T) if closed else None
    elif pay["type"] == "digital":
        f = digital(pay["strike"])
        c = gbm_digital_price(s0, pay["strike"], vol, T) if closed else None
        localized = localize(f, smoothed_digital(pay["strike"], pay["h"]))
        c_smooth = (gbm_smoothed_digital_price(s0, pay["strike"], pay["h"], vol, T)
                    if closed else cfg.base_expectation_smooth)
    else:
        f = tanh_payoff(pay["center"], pay["scale"])
        c = gbm_expectation(f, s0, vol, T) if closed else None
    if cfg.base_expectation is not None:
        c = cfg.base_expectation
    return f, localized, c, c_smooth


def _run_diagnostics(cfg, timing):
    f, localized, c, cs = _payoffs(cfg)
    spec = LevelSpec(cfg.level_base, cfg.max_level, cfg.params.horizon)
    model = sabr_logvol_model(cfg.params)
    t0 = time.perf_counter()
    rows = level_diagnostics(model, cfg.params.nu, f, spec, cfg.samples, cfg.seed,
                             base_expectation=c,
                             localized=localized if cs is not None else None,
                             base_expectation_smooth=cs, threads=cfg.threads)
    ms = int(1000 * (time.perf_counter() - t0)) if timing else 0
    out = []
    for r in rows:
        out.append(_row(cfg, f"{r.estimator}_mean", r.level, r.mean, r.std_error, r.samples, ms))
        out.append(_row(cfg, f"{r.estimator}_std", r.level, r.std,
                        r.std / math.sqrt(2.0 * max(r.samples - 1, 1)), r.samples, ms))
    excluded = sum(cfg.samples - r.samples for r in rows)
    total = cfg.samples * len(rows)
    out.append(_exclusion_row(cfg, excluded, total))
    return {"mlmc_diagnostics": out}, excluded, total


def _run_price(cfg, timing):
    f, localized, c, cs = _payoffs(cfg)
    spec = LevelSpec(cfg.level_base, cfg.max_level, cfg.params.horizon)
    model = sabr_logvol_model(cfg.params)
    rows, excluded, total = [], 0, 0
    for est in cfg.estimators:
        if est == "localized" and localized is None:
            raise ConfigError(["mlmc.estimators: localized needs payoff.type = digital"])
        payoff = localized if est == "localized" else f
        base = cs if est == "localized" else c
        t0 = time.perf_counter()
        rep = run_mlmc(model, cfg.params.nu, payoff, spec, cfg.target_rmse, est, cfg.seed,
                       cfg.pilot_size, base, cfg.rule, cfg.threads)
        ms = int(1000 * (time.perf_counter() - t0)) if timing else 0
        for lv in rep.levels:
            rows.append(_row(cfg, f"{est}_level", lv.level, lv.mean_delta,
                             math.sqrt(lv.var_delta / lv.samples), lv.samples, ms))
            excluded += lv.excluded
            total += lv.samples + lv.excluded
        n_total = sum(lv.samples for lv in rep.levels)
        rows.append(_row(cfg, f"{est}_total", 0, rep.total_estimate, rep.total_std_error,
                         n_total, ms))
        rows.append(_row(cfg, f"{est}_cost", 0, rep.total_cost, 0.0, n_total, ms))
    rows.append(_exclusion_row(cfg, excluded, total))
    return {"mlmc_price": rows}, excluded, total


_RUNNERS = {
    "path_demo": _run_demo,
    "strong_error": _run_strong,
    "nu_sweep": _run_sweep,
    "beta_sweep": _run_sweep,
    "mlmc_diagnostics": _run_diagnostics,
    "mlmc_price": _run_price,
}


def run_experiment(cfg: ExperimentConfig, out_dir=".", timing: bool = False):
    """Run ``cfg`` and write its CSV files; returns ``(exit_code, paths)``."""
    out = Path(cfg.output if cfg.output and out_dir == "." else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables, excluded, total = _RUNNERS[cfg.experiment](cfg, timing)
    paths = [write_csv(out / f"{name}.csv", cfg, rows) for name, rows in tables.items()]
    code = EXIT_EXPLOSION if total and excluded / total > EXCLUSION_LIMIT else EXIT_OK
    return code, paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accelsde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML experiment configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--samples", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--timing", action="store_true",
                       help="fill wall_time_ms (makes the CSV body run-dependent)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = None
    if args.config is not None:
        try:
            raw = args.config.read_text()
        except OSError as exc:
            print(f"{args.config}: {exc.strerror}", file=sys.stderr)
            return EXIT_CONFIG
    where = str(args.config) if args.config else "<defaults>"
    try:
        cfg = validate_config(raw, args.experiment, seed=args.seed, samples=args.samples,
                              threads=args.threads)
        code, paths = run_experiment(cfg, args.out, args.timing)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"{where}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    if code == EXIT_EXPLOSION:
        print("more than 1% of paths were excluded as non-finite", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
