"""Experiment configuration: YAML in, validated :class:`ExperimentConfig` out.

Unknown keys are rejected and every violation is reported at once.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .models import SabrParams

__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "validate_config", "parse_config"]

EXPERIMENTS = ("path_demo", "strong_error", "nu_sweep", "beta_sweep",
               "mlmc_diagnostics", "mlmc_price")
MLMC_EXPERIMENTS = ("mlmc_diagnostics", "mlmc_price")

_SCHEMA = {
    "experiment": None, "seed": None, "samples": None, "p": None, "threads": None,
    "output": None,
    "model": {"s0", "beta", "alpha0", "alpha0_base", "nu", "rho", "horizon"},
    "grid": {"n_ref", "sizes", "base_grid", "reference_points", "path_index", "demo_n"},
    "sweep": {"nu", "beta"},
    "payoff": {"type", "strike", "h", "center", "scale"},
    "levels": {"base", "max_level"},
    "mlmc": {"target_rmse", "estimators", "pilot_size", "rule", "base_expectation",
             "base_expectation_smooth"},
}

_DEFAULT_SAMPLES = {
    "path_demo": 1, "strong_error": 10_000, "nu_sweep": 10_000, "beta_sweep": 10_000,
    "mlmc_diagnostics": 100_000, "mlmc_price": 1_000,
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    samples: int
    params: SabrParams
    p: float = 2.0
    threads: int = 1
    output: str | None = None
    n_ref: int = 16384
    grids: tuple[int, ...] = (8, 16, 32, 64, 128, 256)
    base_grid: str = "coarse"
    reference_points: int = 256
    path_index: int = 0
    demo_n: int = 16
    sweep_nu: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)
    sweep_beta: tuple[float, ...] = (0.999, 0.99, 0.95, 0.9)
    alpha0_base: float | None = 0.16
    payoff: dict = field(default_factory=lambda: {"type": "call", "strike": 100.0, "h": 1.0})
    level_base: int = 4
    max_level: int = 4
    target_rmse: float = 0.1
    estimators: tuple[str, ...] = ("standard", "accelerated")
    pilot_size: int = 1000
    rule: str = "cost_optimal"
    base_expectation: float | None = None
    base_expectation_smooth: float | None = None
    seed_defaulted: bool = False

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_config(raw: str | None) -> dict:
    if raw is None or not raw.strip():
        return {}
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{where}invalid YAML ({getattr(exc, 'problem', exc)})"]) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(["config root must be a mapping"])
    return data


def validate_config(raw: str | None, experiment: str | None = None, *, seed=None,
                    samples=None, threads=None) -> ExperimentConfig:
    """Parse and check a YAML config; CLI overrides win over file values."""
    data = parse_config(raw)
    errors: list[str] = []

    for key, value in data.items():
        if key not in _SCHEMA:
            errors.append(f"unknown key {key!r}")
        elif _SCHEMA[key] is not None:
            if not isinstance(value, dict):
                errors.append(f"{key}: must be a mapping")
                continue
            for sub in value:
                if sub not in _SCHEMA[key]:
                    errors.append(f"unknown key {key}.{sub!r}")

    def section(name):
        v = data.get(name, {})
        return v if isinstance(v, dict) else {}

    exp = data.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        errors.append(f"experiment: config says {exp!r} but {experiment!r} was requested")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
        raise ConfigError(errors)
    mlmc_like = exp in MLMC_EXPERIMENTS

    seed_defaulted = False
    if seed is None:
        seed = data.get("seed")
        if seed is None:
            seed, seed_defaulted = 0, True
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        errors.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")

    if samples is None:
        samples = data.get("samples", _DEFAULT_SAMPLES[exp])
    if not _is_int(samples) or samples < 1:
        errors.append(f"samples: must be an integer >= 1, got {samples!r}")
    if threads is None:
        threads = data.get("threads", 1)
    if not _is_int(threads) or threads < 1:
        errors.append(f"threads: must be an integer >= 1, got {threads!r}")
    p = data.get("p", 2.0)
    if not _is_num(p) or p < 2:
        errors.append(f"p: must be a number >= 2, got {p!r}")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        errors.append("output: must be a path string")

    # model
    model = section("model")
    defaults = {"s0": 100.0, "beta": 1.0 if mlmc_like else 0.9, "nu": 0.1, "rho": -0.6,
                "horizon": 1.0}
    vals = {}
    for key, default in defaults.items():
        v = model.get(key, default)
        if not _is_num(v):
            errors.append(f"model.{key}: must be a number, got {v!r}")
            v = default
        vals[key] = float(v)
    if "alpha0" in model and "alpha0_base" in model:
        errors.append("model: give alpha0 or alpha0_base, not both")
    alpha0_base = model.get("alpha0_base", None if "alpha0" in model else 0.16)
    if "alpha0" in model:
        alpha0 = model["alpha0"]
        if not _is_num(alpha0):
            errors.append(f"model.alpha0: must be a number, got {alpha0!r}")
            alpha0 = 0.16
    else:
        if not _is_num(alpha0_base) or alpha0_base <= 0:
            errors.append(f"model.alpha0_base: must be a positive number, got {alpha0_base!r}")
            alpha0_base = 0.16
        if vals["s0"] > 0:
            alpha0 = alpha0_base * vals["s0"] ** (2.0 * (1.0 - vals["beta"]))
        else:
            alpha0 = alpha0_base
    params = None
    try:
        params = SabrParams(vals["s0"], vals["beta"], float(alpha0), vals["nu"], vals["rho"],
                            vals["horizon"])
    except ValueError as exc:
        errors.extend(f"model: {msg}" for msg in str(exc).split("; "))

    # grid
    grid = section("grid")
    n_ref = grid.get("n_ref", 16384)
    sizes = grid.get("sizes", [8, 16, 32, 64, 128, 256])
    if not _is_int(n_ref) or n_ref < 1:
        errors.append(f"grid.n_ref: must be a positive integer, got {n_ref!r}")
        n_ref = None
    if not isinstance(sizes, list) or not sizes or not all(_is_int(n) and n > 0 for n in sizes):
        errors.append(f"grid.sizes: must be a non-empty list of positive integers, got {sizes!r}")
        sizes = []
    elif sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        errors.append(f"grid.sizes: must be strictly ascending, got {sizes}")
    if n_ref is not None:
        for n in sizes:
            if n_ref % n:
                errors.append(f"grid.sizes: {n} does not divide n_ref={n_ref}")
    base_grid = grid.get("base_grid", "coarse")
    if base_grid not in ("coarse", "reference"):
        errors.append(f"grid.base_grid: must be 'coarse' or 'reference', got {base_grid!r}")
    ref_points = grid.get("reference_points", min(256, n_ref or 256))
    if not _is_int(ref_points) or ref_points < 1 or (n_ref and n_ref % ref_points):
        errors.append(f"grid.reference_points: must be a positive divisor of n_ref, got {ref_points!r}")
    path_index = grid.get("path_index", 0)
    if not _is_int(path_index) or path_index < 0:
        errors.append(f"grid.path_index: must be a non-negative integer, got {path_index!r}")
    demo_n = grid.get("demo_n", 16)
    if exp == "path_demo" and (not _is_int(demo_n) or demo_n < 1 or (n_ref and n_ref % demo_n)):
        errors.append(f"grid.demo_n: must be a positive divisor of n_ref, got {demo_n!r}")

    # sweeps
    sweep = section("sweep")
    sweep_nu = sweep.get("nu", [0.1, 0.3, 0.5, 0.7])
    sweep_beta = sweep.get("beta", [0.999, 0.99, 0.95, 0.9])
    for key, vals_, ok in (("nu", sweep_nu, lambda v: v >= 0),
                           ("beta", sweep_beta, lambda v: 0 < v <= 1)):
        if not isinstance(vals_, list) or not vals_ or not all(_is_num(v) and ok(v) for v in vals_):
            errors.append(f"sweep.{key}: invalid values {vals_!r}")

    # payoff
    payoff = {"type": "call", "strike": 100.0, "h": 1.0, "center": 100.0, "scale": 10.0}
    payoff.update(section("payoff"))
    if payoff["type"] not in ("call", "digital", "tanh"):
        errors.append(f"payoff.type: must be call, digital or tanh, got {payoff['type']!r}")
    for key in ("strike", "h", "center", "scale"):
        if not _is_num(payoff[key]):
            errors.append(f"payoff.{key}: must be a number, got {payoff[key]!r}")
    if _is_num(payoff["h"]) and payoff["h"] <= 0:
        errors.append(f"payoff.h: must be positive, got {payoff['h']}")
    if _is_num(payoff["scale"]) and payoff["scale"] <= 0:
        errors.append(f"payoff.scale: must be positive, got {payoff['scale']}")

    # levels
    levels = section("levels")
    k = levels.get("base", 4)
    max_level = levels.get("max_level", 4)
    if not _is_int(k) or k < 2:
        errors.append(f"levels.base: must be an integer >= 2, got {k!r}")
    if not _is_int(max_level) or max_level < 0:
        errors.append(f"levels.max_level: must be an integer >= 0, got {max_level!r}")
    if ("levels" in data and "n_ref" in grid and _is_int(k) and k >= 2 and _is_int(max_level)
            and n_ref and n_ref % k ** max_level):
        errors.append(f"levels: base**max_level = {k ** max_level} does not divide "
                      f"grid.n_ref={n_ref}")

    # mlmc
    mlmc = section("mlmc")
    target = mlmc.get("target_rmse", 0.1)
    if not _is_num(target) or target <= 0:
        errors.append(f"mlmc.target_rmse: must be positive, got {target!r}")
    estimators = mlmc.get("estimators", ["standard", "accelerated"])
    if not isinstance(estimators, list) or not estimators or not all(
            e in ("standard", "accelerated", "localized") for e in estimators):
        errors.append(f"mlmc.estimators: invalid list {estimators!r}")
    pilot = mlmc.get("pilot_size", 1000)
    if not _is_int(pilot) or pilot < 100:
        errors.append(f"mlmc.pilot_size: must be an integer >= 100, got {pilot!r}")
    rule = mlmc.get("rule", "cost_optimal")
    if rule not in ("paper", "cost_optimal"):
        errors.append(f"mlmc.rule: must be 'paper' or 'cost_optimal', got {rule!r}")
    base_e = mlmc.get("base_expectation")
    base_es = mlmc.get("base_expectation_smooth")
    for key, v in (("base_expectation", base_e), ("base_expectation_smooth", base_es)):
        if v is not None and not _is_num(v):
            errors.append(f"mlmc.{key}: must be a number, got {v!r}")
    if mlmc_like and params is not None and params.beta != 1.0 and base_e is None:
        errors.append("mlmc.base_expectation: required when model.beta != 1 "
                      "(no closed form for the CEV base)")
    if exp == "mlmc_diagnostics" and _is_int(samples) and samples < 1000:
        errors.append(f"samples: mlmc_diagnostics needs >= 1000, got {samples}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=exp, seed=seed, samples=samples, params=params, p=float(p),
        threads=threads, output=output, n_ref=n_ref, grids=tuple(sizes), base_grid=base_grid,
        reference_points=ref_points, path_index=path_index, demo_n=demo_n,
        sweep_nu=tuple(float(v) for v in sweep_nu),
        sweep_beta=tuple(float(v) for v in sweep_beta),
        alpha0_base=None if alpha0_base is None else float(alpha0_base),
        payoff={k_: payoff[k_] for k_ in ("type", "strike", "h", "center", "scale")},
        level_base=k, max_level=max_level, target_rmse=float(target),
        estimators=tuple(estimators), pilot_size=pilot, rule=rule,
        base_expectation=None if base_e is None else float(base_e),
        base_expectation_smooth=None if base_es is None else float(base_es),
        seed_defaulted=seed_defaulted,
    )
