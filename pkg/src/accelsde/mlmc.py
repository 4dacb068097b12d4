"""Multi-level Monte Carlo with standard, accelerated and localized level samplers.

Level ``l`` uses ``n_l = k**l`` Euler steps. A level draw for sample ``j``
regenerates its fine lattice from stream ``level_stream(l, j)``; the coarse
path uses the k-fold coarsening of the same lattice, and the eps and 0
discretisations share both. Draws at different levels never share a stream,
so levels can be evaluated in any order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .brownian import coarsen_increments, level_stream, sample_increments
from .models import SdeModel
from .payoffs import LocalizedPayoff, Payoff
from .schemes import simulate

__all__ = [
    "LevelSpec",
    "LevelResult",
    "MlmcReport",
    "DiagnosticRow",
    "ESTIMATORS",
    "level_terminals",
    "level_deltas",
    "sample_level_standard",
    "sample_level_new",
    "sample_level_localized",
    "allocate_samples",
    "select_max_level",
    "run_mlmc",
    "level_diagnostics",
]

ESTIMATORS = ("standard", "accelerated", "localized")
CHUNK = 4096


@dataclass(frozen=True)
class LevelSpec:
    base: int
    max_level: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.base < 2:
            raise ValueError(f"refinement factor must be >= 2, got {self.base}")
        if self.max_level < 0:
            raise ValueError(f"max_level must be >= 0, got {self.max_level}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def grid_sizes(self) -> list[int]:
        return [self.base ** l for l in range(self.max_level + 1)]


@dataclass(frozen=True)
class LevelResult:
    level: int
    n: int
    mean_delta: float
    var_delta: float
    samples: int
    cost: float
    excluded: int = 0


@dataclass(frozen=True)
class MlmcReport:
    levels: tuple[LevelResult, ...]
    total_estimate: float
    total_std_error: float
    total_cost: float
    estimator_label: str
    target_rmse: float
    pilot_variances: tuple[float, ...] = ()

    @property
    def variance_budget_used(self) -> float:
        """Realised ``sum_l V_l / N_l`` from the main pass."""
        return float(sum(r.var_delta / r.samples for r in self.levels))


@dataclass(frozen=True)
class DiagnosticRow:
    level: int
    estimator: str
    mean: float
    abs_mean: float
    std: float
    std_error: float
    samples: int


def _check_level(level: int, spec: LevelSpec):
    if not 0 <= level <= spec.max_level:
        raise ValueError(f"level {level} outside 0..{spec.max_level}")


def level_terminals(model: SdeModel, eps, level: int, spec: LevelSpec, seed: int, indices,
                    need_zero: bool = True):
    """First-component terminal values of the coupled level-``level`` paths.

    Keys: ``fine_eps``, ``fine_zero`` and (level >= 1) ``coarse_eps``,
    ``coarse_zero``; the ``*_zero`` entries are present when ``need_zero``.
    """
    _check_level(level, spec)
    n = spec.base ** level
    streams = [level_stream(level, int(j)) for j in indices]
    inc = sample_increments(seed, streams, n, model.factor_dim, spec.horizon)
    dt = spec.horizon / n
    out = {"fine_eps": simulate(model, eps, inc, dt)[:, 0]}
    if need_zero:
        out["fine_zero"] = simulate(model, 0.0, inc, dt)[:, 0]
    if level > 0:
        coarse = coarsen_increments(inc, spec.base, axis=1)
        cdt = dt * spec.base
        out["coarse_eps"] = simulate(model, eps, coarse, cdt)[:, 0]
        if need_zero:
            out["coarse_zero"] = simulate(model, 0.0, coarse, cdt)[:, 0]
    return out


def _standard(term, level, f):
    if level == 0:
        return f(term["fine_eps"])
    return f(term["fine_eps"]) - f(term["coarse_eps"])


def _controlled(term, level, f, f_base, constant):
    fine = f(term["fine_eps"]) - f_base(term["fine_zero"])
    if level == 0:
        return fine + constant
    return fine - (f(term["coarse_eps"]) - f_base(term["coarse_zero"]))


def _deltas_from_terminals(term, level, estimator, payoff, base_expectation):
    if estimator == "standard":
        f = payoff.original if isinstance(payoff, LocalizedPayoff) else payoff
        return _standard(term, level, f)
    if base_expectation is None:
        raise ValueError(f"the {estimator} estimator needs base_expectation")
    if estimator == "accelerated":
        f = payoff.original if isinstance(payoff, LocalizedPayoff) else payoff
        return _controlled(term, level, f, f, base_expectation)
    if estimator == "localized":
        if not isinstance(payoff, LocalizedPayoff):
            raise TypeError("the localized estimator needs a LocalizedPayoff")
        return _controlled(term, level, payoff.original, payoff.smooth_part, base_expectation)
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def _chunks(indices, size=CHUNK):
    indices = np.asarray(indices, dtype=np.int64)
    return [indices[i:i + size] for i in range(0, len(indices), size)] or [indices]


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def level_deltas(model, eps, payoff, level, spec, seed, indices, estimator="standard",
                 base_expectation=None, threads=1):
    """Level-``level`` draws for every sample index in ``indices`` (chunked)."""

    def run(chunk):
        term = level_terminals(model, eps, level, spec, seed, chunk,
                               need_zero=estimator != "standard")
        return _deltas_from_terminals(term, level, estimator, payoff, base_expectation)

    return np.concatenate(_map(run, _chunks(indices), threads))


def sample_level_standard(model, eps, payoff: Payoff, level, spec, seed, path_index) -> float:
    """One draw of ``P_l - P_{l-1}`` (``P_0`` at level 0)."""
    return float(level_deltas(model, eps, payoff, level, spec, seed, [path_index])[0])


def sample_level_new(model, eps, payoff: Payoff, base_expectation, level, spec, seed,
                     path_index) -> float:
    """One draw of the accelerated level difference.

    ``P_new = f(X_eps) - f(X_0) + E f(X_0)``; the constant appears at level 0 only.
    """
    return float(level_deltas(model, eps, payoff, level, spec, seed, [path_index],
                              "accelerated", base_expectation)[0])


def sample_level_localized(model, eps, localized: LocalizedPayoff, base_expectation_smooth,
                           level, spec, seed, path_index) -> float:
    """Accelerated draw on the smooth part plus a standard draw on the remainder."""
    return float(level_deltas(model, eps, localized, level, spec, seed, [path_index],
                              "localized", base_expectation_smooth)[0])


def allocate_samples(level_variances, spec: LevelSpec, target_rmse: float,
                     rule: str = "cost_optimal", min_samples: int = 2) -> np.ndarray:
    """Samples per level so that ``sum_l V_l / N_l <= target_rmse**2 / 2``.

    ``paper``: ``N_l = ceil(2 (L+1) V* / (gamma^2 n_l))`` with
    ``V* = max_m V_m n_m``, the hidden constant of ``N_l = O(gamma^-2 L / n_l)``.
    ``cost_optimal``: ``N_l = ceil(2 sqrt(V_l / n_l) sum_m sqrt(V_m n_m) / gamma^2)``.
    """
    if not target_rmse > 0:
        raise ValueError(f"target_rmse must be positive, got {target_rmse}")
    v = np.asarray(level_variances, dtype=np.float64)
    if v.shape != (spec.max_level + 1,):
        raise ValueError(f"expected {spec.max_level + 1} level variances, got {v.shape}")
    if np.any(v < 0):
        raise ValueError("variances must be non-negative")
    n = np.array(spec.grid_sizes, dtype=np.float64)
    g2 = target_rmse * target_rmse
    if rule == "paper":
        raw = 2.0 * (spec.max_level + 1) * np.max(v * n) / (g2 * n)
    elif rule == "cost_optimal":
        raw = 2.0 * np.sqrt(v / n) * np.sum(np.sqrt(v * n)) / g2
    else:
        raise ValueError(f"unknown allocation rule {rule!r}")
    return np.maximum(np.ceil(raw), min_samples).astype(np.int64)


def select_max_level(target_rmse: float, base: int, offset: int = 0) -> int:
    """``L = ceil(log(1/gamma) / log k) + offset``, at least 0."""
    if not target_rmse > 0:
        raise ValueError("target_rmse must be positive")
    return max(0, math.ceil(math.log(1.0 / target_rmse) / math.log(base)) + offset)


def _clean(d):
    finite = np.isfinite(d)
    return d[finite], int((~finite).sum())


def run_mlmc(model, eps, payoff, spec: LevelSpec, target_rmse: float, estimator="accelerated",
             seed: int = 0, pilot_size: int = 1000, base_expectation=None,
             rule: str = "cost_optimal", threads: int = 1) -> MlmcReport:
    """Pilot pass, sample allocation, main pass, telescoping sum.

    Pilot draws use sample indices ``[0, pilot_size)`` of each level and main
    draws start at ``pilot_size``, so the allocation does not see the
    samples that form the estimate. For the accelerated and localized
    estimators ``base_expectation`` enters through level 0 only.
    """
    if pilot_size < 100:
        raise ValueError(f"pilot_size must be >= 100, got {pilot_size}")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    levels = range(spec.max_level + 1)
    pilot_var = []
    for l in levels:
        d, _ = _clean(level_deltas(model, eps, payoff, l, spec, seed, np.arange(pilot_size),
                                   estimator, base_expectation, threads))
        pilot_var.append(float(d.var(ddof=1)) if d.size > 1 else 0.0)
    alloc = allocate_samples(pilot_var, spec, target_rmse, rule)

    results = []
    for l, n_l, count in zip(levels, spec.grid_sizes, alloc):
        idx = np.arange(pilot_size, pilot_size + int(count))
        d, excluded = _clean(level_deltas(model, eps, payoff, l, spec, seed, idx, estimator,
                                          base_expectation, threads))
        if d.size == 0:
            raise FloatingPointError(f"every draw at level {l} was non-finite")
        var = float(d.var(ddof=1)) if d.size > 1 else 0.0
        results.append(LevelResult(l, n_l, float(d.mean()), var, int(d.size),
                                   float(d.size * n_l), excluded))
    total = float(sum(r.mean_delta for r in results))
    se = math.sqrt(sum(r.var_delta / r.samples for r in results))
    cost = float(sum(r.cost for r in results))
    return MlmcReport(tuple(results), total, se, cost, estimator, target_rmse, tuple(pilot_var))


def level_diagnostics(model, eps, payoff, spec: LevelSpec, M: int, seed: int,
                      base_expectation=None, localized: LocalizedPayoff | None = None,
                      base_expectation_smooth=None, levels=None, threads: int = 1):
    """Paired per-level statistics of the standard, accelerated (and localized) draws.

    All estimators at a level are computed from the same coupled paths.
    """
    if M < 1000:
        raise ValueError(f"M must be >= 1000, got {M}")
    levels = list(range(spec.max_level + 1)) if levels is None else list(levels)
    wanted = ["standard"]
    if base_expectation is not None:
        wanted.append("accelerated")
    if localized is not None:
        if base_expectation_smooth is None:
            raise ValueError("localized diagnostics need base_expectation_smooth")
        wanted.append("localized")

    rows = []
    for l in levels:
        def run(chunk, l=l):
            term = level_terminals(model, eps, l, spec, seed, chunk,
                                   need_zero=len(wanted) > 1)
            out = {"standard": _deltas_from_terminals(term, l, "standard", payoff, None)}
            if "accelerated" in wanted:
                out["accelerated"] = _deltas_from_terminals(term, l, "accelerated", payoff,
                                                            base_expectation)
            if "localized" in wanted:
                out["localized"] = _deltas_from_terminals(term, l, "localized", localized,
                                                          base_expectation_smooth)
            return out

        parts = _map(run, _chunks(np.arange(M)), threads)
        for name in wanted:
            d, _ = _clean(np.concatenate([p[name] for p in parts]))
            std = float(d.std(ddof=1))
            mean = float(d.mean())
            rows.append(DiagnosticRow(l, name, mean, abs(mean), std,
                                      std / math.sqrt(d.size), int(d.size)))
    return rows
