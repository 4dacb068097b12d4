"""Monte Carlo error estimates, rate fits and error ratios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .schemes import GridMismatchError, SchemePath

__all__ = [
    "ErrorRow",
    "ErrorTable",
    "lp_error",
    "strong_error",
    "path_differences",
    "error_ratio",
    "paired_ratio",
    "fit_rate",
    "weak_error",
    "RhoEstimate",
    "rho_l2",
    "weighted_control",
]


@dataclass(frozen=True)
class ErrorRow:
    n: int
    estimator_label: str
    error: float
    std_error: float
    samples: int
    wall_time_ms: int = 0

    def __post_init__(self):
        if self.error < 0 or self.std_error < 0:
            raise ValueError("errors and standard errors must be non-negative")


@dataclass(frozen=True)
class ErrorTable:
    rows: tuple[ErrorRow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(
            self, "rows", tuple(sorted(self.rows, key=lambda r: (r.estimator_label, r.n))))

    @property
    def labels(self) -> list[str]:
        return sorted({r.estimator_label for r in self.rows})

    def select(self, label: str) -> "ErrorTable":
        return ErrorTable(tuple(r for r in self.rows if r.estimator_label == label))

    def as_arrays(self):
        ns = np.array([r.n for r in self.rows], dtype=float)
        errs = np.array([r.error for r in self.rows])
        return ns, errs


def lp_error(differences, p: float = 2.0):
    """``(mean |d|^p)^(1/p)`` and its delta-method standard error.

    ``differences`` is 1-d (one scalar per sample) or 2-d, in which case the
    per-sample Euclidean norm is used.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    d = np.asarray(differences, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no samples")
    if d.ndim > 1:
        d = np.sqrt((d * d).sum(axis=tuple(range(1, d.ndim))))
    powered = np.abs(d) ** p
    m = powered.mean()
    if m == 0.0:
        return 0.0, 0.0
    se_m = powered.std(ddof=1) / np.sqrt(powered.size) if powered.size > 1 else 0.0
    err = m ** (1.0 / p)
    return float(err), float(err / (p * m) * se_m)


def _as_values(x):
    return x.values if isinstance(x, SchemePath) else np.asarray(x, dtype=np.float64)


def path_differences(reference: SchemePath, approx: SchemePath, mode: str = "terminal",
                     component: int | None = 0):
    """Reference minus approximation, at the terminal time or the worst grid point.

    In ``sup_on_grid`` mode the approximation's own grid points are compared
    with the reference at the same times; the reference grid must contain them.
    """
    ref, app = _as_values(reference), _as_values(approx)
    if mode == "terminal":
        d = (ref[-1] if ref.ndim == 2 else ref) - (app[-1] if app.ndim == 2 else app)
        d = np.atleast_1d(d)
    elif mode == "sup_on_grid":
        if ref.ndim != 2 or app.ndim != 2:
            raise GridMismatchError("sup_on_grid needs whole paths")
        n_ref, n_app = ref.shape[0] - 1, app.shape[0] - 1
        if n_app <= 0 or n_ref % n_app:
            raise GridMismatchError(f"{n_app}-step grid is not contained in {n_ref}-step grid")
        d = ref[:: n_ref // n_app] - app
        if component is not None:
            return float(np.max(np.abs(d[:, component])))
        return float(np.max(np.sqrt((d * d).sum(axis=1))))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if component is not None:
        return float(d[component])
    return float(np.sqrt((d * d).sum()))


def strong_error(pairs: Iterable, p: float = 2.0, mode: str = "terminal",
                 component: int | None = 0):
    """L^p strong error over ``(reference, approx)`` pairs; returns ``(error, std_error)``.

    Elements of a pair are scalars, state vectors or :class:`SchemePath`.
    """
    diffs = [path_differences(r, a, mode, component) for r, a in pairs]
    if not diffs:
        raise ValueError("strong_error needs at least one pair")
    return lp_error(np.array(diffs), p)


def error_ratio(standard: ErrorTable, candidate: ErrorTable,
                standard_label: str | None = None, candidate_label: str | None = None):
    """Candidate error as a percentage of the standard error, per grid size."""
    if standard_label is not None:
        standard = standard.select(standard_label)
    if candidate_label is not None:
        candidate = candidate.select(candidate_label)
    base = {r.n: r.error for r in standard.rows}
    cand = {r.n: r.error for r in candidate.rows}
    if len(base) != len(standard.rows) or len(cand) != len(candidate.rows):
        raise ValueError("each table must hold one row per n; pass a label to select")
    if set(base) != set(cand):
        raise ValueError(f"grid sizes differ: {sorted(base)} vs {sorted(cand)}")
    out = []
    for n in sorted(base):
        if base[n] == 0.0:
            raise ZeroDivisionError(f"standard error estimate is zero at n={n}")
        out.append((n, 100.0 * cand[n] / base[n]))
    return out


def paired_ratio(d_standard, d_candidate):
    """``100 * ||d_candidate||_2 / ||d_standard||_2`` with a paired delta-method error."""
    a = np.asarray(d_candidate, dtype=np.float64) ** 2
    b = np.asarray(d_standard, dtype=np.float64) ** 2
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need paired samples of equal length >= 2")
    ma, mb = a.mean(), b.mean()
    if mb == 0.0:
        raise ZeroDivisionError("standard error estimate is zero")
    ratio = np.sqrt(ma / mb)
    # d ratio = ratio/2 * (da/ma - db/mb)
    cov = np.cov(np.vstack([a, b]), ddof=1) / a.size
    g = np.array([1.0 / ma, -1.0 / mb]) * 0.5 * ratio
    var = float(g @ cov @ g) if ma > 0 else 0.0
    return 100.0 * float(ratio), 100.0 * np.sqrt(max(var, 0.0))


def fit_rate(table, errors=None):
    """Least-squares fit of log2(error) on log2(n): ``(slope, intercept, r_squared)``.

    Accepts an :class:`ErrorTable` holding one estimator, or arrays ``(ns, errors)``.
    """
    if isinstance(table, ErrorTable):
        if len(table.labels) > 1:
            raise ValueError("fit_rate needs a single-estimator table")
        ns, errs = table.as_arrays()
    else:
        ns, errs = np.asarray(table, dtype=float), np.asarray(errors, dtype=float)
    if len(np.unique(ns)) < 3:
        raise ValueError("need at least 3 distinct grid sizes")
    if np.any(errs <= 0) or np.any(ns <= 0):
        raise ValueError("errors and grid sizes must be positive for a log fit")
    x, y = np.log2(ns), np.log2(errs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def weak_error(samples_a, samples_b, known_constant: float = 0.0):
    """``mean(a - b) + known_constant`` with the paired standard error."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("no samples")
    d = a - b
    se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
    return float(d.mean() + known_constant), float(se)


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    raw: float
    clamped: bool


def rho_l2(samples: Sequence | np.ndarray, bounds=(0.0, 2.0)) -> RhoEstimate:
    """Empirical L2-optimal weight for ``F_bar(eps) - rho (F_bar(0) - F(0))``.

    ``samples`` rows are ``(F_eps_ref, F_eps_bar, F0, F0_bar)`` where the
    fine reference stands in for the unknown ``F_eps``. The weight is
    ``E[(F_eps - F_eps_bar)(F0 - F0_bar)] / E[(F0_bar - F0)^2]``.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 4:
        raise ValueError("samples must have shape (M, 4)")
    eps_err = s[:, 0] - s[:, 1]
    base_err = s[:, 2] - s[:, 3]
    den = np.mean(base_err * base_err)
    if den == 0.0:
        raise ZeroDivisionError("base discretisation error is identically zero")
    raw = float(np.mean(eps_err * base_err) / den)
    lo, hi = bounds
    value = min(max(raw, lo), hi)
    return RhoEstimate(value=value, raw=raw, clamped=value != raw)


def weighted_control(f_eps_bar, f0_bar, f0, rho: float):
    return np.asarray(f_eps_bar) - rho * (np.asarray(f0_bar) - np.asarray(f0))
