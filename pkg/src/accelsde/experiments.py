"""Experiment drivers shared by the CLI and the acceptance suite.

Strong-error runs process paths in fixed-size chunks: each chunk's fine
lattices are generated once and every parameter variant, grid size and
scheme is evaluated on them, so all comparisons are paired path by path.
Chunk size is fixed (not tied to the thread count) which keeps the results
independent of how the work is scheduled.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np
from scipy import integrate

from .brownian import sample_increments
from .errorlab import ErrorRow, ErrorTable, lp_error, paired_ratio
from .models import SabrParams
from .schemes import sabr_check_batch, sabr_reference, sabr_tilde_batch

__all__ = [
    "StrongErrorData",
    "sabr_strong_errors",
    "error_table",
    "ratio_rows",
    "sabr_path_demo",
    "gbm_expectation",
    "sweep_variants",
]

STRONG_CHUNK = 250
SCHEMES = ("standard", "tilde", "check")


@dataclass
class StrongErrorData:
    """Per-path differences ``reference - scheme``.

    ``terminal[variant][scheme][n]`` and ``sup[variant][scheme][n]`` are
    arrays over the retained paths (the same paths for every entry).
    """

    grids: list[int]
    n_ref: int
    samples: int
    excluded: int = 0
    terminal: dict = field(default_factory=dict)
    sup: dict = field(default_factory=dict)
    wall_ms: dict = field(default_factory=dict)

    @property
    def retained(self) -> int:
        return self.samples - self.excluded


def _chunk_diffs(variants, inc, dt, grids, n_ref, base_grid, schemes):
    stride = reduce(math.gcd, [n_ref // n for n in grids])
    out, timing = {}, {}
    finite = np.ones(inc.shape[0], dtype=bool)
    for name, params in variants.items():
        t0 = time.perf_counter()
        ref = sabr_reference(params, inc, dt, record_stride=stride)
        timing[(name, "reference")] = time.perf_counter() - t0
        finite &= np.isfinite(ref).all(axis=1)
        per = {s: {"terminal": {}, "sup": {}} for s in schemes}
        for n in grids:
            t0 = time.perf_counter()
            tilde = sabr_tilde_batch(params, inc, dt, n, base_grid=base_grid)
            t_tilde = time.perf_counter() - t0
            paths = {"standard": tilde["standard"], "tilde": tilde["tilde"]}
            if "check" in schemes:
                t0 = time.perf_counter()
                paths["check"] = sabr_check_batch(params, inc, dt, n,
                                                  standard=tilde["standard"])["check"]
                timing[(name, "check", n)] = time.perf_counter() - t0
            timing[(name, "standard", n)] = t_tilde / 2
            timing[(name, "tilde", n)] = t_tilde / 2
            ref_n = ref[:, :: (n_ref // n) // stride]
            for s in schemes:
                d = ref_n - paths[s]
                finite &= np.isfinite(d).all(axis=1)
                per[s]["terminal"][n] = d[:, -1]
                per[s]["sup"][n] = np.abs(d).max(axis=1)
        out[name] = per
    return out, finite, timing


def sabr_strong_errors(variants: dict[str, SabrParams], grids, n_ref: int, samples: int,
                       seed: int, base_grid: str = "coarse", schemes=SCHEMES,
                       threads: int = 1, chunk: int = STRONG_CHUNK) -> StrongErrorData:
    """Paired strong-error differences against the ``n_ref`` Euler reference.

    Path ``j`` uses lattice ``(seed, j)`` with ``n_ref`` steps; coarse schemes
    run on its coarsenings. Paths with a non-finite value in any variant or
    scheme are dropped everywhere and counted in ``excluded``.
    """
    grids = sorted(int(n) for n in grids)
    if any(n_ref % n for n in grids):
        raise ValueError(f"every grid size must divide n_ref={n_ref}")
    horizons = {p.horizon for p in variants.values()}
    if len(horizons) != 1:
        raise ValueError("all variants must share the horizon")
    horizon = horizons.pop()
    dt = horizon / n_ref
    schemes = tuple(s for s in SCHEMES if s in schemes)
    if "standard" not in schemes:
        schemes = ("standard",) + schemes
    starts = list(range(0, samples, chunk))

    def run(start):
        idx = range(start, min(start + chunk, samples))
        inc = sample_increments(seed, idx, n_ref, 2, horizon)
        return _chunk_diffs(variants, inc, dt, grids, n_ref, base_grid, schemes)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]

    mask = np.concatenate([p[1] for p in parts])
    data = StrongErrorData(grids, n_ref, samples, excluded=int((~mask).sum()))
    for name in variants:
        data.terminal[name] = {s: {} for s in schemes}
        data.sup[name] = {s: {} for s in schemes}
        for s in schemes:
            for n in grids:
                for mode, store in (("terminal", data.terminal), ("sup", data.sup)):
                    full = np.concatenate([p[0][name][s][mode][n] for p in parts])
                    store[name][s][n] = full[mask]
    for _, _, timing in parts:
        for key, sec in timing.items():
            data.wall_ms[key] = data.wall_ms.get(key, 0.0) + 1000.0 * sec
    return data


def error_table(data: StrongErrorData, variant: str, mode: str = "terminal", p: float = 2.0,
                timing: bool = False) -> ErrorTable:
    store = data.terminal if mode == "terminal" else data.sup
    rows = []
    for scheme, by_n in store[variant].items():
        for n, d in by_n.items():
            err, se = lp_error(d, p)
            ms = int(round(data.wall_ms.get((variant, scheme, n), 0.0))) if timing else 0
            rows.append(ErrorRow(n, scheme, err, se, int(d.size), ms))
    return ErrorTable(tuple(rows))


def ratio_rows(data: StrongErrorData, variant: str, scheme: str, mode: str = "terminal"):
    """``[(n, percent, std_error)]`` of ``scheme`` against standard Euler, paired."""
    store = data.terminal if mode == "terminal" else data.sup
    out = []
    for n in data.grids:
        pct, se = paired_ratio(store[variant]["standard"][n], store[variant][scheme][n])
        out.append((n, pct, se))
    return out


def sabr_path_demo(params: SabrParams, n: int, n_ref: int, seed: int, path_index: int = 0,
                   reference_points: int | None = None):
    """One lattice: the reference path and the n-step standard, tilde and check paths."""
    inc = sample_increments(seed, [path_index], n_ref, 2, params.horizon)
    dt = params.horizon / n_ref
    points = reference_points or n_ref
    if n_ref % points:
        raise ValueError("reference_points must divide n_ref")
    ref = sabr_reference(params, inc, dt, record_stride=n_ref // points)[0]
    tilde = sabr_tilde_batch(params, inc, dt, n)
    check = sabr_check_batch(params, inc, dt, n, standard=tilde["standard"])
    return {
        "reference": ref,
        "standard": tilde["standard"][0],
        "tilde": tilde["tilde"][0],
        "check": check["check"][0],
    }


def gbm_expectation(f, s0: float, vol: float, maturity: float) -> float:
    """``E[f(S_T)]`` for driftless log-normal ``S_T`` by Gauss-Kronrod quadrature."""
    sd = vol * math.sqrt(maturity)

    def integrand(z):
        s = s0 * math.exp(sd * z - 0.5 * sd * sd)
        return float(f(np.array(s))) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    val, _ = integrate.quad(integrand, -12.0, 12.0, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def sweep_variants(base: SabrParams, key: str, values, rescale_alpha0: float | None = None):
    """Parameter variants along ``nu`` or ``beta``.

    For a beta sweep with ``rescale_alpha0`` set, alpha0 follows
    ``rescale_alpha0 * s0**(2(1-beta))``.
    """
    out = {}
    for v in values:
        if key == "nu":
            out[f"nu={v:g}"] = replace(base, nu=float(v))
        elif key == "beta":
            alpha0 = base.alpha0 if rescale_alpha0 is None else \
                rescale_alpha0 * base.s0 ** (2.0 * (1.0 - v))
            out[f"beta={v:g}"] = replace(base, beta=float(v), alpha0=alpha0)
        else:
            raise ValueError(f"cannot sweep {key!r}")
    return out
