"""Euler-Maruyama and Milstein stepping, plain and accelerated.

The accelerated path is ``X(eps) - X(0) + base``: both discretisations read
the same increments, so their common bias cancels and what is left is the
error of the base path plus an O(eps) remainder. The base path is always
supplied by the caller (exact GBM, a Milstein CEV path, ...).

All stepping goes through :func:`simulate`, which works on a batch of
increment arrays of shape ``(paths, steps, factors)``; the single-path
functions wrap it with a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brownian import IncrementLattice, coarsen, coarsen_increments, mix_increments
from .models import (
    SabrParams,
    SdeModel,
    cev_base_model,
    gbm_exact_values,
    sabr_logvol_model,
    scaled_base_model,
)

__all__ = [
    "SchemePath",
    "SchemeExplosionError",
    "GridMismatchError",
    "simulate",
    "euler_maruyama",
    "milstein",
    "accelerated_em",
    "accelerated_milstein",
    "sabr_hybrid_tilde",
    "sabr_hybrid_check",
    "sabr_reference",
    "sabr_tilde_batch",
    "sabr_check_batch",
    "coupled_pair",
]

EM = "em"
MILSTEIN = "milstein"


class SchemeExplosionError(FloatingPointError):
    def __init__(self, step: int, label: str = ""):
        self.step = step
        super().__init__(f"non-finite state at step {step}" + (f" of {label}" if label else ""))


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SchemePath:
    """Values of a discretised path on ``grid_times``; ``values`` has shape (n+1, N)."""

    grid_times: np.ndarray
    values: np.ndarray
    label: str = ""
    eps: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        grid = np.asarray(self.grid_times, dtype=np.float64)
        if grid.shape[0] != values.shape[0]:
            raise ValueError("grid_times and values disagree in length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid_times", grid)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def restrict(self, n: int) -> "SchemePath":
        """The same path read at the points of an ``n``-step sub-grid."""
        if n <= 0 or self.n_steps % n:
            raise GridMismatchError(f"{n}-step grid is not contained in {self.n_steps}-step grid")
        stride = self.n_steps // n
        return SchemePath(self.grid_times[::stride], self.values[::stride], self.label, self.eps)


def simulate(model: SdeModel, eps, increments, dt, x0=None, *, method=EM, record_stride=None):
    """Step ``model`` over raw increments of shape ``(P, n, d)``.

    Returns the terminal state ``(P, N)`` or, with ``record_stride=s``, the
    states at steps ``0, s, 2s, ..., n`` with shape ``(P, n//s + 1, N)``.
    Non-finite values are propagated, never raised; callers decide.
    """
    inc = increments
    if inc.ndim != 3 or inc.shape[2] != model.factor_dim:
        raise ValueError(
            f"increments must have shape (paths, steps, {model.factor_dim}), got {inc.shape}")
    if model.correlation is not None:
        inc = mix_increments(inc, model.correlation)
    n_paths, n_steps, _ = inc.shape
    if method == MILSTEIN:
        if model.factor_dim != 1 or model.milstein_correction is None:
            raise ValueError("Milstein stepping needs a one-factor model with a milstein_correction")
    elif method != EM:
        raise ValueError(f"unknown method {method!r}")
    if record_stride is not None and n_steps % record_stride:
        raise ValueError(f"record_stride {record_stride} does not divide {n_steps}")

    start = model.initial_state if x0 is None else x0
    x = np.empty((n_paths, model.state_dim))
    x[:] = np.asarray(start, dtype=np.float64)
    record = None
    if record_stride is not None:
        record = np.empty((n_paths, n_steps // record_stride + 1, model.state_dim))
        record[:, 0] = x

    one_factor = model.factor_dim == 1
    absorbing = list(model.absorbing)
    steps = np.moveaxis(inc, 1, 0)
    for i in range(n_steps):
        dw = steps[i]
        sig = model.diffusion(x, eps)
        if one_factor:
            noise = sig[..., 0] * dw
        else:
            noise = (sig * dw[:, None, :]).sum(axis=-1)
        x_new = x + model.drift(x, eps) * dt + noise
        if method == MILSTEIN:
            x_new += 0.5 * model.milstein_correction(x, eps) * (dw * dw - dt)
        if absorbing:
            x_new[:, absorbing] = np.maximum(x_new[:, absorbing], 0.0)
        x = x_new
        if record is not None and (i + 1) % record_stride == 0:
            record[:, (i + 1) // record_stride] = x
    return x if record is None else record


def _check_finite(values: np.ndarray, label: str):
    bad = ~np.isfinite(values).all(axis=-1)
    if bad.any():
        raise SchemeExplosionError(int(np.argmax(bad)) - 1, label)


def _single(model, eps, lattice, x0, method, label) -> SchemePath:
    if lattice.n_factors != model.factor_dim:
        raise ValueError(
            f"lattice has {lattice.n_factors} factors, model needs {model.factor_dim}")
    values = simulate(model, eps, lattice.increments[None], lattice.dt, x0,
                      method=method, record_stride=1)[0]
    _check_finite(values, label)
    return SchemePath(lattice.grid_times, values, label, eps)


def euler_maruyama(model: SdeModel, eps, lattice: IncrementLattice, x0=None) -> SchemePath:
    """Euler-Maruyama path of ``model`` at perturbation ``eps`` on ``lattice``."""
    return _single(model, eps, lattice, x0, EM, "euler_maruyama")


def milstein(model: SdeModel, eps, lattice: IncrementLattice, x0=None) -> SchemePath:
    """One-factor Milstein path: the Euler step plus ``sigma sigma' (dB^2 - dt) / 2``."""
    if model.milstein_correction is None:
        raise ValueError(f"model {model.label!r} has no milstein_correction")
    return _single(model, eps, lattice, x0, MILSTEIN, "milstein")


def _base_on_grid(base: SchemePath, lattice: IncrementLattice) -> np.ndarray:
    if base.n_steps % lattice.n_steps or not np.isclose(
            base.grid_times[-1], lattice.total_time, rtol=1e-12, atol=0.0):
        raise GridMismatchError(
            f"base path grid ({base.n_steps} steps to t={base.grid_times[-1]}) does not "
            f"contain the {lattice.n_steps}-step grid to t={lattice.total_time}")
    return base.values[:: base.n_steps // lattice.n_steps]


def _accelerated(model, eps, lattice, x0, base_exact, method, label):
    base = _base_on_grid(base_exact, lattice)
    pert = _single(model, eps, lattice, x0, method, label)
    zero = _single(model, 0.0, lattice, x0, method, label)
    if base.shape != pert.values.shape:
        raise GridMismatchError(
            f"base path has {base.shape[1]} components, model has {pert.values.shape[1]}")
    return SchemePath(lattice.grid_times, pert.values - zero.values + base, label, eps)


def accelerated_em(model, eps, lattice, x0, base_exact: SchemePath) -> SchemePath:
    """``EM(eps) - EM(0) + base``; ``base_exact`` may live on a finer grid."""
    return _accelerated(model, eps, lattice, x0, base_exact, EM, "accelerated_em")


def accelerated_milstein(model, eps, lattice, x0, base_exact: SchemePath) -> SchemePath:
    return _accelerated(model, eps, lattice, x0, base_exact, MILSTEIN, "accelerated_milstein")


# --- SABR hybrids -----------------------------------------------------------

def sabr_reference(params: SabrParams, increments, dt, record_stride=None):
    """Euler path of the SABR price at eps = nu on raw 2-factor increments (P, n, 2)."""
    out = simulate(sabr_logvol_model(params), params.nu, increments, dt,
                   record_stride=record_stride)
    return out[..., 0]


def _coarse(increments, n):
    m = increments.shape[1]
    if n <= 0 or m % n:
        raise GridMismatchError(f"{n}-step grid does not divide the {m}-step lattice")
    return coarsen_increments(increments, m // n, axis=1), m // n


def sabr_tilde_batch(params: SabrParams, increments, dt, n, base_grid="coarse"):
    """Components of the tilde hybrid on the ``n``-grid for a batch of lattices.

    Returns a dict of ``(P, n+1)`` arrays: ``standard`` (Euler at eps = nu),
    ``zero`` (Euler at eps = 0), ``base`` (Milstein CEV) and ``tilde`` =
    standard - zero + base. ``base_grid="reference"`` runs the Milstein base
    on the full lattice and reads it at the ``n``-grid points.
    """
    coarse, k = _coarse(increments, n)
    coarse_dt = dt * k
    sabr = sabr_logvol_model(params)
    standard = simulate(sabr, params.nu, coarse, coarse_dt, record_stride=1)[..., 0]
    zero = simulate(sabr, 0.0, coarse, coarse_dt, record_stride=1)[..., 0]
    cev = cev_base_model(params)
    if base_grid == "coarse":
        base = simulate(cev, 0.0, coarse[..., :1], coarse_dt, method=MILSTEIN, record_stride=1)
    elif base_grid == "reference":
        base = simulate(cev, 0.0, increments[..., :1], dt, method=MILSTEIN, record_stride=k)
    else:
        raise ValueError(f"base_grid must be 'coarse' or 'reference', got {base_grid!r}")
    base = base[..., 0]
    return {"standard": standard, "zero": zero, "base": base,
            "tilde": standard - zero + base}


def sabr_check_batch(params: SabrParams, increments, dt, n, standard=None):
    """Components of the check hybrid ``S(eps) - s0 (L_euler - L_exact)`` on the ``n``-grid."""
    coarse, k = _coarse(increments, n)
    coarse_dt = dt * k
    if standard is None:
        standard = simulate(sabr_logvol_model(params), params.nu, coarse, coarse_dt,
                            record_stride=1)[..., 0]
    lmodel = scaled_base_model(params)
    l_euler = simulate(lmodel, 0.0, coarse[..., :1], coarse_dt, record_stride=1)[..., 0]
    vol = np.sqrt(params.alpha0) * params.s0 ** (params.beta - 1.0)
    l_exact = gbm_exact_values(increments[..., 0], vol, 1.0, dt)[..., ::k]
    return {"standard": standard, "l_euler": l_euler, "l_exact": l_exact,
            "check": standard - params.s0 * (l_euler - l_exact)}


def _sabr_single(params, lattice, n, key, label, **kw):
    if lattice.n_factors != 2:
        raise ValueError("SABR hybrids need a 2-factor lattice")
    batch = kw.pop("batch_fn")
    values = batch(params, lattice.increments[None], lattice.dt, n, **kw)[key][0]
    _check_finite(values[:, None], label)
    grid = coarsen(lattice, lattice.n_steps // n).grid_times
    return SchemePath(grid, values, label, params.nu)


def sabr_hybrid_tilde(params: SabrParams, lattice: IncrementLattice, n: int,
                      base_grid: str = "coarse") -> SchemePath:
    """Price path ``S_euler(nu) - S_euler(0) + S_milstein(0)`` on the ``n``-step grid."""
    return _sabr_single(params, lattice, n, "tilde", "sabr_tilde",
                        batch_fn=sabr_tilde_batch, base_grid=base_grid)


def sabr_hybrid_check(params: SabrParams, lattice: IncrementLattice, n: int) -> SchemePath:
    """Price path ``S_euler(nu) - s0 (L_euler - L_exact)`` with ``L`` the scaled GBM."""
    return _sabr_single(params, lattice, n, "check", "sabr_check", batch_fn=sabr_check_batch)


def coupled_pair(model, eps, fine_lattice, k, scheme=EM, accel=False, base_exact=None, x0=None):
    """Fine path on ``fine_lattice`` and coarse path on its ``k``-fold coarsening."""
    coarse_lattice = coarsen(fine_lattice, k)
    if accel:
        if base_exact is None:
            raise ValueError("accelerated coupling needs base_exact")
        run = accelerated_milstein if scheme == MILSTEIN else accelerated_em
        return (run(model, eps, fine_lattice, x0, base_exact),
                run(model, eps, coarse_lattice, x0, base_exact))
    run = milstein if scheme == MILSTEIN else euler_maruyama
    return run(model, eps, fine_lattice, x0), run(model, eps, coarse_lattice, x0)
