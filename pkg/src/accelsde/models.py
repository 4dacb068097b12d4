"""Perturbed SDE models and closed forms for their log-normal base laws.

Coefficient functions are vectorised over leading axes: ``state`` has shape
``(..., N)``, ``drift`` returns ``(..., N)``, ``diffusion`` returns
``(..., N, d)`` and ``milstein_correction`` (sigma * dsigma/dx, one-factor
models only) returns ``(..., N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .brownian import IncrementLattice

__all__ = [
    "SdeModel",
    "SabrParams",
    "sabr_logvol_model",
    "cev_base_model",
    "scaled_base_model",
    "gbm_model",
    "perturbed_gbm_model",
    "gbm_exact_values",
    "gbm_exact_path",
    "gbm_call_price",
    "gbm_digital_price",
    "gbm_smoothed_digital_price",
]

Coefficient = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SdeModel:
    """``dX = b(X, eps) dt + sigma(X, eps) dB`` with ``X(0) = initial_state``.

    ``absorbing`` lists state components that are clamped at zero after every
    step (so a component that reaches 0 stays there when its diffusion
    vanishes at 0). ``correlation``, when set, means the model is written
    against the correlated driver of :func:`~accelsde.brownian.mix_increments`;
    the schemes mix raw increments before stepping.
    """

    state_dim: int
    factor_dim: int
    drift: Coefficient
    diffusion: Coefficient
    milstein_correction: Coefficient | None = None
    label: str = ""
    initial_state: tuple[float, ...] | None = None
    absorbing: tuple[int, ...] = ()
    correlation: float | None = None

    def __post_init__(self):
        if self.state_dim < 1 or self.factor_dim < 1:
            raise ValueError("state_dim and factor_dim must be positive")
        if self.initial_state is not None and len(self.initial_state) != self.state_dim:
            raise ValueError("initial_state length does not match state_dim")


@dataclass(frozen=True)
class SabrParams:
    s0: float
    beta: float
    alpha0: float
    nu: float
    rho: float
    horizon: float = 1.0

    def __post_init__(self):
        errors = []
        if not self.s0 > 0:
            errors.append(f"s0 must be positive, got {self.s0}")
        if not 0 < self.beta <= 1:
            errors.append(f"beta must lie in (0, 1], got {self.beta}")
        if not self.alpha0 > 0:
            errors.append(f"alpha0 must be positive, got {self.alpha0}")
        if not self.nu >= 0:
            errors.append(f"nu must be non-negative, got {self.nu}")
        if not -1 <= self.rho <= 1:
            errors.append(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.horizon > 0:
            errors.append(f"horizon must be positive, got {self.horizon}")
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def scaled(cls, s0=100.0, beta=0.9, alpha0_base=0.16, nu=0.1, rho=-0.6, horizon=1.0):
        """Parameters with ``alpha0 = alpha0_base * s0**(2(1-beta))``."""
        return cls(s0, beta, alpha0_base * s0 ** (2.0 * (1.0 - beta)), nu, rho, horizon)


def _cev_power(s, beta):
    return np.maximum(s, 0.0) ** beta


def sabr_logvol_model(params: SabrParams) -> SdeModel:
    """SABR with log-transformed variance; state ``(S, log(alpha/alpha0))``, eps = nu.

    The second factor is the correlated driver ``rho dB1 + sqrt(1-rho^2) dB2``.
    """
    alpha0, beta = params.alpha0, params.beta

    def drift(x, eps):
        out = np.zeros_like(x)
        out[..., 1] = -0.5 * eps * eps
        return out

    def diffusion(x, eps):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = np.sqrt(alpha0 * np.exp(x[..., 1])) * _cev_power(x[..., 0], beta)
        out[..., 1, 1] = eps
        return out

    return SdeModel(
        state_dim=2,
        factor_dim=2,
        drift=drift,
        diffusion=diffusion,
        label=f"sabr_logvol(beta={beta}, alpha0={alpha0:g})",
        initial_state=(params.s0, 0.0),
        absorbing=(0,),
        correlation=params.rho,
    )


def cev_base_model(params: SabrParams) -> SdeModel:
    """The price equation of the SABR model at nu = 0: ``dS = sqrt(alpha0) S^beta dB1``."""
    vol, beta = math.sqrt(params.alpha0), params.beta

    def drift(x, eps):
        return np.zeros_like(x)

    def diffusion(x, eps):
        return (vol * _cev_power(x, beta))[..., None]

    def milstein_correction(x, eps):
        s = np.maximum(x, 0.0)
        with np.errstate(divide="ignore"):
            out = params.alpha0 * beta * s ** (2.0 * beta - 1.0)
        return np.where(s > 0.0, out, 0.0)

    return SdeModel(1, 1, drift, diffusion, milstein_correction,
                    label=f"cev(beta={beta})", initial_state=(params.s0,), absorbing=(0,))


def gbm_model(vol: float, x0: float = 1.0, label: str | None = None) -> SdeModel:
    """Driftless geometric Brownian motion ``dX = vol X dB`` (eps is ignored)."""

    def drift(x, eps):
        return np.zeros_like(x)

    def diffusion(x, eps):
        return (vol * x)[..., None]

    def milstein_correction(x, eps):
        return vol * vol * x

    return SdeModel(1, 1, drift, diffusion, milstein_correction,
                    label=label or f"gbm(vol={vol:g})", initial_state=(x0,))


def scaled_base_model(params: SabrParams) -> SdeModel:
    """GBM for ``L0 = S0/s0`` with volatility ``sqrt(alpha0) * s0**(beta-1)``, started at 1."""
    vol = math.sqrt(params.alpha0) * params.s0 ** (params.beta - 1.0)
    return gbm_model(vol, 1.0, label=f"scaled_gbm(vol={vol:g})")


def perturbed_gbm_model(base_vol: float = 0.4, x0: float = 1.0) -> SdeModel:
    """``dX = (base_vol + eps) X dB``: exactly solvable for every eps."""

    def drift(x, eps):
        return np.zeros_like(x)

    def diffusion(x, eps):
        return ((base_vol + eps) * x)[..., None]

    def milstein_correction(x, eps):
        v = base_vol + eps
        return v * v * x

    return SdeModel(1, 1, drift, diffusion, milstein_correction,
                    label=f"perturbed_gbm(vol={base_vol:g}+eps)", initial_state=(x0,))


def gbm_exact_values(increments, vol: float, x0: float, dt: float):
    """Exact driftless GBM on the lattice grid: ``x0 exp(vol W_t - vol^2 t / 2)``.

    ``increments`` has the time axis last; the output has one more entry on
    that axis (the initial value).
    """
    inc = np.asarray(increments, dtype=np.float64)
    w = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
    np.cumsum(inc, axis=-1, out=w[..., 1:])
    t = np.arange(inc.shape[-1] + 1) * dt
    return x0 * np.exp(vol * w - 0.5 * vol * vol * t)


def gbm_exact_path(lattice: IncrementLattice, vol: float, x0: float, factor: int = 0):
    """Closed-form GBM path driven by one factor of ``lattice``."""
    from .schemes import SchemePath

    values = gbm_exact_values(lattice.increments[:, factor], vol, x0, lattice.dt)
    return SchemePath(lattice.grid_times, values[:, None], label=f"gbm_exact(vol={vol:g})", eps=0.0)


def gbm_call_price(s0: float, strike: float, vol: float, maturity: float) -> float:
    """``E[max(S_T - K, 0)]`` for driftless log-normal ``S_T`` started at ``s0``."""
    if strike <= 0:
        return s0 - strike
    sd = vol * math.sqrt(maturity)
    if sd == 0:
        return max(s0 - strike, 0.0)
    d1 = (math.log(s0 / strike) + 0.5 * sd * sd) / sd
    return float(s0 * ndtr(d1) - strike * ndtr(d1 - sd))


def gbm_digital_price(s0: float, strike: float, vol: float, maturity: float) -> float:
    """``P(S_T >= K)`` for driftless log-normal ``S_T``."""
    if strike <= 0:
        return 1.0
    sd = vol * math.sqrt(maturity)
    if sd == 0:
        return 1.0 if s0 >= strike else 0.0
    return float(ndtr((math.log(s0 / strike) - 0.5 * sd * sd) / sd))


def gbm_smoothed_digital_price(s0, strike, h, vol, maturity) -> float:
    """Expectation of the ramp payoff rising from 0 at ``K-h`` to 1 at ``K+h``.

    The ramp is a call spread, so the price is
    ``(call(K-h) - call(K+h)) / (2h)`` exactly.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    lo = gbm_call_price(s0, strike - h, vol, maturity)
    hi = gbm_call_price(s0, strike + h, vol, maturity)
    return (lo - hi) / (2.0 * h)
