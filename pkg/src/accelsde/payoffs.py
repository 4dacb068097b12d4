"""Terminal payoffs and the smooth/irregular split used for localisation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Regularity",
    "Payoff",
    "LocalizedPayoff",
    "european_call",
    "digital",
    "smoothed_digital",
    "tanh_payoff",
    "sine_payoff",
    "zero_payoff",
    "localize",
    "second_order_bound_check",
    "C2_PAYOFFS",
]


class Regularity(str, enum.Enum):
    C2_BOUNDED = "C2_bounded"
    LIPSCHITZ = "Lipschitz"
    DISCONTINUOUS = "Discontinuous"


@dataclass(frozen=True)
class Payoff:
    """A function of the first state component.

    ``grad_bound`` and ``hess_bound`` are sup-norms of f' and f'' and are set
    only for C2-bounded payoffs.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    regularity: Regularity
    label: str
    lipschitz: float | None = None
    grad_bound: float | None = None
    hess_bound: float | None = None

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class LocalizedPayoff:
    original: Payoff
    smooth_part: Payoff
    irregular_part: Payoff


def european_call(strike: float) -> Payoff:
    return Payoff(lambda x: np.maximum(x - strike, 0.0), Regularity.LIPSCHITZ,
                  f"call(K={strike:g})", lipschitz=1.0)


def digital(strike: float) -> Payoff:
    """Indicator of ``x >= strike`` (closed at the strike)."""
    return Payoff(lambda x: np.where(x >= strike, 1.0, 0.0), Regularity.DISCONTINUOUS,
                  f"digital(K={strike:g})")


def smoothed_digital(strike: float, h: float = 1.0) -> Payoff:
    """Ramp from 0 at ``strike - h`` to 1 at ``strike + h``, written as a call spread."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")

    def f(x):
        return (np.maximum(x - strike + h, 0.0) - np.maximum(x - strike - h, 0.0)) / (2.0 * h)

    return Payoff(f, Regularity.LIPSCHITZ, f"smoothed_digital(K={strike:g},h={h:g})",
                  lipschitz=1.0 / (2.0 * h))


def tanh_payoff(center: float = 100.0, scale: float = 10.0) -> Payoff:
    """``tanh((x - center) / scale)``; |f'| <= 1/scale, |f''| <= 4/(3 sqrt 3) / scale^2."""
    return Payoff(lambda x: np.tanh((x - center) / scale), Regularity.C2_BOUNDED,
                  f"tanh(c={center:g},s={scale:g})", lipschitz=1.0 / scale,
                  grad_bound=1.0 / scale, hess_bound=4.0 / (3.0 * math.sqrt(3.0)) / scale ** 2)


def sine_payoff() -> Payoff:
    return Payoff(np.sin, Regularity.C2_BOUNDED, "sin", lipschitz=1.0,
                  grad_bound=1.0, hess_bound=1.0)


def zero_payoff() -> Payoff:
    return Payoff(np.zeros_like, Regularity.C2_BOUNDED, "zero", lipschitz=0.0,
                  grad_bound=0.0, hess_bound=0.0)


C2_PAYOFFS: dict[str, Callable[[], Payoff]] = {
    "tanh": tanh_payoff,
    "sin": sine_payoff,
}


def localize(f: Payoff, f_s: Payoff) -> LocalizedPayoff:
    """Split ``f`` into ``f_s`` plus the remainder ``f - f_s``."""

    def remainder(x):
        return f.evaluate(x) - f_s.evaluate(x)

    if f.regularity is Regularity.DISCONTINUOUS or f_s.regularity is Regularity.DISCONTINUOUS:
        reg = Regularity.DISCONTINUOUS
    elif f.regularity is Regularity.LIPSCHITZ or f_s.regularity is Regularity.LIPSCHITZ:
        reg = Regularity.LIPSCHITZ
    else:
        reg = Regularity.C2_BOUNDED
    lip = None
    if f.lipschitz is not None and f_s.lipschitz is not None:
        lip = f.lipschitz + f_s.lipschitz
    irregular = Payoff(remainder, reg, f"{f.label}-{f_s.label}", lipschitz=lip)
    return LocalizedPayoff(original=f, smooth_part=f_s, irregular_part=irregular)


def second_order_bound_check(f: Payoff, x1, y1, y2, x2):
    """Check the second-order difference bound for a C2-bounded payoff.

    |f(x1) - f(y1) + f(y2) - f(x2)|
        <= |f''|/2 (|x1 - x2| + |y1 - y2|) |x1 - y1| + |f'| |x1 - y1 + y2 - x2|

    Returns a bool for scalar input, a boolean array otherwise. The left side
    is allowed a few ulps of rounding slack.
    """
    if f.grad_bound is None or f.hess_bound is None:
        raise ValueError(f"payoff {f.label!r} carries no derivative bounds")
    x1, y1, y2, x2 = (np.asarray(v, dtype=np.float64) for v in (x1, y1, y2, x2))
    v1, w1, w2, v2 = f(x1), f(y1), f(y2), f(x2)
    lhs = np.abs(v1 - w1 + w2 - v2)
    rhs = (0.5 * f.hess_bound * (np.abs(x1 - x2) + np.abs(y1 - y2)) * np.abs(x1 - y1)
           + f.grad_bound * np.abs(x1 - y1 + y2 - x2))
    slack = 8.0 * np.finfo(float).eps * (np.abs(v1) + np.abs(w1) + np.abs(w2) + np.abs(v2))
    ok = lhs <= rhs + slack
    return bool(ok) if ok.ndim == 0 else ok
