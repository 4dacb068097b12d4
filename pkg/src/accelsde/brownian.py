"""Seeded Brownian increment lattices.

Every path owns a Philox counter-based stream keyed by ``(seed, path_index)``;
the counter walks the ``(step, factor)`` grid in row-major order. Any path can
therefore be regenerated on its own, and batches can be produced in any order
or on any worker without shared state.

Gaussians are produced by inverting the normal CDF with Wichura's AS241
(PPND16) rational approximation applied to 53-bit uniforms, so the numbers
depend only on integer arithmetic plus a fixed sequence of float operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "IncrementLattice",
    "sample_lattice",
    "sample_increments",
    "coarsen",
    "coarsen_increments",
    "mix_correlated",
    "mix_increments",
    "normal_ppf",
    "uniforms_from_bits",
    "level_stream",
]

_U64 = (1 << 64) - 1

# AS241 / PPND16 coefficients.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


_COEF = {
    name: np.array(vals, dtype=np.float64)
    for name, vals in (("A", _A), ("B", _B), ("C", _C), ("D", _D), ("E", _E), ("F", _F))
}


@numba.njit(cache=True)
def _ratio(num_c, den_c, r):
    num = num_c[7]
    den = den_c[7]
    for j in range(6, -1, -1):
        num = num * r + num_c[j]
        den = den * r + den_c[j]
    return num / den


@numba.njit(cache=True)
def _ppf_kernel(u, out, A, B, C, D, E, F):
    for i in range(u.size):
        p = u[i]
        q = p - 0.5
        if abs(q) <= 0.425:
            out[i] = q * _ratio(A, B, 0.180625 - q * q)
        else:
            r = np.sqrt(-np.log(p if q < 0.0 else 1.0 - p))
            if r <= 5.0:
                v = _ratio(C, D, r - 1.6)
            else:
                v = _ratio(E, F, r - 5.0)
            out[i] = -v if q < 0.0 else v


def normal_ppf(u):
    """Inverse standard normal CDF (AS241) for ``u`` in the open unit interval."""
    u = np.asarray(u, dtype=np.float64)
    flat = np.ascontiguousarray(u).ravel()
    out = np.empty_like(flat)
    c = _COEF
    _ppf_kernel(flat, out, c["A"], c["B"], c["C"], c["D"], c["E"], c["F"])
    return out.reshape(u.shape)


def uniforms_from_bits(bits):
    """Map raw 64-bit words to doubles strictly inside (0, 1): ``(k + 1/2) / 2**52``.

    52 bits, not 53: ``2**53 - 1/2`` is not a double and would round to 1.
    """
    top = (np.asarray(bits, dtype=np.uint64) >> np.uint64(12)).astype(np.float64)
    return (top + 0.5) * 2.0 ** -52


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _raw_stream(seed: int, path_index: int, count: int) -> np.ndarray:
    if not 0 <= path_index <= _U64:
        raise ValueError(f"path_index must be an unsigned 64-bit integer, got {path_index}")
    bg = np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64))
    return bg.random_raw(count)


def level_stream(level: int, index: int) -> int:
    """Stream index for sample ``index`` of an MLMC level; levels never share streams."""
    if level < 0 or index < 0 or index >= 1 << 48:
        raise ValueError("level and index must be non-negative, index < 2**48")
    return (level + 1) << 48 | index


@dataclass(frozen=True, eq=False)
class IncrementLattice:
    """Brownian increments ``B(t_{i+1}) - B(t_i)`` on an equidistant grid."""

    seed: int
    path_index: int
    n_steps: int
    n_factors: int
    dt: float
    increments: np.ndarray
    correlation: float | None = None

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.shape != (self.n_steps, self.n_factors):
            raise ValueError(
                f"increments shape {inc.shape} != ({self.n_steps}, {self.n_factors})")
        if inc.flags.writeable:
            inc = inc.copy()
            inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def total_time(self) -> float:
        return self.dt * self.n_steps

    @property
    def grid_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


def _validate_shape(n_steps: int, n_factors: int, total_time: float):
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    if int(n_factors) != n_factors or n_factors < 1:
        raise ValueError(f"n_factors must be a positive integer, got {n_factors}")
    if not total_time > 0:
        raise ValueError(f"total_time must be positive, got {total_time}")


def sample_increments(seed, path_indices, n_steps, n_factors, total_time):
    """Increments for a batch of paths, shape ``(len(path_indices), n_steps, n_factors)``.

    Row ``j`` equals ``sample_lattice(seed, path_indices[j], ...).increments``
    bit for bit.
    """
    _validate_shape(n_steps, n_factors, total_time)
    seed = _check_seed(seed)
    indices = [int(i) for i in np.atleast_1d(path_indices)]
    count = n_steps * n_factors
    bits = np.empty((len(indices), count), dtype=np.uint64)
    for row, idx in enumerate(indices):
        bits[row] = _raw_stream(seed, idx, count)
    dt = total_time / n_steps
    z = normal_ppf(uniforms_from_bits(bits))
    z *= np.sqrt(dt)
    return z.reshape(len(indices), n_steps, n_factors)


def sample_lattice(seed, path_index, n_steps, n_factors, total_time) -> IncrementLattice:
    inc = sample_increments(seed, [path_index], n_steps, n_factors, total_time)[0]
    return IncrementLattice(
        seed=_check_seed(seed),
        path_index=int(path_index),
        n_steps=int(n_steps),
        n_factors=int(n_factors),
        dt=total_time / n_steps,
        increments=inc,
    )


def _prime_factors(k: int) -> list[int]:
    out, p = [], 2
    while p * p <= k:
        while k % p == 0:
            out.append(p)
            k //= p
        p += 1
    if k > 1:
        out.append(k)
    return out


def coarsen_increments(increments, k: int, axis: int = -2):
    """Sum blocks of ``k`` consecutive steps along ``axis``.

    Blocks are summed by cascading over the prime factors of ``k`` in
    ascending order, so coarsening by 2 twice is bitwise equal to coarsening
    by 4.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"coarsening factor must be a positive integer, got {k}")
    inc = np.moveaxis(np.asarray(increments, dtype=np.float64), axis, 0)
    n = inc.shape[0]
    if n % k:
        raise ValueError(f"coarsening factor {k} does not divide {n} steps")
    for p in _prime_factors(int(k)):
        blocks = inc.reshape((inc.shape[0] // p, p) + inc.shape[1:])
        acc = blocks[:, 0].copy()
        for j in range(1, p):
            acc += blocks[:, j]
        inc = acc
    return np.moveaxis(inc, 0, axis)


def coarsen(lattice: IncrementLattice, k: int) -> IncrementLattice:
    if k == 1:
        return lattice
    inc = coarsen_increments(lattice.increments, k, axis=0)
    return IncrementLattice(
        seed=lattice.seed,
        path_index=lattice.path_index,
        n_steps=lattice.n_steps // k,
        n_factors=lattice.n_factors,
        dt=lattice.dt * k,
        increments=inc,
        correlation=lattice.correlation,
    )


def _check_rho(rho: float):
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")


def mix_increments(increments, rho: float):
    """Replace the second factor by ``rho*dB1 + sqrt(1-rho^2)*dB2`` (last axis = factor)."""
    _check_rho(rho)
    inc = np.asarray(increments, dtype=np.float64)
    if inc.shape[-1] != 2:
        raise ValueError(f"correlation mixing needs exactly 2 factors, got {inc.shape[-1]}")
    out = inc.copy()
    out[..., 1] = rho * inc[..., 0] + np.sqrt(1.0 - rho * rho) * inc[..., 1]
    return out


def mix_correlated(lattice: IncrementLattice, rho: float) -> IncrementLattice:
    if lattice.n_factors != 2:
        raise ValueError(f"correlation mixing needs exactly 2 factors, got {lattice.n_factors}")
    return IncrementLattice(
        seed=lattice.seed,
        path_index=lattice.path_index,
        n_steps=lattice.n_steps,
        n_factors=2,
        dt=lattice.dt,
        increments=mix_increments(lattice.increments, rho),
        correlation=float(rho),
    )
