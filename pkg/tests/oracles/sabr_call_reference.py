"""Brute-force single-level reference for the beta=1 SABR call.

Independent of the package: its own RNG (PCG64), its own Euler loop. The
printed numbers are frozen into tests/test_acceptance.py.

    python tests/oracles/sabr_call_reference.py --paths 10000000 --steps 1024
"""

import argparse
import math
import time

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=10_000_000)
    ap.add_argument("--steps", type=int, default=1024)
    ap.add_argument("--chunk", type=int, default=500_000)
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()

    s0, alpha0, nu, rho, horizon, strike = 100.0, 0.16, 0.1, -0.6, 1.0, 100.0
    dt = horizon / args.steps
    sq = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - rho * rho)
    rng = np.random.default_rng(args.seed)

    total = total_sq = 0.0
    dig = dig_sq = 0.0
    done = 0
    t0 = time.time()
    while done < args.paths:
        m = min(args.chunk, args.paths - done)
        s = np.full(m, s0)
        a = np.zeros(m)
        for _ in range(args.steps):
            z = rng.standard_normal((2, m)) * sq
            vol = np.sqrt(alpha0 * np.exp(a))
            s = np.maximum(s + vol * s * z[0], 0.0)
            a = a - 0.5 * nu * nu * dt + nu * (rho * z[0] + rho_c * z[1])
        pay = np.maximum(s - strike, 0.0)
        total += pay.sum()
        total_sq += (pay * pay).sum()
        d = (s >= strike).astype(float)
        dig += d.sum()
        dig_sq += (d * d).sum()
        done += m
        print(f"{done} paths, {time.time() - t0:.0f}s", flush=True)

    for name, s1, s2 in (("call", total, total_sq), ("digital", dig, dig_sq)):
        mean = s1 / done
        var = (s2 - done * mean * mean) / (done - 1)
        print(f"{name}: mean={mean!r} std_error={math.sqrt(var / done)!r}")


if __name__ == "__main__":
    main()
