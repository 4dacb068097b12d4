import numpy as np
import pytest

from accelsde.errorlab import (
    ErrorRow,
    ErrorTable,
    error_ratio,
    fit_rate,
    lp_error,
    paired_ratio,
    path_differences,
    rho_l2,
    strong_error,
    weak_error,
    weighted_control,
)
from accelsde.schemes import GridMismatchError, SchemePath


def _table(label, ns, errs):
    return ErrorTable(tuple(ErrorRow(n, label, e, 0.0, 10) for n, e in zip(ns, errs)))


def test_strong_error_zero_and_hand_value():
    assert strong_error([(1.0, 1.0), (2.0, 2.0)]) == (0.0, 0.0)
    err, _ = strong_error([(0.0, 1.0), (0.0, -1.0)])
    assert err == 1.0


def test_lp_error_scale_equivariant():
    d = np.random.default_rng(1).standard_normal(500)
    e1, s1 = lp_error(d, 3)
    e2, s2 = lp_error(-2.5 * d, 3)
    assert e2 == pytest.approx(2.5 * e1, rel=1e-12)
    assert s2 == pytest.approx(2.5 * s1, rel=1e-12)
    with pytest.raises(ValueError):
        lp_error([], 2)


def test_sup_mode():
    t = np.linspace(0, 1, 5)
    ref = SchemePath(t, np.array([[0.0], [1.0], [2.0], [3.0], [4.0]]), "ref", 0.0)
    app = SchemePath(t[::2], np.array([[0.0], [2.5], [3.0]]), "app", 0.0)
    assert path_differences(ref, app, "sup_on_grid") == 1.0
    bad = SchemePath(np.linspace(0, 1, 4), np.zeros((4, 1)), "bad", 0.0)
    with pytest.raises(GridMismatchError):
        path_differences(ref, bad, "sup_on_grid")


def test_error_table_sorted_and_non_negative():
    t = ErrorTable((ErrorRow(16, "b", 1.0, 0.1, 5), ErrorRow(8, "b", 2.0, 0.1, 5),
                    ErrorRow(8, "a", 3.0, 0.1, 5)))
    assert [(r.estimator_label, r.n) for r in t.rows] == [("a", 8), ("b", 8), ("b", 16)]
    with pytest.raises(ValueError):
        ErrorRow(8, "a", -1.0, 0.0, 1)


def test_error_ratio():
    ns = [8, 16, 32]
    std = _table("std", ns, [3.0, 2.0, 1.0])
    assert [r for _, r in error_ratio(std, std)] == [100.0, 100.0, 100.0]
    assert [r for _, r in error_ratio(std, _table("ref", ns, [0, 0, 0]))] == [0.0, 0.0, 0.0]
    with pytest.raises(ZeroDivisionError):
        error_ratio(_table("z", ns, [0, 1, 1]), std)


def test_paired_ratio_identity():
    d = np.random.default_rng(2).standard_normal(100)
    pct, se = paired_ratio(d, d)
    assert pct == pytest.approx(100.0) and se == pytest.approx(0.0, abs=1e-9)


def test_fit_rate_planted_slopes():
    ns = np.array([8, 16, 32, 64, 128, 256])
    slope, _, r2 = fit_rate(ns, ns ** -0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12) and r2 == pytest.approx(1.0)
    slope, intercept, _ = fit_rate(_table("x", ns, 3.0 / ns))
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert intercept == pytest.approx(np.log2(3.0), abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate([8, 16], [1.0, 0.5])


def test_weak_error():
    a = np.arange(10.0)
    assert weak_error(a, a, 2.5) == (2.5, 0.0)
    assert weak_error(a + 1, a) == (1.0, 0.0)
    with pytest.raises(ValueError):
        weak_error(a, a[:5])


def test_rho_l2_cases():
    rng = np.random.default_rng(3)
    f0, f0_bar = rng.standard_normal(100), rng.standard_normal(100)
    err = f0 - f0_bar
    fe_bar = rng.standard_normal(100)
    s = np.column_stack([fe_bar + err, fe_bar, f0, f0_bar])
    assert rho_l2(s).value == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ZeroDivisionError):
        rho_l2(np.column_stack([fe_bar, fe_bar, f0, f0]))
    clamped = rho_l2(np.column_stack([fe_bar + 5 * err, fe_bar, f0, f0_bar]))
    assert clamped.clamped and clamped.value == 2.0 and clamped.raw == pytest.approx(5.0)


def test_rho_l2_minimises_grid_objective():
    rng = np.random.default_rng(4)
    base_err = rng.standard_normal(5000)
    eps_err = 0.8 * base_err + 0.3 * rng.standard_normal(5000)
    f0 = rng.standard_normal(5000)
    fe_bar = rng.standard_normal(5000)
    s = np.column_stack([fe_bar + eps_err, fe_bar, f0, f0 - base_err])
    rho = rho_l2(s).value
    grid = np.round(np.arange(0, 2.0001, 0.01), 2)
    obj = [np.mean((s[:, 0] - weighted_control(s[:, 1], s[:, 3], s[:, 2], r)) ** 2) for r in grid]
    best = grid[int(np.argmin(obj))]
    assert abs(best - rho) <= 0.005 + 1e-12
    at_rho = np.mean((s[:, 0] - weighted_control(s[:, 1], s[:, 3], s[:, 2], rho)) ** 2)
    assert at_rho <= min(obj) + 1e-12


def _sabr_call_quadruples(seed, m, n=16, n_ref=1024):
    from accelsde.brownian import coarsen_increments, sample_increments
    from accelsde.models import SabrParams, gbm_exact_values, sabr_logvol_model
    from accelsde.schemes import simulate

    p = SabrParams(100.0, 1.0, 0.16, 0.1, -0.6)
    model = sabr_logvol_model(p)
    f = lambda s: np.maximum(s - 100.0, 0.0)
    inc = sample_increments(seed, range(m), n_ref, 2, 1.0)
    coarse = coarsen_increments(inc, n_ref // n, axis=1)
    ref = f(simulate(model, 0.1, inc, 1 / n_ref)[:, 0])
    bar = f(simulate(model, 0.1, coarse, 1 / n)[:, 0])
    base = f(100.0 * gbm_exact_values(inc[..., 0], 0.4, 1.0, 1 / n_ref)[:, -1])
    base_bar = f(simulate(model, 0.0, coarse, 1 / n)[:, 0])
    return np.column_stack([ref, bar, base, base_bar])


def test_rho_hat_out_of_sample():
    rho = rho_l2(_sabr_call_quadruples(1, 10_000)).value
    ev = _sabr_call_quadruples(2, 10_000)
    sq = lambda r: (ev[:, 0] - weighted_control(ev[:, 1], ev[:, 3], ev[:, 2], r)) ** 2
    diff = sq(rho) - sq(1.0)
    se = diff.std(ddof=1) / np.sqrt(diff.size)
    print(f"rho_hat={rho:.4f} mean sq-error change={diff.mean():.3e} (se {se:.1e})")
    assert diff.mean() <= 3 * se
