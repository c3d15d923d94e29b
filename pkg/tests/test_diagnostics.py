import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import THETA_STAR
from sisabc.abc import DrawSet, McmcConfig, Prior, mcmc_chain
from sisabc.diagnostics import (autocorrelation, effective_sample_size, pairwise_density_grid,
                                percent, posterior_summary, tolerance_sensitivity)


def drawset(params, disc=None, eps=np.inf):
    params = np.asarray(params, dtype=float)
    n = params.shape[0]
    disc = np.zeros(n) if disc is None else disc
    return DrawSet(params, disc, np.arange(n), np.ones(n, bool), eps)


def test_constant_draws():
    rep = posterior_summary(np.tile(THETA_STAR.as_array(), (5, 1)))
    assert np.allclose(rep.mean, THETA_STAR.as_array())
    assert np.all(rep.sd == 0)


def test_two_draw_mean():
    m = np.full((2, 6), 0.5)
    m[:, 0] = [0.2, 0.4]
    assert posterior_summary(m).mean[0] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        posterior_summary(m[:1])


def test_report_format():
    mean = np.array([0.258, 0.3067, 0.0618, 0.0406, 0.0072, 0.0062])
    rep = posterior_summary(np.vstack([mean, mean]))
    lines = rep.table().splitlines()
    assert lines[1] == "Recovery\t25.8%\t30.67%\t+4.87%"
    assert lines[2] == "Neighbouring infectivity\t6.18%\t4.06%\t-2.12%"
    assert lines[3] == "Distant infectivity\t0.72%\t0.62%\t-0.1%"
    assert rep.delta == pytest.approx(mean[1::2] - mean[0::2])
    assert "recovery_summer,0.258," in rep.to_text()


def test_percent():
    assert percent(0.0) == "0%"
    assert percent(0.5) == "50%"
    assert percent(-0.001) == "-0.1%"
    assert percent(0.0487, signed=True) == "+4.87%"


@settings(max_examples=30)
@given(st.integers(0, 2**32))
def test_summary_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    m = rng.random((40, 6))
    a, b = posterior_summary(m), posterior_summary(m[rng.permutation(40)])
    for f in ("mean", "sd", "q025", "q50", "q975"):
        assert np.allclose(getattr(a, f), getattr(b, f), rtol=0, atol=1e-14)
    assert np.all(a.q025 <= a.q50) and np.all(a.q50 <= a.q975)


def test_autocorrelation_examples():
    rng = np.random.default_rng(0)
    x = rng.normal(size=10_000)
    r = autocorrelation(x, 5)
    assert r[0] == pytest.approx(1.0)
    assert abs(r[1]) < 0.05
    alt = np.tile([1.0, -1.0], 500)
    # the biased estimator shrinks lag k by (n - k) / n
    assert autocorrelation(alt, 1)[1] == pytest.approx(-(alt.size - 1) / alt.size)
    assert autocorrelation(alt, 1)[1] < -0.99
    with pytest.raises(ValueError, match="zero variance"):
        autocorrelation(np.ones(10), 2)
    with pytest.raises(ValueError):
        autocorrelation(x[:3], 3)


def test_autocorrelation_matches_direct_sum():
    x = np.random.default_rng(1).normal(size=200).cumsum()
    r = autocorrelation(x, 10)
    d = x - x.mean()
    direct = [np.dot(d[: d.size - k], d[k:]) / np.dot(d, d) for k in range(11)]
    assert np.allclose(r, direct, atol=1e-12)


def test_ess_examples():
    rng = np.random.default_rng(2)
    n = 10_000
    assert 0.8 * n <= effective_sample_size(rng.normal(size=n)) <= 1.2 * n
    blocky = np.repeat(rng.normal(size=n // 10), 10)
    assert effective_sample_size(blocky) == pytest.approx(n / 10, rel=0.3)
    assert effective_sample_size(np.tile([1.0, -1.0], n // 2)) > n
    with pytest.raises(ValueError, match="zero variance"):
        effective_sample_size(np.ones(100))


def test_ess_ar1():
    # AR(1) with phi: tau = (1 + phi) / (1 - phi)
    rng = np.random.default_rng(3)
    phi, n = 0.8, 50_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    assert effective_sample_size(x) == pytest.approx(n * (1 - phi) / (1 + phi), rel=0.15)


def test_density_grid():
    rng = np.random.default_rng(4)
    grid = pairwise_density_grid(drawset(np.tile(THETA_STAR.as_array(), (50, 1))), 10)
    assert all((grid.marginal[i] > 0).sum() == 1 for i in range(6))
    assert all((g > 0).sum() == 1 for g in grid.pair.values())

    x = rng.uniform(0.2, 0.8, 5000)
    m = rng.uniform(0, 1, (5000, 6))
    m[:, 0] = x
    m[:, 1] = np.clip(1.0 - x + rng.normal(0, 0.05, x.size), 0, 1)
    grid = pairwise_density_grid(m, 20, Prior())
    for i in range(6):
        assert abs(grid.marginal[i].sum() - 1) < 1e-12
    for g in grid.pair.values():
        assert abs(g.sum() - 1) < 1e-12
    assert grid.correlation(0, 1) < -0.9
    assert grid.correlation(1, 0) == grid.correlation(0, 1)
    assert abs(grid.correlation(2, 3)) < 0.1
    with pytest.raises(ValueError):
        pairwise_density_grid(m, 1)
    with pytest.raises(ValueError):
        pairwise_density_grid(np.empty((0, 6)), 5)


def test_tolerance_identity_and_monotonicity():
    rng = np.random.default_rng(5)
    disc = rng.uniform(0, 10, 2000)
    params = rng.uniform(0, 0.1, (2000, 6))
    params[:, 0] += 0.05 * disc  # parameter grows with discrepancy
    d = drawset(params, disc, 10.0)
    rows = tolerance_sensitivity(d, [10.0, 8.0, 6.0, 4.0, 2.0])
    ref = posterior_summary(d)
    assert rows[0].retained == 2000
    assert np.array_equal(rows[0].mean, ref.mean)
    assert np.array_equal(rows[0].lower, ref.q025) and np.array_equal(rows[0].upper, ref.q975)
    assert all(a.retained >= b.retained for a, b in zip(rows, rows[1:]))
    means = [r.mean[0] for r in rows]
    assert all(a > b for a, b in zip(means, means[1:]))
    with pytest.raises(ValueError, match="descending"):
        tolerance_sensitivity(d, [2.0, 4.0])
    with pytest.raises(ValueError, match="exceeds"):
        tolerance_sensitivity(d, [11.0])
    empty = tolerance_sensitivity(d, [1e-9])[0]
    assert empty.retained == 0 and np.isnan(empty.lower).all()


def test_thinning_reduces_lag_one_autocorrelation(problem):
    cfg = McmcConfig(iterations=100_000, burn_in=0, thin=1, epsilon=4.0, master_seed=3)
    chain = mcmc_chain(problem, Prior(), cfg, initial=THETA_STAR, keep_all=True).draws
    for k in range(6):
        x = chain.params[:, k]
        assert autocorrelation(x[::200], 1)[1] <= autocorrelation(x, 1)[1]
