import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import THETA_STAR
from sisabc import _kernels as K
from sisabc.abc import (DrawSet, InitializationError, McmcConfig, Prior, Problem, SchemaError,
                        abc_likelihood, conditional_mle, default_epsilon, local_epsilon,
                        max_discrepancy, mcmc_chain, pilot, read_draws, rejection_sample,
                        thin_and_burn, threshold_filter, write_draws)
from sisabc.model import State, simulate
from sisabc.rng import kernel_state

NEAR_STAR = Prior(THETA_STAR.as_array() * 0.5, THETA_STAR.as_array() * 1.5)


def test_prior_validation():
    with pytest.raises(ValueError):
        Prior(0.5, 0.4)
    with pytest.raises(ValueError):
        Prior(-0.1, 1.0)
    assert Prior().contains(np.full(6, 0.5))
    assert not Prior().contains(np.r_[np.full(5, 0.5), 1.01])


def test_likelihood_extremes(problem):
    bound = max_discrepancy(problem)
    assert abc_likelihood(THETA_STAR, problem, 50, bound, np.random.default_rng(0)) == 1.0
    assert abc_likelihood(THETA_STAR, problem, 50, 0.0, np.random.default_rng(0)) == 0.0


def test_likelihood_one_in_four(problem):
    d = K.discrepancies_at(*problem.args, THETA_STAR.as_array(), problem.observed, 4,
                           kernel_state(np.random.default_rng(8)))
    lo, second = np.sort(d)[:2]
    assert lo < second
    eps = (lo + second) / 2
    assert abc_likelihood(THETA_STAR, problem, 4, eps, np.random.default_rng(8)) == 0.25


def test_max_discrepancy_is_an_upper_bound(problem):
    bound = max_discrepancy(problem)
    res = rejection_sample(problem, Prior(), 20_000, math.inf, 3)
    assert res.all_discrepancies.max() <= bound
    assert bound < 1e6


def test_default_epsilon_only_for_reference_length(problem, fixture_net, training):
    assert default_epsilon(problem) == 23.0
    short = Problem.from_series(fixture_net, training[:, :10])
    with pytest.raises(ValueError, match="explicitly"):
        default_epsilon(short)


def test_rejection_huge_epsilon_accepts_everything(problem):
    res = rejection_sample(problem, Prior(), 2000, max_discrepancy(problem), 1)
    assert res.acceptance_rate == 1.0
    assert len(res.accepted) == res.n_draws == 2000


def test_rejection_narrow_prior(problem):
    prior = Prior(np.full(6, 0.3), np.full(6, 0.3 + 1e-3))
    res = rejection_sample(problem, prior, 500, math.inf, 2)
    assert np.all((res.accepted.params >= 0.3) & (res.accepted.params <= 0.301))


def test_rejection_zero_acceptance_is_not_fatal(problem):
    res = rejection_sample(problem, Prior(), 300, 0.0, 2)
    assert len(res.accepted) == 0
    assert "no draw accepted" in res.diagnostic


def test_rejection_worker_invariance(problem):
    a = rejection_sample(problem, Prior(), 3500, 30.0, 12, workers=1)
    b = rejection_sample(problem, Prior(), 3500, 30.0, 12, workers=4)
    assert a.accepted == b.accepted
    assert np.array_equal(a.all_discrepancies, b.all_discrepancies)


def test_likelihood_average_matches_acceptance_rate(problem):
    eps = pilot(problem, NEAR_STAR, 4000, 5, quantiles=(0.3,)).values[0]
    n_rej = 20_000
    rate = rejection_sample(problem, NEAR_STAR, n_rej, eps, 6).acceptance_rate
    rng = np.random.default_rng(7)
    thetas = NEAR_STAR.sample(rng, 2000)
    lik = np.array([abc_likelihood(t, problem, 10, eps, rng) for t in thetas])
    se = math.sqrt(rate * (1 - rate) / n_rej + lik.var(ddof=1) / lik.size)
    assert 0.1 < rate < 0.5
    assert abs(rate - lik.mean()) < 3 * se


def test_mcmc_tiny_proposal_never_moves(problem):
    cfg = McmcConfig(iterations=2000, burn_in=0, thin=1, epsilon=10.0, proposal_sd=1e-15, master_seed=4)
    res = mcmc_chain(problem, Prior(), cfg, initial=THETA_STAR, keep_all=True)
    assert np.ptp(res.draws.params, axis=0).max() < 1e-12


def test_mcmc_initialization_failure(problem):
    cfg = McmcConfig(iterations=10, burn_in=0, thin=1, epsilon=1e-9, master_seed=1, init_cap=200)
    with pytest.raises(InitializationError, match="larger epsilon"):
        mcmc_chain(problem, Prior(), cfg)


def test_mcmc_retained_states_within_tolerance(problem):
    cfg = McmcConfig(iterations=20_000, burn_in=1000, thin=10, epsilon=3.0, master_seed=2)
    res = mcmc_chain(problem, Prior(), cfg, initial=THETA_STAR)
    assert len(res.draws) == cfg.retained
    assert np.all(res.draws.discrepancy <= 3.0)
    assert np.all(np.diff(res.draws.iteration) == 10)
    assert 0 < res.acceptance_rate < 1


def test_mcmc_worker_invariance(problem):
    cfg = McmcConfig(iterations=5000, burn_in=500, thin=5, epsilon=4.0, master_seed=9, chains=3)
    a = mcmc_chain(problem, Prior(), cfg, initial=THETA_STAR, workers=1)
    b = mcmc_chain(problem, Prior(), cfg, initial=THETA_STAR, workers=3)
    assert a.draws == b.draws
    assert np.array_equal(a.draws.chain, b.draws.chain)
    assert a.draws.iteration.max() >= 2 * 5000


def test_thinning_on_the_fly_matches_post_hoc(problem):
    kw = dict(iterations=3000, epsilon=4.0, master_seed=5, chains=2)
    full = mcmc_chain(problem, Prior(), McmcConfig(burn_in=0, thin=1, **kw), initial=THETA_STAR, keep_all=True)
    thinned = mcmc_chain(problem, Prior(), McmcConfig(burn_in=300, thin=7, **kw), initial=THETA_STAR)
    assert thin_and_burn(full.draws, 300, 7) == thinned.draws


def test_thin_and_burn_rules():
    n = 10
    d = DrawSet(np.zeros((n, 6)), np.zeros(n), np.arange(n), np.ones(n, bool))
    assert thin_and_burn(d, 0, 1) == d
    assert thin_and_burn(d, 2, 3).iteration.tolist() == [2, 5, 8]
    with pytest.raises(ValueError):
        thin_and_burn(d, 10, 1)
    assert McmcConfig(iterations=10**7, burn_in=10**5, thin=200).retained == 49_500


def test_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        McmcConfig(thin=0)
    with pytest.raises(ValueError):
        McmcConfig(epsilon=0)
    with pytest.raises(ValueError):
        McmcConfig(proposal_sd=0)


def _draws(disc, eps=math.inf):
    n = len(disc)
    return DrawSet(np.random.default_rng(0).random((n, 6)), disc, np.arange(n), np.ones(n, bool), eps)


def test_filter_examples():
    d = _draws(np.array([0.5, 2.0, 1.0, 3.0]), 3.0)
    assert threshold_filter(d, 3.0) == d
    assert len(threshold_filter(d, 0.0)) == 0
    assert threshold_filter(d, 1.0).discrepancy.tolist() == [0.5, 1.0]
    assert threshold_filter(d, 1.0).epsilon == 1.0
    with pytest.raises(ValueError, match="exceeds"):
        threshold_filter(d, 3.5)


@given(arrays(float, st.integers(0, 50), elements=st.floats(0, 10)), st.floats(0, 10), st.floats(0, 10))
def test_filter_monotone(disc, e1, e2):
    d = _draws(disc, 10.0)
    hi, lo = max(e1, e2), min(e1, e2)
    a, b = threshold_filter(d, hi), threshold_filter(d, lo)
    assert len(a) >= len(b)
    assert set(b.iteration.tolist()) <= set(a.iteration.tolist())
    assert np.all(np.diff(a.iteration) > 0)


def test_draws_csv_roundtrip(tmp_path):
    d = _draws(np.array([0.25, 1.5, 2.75]), 3.0)
    write_draws(d, tmp_path / "d.csv", "# header\n")
    back = read_draws(tmp_path / "d.csv")
    assert back == d and back.epsilon == 3.0


def test_draws_schema_error(tmp_path):
    (tmp_path / "d.csv").write_text("iteration,a,b\n1,2,3\n")
    with pytest.raises(SchemaError):
        read_draws(tmp_path / "d.csv")


def test_conditional_mle_recovers_long_series(fixture_net, full_series):
    init = State.on(fixture_net, full_series.states[:, 0])
    tr = simulate(fixture_net, THETA_STAR, init, "2014-12", 600, np.random.default_rng(1))
    est = conditional_mle(fixture_net, tr.to_series()).as_array()
    err = np.abs(est - THETA_STAR.as_array())
    assert np.all(err < [0.03, 0.03, 0.015, 0.015, 0.002, 0.002])


def test_local_epsilon_is_a_quantile(problem):
    e = local_epsilon(problem, THETA_STAR, 0.5, 1000, np.random.default_rng(0))
    lik = abc_likelihood(THETA_STAR, problem, 4000, e, np.random.default_rng(1))
    assert abs(lik - 0.5) < 0.05
