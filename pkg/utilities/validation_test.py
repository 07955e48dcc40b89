import numpy as np
import pytest

from algorithms.MCMC_sampler.posterior_quantiles import QuantileModel
from utilities.validation import (
    check_density, check_gradient, check_posterior_quantiles,
    check_simulator_law, check_stationary_distribution, finite_differences,
    random_families, random_instance, run_validation)

QUICK = {'gradient_instances': 3, 'density_settings': 3, 'law_draws': 20000,
         'law_z': 4.5, 'replications': 20, 'quantile_events': 500,
         'quantile_players': 4}


@pytest.mark.parametrize('method', ['central', 'forward', 'backward'])
def test_finite_differences(method):
    def f(x):
        return x[0] ** 2 + 3. * x[0] * x[1]
    x = np.array([1., 2.])
    tol = 1e-8 if method == 'central' else 1e-4
    np.testing.assert_allclose(finite_differences(f, x, 1e-5, method),
                               [8., 3.], atol=tol)


def test_random_instance(rng):
    design, coeffs = random_instance(rng, max_predictors=10, max_events=50)
    assert 2 <= design.n_predictors <= 10
    assert 1 <= design.n_rows <= 50
    assert design.X_home.multiply(design.X_away).sum() == 0
    assert np.all(coeffs.omega[design.omega_fixed] == 0.)


def test_random_families_reach_large_sigma_lambda(rng):
    families = random_families(rng, 6)
    assert len(families) == 18
    products = [f.lam * np.sqrt(f.sigma2) for f in families[2::3]]
    assert sum(p > 8 for p in products) >= 2


def test_gradient_suite():
    result = check_gradient(5, seed=3)
    assert result.passed
    assert result.detail == {'instances': 5}


def test_density_suite():
    assert check_density(5, seed=2).passed


def test_simulator_law_suite():
    result = check_simulator_law(20000, seed=1, z=4.5)
    assert result.passed
    assert len(result.detail['settings']) == 10


def test_run_validation_without_sampler():
    results = run_validation(QUICK, seed=0, include_sampler=False,
                             progress=False)
    assert [r.name for r in results] == ['gradient', 'density',
                                         'simulator_law']
    assert all(r.passed for r in results)
    assert results[2].threshold == 4.5
    assert set(results[0].to_dict()) == {'name', 'passed', 'statistic',
                                         'threshold', 'detail'}


@pytest.mark.slow
def test_stationary_distribution():
    result = check_stationary_distribution(n_draws=400000, seed=1)
    assert result.passed, result.statistic


@pytest.mark.slow
def test_posterior_quantile_suite():
    result = check_posterior_quantiles(
        40, seed=2, model=QuantileModel(n_players=6, n_events=1000),
        progress=False)
    assert result.passed
    assert result.detail['replications'] == 40
