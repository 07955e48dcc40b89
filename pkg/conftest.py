import os

import numpy as np
import pytest

from algorithms.MCMC_sampler.gibbs_sampler import PosteriorSamples
from case_studies.NHL.event_store import load_events, load_roster
from case_studies.synthetic_league.systems import LeagueSystem, small_recipe

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                        'test_functions', 'fixtures')


@pytest.fixture(scope='session')
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope='session')
def fixture_roster():
    return load_roster(os.path.join(FIXTURES, 'roster.csv'))


@pytest.fixture(scope='session')
def fixture_events(fixture_roster):
    return load_events(os.path.join(FIXTURES, 'events.csv'), fixture_roster)


@pytest.fixture(scope='session')
def small_league():
    """4 teams, 12 games, 720 events; shared, so tests must not mutate it."""
    return LeagueSystem(small_recipe(seed=3)).simulate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fake_samples(omega, delta, labels=None, groups=None, omega_fixed=None,
                 blocks=(), block_kinds=(), lam=None, sigma2=None):
    """PosteriorSamples from (chain, draw, predictor) arrays of omega and delta."""
    omega = np.asarray(omega, dtype=float)
    delta = np.asarray(delta, dtype=float)
    C, N, P = omega.shape
    K = len(blocks)
    labels = labels or ['P%d' % p for p in range(P)]
    groups = groups or ['Center'] * P
    omega_fixed = np.zeros(P, dtype=bool) if omega_fixed is None \
        else omega_fixed
    return PosteriorSamples(
        labels, groups, omega_fixed, list(blocks), list(block_kinds),
        omega, delta, np.full((C, N, 2, 3), -7.3),
        np.full((C, N, K), np.nan) if lam is None else lam,
        np.full((C, N, K), np.nan) if sigma2 is None else sigma2,
        np.zeros((C, N)), np.zeros((C, N)), np.full((C, P), 0.3),
        np.full((C, 3), 0.3))


@pytest.fixture
def make_samples():
    return fake_samples
