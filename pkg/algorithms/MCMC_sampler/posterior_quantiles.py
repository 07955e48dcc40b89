"""
Sampler self-validation by posterior quantiles.

Each replication draws player coefficients from the prior, simulates a
small dataset from them, runs the sampler with the hyperparameters and
intercepts held at their true values, and records where the truth falls
among the retained draws. For a correct sampler these quantiles are
Uniform(0, 1); uniformity is checked per parameter with a KS test and a
Bonferroni adjustment over parameters.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import sparse as sp
from scipy import stats
from tqdm import tqdm

from algorithms.competing_hazards.likelihood import N_STATES, Coefficients
from algorithms.MCMC_sampler.gibbs_sampler import ChainConfig, GibbsSampler
from algorithms.shrinkage.shrinkage import (
    GroupShrinkage, PenaltyFamily, sample_prior)
from case_studies.NHL.design import (
    Design, Group, ModelSpec, PredictorKind, Registry)
from case_studies.synthetic_league.systems import sample_outcomes
from utilities.errors import ConfigError
from utilities.general_utility_functions import spawn_generators

logger = logging.getLogger(__name__)

MIN_REPLICATIONS = 20


@dataclass
class QuantileModel:
    """Small model used by the protocol: Center-group players only."""
    n_players: int = 10
    n_idle: int = 0
    n_events: int = 5000
    players_per_side: int = 2
    intercept: float = -6.
    shift_median_s: float = 40.
    shift_log_sd: float = 0.5
    family: PenaltyFamily = field(
        default_factory=lambda: PenaltyFamily.l1l2(2., 0.25))

    def __post_init__(self):
        if self.n_players < 2 * self.players_per_side:
            raise ConfigError('need at least %d players on the ice'
                              % (2 * self.players_per_side))
        if self.n_events < 1:
            raise ConfigError('n_events must be positive')

    @property
    def n_parameters(self):
        return 2 * (self.n_players + self.n_idle)


def quantile_chain_config(**overrides):
    """Chain settings for one replication: fixed hyperparameters and intercepts."""
    settings = dict(n_chains=1, burn_in=200, thin=4, min_kept=200,
                    enforce_floor=False, fixed_hyperparameters=True,
                    fix_intercepts=True, init_jitter=0., progress=False)
    settings.update(overrides)
    return ChainConfig(**settings)


def random_design(model, rng):
    """Design over the model's players with random lines; outcomes are zero."""
    registry = Registry()
    n_total = model.n_players + model.n_idle
    for p in range(n_total):
        registry.add(PredictorKind.Player, 'P%02d' % p, Group.Center)

    k = model.players_per_side
    lines = np.argsort(rng.random((model.n_events, model.n_players)),
                       axis=1)[:, :2 * k]
    rows = np.repeat(np.arange(model.n_events), k)
    ones = np.ones(model.n_events * k)
    shape = (model.n_events, n_total)
    X_home = sp.csr_matrix((ones, (rows, lines[:, :k].ravel())), shape=shape)
    X_away = sp.csr_matrix((ones, (rows, lines[:, k:].ravel())), shape=shape)
    duration = rng.lognormal(np.log(model.shift_median_s), model.shift_log_sd,
                             model.n_events)
    return Design(registry, X_home, X_away,
                  rng.integers(N_STATES, size=model.n_events), duration,
                  np.zeros(model.n_events, dtype=int),
                  np.zeros(model.n_events, dtype=int), ['validation'],
                  ModelSpec())


def draw_truth(model, rng):
    n_total = model.n_players + model.n_idle
    return Coefficients(np.full((2, N_STATES), float(model.intercept)),
                        sample_prior(model.family, n_total, rng),
                        sample_prior(model.family, n_total, rng))


def simulate_outcomes(design, coeffs, rng):
    eta_h = coeffs.intercepts[0, design.state] + \
        design.X_home @ coeffs.omega + design.X_away @ coeffs.delta
    eta_a = coeffs.intercepts[1, design.state] + \
        design.X_away @ coeffs.omega + design.X_home @ coeffs.delta
    outcome, observed = sample_outcomes(np.exp(eta_h), np.exp(eta_a),
                                        design.duration, rng)
    return replace(design, outcome=outcome, duration=observed)


def posterior_quantile(draws, truth, rng):
    """
    Share of draws below the truth, with ties broken uniformly at random.
    draws has shape (n_draws, n_parameters).
    """
    below = np.mean(draws < truth, axis=0)
    equal = np.mean(draws == truth, axis=0)
    return below + rng.random(len(below)) * equal


@dataclass
class QuantileReport:
    labels: list
    quantiles: np.ndarray
    ks_statistic: np.ndarray
    p_value: np.ndarray
    alpha: float = 0.01
    loglik_scale: float = 1.

    @property
    def adjusted_p(self):
        return np.minimum(1., self.p_value * len(self.labels))

    @property
    def passed(self):
        return bool(np.all(self.adjusted_p > self.alpha))

    def to_frame(self):
        return pd.DataFrame({'parameter': self.labels,
                             'ks_statistic': self.ks_statistic,
                             'p_value': self.p_value,
                             'adjusted_p': self.adjusted_p})

    def to_dict(self):
        return {'passed': self.passed, 'alpha': self.alpha,
                'replications': int(self.quantiles.shape[0]),
                'loglik_scale': self.loglik_scale,
                'min_adjusted_p': float(self.adjusted_p.min()),
                'max_ks_statistic': float(self.ks_statistic.max())}


def validate_posterior_quantiles(model=None, n_replications=100, seed=0,
                                 chain_config=None, alpha=0.01, progress=True):
    """
    :param model:           small model to replicate
    :type model:            QuantileModel
    :param n_replications:  replications (at least 20)
    :type n_replications:   int
    :param chain_config:    sampler settings; loglik_scale != 1 gives a
                            deliberately wrong acceptance ratio
    :type chain_config:     ChainConfig
    :return:                per-parameter KS statistics against Uniform(0, 1)
    :rtype:                 QuantileReport
    """
    if n_replications < MIN_REPLICATIONS:
        raise ConfigError('posterior-quantile validation needs at least %d '
                          'replications, got %d'
                          % (MIN_REPLICATIONS, n_replications))
    model = model or QuantileModel()
    config = chain_config or quantile_chain_config()
    if not (config.fixed_hyperparameters and config.fix_intercepts):
        raise ConfigError('posterior-quantile validation holds '
                          'hyperparameters and intercepts at their truth')
    shrinkage = GroupShrinkage.uniform([Group.Center], model.family)

    rngs = spawn_generators(seed, n_replications)
    quantiles = np.empty((n_replications, model.n_parameters))
    labels = None
    for r in tqdm(range(n_replications), disable=not progress,
                  desc='posterior quantiles'):
        rng = rngs[r]
        design = random_design(model, rng)
        truth = draw_truth(model, rng)
        design = simulate_outcomes(design, truth, rng)
        chain = replace(config, seed=int(rng.integers(2 ** 31)))
        samples = GibbsSampler(design, shrinkage, chain).run(init=truth)
        draws = np.hstack([samples.flat('omega'), samples.flat('delta')])
        quantiles[r] = posterior_quantile(
            draws, np.concatenate([truth.omega, truth.delta]), rng)
        if labels is None:
            labels = ['%s/omega' % l for l in design.labels] + \
                ['%s/delta' % l for l in design.labels]

    ks = [stats.kstest(quantiles[:, j], 'uniform')
          for j in range(model.n_parameters)]
    report = QuantileReport(labels, quantiles,
                            np.array([k.statistic for k in ks]),
                            np.array([k.pvalue for k in ks]), alpha,
                            config.loglik_scale)
    logger.info('posterior quantiles: %d replications, min adjusted p %.4f',
                n_replications, report.adjusted_p.min())
    return report
