from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from scipy import special, stats

from algorithms.competing_hazards.likelihood import (
    Coefficients, HazardLikelihood, empirical_intercepts)
from algorithms.MCMC_sampler.gibbs_sampler import (
    ChainConfig, GibbsSampler, PosteriorSamples, run_chain,
    summarize_posterior)
from algorithms.shrinkage.shrinkage import (
    FamilyKind, GroupShrinkage, HyperPriors, PenaltyFamily, Side,
    hyper_log_prior, l1l2_group_loglik, reparam_to_total)
from case_studies.NHL.design import Group, ModelSpec, build_design
from utilities.errors import ConfigError

SHORT = dict(n_chains=2, burn_in=20, thin=1, min_kept=40,
             enforce_floor=False, progress=False, adapt_every=10)


@pytest.fixture(scope='module')
def league_design(small_league):
    return build_design(small_league.events, small_league.roster, ModelSpec())


def league_shrinkage(design):
    return GroupShrinkage.uniform(design.groups_present(),
                                  PenaltyFamily.l1l2(4., 0.1),
                                  {Group.Goaltender: PenaltyFamily.l2(0.01)})


def start(design):
    init = Coefficients.zeros(design.n_predictors)
    init.intercepts = empirical_intercepts(design)
    return init


@pytest.fixture(scope='module')
def short_run(league_design):
    config = ChainConfig(seed=5, **SHORT)
    return run_chain(league_design, league_shrinkage(league_design), config,
                     init=start(league_design))


def test_chain_arithmetic():
    config = ChainConfig()
    assert config.kept_per_chain == 125
    assert config.iterations == 1000 + 5 * 125
    assert ChainConfig(n_chains=3, min_kept=500).kept_per_chain == 167


@pytest.mark.parametrize('kwargs', [
    {'min_kept': 499},
    {'n_chains': 0},
    {'thin': 0},
    {'burn_in': -1},
    {'grid_points': 2},
    {'target_acceptance': (0.5, 0.4)},
])
def test_invalid_chain_config(kwargs):
    with pytest.raises(ConfigError):
        ChainConfig(**kwargs)


def test_floor_can_be_disabled():
    assert ChainConfig(min_kept=40, enforce_floor=False).kept_per_chain == 10


def test_shapes(short_run, league_design):
    P = league_design.n_predictors
    assert short_run.omega.shape == (2, 20, P)
    assert short_run.intercepts.shape == (2, 20, 2, 3)
    assert short_run.n_draws == 40
    assert short_run.lam.shape == (2, 20, len(short_run.blocks))
    assert np.all(short_run.omega[:, :, league_design.omega_fixed] == 0.)
    assert 'Goaltender/offense' not in short_run.blocks
    goalie = short_run.block_index(Group.Goaltender, Side.Defense)
    assert np.all(np.isnan(short_run.lam[:, :, goalie]))
    assert np.all(short_run.sigma2[:, :, goalie] > 0)
    assert np.all((short_run.acceptance >= 0) & (short_run.acceptance <= 1))


def test_seeded_runs_are_identical(short_run, league_design):
    again = run_chain(league_design, league_shrinkage(league_design),
                      ChainConfig(seed=5, **SHORT),
                      init=start(league_design))
    np.testing.assert_array_equal(again.omega, short_run.omega)
    np.testing.assert_array_equal(again.sigma2, short_run.sigma2)
    other = run_chain(league_design, league_shrinkage(league_design),
                      ChainConfig(seed=6, **SHORT),
                      init=start(league_design))
    assert not np.array_equal(other.delta, short_run.delta)


def test_cached_loglik_matches_recomputation(short_run, league_design):
    lik = HazardLikelihood(league_design)
    for i in (0, 19, 39):
        c, n = divmod(i, 20)
        assert short_run.loglik[c, n] == \
            pytest.approx(lik.total_loglik(short_run.draw(i)), rel=1e-9)


def test_logpost_matches_sampler(short_run, league_design):
    sampler = GibbsSampler(league_design, league_shrinkage(league_design),
                           ChainConfig(**SHORT))
    lam, sigma2 = short_run.lam[1, 7], short_run.sigma2[1, 7]
    expected = sampler.log_posterior(short_run.draw(27), lam, sigma2)
    assert short_run.logpost[1, 7] == pytest.approx(expected, rel=1e-9)


def test_save_and_load(tmp_path, short_run):
    npz, meta = tmp_path / 'samples.npz', tmp_path / 'samples.json'
    short_run.save(npz, meta)
    loaded = PosteriorSamples.load(npz, meta)
    np.testing.assert_array_equal(loaded.omega, short_run.omega)
    np.testing.assert_array_equal(loaded.lam, short_run.lam)
    assert loaded.labels == short_run.labels
    assert loaded.blocks == short_run.blocks
    assert loaded.config['min_kept'] == 40
    assert loaded.seed == 5


def test_diagnostics(short_run, league_design):
    frame = short_run.diagnostics()
    assert list(frame.columns) == ['label', 'parameter', 'ess', 'rhat', 'lag1']
    n_free = int((~league_design.omega_fixed).sum())
    assert len(frame) == n_free + league_design.n_predictors
    assert len(short_run.autocorrelation()) == len(frame)


def test_summary_quantiles_are_ordered(short_run):
    frame = summarize_posterior(short_run)
    assert list(frame['label']) == short_run.labels
    for name in ('omega', 'delta', 'net'):
        cols = [name + s for s in ('_q025', '_q25', '_q75', '_q975')]
        values = frame[cols].to_numpy()
        assert np.all(np.diff(values, axis=1) >= 0)


def test_fixed_hyperparameters_stay_put(league_design):
    config = ChainConfig(fixed_hyperparameters=True, fix_intercepts=True,
                         seed=2, **SHORT)
    init = start(league_design)
    samples = run_chain(league_design, league_shrinkage(league_design),
                        config, init=init)
    k = samples.block_index(Group.Center, Side.Offense)
    assert np.all(samples.lam[:, :, k] == 4.)
    assert np.all(samples.sigma2[:, :, k] == 0.1)
    np.testing.assert_array_equal(samples.intercepts[0, -1], init.intercepts)


def test_conjugate_l1_draws(fixture_events, fixture_roster, rng):
    design = build_design(fixture_events, fixture_roster, ModelSpec())
    shrinkage = GroupShrinkage.uniform(design.groups_present(),
                                       PenaltyFamily.l1(2.),
                                       {Group.Goaltender:
                                        PenaltyFamily.l2(0.05)})
    hp = HyperPriors(gamma_shape=2., gamma_rate=1., invgamma_shape=3.,
                     invgamma_scale=0.1)
    sampler = GibbsSampler(design, shrinkage,
                           ChainConfig(hyperpriors=hp, **SHORT))
    x = np.linspace(-0.3, 0.3, design.n_predictors)
    K = len(sampler.blocks)
    chain = {'omega': x.copy(), 'delta': x.copy(),
             'intercepts': np.zeros((2, 3)), 'lam': np.ones(K),
             'sigma2': np.ones(K)}
    k = next(i for i, b in enumerate(sampler.blocks)
             if b.kind is FamilyKind.L1)
    members = sampler.blocks[k].members
    draws = []
    for _ in range(20000):
        sampler.conjugate_update(chain, k, rng)
        draws.append(chain['lam'][k])
    expected = (2. + len(members)) / (1. + np.abs(x[members]).sum())
    assert np.mean(draws) == pytest.approx(expected, rel=0.02)


def test_mean_shrinkage(make_samples):
    lam = np.stack([np.full((10, 1), 2.), np.full((10, 1), 4.)])
    sigma2 = np.full((2, 10, 1), 0.5)
    samples = make_samples(np.zeros((2, 10, 3)), np.zeros((2, 10, 3)),
                           blocks=['Center/offense'], block_kinds=['L1L2'],
                           lam=lam, sigma2=sigma2)
    family = samples.mean_shrinkage()[(Group.Center, Side.Offense)]
    assert family == PenaltyFamily.l1l2(3., 0.5)


def test_mean_draw(make_samples):
    omega = np.arange(12, dtype=float).reshape(2, 3, 2)
    samples = make_samples(omega, -omega)
    np.testing.assert_allclose(samples.posterior_mean().omega, [5., 6.])
    np.testing.assert_array_equal(samples.draw(4).delta, [-8., -9.])


def block_of(sampler, group, side):
    return next(k for k, b in enumerate(sampler.blocks)
                if b.group is group and b.side is side)


def hyper_state(sampler, k, values):
    P = sampler.design.n_predictors
    lam, sigma2 = sampler.initial_hyper()
    chain = {'omega': np.zeros(P), 'delta': np.zeros(P),
             'intercepts': np.zeros((2, 3)), 'lam': lam, 'sigma2': sigma2}
    block = sampler.blocks[k]
    chain[block.parameter][block.members] = values
    return chain


def grid_draws(sampler, k, values, n, seed=0):
    chain = hyper_state(sampler, k, values)
    rng = np.random.default_rng(seed)
    lam, sigma2 = np.empty(n), np.empty(n)
    for i in range(n):
        sampler.hyper_grid_update(chain, k, rng)
        lam[i], sigma2[i] = chain['lam'][k], chain['sigma2'][k]
    return lam, sigma2


def total_shrinkage(lam, sigma2):
    return reparam_to_total(lam, np.sqrt(sigma2))[0]


def test_grid_update_favors_shrinkage_at_zero(league_design):
    sampler = GibbsSampler(league_design, league_shrinkage(league_design),
                           ChainConfig(joint_grid=True, **SHORT))
    k = block_of(sampler, Group.Center, Side.Offense)
    n = len(sampler.blocks[k].members)
    at_zero = total_shrinkage(*grid_draws(sampler, k, np.zeros(n), 300))
    spread = total_shrinkage(*grid_draws(sampler, k, np.ones(n), 300))
    assert np.mean(at_zero) > 3. * np.mean(spread)
    bounds = sampler.config.s_bounds
    assert np.all((at_zero >= bounds[0]) & (at_zero <= bounds[1]))


def grid_mean_s(sampler, k, values):
    """Mean of s under the gridded joint conditional of the block."""
    x = np.asarray(values)
    S, F = np.meshgrid(sampler.s_grid, sampler.f_grid, indexing='ij')
    log_w = sampler._grid_log_target(S, F, len(x), np.sum(np.abs(x)),
                                     np.sum(x ** 2)) + \
        np.log(np.diff(sampler.s_edges))[:, None] + \
        np.log(np.diff(sampler.f_edges))[None, :]
    p = np.exp(log_w - special.logsumexp(log_w)).sum(axis=1)
    centers = 0.5 * (sampler.s_edges[1:] + sampler.s_edges[:-1])
    return float(p @ centers)


def test_grid_resolution_sweep(league_design, rng):
    shrinkage = league_shrinkage(league_design)
    coarse = GibbsSampler(league_design, shrinkage,
                          ChainConfig(grid_points=101, **SHORT))
    fine = GibbsSampler(league_design, shrinkage,
                        ChainConfig(grid_points=201, **SHORT))
    k = block_of(coarse, Group.Defense, Side.Defense)
    values = rng.laplace(0., 0.2, len(coarse.blocks[k].members))
    assert grid_mean_s(fine, k, values) == \
        pytest.approx(grid_mean_s(coarse, k, values), rel=0.01)


@pytest.mark.slow
def test_grid_update_with_pinned_fraction_is_conjugate(league_design, rng):
    shrinkage = league_shrinkage(league_design)
    reference = GibbsSampler(league_design, shrinkage, ChainConfig(**SHORT))
    k = block_of(reference, Group.Center, Side.Offense)
    values = rng.normal(0., 0.5, len(reference.blocks[k].members))
    hp = HyperPriors()
    # f held fixed (not lambda): the Jacobian adds one half to the shape
    posterior = stats.invgamma(hp.invgamma_shape + 0.5 * len(values) + 0.5,
                               scale=hp.invgamma_scale +
                               0.5 * np.sum(values ** 2))
    s_bounds = (1. / np.sqrt(posterior.ppf(1. - 1e-7)),
                1. / np.sqrt(posterior.ppf(1e-7)))
    sampler = GibbsSampler(league_design, shrinkage,
                           ChainConfig(grid_points=201, s_bounds=s_bounds,
                                       f_bounds=(1e-7, 2e-7), **SHORT))
    _, sigma2 = grid_draws(sampler, k, values, 10000, seed=3)
    assert stats.kstest(sigma2, posterior.cdf).statistic < 0.03


def quadrature_mean_s(values, hp, s_bounds, f_bounds):
    """E[s] under Gamma / Inverse-Gamma priors, integrated over (lam, sigma2)."""
    lam = np.geomspace(1e-4, 500., 700)[:, None]
    sigma2 = np.geomspace(1e-4, 1e4, 700)[None, :]
    x = np.asarray(values)
    log_w = l1l2_group_loglik(lam, sigma2, len(x), np.sum(np.abs(x)),
                              np.sum(x ** 2)) + \
        hyper_log_prior(hp, lam, 'lambda') + \
        hyper_log_prior(hp, sigma2, 'sigma2') + np.log(lam) + np.log(sigma2)
    s, f = reparam_to_total(lam, np.sqrt(sigma2))
    inside = (s >= s_bounds[0]) & (s <= s_bounds[1]) & \
        (f >= f_bounds[0]) & (f <= f_bounds[1])
    log_w = np.where(inside, log_w, -np.inf)
    w = np.exp(log_w - special.logsumexp(log_w))
    return float(np.sum(w * s))


@pytest.mark.slow
@pytest.mark.parametrize('joint', [False, True])
def test_grid_update_matches_quadrature(league_design, joint):
    sampler = GibbsSampler(league_design, league_shrinkage(league_design),
                           ChainConfig(joint_grid=joint, **SHORT))
    k = block_of(sampler, Group.Center, Side.Offense)
    values = np.random.default_rng(8).laplace(
        0., 0.3, len(sampler.blocks[k].members))
    expected = quadrature_mean_s(values, sampler.config.hyperpriors,
                                 sampler.config.s_bounds,
                                 sampler.config.f_bounds)
    draws = total_shrinkage(*grid_draws(sampler, k, values, 4000, seed=1))
    assert np.mean(draws[200:]) == pytest.approx(expected, rel=0.05)


def l1_sampler(design):
    shrinkage = GroupShrinkage.uniform(design.groups_present(),
                                       PenaltyFamily.l1(2.),
                                       {Group.Goaltender: PenaltyFamily.l2(0.01)})
    return GibbsSampler(design, shrinkage, ChainConfig(**SHORT))


def pair_state(sampler):
    design = sampler.design
    coeffs = start(design)
    lam, sigma2 = sampler.initial_hyper()
    eta_h, eta_a = HazardLikelihood(design).linear_predictors(coeffs)
    chain = {'omega': coeffs.omega, 'delta': coeffs.delta,
             'intercepts': coeffs.intercepts, 'eta_h': eta_h, 'eta_a': eta_a,
             'lam': lam, 'sigma2': sigma2,
             'scale': np.full(design.n_predictors, 0.3)}
    chain['l1'], chain['l2'] = sampler._weights(lam, sigma2)
    return chain


def test_unchanged_proposal_is_always_accepted(league_design):
    sampler = l1_sampler(league_design)
    chain = pair_state(sampler)
    p = league_design.registry.index('T01C1')
    eta_h = chain['eta_h'].copy()
    rng = np.random.default_rng(0)
    assert all(sampler._try_pair(chain, p, 0., 0., rng) for _ in range(200))
    np.testing.assert_array_equal(chain['eta_h'], eta_h)
    assert chain['omega'][p] == 0. and chain['delta'][p] == 0.


@pytest.mark.slow
def test_unobserved_predictor_samples_its_prior(league_design):
    p = league_design.registry.index('T01C1')
    keep = np.ones(league_design.n_predictors)
    keep[p] = 0.
    drop = sp.diags(keep)
    design = replace(league_design,
                     X_home=(league_design.X_home @ drop).tocsr(),
                     X_away=(league_design.X_away @ drop).tocsr())
    sampler = l1_sampler(design)
    assert len(sampler.rows[p]) == 0
    chain = pair_state(sampler)
    chain['scale'][p] = 1.5
    rng = np.random.default_rng(4)
    thin, n = 20, 10000
    omega, delta = np.empty(n), np.empty(n)
    for i in range(n * thin):
        sampler.metropolis_pair_update(chain, p, rng)
        if (i + 1) % thin == 0:
            omega[i // thin] = chain['omega'][p]
            delta[i // thin] = chain['delta'][p]
    prior = stats.laplace(scale=1. / 2.).cdf
    assert stats.kstest(omega, prior).statistic < 0.02
    assert stats.kstest(delta, prior).statistic < 0.02
