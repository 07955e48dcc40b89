#------------------------------------------------
#  Invariant suites behind the `validate` command: analytic gradient
#  against central finite differences, prior normalisation by quadrature,
#  simulator law against closed forms, the sampler's stationary
#  distribution on an enumerable model, and posterior quantiles.
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import sparse as sp

from algorithms.competing_hazards.likelihood import (
    N_STATES, Coefficients, HazardLikelihood, ParameterLayout)
from algorithms.MCMC_sampler.gibbs_sampler import ChainConfig, GibbsSampler
from algorithms.MCMC_sampler.posterior_quantiles import (
    QuantileModel, simulate_outcomes, validate_posterior_quantiles)
from algorithms.shrinkage.shrinkage import (
    GroupShrinkage, PenaltyFamily, log_density)
from case_studies.NHL.design import (
    Design, Group, ModelSpec, PredictorKind, Registry)
from case_studies.synthetic_league.systems import sample_outcomes
from test_functions.competing_exponentials import (
    LAW_SETTINGS, expected_time, outcome_probabilities, time_variance)

logger = logging.getLogger(__name__)

INSTANCE_GROUPS = (Group.Center, Group.LeftWing, Group.RightWing,
                   Group.Defense, Group.Goaltender)


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {'name': self.name, 'passed': self.passed,
                'statistic': self.statistic, 'threshold': self.threshold,
                'detail': self.detail}


def finite_differences(f, x, h=1e-5, method='central'):
    n_dim = len(x)
    grad = np.zeros(n_dim)
    f0 = f(x) if method != 'central' else None
    for i in range(n_dim):
        x_forward = x.copy()
        x_backward = x.copy()
        x_forward[i] += h
        x_backward[i] -= h
        if method == 'central':
            grad[i] = (f(x_forward) - f(x_backward)) / (2. * h)
        elif method == 'forward':
            grad[i] = (f(x_forward) - f0) / h
        else:
            grad[i] = (f0 - f(x_backward)) / h
    return grad


def random_instance(rng, max_predictors=50, max_events=1000):
    """Random mixed-position design with outcomes drawn from random coefficients."""
    P = int(rng.integers(2, max_predictors + 1))
    n = int(rng.integers(1, max_events + 1))
    registry = Registry()
    for p in range(P):
        registry.add(PredictorKind.Player, 'X%02d' % p,
                     INSTANCE_GROUPS[p % len(INSTANCE_GROUPS)])
    home_rows, home_cols, away_rows, away_cols = [], [], [], []
    for i in range(n):
        k = int(rng.integers(1, min(6, P // 2) + 1))
        chosen = rng.choice(P, size=2 * k, replace=False)
        home_rows += [i] * k
        home_cols += list(chosen[:k])
        away_rows += [i] * k
        away_cols += list(chosen[k:])
    X_home = sp.csr_matrix((np.ones(len(home_rows)), (home_rows, home_cols)),
                           shape=(n, P))
    X_away = sp.csr_matrix((np.ones(len(away_rows)), (away_rows, away_cols)),
                           shape=(n, P))
    design = Design(registry, X_home, X_away,
                    rng.integers(N_STATES, size=n),
                    rng.lognormal(np.log(40.), 0.5, n),
                    np.zeros(n, dtype=int), np.zeros(n, dtype=int),
                    ['instance'], ModelSpec())
    coeffs = Coefficients(rng.normal(-6., 0.5, (2, N_STATES)),
                          rng.normal(0., 0.3, P), rng.normal(0., 0.3, P))
    coeffs.omega[design.omega_fixed] = 0.
    return simulate_outcomes(design, coeffs, rng), coeffs


def check_gradient(n_instances=50, seed=0, tolerance=1e-6, h=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.
    for _ in range(n_instances):
        design, coeffs = random_instance(rng)
        lik = HazardLikelihood(design)
        layout = ParameterLayout(design)
        x = layout.pack_coefficients(coeffs)
        numeric = finite_differences(
            lambda v: lik.total_loglik(layout.unpack(v, coeffs)), x, h)
        analytic = lik.gradient(coeffs, layout)
        scale = max(1., float(np.max(np.abs(analytic))))
        worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
    logger.info('gradient check: worst relative error %.3g', worst)
    return CheckResult('gradient', worst <= tolerance, worst, tolerance,
                       {'instances': n_instances})


def random_families(rng, n_settings):
    """Random parameters for each family; every third Laplace-Gaussian has sigma * lambda > 8."""
    families = []
    for i in range(n_settings):
        families.append(PenaltyFamily.l1(float(rng.uniform(0.2, 30.))))
        families.append(PenaltyFamily.l2(float(rng.uniform(0.005, 5.))))
        sigma2 = float(rng.uniform(0.005, 2.))
        if i % 3 == 0:
            lam = float(rng.uniform(8.5, 40.)) / np.sqrt(sigma2)
        else:
            lam = float(rng.uniform(0.1, 20.))
        families.append(PenaltyFamily.l1l2(lam, sigma2))
    return families


def density_mass(family):
    scales = []
    if family.lam is not None:
        scales.append(1. / family.lam)
    if family.sigma2 is not None:
        scales.append(np.sqrt(family.sigma2))
    bound = 80. * min(scales)
    half, _ = integrate.quad(lambda x: np.exp(log_density(family, x)), 0.,
                             bound, limit=400, epsabs=1e-13, epsrel=1e-11)
    return 2. * half


def check_density(n_settings=20, seed=0, tolerance=1e-6):
    rng = np.random.default_rng(seed)
    families = random_families(rng, n_settings)
    errors = [abs(density_mass(f) - 1.) for f in families]
    worst = float(max(errors))
    return CheckResult('density', worst <= tolerance, worst, tolerance,
                       {'families': len(families)})


def check_simulator_law(n_draws=100000, seed=0, z=3., settings=None):
    """Largest standardized deviation of P(home goal) and mean observed time."""
    rng = np.random.default_rng(seed)
    worst = 0.
    rows = []
    for lam_h, lam_a, t in settings or LAW_SETTINGS:
        outcome, observed = sample_outcomes(np.full(n_draws, lam_h),
                                            np.full(n_draws, lam_a), t, rng)
        p_home = outcome_probabilities(lam_h, lam_a, t)[0]
        se_p = np.sqrt(p_home * (1. - p_home) / n_draws)
        z_p = abs(np.mean(outcome == 1) - p_home) / se_p
        mean_t = expected_time(lam_h, lam_a, t)
        se_t = np.sqrt(time_variance(lam_h, lam_a, t) / n_draws)
        z_t = abs(observed.mean() - mean_t) / se_t
        worst = max(worst, z_p, z_t)
        rows.append({'lam_h': lam_h, 'lam_a': lam_a, 't': t,
                     'z_home': float(z_p), 'z_time': float(z_t)})
    return CheckResult('simulator_law', worst <= z, float(worst), z,
                       {'settings': rows})


def single_player_design(n_events=300, seed=0):
    rng = np.random.default_rng(seed)
    registry = Registry()
    registry.add(PredictorKind.Player, 'SOLO', Group.Center)
    home = rng.random(n_events) < 0.5
    X_home = sp.csr_matrix(home.astype(float)[:, None])
    X_away = sp.csr_matrix((~home).astype(float)[:, None])
    design = Design(registry, X_home, X_away,
                    np.full(n_events, 1), np.full(n_events, 40.),
                    np.zeros(n_events, dtype=int),
                    np.zeros(n_events, dtype=int), ['solo'], ModelSpec())
    truth = Coefficients(np.full((2, N_STATES), -5.5), np.array([0.3]),
                         np.array([-0.2]))
    return simulate_outcomes(design, truth, rng), truth


def grid_posterior(design, coeffs, family, half_width=1.5, points=201):
    """Gridded posterior of one predictor's (omega, delta) with everything else fixed."""
    w = np.linspace(coeffs.omega[0] - half_width, coeffs.omega[0] + half_width,
                    points)
    d = np.linspace(coeffs.delta[0] - half_width, coeffs.delta[0] + half_width,
                    points)
    W, D = np.meshgrid(w, d, indexing='ij')
    xh = design.X_home.toarray()[:, 0]
    xa = design.X_away.toarray()[:, 0]
    base_h = coeffs.intercepts[0, design.state]
    base_a = coeffs.intercepts[1, design.state]
    home_goal = (design.outcome == 1).astype(float)
    away_goal = (design.outcome == -1).astype(float)
    ll = np.empty(W.shape)
    for i, omega in enumerate(w):
        eta_h = base_h + omega * xh + d[:, None] * xa
        eta_a = base_a + omega * xa + d[:, None] * xh
        ll[i] = np.sum(home_goal * eta_h + away_goal * eta_a -
                       (np.exp(eta_h) + np.exp(eta_a)) * design.duration,
                       axis=1)
    log_post = ll + log_density(family, W) + log_density(family, D)
    mass = np.exp(log_post - log_post.max())
    return w, d, mass / mass.sum()


def check_stationary_distribution(n_draws=1000000, seed=0, bins=8,
                                  tolerance=0.02):
    """
    Long-run sampler frequencies on a one-predictor model against its
    enumerated posterior, as total variation over a bins x bins partition.
    """
    design, truth = single_player_design(seed=seed)
    family = PenaltyFamily.l1l2(2., 0.5)
    w, d, mass = grid_posterior(design, truth, family)
    mean_w, mean_d = np.sum(mass.sum(axis=1) * w), np.sum(mass.sum(axis=0) * d)
    sd_w = np.sqrt(np.sum(mass.sum(axis=1) * (w - mean_w) ** 2))
    sd_d = np.sqrt(np.sum(mass.sum(axis=0) * (d - mean_d) ** 2))
    edges_w = np.linspace(mean_w - 2.5 * sd_w, mean_w + 2.5 * sd_w, bins + 1)
    edges_d = np.linspace(mean_d - 2.5 * sd_d, mean_d + 2.5 * sd_d, bins + 1)
    edges_w[0], edges_w[-1] = -np.inf, np.inf
    edges_d[0], edges_d[-1] = -np.inf, np.inf

    W, D = np.meshgrid(w, d, indexing='ij')
    expected, _, _ = np.histogram2d(W.ravel(), D.ravel(),
                                    [edges_w, edges_d], weights=mass.ravel())
    config = ChainConfig(n_chains=1, burn_in=1000, thin=1, min_kept=n_draws,
                         enforce_floor=False, fixed_hyperparameters=True,
                         fix_intercepts=True, init_jitter=0., progress=False,
                         seed=seed)
    shrinkage = GroupShrinkage.uniform([Group.Center], family)
    samples = GibbsSampler(design, shrinkage, config).run(init=truth)
    observed, _, _ = np.histogram2d(samples.flat('omega')[:, 0],
                                    samples.flat('delta')[:, 0],
                                    [edges_w, edges_d])
    observed /= observed.sum()
    tv = 0.5 * float(np.sum(np.abs(observed - expected)))
    return CheckResult('stationary_distribution', tv <= tolerance, tv,
                       tolerance, {'draws': n_draws, 'bins': bins})


def check_posterior_quantiles(n_replications=100, seed=0, model=None,
                              chain_config=None, alpha=0.01, progress=True):
    report = validate_posterior_quantiles(model or QuantileModel(),
                                          n_replications, seed, chain_config,
                                          alpha, progress)
    return CheckResult('posterior_quantiles', report.passed,
                       float(report.adjusted_p.min()), alpha,
                       report.to_dict())


def run_validation(settings, seed=0, include_sampler=True, progress=True):
    """
    settings: the [validate] table of a RunConfig. Returns CheckResults in
    a fixed order; the sampler suites are skipped with include_sampler=False.
    """
    results = [check_gradient(settings['gradient_instances'], seed),
               check_density(settings['density_settings'], seed),
               check_simulator_law(settings['law_draws'], seed,
                                   settings.get('law_z', 3.))]
    if include_sampler:
        model = QuantileModel(n_players=settings['quantile_players'],
                              n_events=settings['quantile_events'])
        results.append(check_posterior_quantiles(settings['replications'],
                                                 seed, model,
                                                 progress=progress))
    for result in results:
        logger.info('%s: %s (statistic %.4g, threshold %.4g)', result.name,
                    'pass' if result.passed else 'FAIL', result.statistic,
                    result.threshold)
    return results
