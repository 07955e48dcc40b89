"""
Metropolis-within-Gibbs sampler for the hierarchical hazard model.

One sweep:
  1. bivariate Metropolis on each score-state intercept pair (r_h[s], r_a[s])
  2. bivariate Metropolis on each predictor's (omega, delta), goaltenders
     propose delta only; only the rows touching the predictor are re-evaluated
  3. hyperparameters of every (group, side) block: conjugate draws for pure
     L1 / L2 blocks, grid draws on (total shrinkage s, Laplace fraction f)
     for Laplace-Gaussian blocks

Linear predictors eta_h, eta_a of all rows are cached and updated in place.
"""
import concurrent.futures
import json
import logging
import math
from dataclasses import dataclass, field

import arviz as az
import numpy as np
import pandas as pd
from scipy import special
from tqdm import tqdm

from algorithms.competing_hazards.likelihood import (
    N_STATES, Coefficients, HazardLikelihood)
from algorithms.proximal_gradient.proximal_gradient import (
    FitOptions, fit_penalized)
from algorithms.shrinkage.shrinkage import (
    FamilyKind, GroupShrinkage, HyperPriors, PenaltyFamily, Side,
    hyper_log_prior, l1l2_group_loglik, log_density, log_jacobian_total,
    reparam_from_total, reparam_to_total)
from case_studies.NHL.design import Group
from utilities.errors import ConfigError, NumericalError
from utilities.general_utility_functions import (
    NumpyEncoder, spawn_generators, warn)

logger = logging.getLogger(__name__)

MIN_KEPT_FLOOR = 500


@dataclass
class ChainConfig:
    n_chains: int = 4
    burn_in: int = 1000
    thin: int = 5
    min_kept: int = MIN_KEPT_FLOOR
    enforce_floor: bool = True
    target_acceptance: tuple = (0.2, 0.4)
    adapt_every: int = 50
    grid_points: int = 101
    s_bounds: tuple = (0.05, 50.)
    f_bounds: tuple = (0.005, 0.995)
    joint_grid: bool = False
    fixed_hyperparameters: bool = False
    fix_intercepts: bool = False
    intercept_prior_sd: float = 10.
    init_jitter: float = 0.01
    refresh_every: int = 100
    loglik_scale: float = 1.
    hyperpriors: HyperPriors = field(default_factory=HyperPriors)
    seed: int = 0
    processes: int = 1
    progress: bool = True

    def __post_init__(self):
        if self.n_chains < 1:
            raise ConfigError('n_chains must be positive')
        if self.thin < 1:
            raise ConfigError('thin must be >= 1')
        if self.burn_in < 0:
            raise ConfigError('burn_in must be >= 0')
        if self.min_kept < 1:
            raise ConfigError('min_kept must be positive')
        if self.enforce_floor and self.min_kept < MIN_KEPT_FLOOR:
            raise ConfigError('min_kept must be at least %d retained samples'
                              % MIN_KEPT_FLOOR)
        if self.grid_points < 3:
            raise ConfigError('grid_points must be >= 3')
        lo, hi = self.target_acceptance
        if not 0 < lo < hi < 1:
            raise ConfigError('target_acceptance must satisfy 0 < lo < hi < 1')

    @property
    def kept_per_chain(self):
        return int(math.ceil(self.min_kept / self.n_chains))

    @property
    def iterations(self):
        return self.burn_in + self.thin * self.kept_per_chain

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != 'hyperpriors'}
        out['hyperpriors'] = self.hyperpriors.to_dict()
        return out


@dataclass
class HyperBlock:
    group: Group
    side: Side
    kind: FamilyKind
    members: np.ndarray

    @property
    def key(self):
        return '%s/%s' % (self.group.name, self.side.value)

    @property
    def parameter(self):
        return 'omega' if self.side is Side.Offense else 'delta'


def _cell_edges(points, log_scale):
    if log_scale:
        inner = np.sqrt(points[1:] * points[:-1])
    else:
        inner = 0.5 * (points[1:] + points[:-1])
    return np.concatenate([[points[0]], inner, [points[-1]]])


def _lag1(x):
    """Lag-1 autocorrelation along the last axis (0 for constant series)."""
    x = x - x.mean(axis=-1, keepdims=True)
    den = np.sum(x * x, axis=-1)
    num = np.sum(x[..., 1:] * x[..., :-1], axis=-1)
    with np.errstate(invalid='ignore', divide='ignore'):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.), 0.)
    return r


class PosteriorSamples:
    """
    Retained draws with shape (chain, draw, ...). Hyperparameter arrays hold
    NaN where a block's family has no such parameter.
    """

    ARRAYS = ('omega', 'delta', 'intercepts', 'lam', 'sigma2', 'loglik',
              'logpost', 'acceptance', 'intercept_acceptance')

    def __init__(self, labels, groups, omega_fixed, blocks, block_kinds,
                 omega, delta, intercepts, lam, sigma2, loglik, logpost,
                 acceptance, intercept_acceptance, config=None, seed=None):
        self.labels = list(labels)
        self.groups = list(groups)
        self.omega_fixed = np.asarray(omega_fixed, dtype=bool)
        self.blocks = list(blocks)
        self.block_kinds = list(block_kinds)
        self.omega = omega
        self.delta = delta
        self.intercepts = intercepts
        self.lam = lam
        self.sigma2 = sigma2
        self.loglik = loglik
        self.logpost = logpost
        self.acceptance = acceptance
        self.intercept_acceptance = intercept_acceptance
        self.config = config or {}
        self.seed = seed

    @property
    def n_chains(self):
        return self.omega.shape[0]

    @property
    def n_draws(self):
        return self.omega.shape[0] * self.omega.shape[1]

    def flat(self, name):
        arr = getattr(self, name)
        return arr.reshape((arr.shape[0] * arr.shape[1],) + arr.shape[2:])

    def draw(self, i):
        return Coefficients(self.flat('intercepts')[i].copy(),
                            self.flat('omega')[i].copy(),
                            self.flat('delta')[i].copy())

    def posterior_mean(self):
        return Coefficients(self.flat('intercepts').mean(axis=0),
                            self.flat('omega').mean(axis=0),
                            self.flat('delta').mean(axis=0))

    def block_index(self, group, side):
        return self.blocks.index('%s/%s' % (group.name, side.value))

    def mean_shrinkage(self):
        """Posterior-mean hyperparameters as a GroupShrinkage."""
        out = GroupShrinkage()
        lam, sigma2 = self.flat('lam'), self.flat('sigma2')
        for k, (key, kind) in enumerate(zip(self.blocks, self.block_kinds)):
            group, side = key.split('/')
            kind = FamilyKind(kind)
            family = PenaltyFamily(
                kind,
                lam=None if kind is FamilyKind.L2 else float(lam[:, k].mean()),
                sigma2=None if kind is FamilyKind.L1
                else float(sigma2[:, k].mean()))
            out[(Group[group], Side(side))] = family
        return out

    def autocorrelation(self):
        """Mean over chains of the lag-1 autocorrelation per coefficient."""
        free_w = ~self.omega_fixed
        w = _lag1(np.moveaxis(self.omega[:, :, free_w], 1, -1)).mean(axis=0)
        d = _lag1(np.moveaxis(self.delta, 1, -1)).mean(axis=0)
        return np.concatenate([w, d])

    def diagnostics(self):
        """Per-coefficient ESS and R-hat (arviz) plus lag-1 autocorrelation."""
        rows = []
        for name, arr, index in (('omega', self.omega,
                                  np.flatnonzero(~self.omega_fixed)),
                                 ('delta', self.delta,
                                  np.arange(self.omega.shape[2]))):
            for p in index:
                series = arr[:, :, p]
                constant = np.ptp(series) == 0
                rows.append({
                    'label': self.labels[p], 'parameter': name,
                    'ess': float(series.size) if constant
                    else float(az.ess(series)),
                    'rhat': 1. if constant or self.n_chains < 2
                    else float(az.rhat(series)),
                    'lag1': float(_lag1(series).mean())})
        return pd.DataFrame(rows)

    def to_json_dict(self):
        return {'labels': self.labels, 'groups': self.groups,
                'omega_fixed': self.omega_fixed.tolist(),
                'blocks': self.blocks, 'block_kinds': self.block_kinds,
                'config': self.config, 'seed': self.seed}

    def save(self, npz_path, json_path):
        np.savez_compressed(npz_path, **{k: getattr(self, k)
                                         for k in self.ARRAYS})
        with open(json_path, 'w') as handle:
            json.dump(self.to_json_dict(), handle, indent=2, cls=NumpyEncoder)

    @classmethod
    def load(cls, npz_path, json_path):
        with open(json_path) as handle:
            meta = json.load(handle)
        with np.load(npz_path) as data:
            arrays = {k: data[k] for k in cls.ARRAYS}
        return cls(meta['labels'], meta['groups'], meta['omega_fixed'],
                   meta['blocks'], meta['block_kinds'], config=meta['config'],
                   seed=meta['seed'], **arrays)


def summarize_posterior(samples):
    """
    Per-predictor posterior mean, sd and central 50% / 95% intervals of
    omega, delta and the net rating omega - delta.
    """
    w, d = samples.flat('omega'), samples.flat('delta')
    frame = pd.DataFrame({'label': samples.labels, 'group': samples.groups})
    for name, values in (('omega', w), ('delta', d), ('net', w - d)):
        q = np.quantile(values, [0.025, 0.25, 0.75, 0.975], axis=0)
        frame[name + '_mean'] = values.mean(axis=0)
        frame[name + '_sd'] = values.std(axis=0)
        frame[name + '_q025'] = q[0]
        frame[name + '_q25'] = q[1]
        frame[name + '_q75'] = q[2]
        frame[name + '_q975'] = q[3]
    return frame


class GibbsSampler:
    """
    :param design:      Design to sample on
    :type design:       case_studies.NHL.design.Design
    :param shrinkage:   Families per (group, side); their kinds choose the
                        hyperparameter update and their values start the chain
    :type shrinkage:    GroupShrinkage
    :param config:      chain settings
    :type config:       ChainConfig
    """

    def __init__(self, design, shrinkage, config=None):
        self.design = design
        self.config = config or ChainConfig()
        shrinkage.check_covers(design)
        self.shrinkage = shrinkage
        self.omega_fixed = design.omega_fixed
        self.home_goal = (design.outcome == 1).astype(float)
        self.away_goal = (design.outcome == -1).astype(float)
        self.duration = design.duration

        Xh, Xa = design.X_home.tocsc(), design.X_away.tocsc()
        self.rows, self.xh, self.xa = [], [], []
        for p in range(design.n_predictors):
            h = Xh.indices[Xh.indptr[p]:Xh.indptr[p + 1]]
            a = Xa.indices[Xa.indptr[p]:Xa.indptr[p + 1]]
            rows = np.union1d(h, a)
            self.rows.append(rows)
            self.xh.append(np.isin(rows, h).astype(float))
            self.xa.append(np.isin(rows, a).astype(float))
        self.state_rows = [np.flatnonzero(design.state == s)
                           for s in range(N_STATES)]

        groups = design.groups
        self.blocks = []
        self.omega_block = np.full(design.n_predictors, -1, dtype=int)
        self.delta_block = np.full(design.n_predictors, -1, dtype=int)
        for group in design.groups_present():
            members = design.members(group)
            for side in Side:
                if side is Side.Offense:
                    members_side = members[~self.omega_fixed[members]]
                else:
                    members_side = members
                if len(members_side) == 0:
                    continue
                k = len(self.blocks)
                self.blocks.append(HyperBlock(group, side,
                                              shrinkage[(group, side)].kind,
                                              members_side))
                target = self.omega_block if side is Side.Offense \
                    else self.delta_block
                target[members_side] = k
        self.groups = [g.name for g in groups]

        cfg = self.config
        self.s_grid = np.geomspace(cfg.s_bounds[0], cfg.s_bounds[1],
                                   cfg.grid_points)
        self.f_grid = np.linspace(cfg.f_bounds[0], cfg.f_bounds[1],
                                  cfg.grid_points)
        self.s_edges = _cell_edges(self.s_grid, True)
        self.f_edges = _cell_edges(self.f_grid, False)

    # ------------------------------------------------------------------
    # state
    def initial_hyper(self):
        K = len(self.blocks)
        lam, sigma2 = np.full(K, np.nan), np.full(K, np.nan)
        for k, block in enumerate(self.blocks):
            family = self.shrinkage[(block.group, block.side)]
            if family.kind is not FamilyKind.L2:
                lam[k] = family.lam
            if family.kind is not FamilyKind.L1:
                sigma2[k] = family.sigma2
        return lam, sigma2

    def _weights(self, lam, sigma2):
        """Per-block (l1 weight, l2 weight) arrays."""
        l1 = np.where(np.isnan(lam), 0., lam)
        l2 = np.where(np.isnan(sigma2), 0., 1. / np.where(np.isnan(sigma2),
                                                         1., sigma2))
        return l1, l2

    def log_prior(self, coeffs, lam, sigma2):
        cfg = self.config
        total = 0.
        for k, block in enumerate(self.blocks):
            values = getattr(coeffs, block.parameter)[block.members]
            family = PenaltyFamily(block.kind,
                                   lam=None if np.isnan(lam[k]) else lam[k],
                                   sigma2=None if np.isnan(sigma2[k])
                                   else sigma2[k])
            total += float(np.sum(log_density(family, values)))
            if not cfg.fixed_hyperparameters:
                if block.kind is not FamilyKind.L2:
                    total += float(hyper_log_prior(cfg.hyperpriors, lam[k],
                                                   'lambda'))
                if block.kind is not FamilyKind.L1:
                    total += float(hyper_log_prior(cfg.hyperpriors, sigma2[k],
                                                   'sigma2'))
        if not cfg.fix_intercepts:
            sd = cfg.intercept_prior_sd
            total += float(np.sum(-0.5 * (coeffs.intercepts / sd) ** 2 -
                                  np.log(sd * np.sqrt(2. * np.pi))))
        return total

    def log_posterior(self, coeffs, lam, sigma2):
        """From-scratch log-posterior (up to the data-independent constant)."""
        ll = HazardLikelihood(self.design).total_loglik(coeffs)
        return ll + self.log_prior(coeffs, lam, sigma2)

    def _loglik_cached(self, eta_h, eta_a):
        return float(np.sum(self.home_goal * eta_h + self.away_goal * eta_a -
                            (np.exp(eta_h) + np.exp(eta_a)) * self.duration))

    def _local_delta(self, rows, eh, ea, eh_new, ea_new):
        T = self.duration[rows]
        return float(np.sum(self.home_goal[rows] * (eh_new - eh) +
                            self.away_goal[rows] * (ea_new - ea) -
                            (np.exp(eh_new) - np.exp(eh) +
                             np.exp(ea_new) - np.exp(ea)) * T))

    # ------------------------------------------------------------------
    # updates
    def metropolis_pair_update(self, chain, p, rng):
        """
        Propose (omega', delta') around the current pair and accept with
        min(1, exp(change in log posterior)). Returns the accept flag.
        """
        scale = chain['scale'][p]
        z = rng.standard_normal(2)
        goalie = self.omega_fixed[p]
        dw = 0. if goalie else scale * z[0]
        dd = scale * z[1]
        return self._try_pair(chain, p, dw, dd, rng)

    def _try_pair(self, chain, p, dw, dd, rng):
        omega, delta = chain['omega'], chain['delta']
        l1, l2 = chain['l1'], chain['l2']
        log_alpha = 0.
        kw, kd = self.omega_block[p], self.delta_block[p]
        if kw >= 0:
            w, w_new = omega[p], omega[p] + dw
            log_alpha -= l1[kw] * (abs(w_new) - abs(w)) + \
                0.5 * l2[kw] * (w_new ** 2 - w ** 2)
        d, d_new = delta[p], delta[p] + dd
        log_alpha -= l1[kd] * (abs(d_new) - abs(d)) + \
            0.5 * l2[kd] * (d_new ** 2 - d ** 2)

        rows = self.rows[p]
        dll = 0.
        if len(rows):
            xh, xa = self.xh[p], self.xa[p]
            eh, ea = chain['eta_h'][rows], chain['eta_a'][rows]
            eh_new = eh + dw * xh + dd * xa
            ea_new = ea + dw * xa + dd * xh
            dll = self._local_delta(rows, eh, ea, eh_new, ea_new)
            log_alpha += self.config.loglik_scale * dll
        if np.log(rng.random()) < log_alpha:
            if len(rows):
                chain['eta_h'][rows] = eh_new
                chain['eta_a'][rows] = ea_new
            omega[p] += dw
            delta[p] += dd
            return True
        return False

    def intercept_update(self, chain, s, rng):
        rows = self.state_rows[s]
        r = chain['intercepts']
        dh, da = chain['intercept_scale'][s] * rng.standard_normal(2)
        var = self.config.intercept_prior_sd ** 2
        log_alpha = -((r[0, s] + dh) ** 2 - r[0, s] ** 2 +
                      (r[1, s] + da) ** 2 - r[1, s] ** 2) / (2. * var)
        eh, ea = chain['eta_h'][rows], chain['eta_a'][rows]
        eh_new, ea_new = eh + dh, ea + da
        log_alpha += self.config.loglik_scale * \
            self._local_delta(rows, eh, ea, eh_new, ea_new)
        if np.log(rng.random()) < log_alpha:
            chain['eta_h'][rows] = eh_new
            chain['eta_a'][rows] = ea_new
            r[0, s] += dh
            r[1, s] += da
            return True
        return False

    def _grid_draw(self, log_w, edges, rng, block):
        log_w = log_w + np.log(np.diff(edges))
        if not np.any(np.isfinite(log_w)):
            raise NumericalError('hyperparameter grid mass underflow for '
                                 'group %s' % block.key, group=block.key)
        prob = np.exp(log_w - special.logsumexp(log_w))
        k = rng.choice(len(prob), p=prob / prob.sum())
        return rng.uniform(edges[k], edges[k + 1])

    def _grid_log_target(self, s, f, n, abs_sum, sq_sum):
        hp = self.config.hyperpriors
        lam, sigma = reparam_from_total(s, f)
        sigma2 = sigma ** 2
        out = l1l2_group_loglik(lam, sigma2, n, abs_sum, sq_sum) + \
            hyper_log_prior(hp, lam, 'lambda') + \
            hyper_log_prior(hp, sigma2, 'sigma2') + log_jacobian_total(s, f)
        return np.where(np.isnan(out), -np.inf, out)

    def hyper_grid_update(self, chain, k, rng):
        """
        Draw a Laplace-Gaussian block's (lambda, sigma2) on the (s, f) grid:
        s given f, then f given the new s (or jointly with joint_grid).
        """
        block = self.blocks[k]
        x = getattr(chain_coeffs(chain), block.parameter)[block.members]
        n, abs_sum, sq_sum = len(x), np.sum(np.abs(x)), np.sum(x ** 2)
        s, f = reparam_to_total(chain['lam'][k], np.sqrt(chain['sigma2'][k]))
        s, f = float(s), float(np.clip(f, self.f_edges[0], self.f_edges[-1]))
        if self.config.joint_grid:
            S, F = np.meshgrid(self.s_grid, self.f_grid, indexing='ij')
            log_w = self._grid_log_target(S, F, n, abs_sum, sq_sum) + \
                np.log(np.diff(self.s_edges))[:, None] + \
                np.log(np.diff(self.f_edges))[None, :]
            flat = log_w.ravel()
            if not np.any(np.isfinite(flat)):
                raise NumericalError('hyperparameter grid mass underflow for '
                                     'group %s' % block.key, group=block.key)
            prob = np.exp(flat - special.logsumexp(flat))
            cell = rng.choice(len(prob), p=prob / prob.sum())
            i, j = np.unravel_index(cell, S.shape)
            s = rng.uniform(self.s_edges[i], self.s_edges[i + 1])
            f = rng.uniform(self.f_edges[j], self.f_edges[j + 1])
        else:
            s = self._grid_draw(self._grid_log_target(self.s_grid, f, n,
                                                      abs_sum, sq_sum),
                                self.s_edges, rng, block)
            f = self._grid_draw(self._grid_log_target(s, self.f_grid, n,
                                                      abs_sum, sq_sum),
                                self.f_edges, rng, block)
        lam, sigma = reparam_from_total(s, f)
        chain['lam'][k], chain['sigma2'][k] = float(lam), float(sigma) ** 2

    def conjugate_update(self, chain, k, rng):
        block = self.blocks[k]
        hp = self.config.hyperpriors
        x = getattr(chain_coeffs(chain), block.parameter)[block.members]
        if block.kind is FamilyKind.L1:
            chain['lam'][k] = rng.gamma(hp.gamma_shape + len(x),
                                        1. / (hp.gamma_rate + np.sum(np.abs(x))))
        else:
            chain['sigma2'][k] = (hp.invgamma_scale + 0.5 * np.sum(x ** 2)) / \
                rng.gamma(hp.invgamma_shape + 0.5 * len(x))

    def hyper_update(self, chain, k, rng):
        if self.blocks[k].kind is FamilyKind.L1L2:
            self.hyper_grid_update(chain, k, rng)
        else:
            self.conjugate_update(chain, k, rng)
        chain['l1'], chain['l2'] = self._weights(chain['lam'], chain['sigma2'])

    # ------------------------------------------------------------------
    # chains
    def _initial_scales(self, coeffs, lam, sigma2):
        info = HazardLikelihood(self.design).fisher_diagonal(coeffs)
        l1, l2 = self._weights(lam, sigma2)
        scale = np.empty(self.design.n_predictors)
        for p in range(self.design.n_predictors):
            prec = 0.
            for k in (self.omega_block[p], self.delta_block[p]):
                if k >= 0:
                    prec = max(prec, 0.5 * l1[k] ** 2 + l2[k])
            fisher = max(info.omega[p], info.delta[p])
            scale[p] = 1.7 / np.sqrt(fisher + prec + 1e-12)
        r_info = np.maximum(info.intercepts.min(axis=0), 1.)
        intercept_scale = 1.7 / np.sqrt(r_info)
        return np.minimum(scale, 5.), intercept_scale

    def run_single_chain(self, init, lam, sigma2, rng, position=0):
        cfg = self.config
        P = self.design.n_predictors
        coeffs = init.copy()
        jitter = cfg.init_jitter
        if jitter > 0:
            coeffs.omega += jitter * rng.standard_normal(P)
            coeffs.delta += jitter * rng.standard_normal(P)
            if not cfg.fix_intercepts:
                coeffs.intercepts += jitter * rng.standard_normal((2, N_STATES))
        coeffs.omega[self.omega_fixed] = 0.
        lik = HazardLikelihood(self.design)
        eta_h, eta_a = lik.linear_predictors(coeffs)
        scale, intercept_scale = self._initial_scales(coeffs, lam, sigma2)
        chain = {'omega': coeffs.omega, 'delta': coeffs.delta,
                 'intercepts': coeffs.intercepts, 'eta_h': eta_h,
                 'eta_a': eta_a, 'lam': lam.copy(), 'sigma2': sigma2.copy(),
                 'scale': scale, 'intercept_scale': intercept_scale}
        chain['l1'], chain['l2'] = self._weights(chain['lam'], chain['sigma2'])

        n_keep = cfg.kept_per_chain
        K = len(self.blocks)
        out = {'omega': np.empty((n_keep, P)), 'delta': np.empty((n_keep, P)),
               'intercepts': np.empty((n_keep, 2, N_STATES)),
               'lam': np.empty((n_keep, K)), 'sigma2': np.empty((n_keep, K)),
               'loglik': np.empty(n_keep), 'logpost': np.empty(n_keep)}
        accepted = np.zeros(P)
        intercept_accepted = np.zeros(N_STATES)
        window = np.zeros(P)
        intercept_window = np.zeros(N_STATES)
        kept = 0
        lo, hi = cfg.target_acceptance
        bar = tqdm(range(cfg.iterations), disable=not cfg.progress,
                   desc='chain %d' % position, position=position, leave=False)
        for it in bar:
            burning = it < cfg.burn_in
            if not cfg.fix_intercepts:
                for s in range(N_STATES):
                    ok = self.intercept_update(chain, s, rng)
                    intercept_window[s] += ok
                    if not burning:
                        intercept_accepted[s] += ok
            for p in range(P):
                ok = self.metropolis_pair_update(chain, p, rng)
                window[p] += ok
                if not burning:
                    accepted[p] += ok
            if not cfg.fixed_hyperparameters:
                for k in range(K):
                    self.hyper_update(chain, k, rng)

            if burning and (it + 1) % cfg.adapt_every == 0:
                # proposal scales adapt during burn-in only
                for scales, counts in ((chain['scale'], window),
                                       (chain['intercept_scale'],
                                        intercept_window)):
                    rate = counts / cfg.adapt_every
                    scales[rate < lo] *= 0.8
                    scales[rate > hi] *= 1.25
                    counts[:] = 0
            if (it + 1) % cfg.refresh_every == 0:
                chain['eta_h'][:], chain['eta_a'][:] = \
                    lik.linear_predictors(chain_coeffs(chain))

            if not burning and (it - cfg.burn_in + 1) % cfg.thin == 0:
                current = chain_coeffs(chain)
                out['omega'][kept] = chain['omega']
                out['delta'][kept] = chain['delta']
                out['intercepts'][kept] = chain['intercepts']
                out['lam'][kept] = chain['lam']
                out['sigma2'][kept] = chain['sigma2']
                ll = self._loglik_cached(chain['eta_h'], chain['eta_a'])
                out['loglik'][kept] = ll
                out['logpost'][kept] = ll + self.log_prior(current,
                                                           chain['lam'],
                                                           chain['sigma2'])
                kept += 1
        bar.close()
        n_after = max(cfg.iterations - cfg.burn_in, 1)
        out['acceptance'] = accepted / n_after
        out['intercept_acceptance'] = intercept_accepted / n_after
        return out

    def initialize(self):
        """Penalized-MLE starting point under the initial shrinkage."""
        fit = fit_penalized(self.design, self.shrinkage,
                            FitOptions(max_iterations=500, tolerance=1e-7))
        return fit.coefficients

    def run(self, init=None):
        cfg = self.config
        init = self.initialize() if init is None else init
        lam, sigma2 = self.initial_hyper()
        rngs = spawn_generators(cfg.seed, cfg.n_chains)
        logger.info('sampling %d chains x %d iterations (%d kept each)',
                    cfg.n_chains, cfg.iterations, cfg.kept_per_chain)
        if cfg.processes > 1 and cfg.n_chains > 1:
            with concurrent.futures.ProcessPoolExecutor(cfg.processes) as pool:
                futures = [pool.submit(_chain_task, self, init, lam, sigma2,
                                       rng, i)
                           for i, rng in enumerate(rngs)]
                chains = [f.result() for f in futures]
        else:
            chains = [self.run_single_chain(init, lam, sigma2, rng, i)
                      for i, rng in enumerate(rngs)]

        stacked = {k: np.stack([c[k] for c in chains])
                   for k in chains[0]}
        samples = PosteriorSamples(
            self.design.labels, self.groups, self.omega_fixed,
            [b.key for b in self.blocks], [b.kind.value for b in self.blocks],
            config=cfg.to_dict(), seed=cfg.seed, **stacked)
        if samples.n_draws < cfg.min_kept:
            raise NumericalError('only %d retained samples, %d required'
                                 % (samples.n_draws, cfg.min_kept))
        lag1 = samples.autocorrelation()
        if len(lag1) and np.mean(np.abs(lag1) > 0.1) > 0.05:
            warn('run_chain: lag-1 autocorrelation above 0.1 for %.1f%% of '
                 'parameters; consider more thinning'
                 % (100. * np.mean(np.abs(lag1) > 0.1)))
        return samples


def chain_coeffs(chain):
    return Coefficients(chain['intercepts'], chain['omega'], chain['delta'])


def _chain_task(sampler, init, lam, sigma2, rng, position):
    return sampler.run_single_chain(init, lam, sigma2, rng, position)


def run_chain(design, shrinkage, config=None, init=None):
    return GibbsSampler(design, shrinkage, config).run(init)
