#------------------------------------------------
#  Model comparison and derived ratings:
#  DIC, out-of-sample deviance, G_net contributions,
#  probability-best and the variance decomposition by position.
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from algorithms.competing_hazards.likelihood import HazardLikelihood
from algorithms.shrinkage.shrinkage import FamilyKind, reparam_to_total
from case_studies.NHL.event_store import ScoreState
from utilities.errors import DataError

logger = logging.getLogger(__name__)

R_BASE = -7.3
SECONDS_PER_HOUR = 3600.


@dataclass(frozen=True)
class DicReport:
    mean_deviance: float
    deviance_at_mean: float
    p_d: float
    dic: float
    scope: str = 'in-sample'

    def to_dict(self):
        return {'mean_deviance': self.mean_deviance,
                'deviance_at_mean': self.deviance_at_mean,
                'p_d': self.p_d, 'dic': self.dic, 'scope': self.scope}


def dic_from_deviances(deviances, deviance_at_mean, scope='in-sample'):
    deviances = np.asarray(deviances, dtype=float)
    if deviances.size == 0:
        raise DataError('DIC needs at least one retained draw')
    mean = float(deviances.mean())
    p_d = mean - float(deviance_at_mean)
    return DicReport(mean, float(deviance_at_mean), p_d,
                     2. * mean - float(deviance_at_mean), scope)


def dic(samples, design, scope='in-sample', threads=1):
    """D = -2 loglik per retained draw on the design, against D at the posterior mean."""
    if samples.n_draws == 0:
        raise DataError('DIC needs at least one retained draw')
    lik = HazardLikelihood(design, threads)
    deviances = [-2. * lik.total_loglik(samples.draw(i))
                 for i in range(samples.n_draws)]
    at_mean = -2. * lik.total_loglik(samples.posterior_mean())
    return dic_from_deviances(deviances, at_mean, scope)


def oos_deviance(coeffs, design, threads=1):
    if design.n_rows == 0:
        return 0.
    return -2. * HazardLikelihood(design, threads).total_loglik(coeffs)


def g_net(omega, delta, seconds, r_base=R_BASE, literal=False):
    """
    Goals scored and stopped above an average player over the given ice
    time at baseline rate exp(r_base). By default net = scored + stopped;
    literal=True evaluates net = scored - stopped.
    """
    omega, delta, seconds = np.broadcast_arrays(
        np.asarray(omega, dtype=float), np.asarray(delta, dtype=float),
        np.asarray(seconds, dtype=float))
    base = np.exp(r_base)
    scored = (np.exp(r_base + omega) - base) * seconds
    stopped = (np.exp(r_base - delta) - base) * seconds
    net = scored - stopped if literal else scored + stopped
    if scored.ndim == 0:
        return float(scored), float(stopped), float(net)
    return scored, stopped, net


def prob_best(net_draws):
    """
    net_draws: (draws, players) array of omega - delta. Returns each
    player's share of draws in which it has the group maximum, with ties
    split equally.
    """
    net_draws = np.atleast_2d(np.asarray(net_draws, dtype=float))
    if net_draws.shape[1] == 0:
        return np.zeros(0)
    best = net_draws == net_draws.max(axis=1, keepdims=True)
    share = best / best.sum(axis=1, keepdims=True)
    return share.mean(axis=0)


def prob_best_by_group(samples, members, labels=None):
    """Probability-best among the given predictor indices of a samples object."""
    members = np.asarray(members, dtype=int)
    net = samples.flat('omega')[:, members] - samples.flat('delta')[:, members]
    probs = prob_best(net)
    labels = labels or [samples.labels[p] for p in members]
    return pd.Series(probs, index=labels)


def variance_decomposition(samples, blocks=None):
    """
    Per (group, side) block and retained draw: the standard deviation of the
    block's coefficients and the Laplace fraction f = (lam / sqrt 2) /
    (lam / sqrt 2 + 1 / sigma) of that draw's hyperparameters (1 for pure
    L1 blocks, 0 for pure L2). Summarised with medians and 50% / 95%
    intervals.
    """
    w, d = samples.flat('omega'), samples.flat('delta')
    groups = np.array(samples.groups)
    lam, sigma2 = samples.flat('lam'), samples.flat('sigma2')
    rows = []
    for k, (key, kind) in enumerate(zip(samples.blocks, samples.block_kinds)):
        if blocks is not None and key not in blocks:
            continue
        group, side = key.split('/')
        members = np.flatnonzero(groups == group)
        if side == 'offense':
            members = members[~samples.omega_fixed[members]]
            values = w[:, members]
        else:
            values = d[:, members]
        spread = values.std(axis=1)
        kind = FamilyKind(kind)
        if kind is FamilyKind.L1:
            fraction = np.ones(len(spread))
        elif kind is FamilyKind.L2:
            fraction = np.zeros(len(spread))
        else:
            fraction = reparam_to_total(lam[:, k], np.sqrt(sigma2[:, k]))[1]
        row = {'group': group, 'side': side}
        for name, series in (('spread', spread), ('laplace_fraction',
                                                  fraction)):
            q = np.quantile(series, [0.025, 0.25, 0.5, 0.75, 0.975])
            row.update({name + '_q025': q[0], name + '_q25': q[1],
                        name + '_median': q[2], name + '_q75': q[3],
                        name + '_q975': q[4]})
        rows.append(row)
    return pd.DataFrame(rows)


def contribution_report(table, r_base=R_BASE, samples=None, rank_by='net',
                        literal=False):
    """
    G_net table. table has columns label, omega, delta, seconds and
    optionally name and position; with samples, %Pr(best) within each
    position is added, ranking draws by net rating (default) or by G_net.
    """
    for column in ('label', 'omega', 'delta', 'seconds'):
        if column not in table.columns:
            raise DataError('contribution table lacks column %s' % column,
                            field=column)
    out = table.copy()
    scored, stopped, net = g_net(out['omega'].to_numpy(),
                                 out['delta'].to_numpy(),
                                 out['seconds'].to_numpy(), r_base, literal)
    out['scored'] = scored
    out['stopped'] = stopped
    out['g_net'] = net
    out = out.sort_values('g_net', ascending=False, ignore_index=True)
    out.insert(0, 'rank', np.arange(1, len(out) + 1))
    if samples is not None:
        out['prob_best'] = np.nan
        index = {label: p for p, label in enumerate(samples.labels)}
        positions = out['position'] if 'position' in out.columns else \
            pd.Series(['all'] * len(out))
        w, d = samples.flat('omega'), samples.flat('delta')
        for position in positions.unique():
            rows = out.index[positions == position]
            members = [index[label] for label in out.loc[rows, 'label']]
            if rank_by == 'g_net':
                seconds = out.loc[rows, 'seconds'].to_numpy()
                score = g_net(w[:, members], d[:, members], seconds, r_base,
                              literal)[2]
            else:
                score = w[:, members] - d[:, members]
            out.loc[rows, 'prob_best'] = prob_best(score)
    return out


def intercept_rates(coeffs):
    """Home / away goals per 60 minutes in each score state."""
    rates = np.exp(coeffs.intercepts) * SECONDS_PER_HOUR
    return pd.DataFrame({'score_state': [s.code for s in ScoreState],
                         'home_per_60': rates[0], 'away_per_60': rates[1]})
