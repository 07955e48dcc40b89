"""
Penalty paths with warm starts, held-out penalty selection, the MVP/LVP
lasso cascade and player-pair selection.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from algorithms.competing_hazards.likelihood import HazardLikelihood
from algorithms.proximal_gradient.proximal_gradient import (
    FitOptions, fit_penalized)
from algorithms.shrinkage.shrinkage import GroupShrinkage, PenaltyFamily, Side
from case_studies.NHL.design import Group, PredictorKind
from utilities.errors import ConfigError, DataError, NumericalError
from utilities.general_utility_functions import warn

logger = logging.getLogger(__name__)

PLAYER_GROUPS = (Group.Center, Group.LeftWing, Group.RightWing, Group.Defense,
                 Group.Goaltender)
CELLS = ('mvp_offense', 'mvp_defense', 'mvp_total',
         'lvp_offense', 'lvp_defense', 'lvp_total')


@dataclass
class PenaltyPath:
    lambdas: list
    fits: list
    nonzero: list
    heldout_loglik: list = field(default_factory=list)

    @property
    def heldout_deviance(self):
        return [-2. * v for v in self.heldout_loglik]

    def to_frame(self):
        frame = pd.DataFrame({'lambda': self.lambdas, 'nonzero': self.nonzero,
                              'objective': [f.objective for f in self.fits],
                              'converged': [f.converged for f in self.fits]})
        if self.heldout_loglik:
            frame['heldout_deviance'] = self.heldout_deviance
        return frame


@dataclass
class CVResult:
    selected: float
    lambdas: list
    heldout_deviance: list
    path: PenaltyPath

    def to_dict(self):
        return {'selected_lambda': self.selected, 'lambdas': self.lambdas,
                'heldout_deviance': self.heldout_deviance}


def _check_lambdas(lambdas):
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ConfigError('penalty path needs at least one lambda value')
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError('penalty values must be strictly decreasing')
    if any(v <= 0 for v in lambdas):
        raise ConfigError('penalty values must be positive')
    return lambdas


def _group_nonzero(design, coeffs, groups):
    omega_fixed = design.omega_fixed
    count = 0
    for group in groups:
        members = design.members(group)
        count += np.count_nonzero(coeffs.omega[members][~omega_fixed[members]])
        count += np.count_nonzero(coeffs.delta[members])
    return int(count)


def penalty_path(design, base_shrinkage, groups, lambdas, opts=None,
                 init=None, test_design=None, progress=False):
    """
    Fit the lasso weight of the target groups at each lambda, strict to
    loose, warm-starting every fit from the previous solution.
    """
    lambdas = _check_lambdas(lambdas)
    groups = tuple(groups) if isinstance(groups, (list, tuple, set)) \
        else (groups,)
    opts = opts or FitOptions()
    lik = HazardLikelihood(design, opts.threads)
    test_lik = HazardLikelihood(test_design, opts.threads) \
        if test_design is not None else None
    current = init
    path = PenaltyPath([], [], [])
    for lam in tqdm(lambdas, disable=not progress, desc='penalty path'):
        shrinkage = base_shrinkage.with_l1(groups, lam)
        fit = fit_penalized(design, shrinkage, opts, current, likelihood=lik)
        current = fit.coefficients
        path.lambdas.append(lam)
        path.fits.append(fit)
        path.nonzero.append(_group_nonzero(design, current, groups))
        if test_lik is not None:
            path.heldout_loglik.append(test_lik.total_loglik(current))
        logger.debug('lambda %.4g: %d nonzero', lam, path.nonzero[-1])
    return path


def _select(lambdas, heldout):
    """argmax of held-out loglik; ties go to the larger lambda."""
    best = None
    for lam, value in sorted(zip(lambdas, heldout), key=lambda p: -p[0]):
        if best is None or value > best[1]:
            best = (lam, value)
    return best[0]


def cv_select(design, candidates, split, base_shrinkage, groups, opts=None):
    train_rows, test_rows = design.split_rows(split)
    if not np.any(test_rows):
        raise DataError('held-out selection needs a nonempty test side')
    lambdas = sorted({float(c) for c in candidates}, reverse=True)
    path = penalty_path(design.subset(train_rows), base_shrinkage, groups,
                        lambdas, opts, test_design=design.subset(test_rows))
    selected = _select(path.lambdas, path.heldout_loglik)
    logger.info('held-out selection: lambda = %g', selected)
    return CVResult(selected, path.lambdas, path.heldout_deviance, path)


@dataclass
class CascadeCell:
    team: str
    cell: str
    player: str
    value: float
    emergence_lambda: float
    weak: bool


@dataclass
class CascadeResult:
    cells: dict
    trace: list
    teams: list

    @property
    def complete(self):
        return all((team, cell) in self.cells for team in self.teams
                   for cell in CELLS)

    def missing(self):
        return [(team, cell) for team in self.teams for cell in CELLS
                if (team, cell) not in self.cells]

    def to_frame(self):
        rows = []
        for team in self.teams:
            for cell in CELLS:
                c = self.cells.get((team, cell))
                rows.append({'team': team, 'cell': cell,
                             'player': c.player if c else None,
                             'value': c.value if c else np.nan,
                             'emergence_lambda': c.emergence_lambda if c
                             else np.nan,
                             'weak': c.weak if c else None})
        return pd.DataFrame(rows)

    def trace_frame(self):
        return pd.DataFrame(self.trace)


class CascadeIncomplete(NumericalError):
    def __init__(self, result):
        self.result = result
        missing = ', '.join('%s/%s' % m for m in result.missing())
        super().__init__('cascade reached lambda <= 0 with unfilled cells: %s'
                         % missing)


def _cell_values(omega, delta):
    net = omega - delta
    return {'mvp_offense': (omega, omega > 0, np.argmax),
            'mvp_defense': (delta, delta < 0, np.argmin),
            'mvp_total': (net, net > 0, np.argmax),
            'lvp_offense': (omega, omega < 0, np.argmin),
            'lvp_defense': (delta, delta > 0, np.argmax),
            'lvp_total': (net, net < 0, np.argmin)}


def mvp_cascade(design, fixed, player_team, lambda_start=8., step=0.25,
                weak_lambda=1., opts=None, progress=False):
    """
    INPUTS
    ------------------------------------
    design:        players + teams design
    fixed:         Coefficients holding the team ratings and grand means
    player_team:   player label -> team identifier
    lambda_start:  first lasso penalty on player effects
    step:          decrement between refits
    weak_lambda:   cells first filled below this penalty are flagged weak

    OUTPUTS
    ------------------------------------
    CascadeResult; raises CascadeIncomplete (carrying the partial result)
    when lambda reaches 0 with empty cells.
    """
    if step <= 0:
        raise ConfigError('cascade step must be positive')
    teams = design.indices_of(PredictorKind.Team)
    goalies = design.members(Group.Goaltender)
    players = design.indices_of(PredictorKind.Player)
    skaters = np.setdiff1d(players, goalies)
    labels = design.labels
    team_names = sorted({player_team[labels[p]] for p in skaters
                         if labels[p] in player_team})
    by_team = {team: np.array([p for p in skaters
                               if player_team.get(labels[p]) == team],
                              dtype=int)
               for team in team_names}

    base = dict(opts.__dict__) if opts is not None else {}
    base.update(frozen=frozenset(teams) | frozenset(goalies),
                freeze_intercepts=True)
    fit_opts = FitOptions(**base)
    init = fixed.copy()
    init.omega[skaters] = 0.
    init.delta[skaters] = 0.
    init.omega[goalies] = 0.
    init.delta[goalies] = 0.

    groups = [g for g in design.groups_present() if g in PLAYER_GROUPS]
    lik = HazardLikelihood(design, fit_opts.threads)
    result = CascadeResult({}, [], team_names)
    lambdas = []
    lam = lambda_start
    while lam > 1e-12:
        lambdas.append(lam)
        lam = round(lam - step, 12)

    current = init
    for lam in tqdm(lambdas, disable=not progress, desc='MVP cascade'):
        shrinkage = _cascade_shrinkage(design, lam)
        fit = fit_penalized(design, shrinkage, fit_opts, current,
                            likelihood=lik)
        current = fit.coefficients
        filled = []
        for team, members in by_team.items():
            if len(members) == 0:
                continue
            cells = _cell_values(current.omega[members],
                                 current.delta[members])
            for cell, (values, qualifies, pick) in cells.items():
                if (team, cell) in result.cells or not np.any(qualifies):
                    continue
                candidates = np.flatnonzero(qualifies)
                best = candidates[pick(values[candidates])]
                result.cells[(team, cell)] = CascadeCell(
                    team, cell, labels[members[best]],
                    float(values[best]), lam, lam < weak_lambda)
                filled.append('%s/%s' % (team, cell))
        result.trace.append({'lambda': lam,
                             'nonzero': _group_nonzero(design, current,
                                                       groups),
                             'filled': ';'.join(filled)})
        if result.complete:
            break

    weak = [c for c in result.cells.values() if c.weak]
    if weak:
        warn('mvp_cascade: %d cells emerged below lambda = %g and are '
             'flagged weak' % (len(weak), weak_lambda))
    if not result.complete:
        raise CascadeIncomplete(result)
    return result


def _cascade_shrinkage(design, lam):
    present = design.groups_present()
    # team effects are frozen; their family only has to exist
    overrides = {Group.Team: PenaltyFamily.l2(1.)}
    return GroupShrinkage.uniform(present, PenaltyFamily.l1(lam), overrides)


@dataclass
class PairSelection:
    selected_lambda: float
    table: pd.DataFrame
    nonzero_parameters: int
    unique_pairs: int
    candidates: int
    cv: CVResult
    coefficients: object

    def to_dict(self):
        return {'selected_lambda': self.selected_lambda,
                'nonzero_parameters': self.nonzero_parameters,
                'unique_pairs': self.unique_pairs,
                'candidates': self.candidates,
                'heldout': self.cv.to_dict()}


def pair_selection(design, individual_shrinkage, pair_lambdas, split,
                   opts=None, target_count=None):
    """
    Select the pair lasso penalty on held-out games (or the penalty whose
    count of selected unique pairs is closest to target_count), refit on all
    rows and report every pair with a nonzero omega or delta.
    """
    pairs = design.indices_of(PredictorKind.PlayerPair)
    if len(pairs) == 0:
        raise DataError('design has no pair predictors')
    base = individual_shrinkage.copy()
    for side_key in list(base.keys()):
        if side_key[0] is Group.Pair:
            del base.families[side_key]
    for side in Side:
        base[(Group.Pair, side)] = PenaltyFamily.l1(max(pair_lambdas))

    cv = cv_select(design, pair_lambdas, split, base, (Group.Pair,), opts)
    selected = cv.selected
    if target_count is not None:
        counts = [_unique_pairs(fit.coefficients, pairs)
                  for fit in cv.path.fits]
        distance = [abs(c - target_count) for c in counts]
        best = min(range(len(distance)),
                   key=lambda i: (distance[i], -cv.lambdas[i]))
        selected = cv.lambdas[best]

    index = cv.lambdas.index(selected)
    warm = cv.path.fits[index].coefficients
    final = fit_penalized(design, base.with_l1((Group.Pair,), selected),
                          opts, warm)
    coeffs = final.coefficients
    rows = []
    for p in pairs:
        pred = design.registry.predictors[p]
        if coeffs.omega[p] == 0 and coeffs.delta[p] == 0:
            continue
        rows.append({'pair': pred.label, 'first': pred.members[0],
                     'second': pred.members[1], 'omega': coeffs.omega[p],
                     'delta': coeffs.delta[p],
                     'rating': coeffs.omega[p] - coeffs.delta[p],
                     'shared_time': pred.shared_time,
                     'co_occurrence': pred.co_occurrence})
    table = pd.DataFrame(rows, columns=['pair', 'first', 'second', 'omega',
                                        'delta', 'rating', 'shared_time',
                                        'co_occurrence'])
    table = table.sort_values('rating', ascending=False, ignore_index=True)
    nonzero = int(np.count_nonzero(coeffs.omega[pairs]) +
                  np.count_nonzero(coeffs.delta[pairs]))
    logger.info('pair selection: lambda %g, %d nonzero parameters on %d pairs',
                selected, nonzero, len(table))
    return PairSelection(selected, table, nonzero, len(table), len(pairs), cv,
                         coeffs)


def _unique_pairs(coeffs, pairs):
    return int(np.count_nonzero((coeffs.omega[pairs] != 0) |
                                (coeffs.delta[pairs] != 0)))
