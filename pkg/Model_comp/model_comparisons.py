"""
Score-only, team and player models fitted on the same game split and
compared on the withheld games (doubled negative log-likelihood) and, for
sampled fits, by DIC.

Run as a script it compares the three models on a small synthetic league
with planted player effects.
"""
import logging

import numpy as np
import pandas as pd

from algorithms.MCMC_sampler.gibbs_sampler import run_chain
from algorithms.proximal_gradient.proximal_gradient import fit_penalized
from case_studies.NHL.design import ModelSpec, Variant, build_design
from case_studies.NHL.event_store import split_by_game
from utilities.metrics import dic, oos_deviance

logger = logging.getLogger(__name__)

COMPARED = (Variant.ScoreOnly, Variant.Teams, Variant.Players)


def compare_models(events, roster, split, shrinkage_for, opts=None,
                   chain_config=None, variants=COMPARED, include_teams=False):
    """
    INPUTS
    ------------------------------------
    events, roster:  the full event collection and its roster
    split:           DataSplit shared by every model
    shrinkage_for:   callable(groups) -> GroupShrinkage for a design's groups
    opts:            FitOptions of the penalized fits
    chain_config:    ChainConfig; when given each model is also sampled and
                     scored with in-sample DIC and posterior-mean OOS deviance

    OUTPUTS
    ------------------------------------
    DataFrame with one row per model, in the order given
    """
    rows, fits = [], {}
    for variant in variants:
        spec = ModelSpec(variant, include_teams and variant is Variant.Players)
        design = build_design(events, roster, spec)
        train_rows, test_rows = design.split_rows(split)
        train, test = design.subset(train_rows), design.subset(test_rows)
        shrinkage = shrinkage_for(design.groups_present())
        fit = fit_penalized(train, shrinkage, opts)
        fits[variant.value] = fit
        row = {'model': variant.value, 'predictors': design.n_predictors,
               'train_events': train.n_rows, 'test_events': test.n_rows,
               'train_loglik': fit.loglik, 'converged': fit.converged,
               'oos_deviance': oos_deviance(fit.coefficients, test)}
        if chain_config is not None:
            samples = run_chain(train, shrinkage, chain_config,
                                init=fit.coefficients)
            report = dic(samples, train)
            row.update({'dic': report.dic, 'p_d': report.p_d,
                        'oos_deviance_posterior_mean':
                            oos_deviance(samples.posterior_mean(), test)})
        logger.info('%s: %d predictors, held-out deviance %.2f',
                    variant.value, design.n_predictors, row['oos_deviance'])
        rows.append(row)
    frame = pd.DataFrame(rows)
    best = frame['oos_deviance'].min()
    frame['oos_deviance_gap'] = frame['oos_deviance'] - best
    return frame, fits


if __name__ == '__main__':
    from algorithms.shrinkage.shrinkage import GroupShrinkage, PenaltyFamily
    from case_studies.NHL.design import Group
    from case_studies.synthetic_league.systems import (
        LeagueSystem, small_recipe)

    logging.basicConfig(level=logging.INFO)
    recipe = small_recipe(games_per_team=20, shifts_per_game=150,
                          planted={'T01C1': (0.6, -0.3),
                                   'T02D1': (0.4, -0.4)}, seed=7)
    league = LeagueSystem(recipe).simulate()
    split = split_by_game(league.events, 0.8, seed=7)

    def shrinkage_for(groups):
        return GroupShrinkage.uniform(
            groups, PenaltyFamily.l1l2(4., 0.1),
            {Group.Goaltender: PenaltyFamily.l2(0.01),
             Group.Team: PenaltyFamily.l2(1.)})

    comparison, _ = compare_models(league.events, league.roster, split,
                                   shrinkage_for)
    with pd.option_context('display.width', 120):
        print(comparison)
    print('player model wins:', bool(np.argmin(comparison['oos_deviance'])
                                      == len(COMPARED) - 1))
