import dataclasses

import numpy as np
import pytest

from algorithms.competing_hazards.likelihood import Coefficients
from algorithms.proximal_gradient.proximal_gradient import (
    FitOptions, fit_penalized)
from algorithms.proximal_gradient.selection import cv_select
from algorithms.shrinkage.shrinkage import GroupShrinkage, PenaltyFamily
from case_studies.NHL.design import ModelSpec, build_design, registry_for
from case_studies.NHL.event_store import (
    Outcome, ScoreState, game_keys, split_by_game, validate_event)
from case_studies.synthetic_league.systems import (
    LeagueRecipe, LeagueSystem, posterior_predictive_check, sample_outcomes,
    schedule_from_events, simulate_schedule, small_recipe)
from test_functions.competing_exponentials import (
    expected_time, outcome_probabilities, time_variance)
from utilities.errors import DataError


@pytest.mark.parametrize('lam_h, lam_a, t', [(2e-3, 1e-3, 40.),
                                             (5e-2, 1e-2, 30.)])
def test_sample_outcomes_law(lam_h, lam_a, t, rng):
    n = 200000
    outcome, observed = sample_outcomes(np.full(n, lam_h), np.full(n, lam_a),
                                        t, rng)
    p_home, p_away, _ = outcome_probabilities(lam_h, lam_a, t)
    for side, p in ((1, p_home), (-1, p_away)):
        share = np.mean(outcome == side)
        assert abs(share - p) < 4. * np.sqrt(p * (1. - p) / n)
    se = np.sqrt(time_variance(lam_h, lam_a, t) / n)
    assert abs(observed.mean() - expected_time(lam_h, lam_a, t)) < 4. * se


def test_censoring(rng):
    outcome, observed = sample_outcomes([1e-9, 1e-9], [1e-9, 1e-9],
                                        [5., 7.], rng)
    np.testing.assert_array_equal(outcome, [0, 0])
    np.testing.assert_array_equal(observed, [5., 7.])
    outcome, observed = sample_outcomes(1e3, 1e-9, 5., rng)
    assert outcome == 1 and observed < 5.


def replay(fixture_events, fixture_roster, **kwargs):
    spec = ModelSpec()
    registry = registry_for(fixture_roster, spec,
                            players=sorted(fixture_roster))
    coeffs = Coefficients.zeros(len(registry), intercept=-4.)
    schedule = schedule_from_events(fixture_events)
    return simulate_schedule(schedule, coeffs, registry, fixture_roster, spec,
                             **kwargs)


def test_simulate_schedule_is_deterministic(fixture_events, fixture_roster):
    a = replay(fixture_events, fixture_roster, seed=9)
    b = replay(fixture_events, fixture_roster, seed=9)
    assert a == b
    for template, event in zip(fixture_events, a):
        assert event.home_skaters == template.home_skaters
        assert event.score_state is template.score_state
        assert event.duration_s <= template.duration_s
        validate_event(event, fixture_roster)


def test_evolving_score_state(fixture_events, fixture_roster):
    events = replay(fixture_events, fixture_roster, seed=3,
                    evolve_score=True)
    assert events[0].score_state is ScoreState.Tied
    home = away = 0
    for event in events:
        expected = ScoreState.Tied if home == away else (
            ScoreState.HomeLeading if home > away else ScoreState.HomeTrailing)
        assert event.score_state is expected
        home += event.outcome is Outcome.HomeGoal
        away += event.outcome is Outcome.AwayGoal


def test_empty_schedule(fixture_roster):
    assert simulate_schedule([], None, None, fixture_roster) == []


def test_bad_template(fixture_events, fixture_roster):
    template = schedule_from_events(fixture_events)[0]
    bad = dataclasses.replace(template, censor_t=0.)
    with pytest.raises(DataError, match='censor'):
        simulate_schedule([bad], Coefficients.zeros(12), None, fixture_roster)


@pytest.mark.parametrize('overrides', [
    {'players_per_team': {'C': 1, 'L': 1, 'R': 1, 'D': 1, 'G': 1}},
    {'players_per_team': {'C': 1, 'L': 1, 'R': 1, 'D': 2}},
    {'n_teams': 1},
    {'games_per_team': 0},
    {'n_teams': 3, 'games_per_team': 5},
])
def test_infeasible_recipes(overrides):
    with pytest.raises(DataError, match='infeasible'):
        LeagueRecipe(**overrides).check()


def test_small_league(small_league):
    recipe = small_recipe()
    assert recipe.n_games == 12
    assert len(small_league.events) == 12 * 60
    assert len(game_keys(small_league.events)) == 12
    for event in small_league.events:
        validate_event(event, small_league.roster)
    assert len(small_league.roster) == 4 * 10
    frame = small_league.truth_frame()
    goalies = frame['label'].str.endswith('G1')
    assert np.all(frame.loc[goalies, 'omega'] == 0.)
    assert np.any(frame.loc[~goalies, 'omega'] != 0.)


def test_null_and_planted_truth():
    null = LeagueSystem(small_recipe(null=True, seed=1)).draw_truth()
    assert np.all(null.omega == 0.) and np.all(null.delta == 0.)
    planted = LeagueSystem(small_recipe(null=True, seed=1,
                                        planted={'T02C1': (0.5, -0.2),
                                                 'T02G1': (0.4, 0.1)}))
    truth = planted.draw_truth()
    p = planted.registry.index('T02C1')
    assert (truth.omega[p], truth.delta[p]) == (0.5, -0.2)
    g = planted.registry.index('T02G1')
    assert (truth.omega[g], truth.delta[g]) == (0., 0.1)


@pytest.mark.slow
def test_null_league_fits_to_zeros():
    league = LeagueSystem(small_recipe(null=True, games_per_team=10,
                                      seed=6)).simulate()
    design = build_design(league.events, league.roster, ModelSpec())
    groups = design.groups_present()
    base = GroupShrinkage.uniform(groups, PenaltyFamily.l1(1.))
    split = split_by_game(league.events, 0.75, seed=6)
    opts = FitOptions(max_iterations=2000)
    cv = cv_select(design, [32., 16., 8., 6.], split, base, groups, opts)
    fit = fit_penalized(design, base.with_l1(groups, cv.selected), opts)
    free = np.concatenate([fit.coefficients.omega[~design.omega_fixed],
                           fit.coefficients.delta])
    assert np.mean(free == 0.) >= 0.95


def test_leagues_are_reproducible():
    a = LeagueSystem(small_recipe(seed=8, games_per_team=2)).simulate()
    b = LeagueSystem(small_recipe(seed=8, games_per_team=2)).simulate()
    assert a.events == b.events
    np.testing.assert_array_equal(a.truth.delta, b.truth.delta)


def test_posterior_predictive_check(small_league, make_samples, rng):
    design = build_design(small_league.events, small_league.roster,
                          ModelSpec())
    P = design.n_predictors
    truth = small_league.truth
    order = [small_league.registry.index(label) for label in design.labels]
    omega = np.broadcast_to(truth.omega[order], (2, 25, P)).copy()
    delta = np.broadcast_to(truth.delta[order], (2, 25, P)).copy()
    samples = make_samples(omega, delta, labels=design.labels,
                           omega_fixed=design.omega_fixed)
    samples.intercepts[:] = truth.intercepts
    check = posterior_predictive_check(samples, design, small_league.events,
                                       n_draws=30, seed=4)
    assert list(check.totals['scope']) == ['home', 'away', 'all']
    assert list(check.teams['team']) == ['T01', 'T02', 'T03', 'T04']
    assert np.all(check.totals['lower'] <= check.totals['upper'])
    assert isinstance(check.verdict, bool)
    assert 0. <= check.team_coverage <= 1.

    wrong = make_samples(omega, delta, omega_fixed=design.omega_fixed)
    with pytest.raises(DataError, match='absent'):
        posterior_predictive_check(wrong, design, small_league.events)
