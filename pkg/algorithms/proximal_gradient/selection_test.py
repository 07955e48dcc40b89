import numpy as np
import pytest

from algorithms.competing_hazards.likelihood import Coefficients
from algorithms.proximal_gradient.proximal_gradient import (
    FitOptions, fit_penalized)
from algorithms.proximal_gradient.selection import (
    CELLS, PLAYER_GROUPS, CascadeIncomplete, CascadeResult, _select,
    cv_select, mvp_cascade, pair_selection, penalty_path)
from algorithms.shrinkage.shrinkage import GroupShrinkage, PenaltyFamily
from case_studies.NHL.design import (
    Group, ModelSpec, PredictorKind, Variant, attach_pairs, build_design,
    enumerate_pairs, player_teams)
from case_studies.NHL.event_store import split_by_game
from case_studies.synthetic_league.systems import (
    LeagueSystem, simulate_schedule, small_recipe)
from utilities.errors import ConfigError, NumericalError

FAST = FitOptions(max_iterations=300, tolerance=1e-7)


def base_shrinkage(groups):
    return GroupShrinkage.uniform(groups, PenaltyFamily.l1l2(4., 0.1),
                                  {Group.Goaltender: PenaltyFamily.l2(0.01),
                                   Group.Team: PenaltyFamily.l2(1.)})


@pytest.fixture(scope='module')
def league_design(small_league):
    return build_design(small_league.events, small_league.roster, ModelSpec())


def skater_groups(design):
    return [g for g in design.groups_present() if g in PLAYER_GROUPS
            and g is not Group.Goaltender]


def test_path_rejects_bad_lambdas(league_design):
    shrinkage = base_shrinkage(league_design.groups_present())
    for lambdas in ([], [1., 2.], [3., 3.], [2., -1.]):
        with pytest.raises(ConfigError):
            penalty_path(league_design, shrinkage, [Group.Center], lambdas)


def test_path_warm_starts_from_all_zero(league_design):
    shrinkage = base_shrinkage(league_design.groups_present())
    groups = skater_groups(league_design)
    path = penalty_path(league_design, shrinkage, groups, [1e6, 1.], FAST)
    assert path.nonzero[0] == 0
    assert path.lambdas == [1e6, 1.]
    frame = path.to_frame()
    assert list(frame['lambda']) == [1e6, 1.]
    assert 'heldout_deviance' not in frame.columns


def test_ties_go_to_the_larger_lambda():
    assert _select([8., 4., 2.], [-10., -10., -12.]) == 8.
    assert _select([8., 4., 2.], [-12., -10., -10.]) == 4.


def test_cv_select(small_league, league_design):
    split = split_by_game(small_league.events, 0.75, seed=4)
    shrinkage = base_shrinkage(league_design.groups_present())
    result = cv_select(league_design, [2., 16., 4.], split, shrinkage,
                       skater_groups(league_design), FAST)
    assert result.lambdas == [16., 4., 2.]
    assert result.selected in result.lambdas
    best = np.argmin(result.heldout_deviance)
    assert result.heldout_deviance[result.lambdas.index(result.selected)] == \
        result.heldout_deviance[best]
    assert result.to_dict()['selected_lambda'] == result.selected


def team_fixed(league):
    team_design = build_design(league.events, league.roster,
                               ModelSpec(Variant.Teams))
    team_fit = fit_penalized(team_design,
                             base_shrinkage(team_design.groups_present()),
                             FAST)
    design = build_design(league.events, league.roster,
                          ModelSpec(Variant.Players, include_teams=True))
    fixed = Coefficients.zeros(design.n_predictors)
    fixed.intercepts = team_fit.coefficients.intercepts.copy()
    for p in team_design.registry:
        q = design.registry.index(p.label)
        fixed.omega[q] = team_fit.coefficients.omega[p.index]
        fixed.delta[q] = team_fit.coefficients.delta[p.index]
    return design, fixed


def check_cells(result, design, teams):
    labels = design.labels
    for (team, cell), entry in result.cells.items():
        assert teams[entry.player] == team
        assert cell in CELLS
        if cell in ('mvp_offense', 'mvp_total', 'lvp_defense'):
            assert entry.value > 0
        else:
            assert entry.value < 0
        assert entry.player in labels
        assert not entry.player.endswith('G1')


def test_mvp_cascade_cells(small_league):
    design, fixed = team_fixed(small_league)
    teams = player_teams(small_league.events)
    try:
        result = mvp_cascade(design, fixed, teams, lambda_start=4., step=0.5,
                             weak_lambda=1., opts=FAST)
    except CascadeIncomplete as err:
        result = err.result
    check_cells(result, design, teams)
    lambdas = [row['lambda'] for row in result.trace]
    assert lambdas == sorted(lambdas, reverse=True)
    for entry in result.cells.values():
        assert entry.emergence_lambda in lambdas
        assert entry.weak == (entry.emergence_lambda < 1.)
    frame = result.to_frame()
    assert len(frame) == len(result.teams) * len(CELLS)


def test_cascade_incomplete_reports_missing_cells():
    err = CascadeIncomplete(CascadeResult({}, [], ['T01']))
    assert isinstance(err, NumericalError)
    assert err.exit_code == 3
    assert len(err.result.missing()) == len(CELLS)
    assert 'T01/mvp_offense' in str(err)


def test_cascade_rejects_nonpositive_step(small_league):
    design, fixed = team_fixed(small_league)
    with pytest.raises(ConfigError):
        mvp_cascade(design, fixed, {}, step=0.)


@pytest.mark.slow
def test_planted_mvp_emerges_first():
    recipe = small_recipe(games_per_team=30, shifts_per_game=150,
                          planted={'T01C1': (0.9, -0.6)}, seed=11)
    league = LeagueSystem(recipe).simulate()
    design, fixed = team_fixed(league)
    teams = player_teams(league.events)
    try:
        result = mvp_cascade(design, fixed, teams, lambda_start=8.,
                             step=0.25, opts=FAST)
    except CascadeIncomplete as err:
        result = err.result
    assert result.cells[('T01', 'mvp_total')].player == 'T01C1'


def test_pair_selection(small_league, league_design):
    pairs = enumerate_pairs(small_league.events, small_league.roster, 6)
    design = attach_pairs(league_design, pairs)
    split = split_by_game(small_league.events, 0.75, seed=4)
    individual = base_shrinkage(league_design.groups_present())
    selection = pair_selection(design, individual, [50., 10., 2.], split,
                               FAST)
    assert selection.candidates == 6
    assert selection.selected_lambda in (50., 10., 2.)
    assert selection.unique_pairs == len(selection.table)
    assert list(selection.table.columns) == [
        'pair', 'first', 'second', 'omega', 'delta', 'rating', 'shared_time',
        'co_occurrence']
    ratings = selection.table['rating'].to_numpy()
    assert np.all(np.diff(ratings) <= 0)
    targeted = pair_selection(design, individual, [50., 10., 2.], split,
                              FAST, target_count=0)
    assert targeted.selected_lambda == 50.
    assert targeted.to_dict()['candidates'] == 6


def test_warm_path_matches_cold_restarts(league_design):
    shrinkage = base_shrinkage(league_design.groups_present())
    groups = skater_groups(league_design)
    tight = FitOptions(max_iterations=20000, tolerance=1e-13,
                       gradient_tolerance=1e-8)
    lambdas = [16., 8., 4., 2., 1.]
    path = penalty_path(league_design, shrinkage, groups, lambdas, tight)
    for lam, warm in zip(lambdas, path.fits):
        cold = fit_penalized(league_design, shrinkage.with_l1(groups, lam),
                             tight)
        assert warm.objective == pytest.approx(cold.objective, rel=1e-6)


def first_selected(path, p):
    for k, fit in enumerate(path.fits):
        if fit.coefficients.omega[p] != 0 or fit.coefficients.delta[p] != 0:
            return k
    return len(path.fits)


@pytest.mark.slow
def test_planted_pair_is_selected_first():
    league = LeagueSystem(small_recipe(games_per_team=60, shifts_per_game=150,
                                       null=True, seed=5)).simulate()
    pairs = enumerate_pairs(league.events, league.roster, 6)
    players = build_design(league.events, league.roster, ModelSpec())
    registry = attach_pairs(players, pairs).registry
    spec = ModelSpec(Variant.PlayersPlusPairs, pair_count=len(pairs))
    pair_index = [registry.index(c.label) for c in pairs]
    truth = Coefficients.zeros(len(registry))
    truth.intercepts = league.truth.intercepts.copy()
    planted = pair_index[0]
    truth.omega[planted], truth.delta[planted] = 0.6, -0.4
    events = simulate_schedule(league.schedule, truth, registry, league.roster,
                               spec, seed=9)
    design = build_design(events, league.roster, spec, registry=registry)
    assert list(design.indices_of(PredictorKind.PlayerPair)) == pair_index

    individual = GroupShrinkage.uniform(
        design.groups_present(), PenaltyFamily.l1(20.),
        {Group.Goaltender: PenaltyFamily.l2(0.01)})
    split = split_by_game(events, 0.8, seed=9)
    lambdas = [60., 40., 30., 20., 15., 10., 7., 5., 3., 2., 1.]
    selection = pair_selection(design, individual, lambdas, split, FAST)
    path = selection.cv.path
    first = first_selected(path, planted)
    assert first < len(lambdas)
    assert all(first <= first_selected(path, p) for p in pair_index[1:])
