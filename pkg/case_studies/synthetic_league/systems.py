"""
Generative side of the hazard model: single events, scheduled shifts,
whole synthetic leagues with known truth, and posterior-predictive replicates.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from algorithms.competing_hazards.likelihood import (
    AWAY, HOME, Coefficients, HazardLikelihood, N_STATES, RatePair)
from algorithms.shrinkage.shrinkage import PenaltyFamily, sample_prior
from case_studies.NHL.design import (
    Group, ModelSpec, Variant, build_design, registry_for)
from case_studies.NHL.event_store import (
    SKATERS_PER_SIDE, Outcome, Position, Roster, RosterEntry, ScoreState,
    ShiftEvent)
from utilities.errors import DataError
from utilities.general_utility_functions import spawn_generators

logger = logging.getLogger(__name__)

POSITION_CODES = {'C': Position.Center, 'L': Position.LeftWing,
                  'R': Position.RightWing, 'D': Position.Defense,
                  'G': Position.Goaltender}
LINE_SLOTS = {'C': 1, 'L': 1, 'R': 1, 'D': 2}


def sample_outcomes(lam_h, lam_a, censor, rng):
    """
    Vectorised competing exponentials: returns (outcome, observed time)
    with outcome +1 / -1 when the home / away clock fires first and 0 when
    the censoring time comes first.
    """
    lam_h = np.asarray(lam_h, dtype=float)
    lam_a = np.asarray(lam_a, dtype=float)
    censor = np.broadcast_to(np.asarray(censor, dtype=float),
                             np.broadcast(lam_h, lam_a).shape)
    t_home = rng.exponential(1. / lam_h, size=censor.shape)
    t_away = rng.exponential(1. / lam_a, size=censor.shape)
    observed = np.minimum(np.minimum(t_home, t_away), censor)
    outcome = np.zeros(censor.shape, dtype=int)
    outcome[(t_home < t_away) & (t_home < censor)] = 1
    outcome[(t_away <= t_home) & (t_away < censor)] = -1
    return outcome, observed


def sample_event(rates, censor_t, rng):
    outcome, observed = sample_outcomes([rates.home], [rates.away],
                                        [censor_t], rng)
    return Outcome(int(outcome[0])), float(observed[0])


@dataclass(frozen=True)
class ShiftTemplate:
    season: str
    game_id: str
    home_team: str
    away_team: str
    score_state: ScoreState
    home_skaters: frozenset
    away_skaters: frozenset
    home_goalie: str
    away_goalie: str
    censor_t: float

    @property
    def game_key(self):
        return (self.season, self.game_id)

    def to_event(self, outcome, duration, score_state=None):
        return ShiftEvent(self.season, self.game_id, float(duration),
                          Outcome(int(outcome)), self.home_team,
                          self.away_team,
                          self.score_state if score_state is None
                          else score_state,
                          self.home_skaters, self.away_skaters,
                          self.home_goalie, self.away_goalie)


def schedule_from_events(events):
    """Templates replaying observed personnel; observed durations become censor times."""
    return [ShiftTemplate(e.season, e.game_id, e.home_team, e.away_team,
                          e.score_state, e.home_skaters, e.away_skaters,
                          e.home_goalie, e.away_goalie, e.duration_s)
            for e in events]


def _check_template(template):
    if not template.censor_t > 0:
        raise DataError('censor time must be positive in game %s'
                        % template.game_id, field='censor_t')
    for side in ('home', 'away'):
        skaters = getattr(template, side + '_skaters')
        if len(skaters) != SKATERS_PER_SIDE or \
                getattr(template, side + '_goalie') in skaters:
            raise DataError('template in game %s violates the full-strength '
                            'rule on the %s side' % (template.game_id, side),
                            field=side + '_skaters')


def _state_after(home_goals, away_goals):
    if home_goals > away_goals:
        return ScoreState.HomeLeading
    if home_goals < away_goals:
        return ScoreState.HomeTrailing
    return ScoreState.Tied


def simulate_schedule(schedule, coeffs, registry, roster, spec=None, seed=0,
                      evolve_score=False):
    """
    INPUTS
    ------------------------------------
    schedule:      list of ShiftTemplate
    coeffs:        Coefficients over registry
    registry:      Registry resolving the templates' teams / players
    roster:        Roster
    spec:          ModelSpec the coefficients belong to
    seed:          master seed, split into one stream per game
    evolve_score:  score state follows the simulated goals of each game
                   (starting tied) instead of the templates' states

    OUTPUTS
    ------------------------------------
    list of ShiftEvent, one per template, in schedule order
    """
    spec = spec or ModelSpec(Variant.Players)
    if len(schedule) == 0:
        return []
    for template in schedule:
        _check_template(template)
    placeholder = [t.to_event(0, t.censor_t) for t in schedule]
    design = build_design(placeholder, roster, spec, registry=registry)
    # score-free linear predictors; the intercept is added per state below
    zero_r = coeffs.copy()
    zero_r.intercepts = np.zeros((2, N_STATES))
    base_h, base_a = HazardLikelihood(design).linear_predictors(zero_r)

    games = sorted({t.game_key for t in schedule})
    streams = dict(zip(games, spawn_generators(seed, len(games))))
    by_game = {}
    for i, template in enumerate(schedule):
        by_game.setdefault(template.game_key, []).append(i)

    events = [None] * len(schedule)
    for game in games:
        rng = streams[game]
        rows = np.array(by_game[game])
        if not evolve_score:
            states = design.state[rows]
            lam_h = np.exp(base_h[rows] + coeffs.intercepts[HOME, states])
            lam_a = np.exp(base_a[rows] + coeffs.intercepts[AWAY, states])
            outcome, observed = sample_outcomes(lam_h, lam_a,
                                                design.duration[rows], rng)
            for j, i in enumerate(rows):
                events[i] = schedule[i].to_event(outcome[j], observed[j])
            continue
        home_goals = away_goals = 0
        for i in rows:
            state = _state_after(home_goals, away_goals)
            rates = RatePair(np.exp(base_h[i] + coeffs.intercepts[HOME, state]),
                             np.exp(base_a[i] + coeffs.intercepts[AWAY, state]))
            outcome, observed = sample_event(rates, schedule[i].censor_t, rng)
            events[i] = schedule[i].to_event(outcome, observed, state)
            home_goals += outcome is Outcome.HomeGoal
            away_goals += outcome is Outcome.AwayGoal
    return events


def default_intercepts():
    intercepts = np.empty((2, N_STATES))
    intercepts[HOME] = -7.25
    intercepts[AWAY] = -7.35
    return intercepts


@dataclass
class LeagueRecipe:
    n_teams: int = 30
    players_per_team: dict = field(default_factory=lambda: {
        'C': 4, 'L': 4, 'R': 4, 'D': 6, 'G': 2})
    games_per_team: int = 82
    shifts_per_game: int = 200
    shift_median_s: float = 13.
    shift_log_sd: float = 0.5
    intercepts: np.ndarray = field(default_factory=default_intercepts)
    truth: dict = field(default_factory=lambda: {
        'skater': PenaltyFamily.l1l2(10., 0.01),
        'goalie': PenaltyFamily.l2(0.01)})
    planted: dict = field(default_factory=dict)
    null: bool = False
    season: str = '20112012'
    evolve_score: bool = True
    seed: int = 0

    def check(self):
        for code, needed in (('C', 1), ('L', 1), ('R', 1), ('D', 2), ('G', 1)):
            if self.players_per_team.get(code, 0) < needed:
                raise DataError('infeasible recipe: each team needs at least '
                                '%d players at position %s' % (needed, code))
        if self.n_teams < 2:
            raise DataError('infeasible recipe: at least 2 teams needed')
        if self.games_per_team < 1 or self.shifts_per_game < 1:
            raise DataError('infeasible recipe: games and shifts must be '
                            'positive')
        if (self.n_teams * self.games_per_team) % 2:
            raise DataError('infeasible recipe: n_teams * games_per_team '
                            'must be even')

    @property
    def n_games(self):
        return self.n_teams * self.games_per_team // 2


@dataclass
class League:
    events: list
    truth: Coefficients
    roster: Roster
    registry: object
    schedule: list

    def truth_frame(self):
        return pd.DataFrame({'label': self.registry.labels,
                             'omega': self.truth.omega,
                             'delta': self.truth.delta})


class LeagueSystem:
    """Synthetic league with known player effects."""

    def __init__(self, recipe=None):
        self.recipe = recipe or LeagueRecipe()
        self.recipe.check()
        (self.roster_rng, self.truth_rng,
         self.schedule_rng) = spawn_generators(self.recipe.seed, 3)
        self.roster, self.team_players = self.build_roster()
        self.teams = sorted(self.team_players)
        self.spec = ModelSpec(Variant.Players)
        self.registry = registry_for(self.roster, self.spec,
                                     players=list(self.roster))

    def build_roster(self):
        roster = Roster()
        team_players = {}
        for t in range(self.recipe.n_teams):
            team = 'T%02d' % (t + 1)
            team_players[team] = {}
            for code, count in self.recipe.players_per_team.items():
                ids = ['%s%s%d' % (team, code, k + 1) for k in range(count)]
                for pid in ids:
                    roster[pid] = RosterEntry(pid, POSITION_CODES[code])
                team_players[team][code] = ids
        return roster, team_players

    def draw_truth(self):
        recipe = self.recipe
        P = len(self.registry)
        coeffs = Coefficients(np.array(recipe.intercepts, dtype=float),
                              np.zeros(P), np.zeros(P))
        if not recipe.null:
            for p in self.registry:
                key = 'goalie' if p.group is Group.Goaltender else 'skater'
                family = recipe.truth[key]
                if p.group is not Group.Goaltender:
                    coeffs.omega[p.index] = sample_prior(family, 1,
                                                         self.truth_rng)[0]
                coeffs.delta[p.index] = sample_prior(family, 1,
                                                     self.truth_rng)[0]
        for label, (omega, delta) in recipe.planted.items():
            p = self.registry.index(label)
            coeffs.omega[p] = omega if \
                self.roster.position(label) is not Position.Goaltender else 0.
            coeffs.delta[p] = delta
        return coeffs

    def _pairings(self):
        recipe = self.recipe
        ordered = [(h, a) for h in self.teams for a in self.teams if h != a]
        rng = self.schedule_rng
        games = []
        while len(games) < recipe.n_games:
            order = rng.permutation(len(ordered))
            games.extend(ordered[i] for i in order)
        return games[:recipe.n_games]

    def _line(self, team, rng):
        skaters = []
        players = self.team_players[team]
        for code, slots in LINE_SLOTS.items():
            pick = rng.choice(len(players[code]), size=slots, replace=False)
            skaters.extend(players[code][i] for i in pick)
        return frozenset(skaters)

    def build_schedule(self):
        recipe = self.recipe
        rng = self.schedule_rng
        schedule = []
        for g, (home, away) in enumerate(self._pairings()):
            game_id = 'G%05d' % (g + 1)
            goalies = {team: self.team_players[team]['G'][
                rng.integers(len(self.team_players[team]['G']))]
                for team in (home, away)}
            lengths = rng.lognormal(np.log(recipe.shift_median_s),
                                    recipe.shift_log_sd,
                                    size=recipe.shifts_per_game)
            for length in lengths:
                schedule.append(ShiftTemplate(
                    recipe.season, game_id, home, away, ScoreState.Tied,
                    self._line(home, rng), self._line(away, rng),
                    goalies[home], goalies[away], float(length)))
        return schedule

    def simulate(self):
        truth = self.draw_truth()
        schedule = self.build_schedule()
        events = simulate_schedule(schedule, truth, self.registry,
                                   self.roster, self.spec,
                                   seed=int(self.schedule_rng.integers(2 ** 31)),
                                   evolve_score=self.recipe.evolve_score)
        logger.info('synthetic league: %d teams, %d games, %d events',
                    self.recipe.n_teams, self.recipe.n_games, len(events))
        return League(events, truth, self.roster, self.registry, schedule)


def synthetic_league(recipe=None):
    league = LeagueSystem(recipe).simulate()
    return league.events, league.truth, league.roster


def small_recipe(**overrides):
    """A league small enough for unit tests."""
    recipe = LeagueRecipe(n_teams=4, games_per_team=6, shifts_per_game=60,
                          players_per_team={'C': 2, 'L': 2, 'R': 2, 'D': 3,
                                            'G': 1})
    return replace(recipe, **overrides)


@dataclass
class PredictiveCheck:
    teams: pd.DataFrame
    totals: pd.DataFrame
    level: float

    @property
    def verdict(self):
        """Observed total goals inside the simulated central interval."""
        row = self.totals[self.totals['scope'] == 'all']
        return bool(row['inside'].iloc[0])

    @property
    def team_coverage(self):
        return float(self.teams['inside'].mean())


def _interval(values, level):
    tail = 0.5 * (1. - level)
    return np.quantile(values, [tail, 1. - tail], axis=0)


def posterior_predictive_check(samples, design, events, n_draws=None, seed=0,
                               level=0.95):
    """
    Simulate the withheld rows once per retained draw (or a subsample of
    n_draws) and compare observed goal totals per team and for the home,
    away and combined league totals with the simulated central intervals.
    Observed durations act as censor times.
    """
    if list(design.labels) != list(samples.labels):
        missing = sorted(set(design.labels) - set(samples.labels))
        raise DataError('schedule references predictors absent from the '
                        'samples: %s' % ', '.join(missing[:10]))
    rng = np.random.default_rng(seed)
    total = samples.n_draws
    draws = np.arange(total) if n_draws is None or n_draws >= total else \
        np.sort(rng.choice(total, size=n_draws, replace=False))
    lik = HazardLikelihood(design)
    teams = sorted({e.home_team for e in events} | {e.away_team for e in events})
    team_index = {t: k for k, t in enumerate(teams)}
    home_idx = np.array([team_index[e.home_team] for e in events], dtype=int)
    away_idx = np.array([team_index[e.away_team] for e in events], dtype=int)

    sim_team = np.empty((len(draws), len(teams)))
    sim_totals = np.empty((len(draws), 3))
    for k, i in enumerate(draws):
        eta_h, eta_a = lik.linear_predictors(samples.draw(i))
        outcome, _ = sample_outcomes(np.exp(eta_h), np.exp(eta_a),
                                     design.duration, rng)
        hg, ag = (outcome == 1).astype(float), (outcome == -1).astype(float)
        sim_team[k] = np.bincount(home_idx, hg, len(teams)) + \
            np.bincount(away_idx, ag, len(teams))
        sim_totals[k] = (hg.sum(), ag.sum(), hg.sum() + ag.sum())

    hg = (design.outcome == 1).astype(float)
    ag = (design.outcome == -1).astype(float)
    obs_team = np.bincount(home_idx, hg, len(teams)) + \
        np.bincount(away_idx, ag, len(teams))
    obs_totals = np.array([hg.sum(), ag.sum(), hg.sum() + ag.sum()])
    lo_t, hi_t = _interval(sim_team, level)
    lo, hi = _interval(sim_totals, level)
    team_frame = pd.DataFrame({'team': teams, 'observed': obs_team,
                               'lower': lo_t, 'upper': hi_t,
                               'inside': (obs_team >= lo_t) &
                                         (obs_team <= hi_t)})
    totals = pd.DataFrame({'scope': ['home', 'away', 'all'],
                           'observed': obs_totals, 'lower': lo, 'upper': hi,
                           'inside': (obs_totals >= lo) & (obs_totals <= hi)})
    return PredictiveCheck(team_frame, totals, level)
