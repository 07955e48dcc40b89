"""
Sparse design construction: predictor registry, pooling groups, the
goaltender (defense-only) constraint, and same-side player pairs.

X_home[i, p] = 1 when predictor p is on the home side of event i and
X_away[i, p] = 1 when it is on the away side.
"""
import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from case_studies.NHL.event_store import Position
from utilities.errors import DataError
from utilities.general_utility_functions import dump_json

logger = logging.getLogger(__name__)

MAX_PLAYERS_PER_ROW = 12


class PredictorKind(enum.Enum):
    Team = 'team'
    Player = 'player'
    PlayerPair = 'pair'


class Group(enum.Enum):
    Center = 'C'
    LeftWing = 'L'
    RightWing = 'R'
    Defense = 'D'
    Goaltender = 'G'
    Team = 'T'
    Pair = 'P'


POSITION_GROUPS = {Position.Center: Group.Center,
                   Position.LeftWing: Group.LeftWing,
                   Position.RightWing: Group.RightWing,
                   Position.Defense: Group.Defense,
                   Position.Goaltender: Group.Goaltender}
GROUP_ORDER = list(Group)


class Variant(enum.Enum):
    ScoreOnly = 'score'
    Teams = 'teams'
    Players = 'players'
    PlayersPlusPairs = 'pairs'


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant = Variant.Players
    include_teams: bool = False
    pair_count: int = 0

    def __post_init__(self):
        if self.variant is Variant.PlayersPlusPairs and self.pair_count < 1:
            raise DataError('PlayersPlusPairs needs a positive pair_count')

    @property
    def has_players(self):
        return self.variant in (Variant.Players, Variant.PlayersPlusPairs)

    @property
    def has_teams(self):
        return self.variant is Variant.Teams or \
            (self.has_players and self.include_teams)


@dataclass(frozen=True)
class Predictor:
    index: int
    kind: PredictorKind
    label: str
    group: Group
    members: tuple = ()
    shared_time: float = 0.0
    co_occurrence: int = 0


@dataclass(frozen=True)
class PairCandidate:
    first: str
    second: str
    co_occurrence: int
    shared_time: float

    @property
    def label(self):
        return '%s+%s' % (self.first, self.second)


@dataclass(frozen=True)
class SparseRow:
    home_predictors: tuple
    away_predictors: tuple
    score_state: int
    duration_s: float
    outcome: int


class Registry:
    """Append-only list of predictors with label lookup."""

    def __init__(self, predictors=()):
        self.predictors = []
        self._index = {}
        for p in predictors:
            self.add(p.kind, p.label, p.group, p.members, p.shared_time,
                     p.co_occurrence)

    def add(self, kind, label, group, members=(), shared_time=0.0,
            co_occurrence=0):
        if label in self._index:
            raise DataError('duplicate predictor label %r' % label)
        predictor = Predictor(len(self.predictors), kind, label, group,
                              tuple(members), float(shared_time),
                              int(co_occurrence))
        self.predictors.append(predictor)
        self._index[label] = predictor.index
        return predictor.index

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise DataError('predictor %r is not in the registry' % label)

    def __contains__(self, label):
        return label in self._index

    def __len__(self):
        return len(self.predictors)

    def __iter__(self):
        return iter(self.predictors)

    def copy(self):
        return Registry(self.predictors)

    @property
    def labels(self):
        return [p.label for p in self.predictors]


@dataclass
class Design:
    registry: Registry
    X_home: sp.csr_matrix
    X_away: sp.csr_matrix
    state: np.ndarray
    duration: np.ndarray
    outcome: np.ndarray
    game_index: np.ndarray
    games: list
    spec: ModelSpec = field(default_factory=ModelSpec)

    @property
    def n_rows(self):
        return self.X_home.shape[0]

    @property
    def n_predictors(self):
        return len(self.registry)

    @property
    def labels(self):
        return self.registry.labels

    @property
    def groups(self):
        """PoolingGroups as an array of Group, one per predictor."""
        return [p.group for p in self.registry]

    @property
    def omega_fixed(self):
        """Goaltender predictors are defense-only: their omega is held at 0."""
        return np.array([p.group is Group.Goaltender for p in self.registry],
                        dtype=bool)

    @property
    def frozen_capable(self):
        return np.array([p.kind is PredictorKind.Team for p in self.registry],
                        dtype=bool)

    def members(self, group):
        return np.array([p.index for p in self.registry if p.group is group],
                        dtype=int)

    def groups_present(self):
        present = {p.group for p in self.registry}
        return [g for g in GROUP_ORDER if g in present]

    def indices_of(self, kind):
        return np.array([p.index for p in self.registry if p.kind is kind],
                        dtype=int)

    def row(self, i):
        h = self.X_home.indices[self.X_home.indptr[i]:self.X_home.indptr[i + 1]]
        a = self.X_away.indices[self.X_away.indptr[i]:self.X_away.indptr[i + 1]]
        return SparseRow(tuple(sorted(int(j) for j in h)),
                         tuple(sorted(int(j) for j in a)),
                         int(self.state[i]), float(self.duration[i]),
                         int(self.outcome[i]))

    def subset(self, rows):
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Design(self.registry, self.X_home[rows], self.X_away[rows],
                      self.state[rows], self.duration[rows],
                      self.outcome[rows], self.game_index[rows], self.games,
                      self.spec)

    def split_rows(self, split):
        """Row masks (train, test) for a DataSplit over this design's games."""
        train_games = np.array([g in split.train_games for g in self.games],
                               dtype=bool)
        test_games = np.array([g in split.test_games for g in self.games],
                              dtype=bool)
        return train_games[self.game_index], test_games[self.game_index]

    def exposure(self):
        """Total seconds each predictor spent on ice (either side)."""
        on_ice = (self.X_home + self.X_away).T
        return np.asarray(on_ice @ self.duration).ravel()

    def to_json(self, path):
        groups = Counter(p.group.name for p in self.registry)
        dump_json({'variant': self.spec.variant.value,
                   'include_teams': self.spec.include_teams,
                   'n_rows': self.n_rows,
                   'n_predictors': self.n_predictors,
                   'group_sizes': dict(groups),
                   'outcome_counts': {str(k): int(np.sum(self.outcome == k))
                                      for k in (-1, 0, 1)},
                   'predictors': [{'index': p.index, 'kind': p.kind.value,
                                   'label': p.label, 'group': p.group.name,
                                   'members': list(p.members),
                                   'shared_time': p.shared_time,
                                   'co_occurrence': p.co_occurrence}
                                  for p in self.registry]},
                  path)


def _check_positions(event, roster, number):
    for side in ('home', 'away'):
        for player in getattr(event, side + '_skaters'):
            if roster.require(player, field=side + '_skaters').position \
                    is Position.Goaltender:
                raise DataError('model/roster mismatch in event %d: goaltender '
                                '%s listed as a %s skater'
                                % (number, player, side),
                                field=side + '_skaters')
        goalie = getattr(event, side + '_goalie')
        if roster.require(goalie, field=side + '_goalie').position \
                is not Position.Goaltender:
            raise DataError('model/roster mismatch in event %d: %s in the %s '
                            'goalie slot is not a goaltender'
                            % (number, goalie, side), field=side + '_goalie')


def registry_for(roster, spec, teams=(), players=()):
    """Teams (sorted), then players by identifier."""
    registry = Registry()
    if spec.has_teams:
        for team in sorted(set(teams)):
            registry.add(PredictorKind.Team, team, Group.Team)
    if spec.has_players:
        for player in sorted(set(players)):
            position = roster.require(player).position
            registry.add(PredictorKind.Player, player,
                         POSITION_GROUPS[position])
    return registry


def _new_registry(events, roster, spec):
    teams = {e.home_team for e in events} | {e.away_team for e in events}
    players = {p for e in events for p in e.players()}
    return registry_for(roster, spec, teams, players)


def build_design(events, roster, spec, registry=None):
    """
    INPUTS
    ------------------------------------
    events:    collection of ShiftEvent
    roster:    Roster resolving every player
    spec:      ModelSpec
    registry:  optional Registry to reuse (held-out data, simulation from a
               fitted model); labels missing from it are data errors

    OUTPUTS
    ------------------------------------
    Design with rows in event order
    """
    events = list(events)
    if spec.has_players:
        for i, event in enumerate(events):
            _check_positions(event, roster, i)
    if registry is None:
        registry = _new_registry(events, roster, spec)

    home_cols, away_cols, indptr = [], [], [0]
    away_indptr = [0]
    games = sorted({e.game_key for e in events})
    game_lookup = {g: k for k, g in enumerate(games)}
    for event in events:
        home, away = [], []
        if spec.has_teams:
            home.append(registry.index(event.home_team))
            away.append(registry.index(event.away_team))
        if spec.has_players:
            home.extend(registry.index(p) for p in event.home_skaters)
            home.append(registry.index(event.home_goalie))
            away.extend(registry.index(p) for p in event.away_skaters)
            away.append(registry.index(event.away_goalie))
        home_cols.extend(sorted(home))
        away_cols.extend(sorted(away))
        indptr.append(len(home_cols))
        away_indptr.append(len(away_cols))

    n, P = len(events), len(registry)
    X_home = sp.csr_matrix((np.ones(len(home_cols)), np.array(home_cols, dtype=int),
                            np.array(indptr)), shape=(n, P))
    X_away = sp.csr_matrix((np.ones(len(away_cols)), np.array(away_cols, dtype=int),
                            np.array(away_indptr)), shape=(n, P))
    design = Design(
        registry=registry, X_home=X_home, X_away=X_away,
        state=np.array([int(e.score_state) for e in events], dtype=int),
        duration=np.array([e.duration_s for e in events], dtype=float),
        outcome=np.array([int(e.outcome) for e in events], dtype=int),
        game_index=np.array([game_lookup[e.game_key] for e in events],
                            dtype=int),
        games=games, spec=spec)
    if any(p.kind is PredictorKind.PlayerPair for p in registry):
        design = _pair_columns(design, [p for p in registry
                                        if p.kind is PredictorKind.PlayerPair])
    logger.info('design: %d rows, %d predictors (%s)', n, P,
                spec.variant.value)
    return design


def enumerate_pairs(events, roster, k):
    """
    Same-side forward-forward and defense-defense pairs ranked by the
    number of events they shared, ties broken by pair label. Goaltenders
    are never paired. Pairs that never shared the ice rank last.
    """
    if k < 1:
        raise DataError('pair count must be positive, got %r' % k)
    counts = Counter()
    shared = defaultdict(float)
    players = set()
    for event in events:
        for skaters in (event.home_skaters, event.away_skaters):
            ordered = sorted(skaters)
            players.update(ordered)
            for i, first in enumerate(ordered):
                for second in ordered[i + 1:]:
                    counts[(first, second)] += 1
                    shared[(first, second)] += event.duration_s

    def eligible(first, second):
        a = roster.require(first).position
        b = roster.require(second).position
        return (a.is_forward and b.is_forward) or \
            (a is Position.Defense and b is Position.Defense)

    ranked = [PairCandidate(a, b, counts[(a, b)], shared[(a, b)])
              for (a, b) in counts if eligible(a, b)]
    ranked.sort(key=lambda c: (-c.co_occurrence, c.label))
    if len(ranked) < k:
        never = [PairCandidate(a, b, 0, 0.0)
                 for a, b in _unordered_pairs(sorted(players))
                 if (a, b) not in counts and eligible(a, b)]
        never.sort(key=lambda c: c.label)
        ranked.extend(never)
    if len(ranked) < k:
        raise DataError('requested %d pairs but only %d eligible pairs exist'
                        % (k, len(ranked)))
    return ranked[:k]


def _unordered_pairs(ordered):
    for i, first in enumerate(ordered):
        for second in ordered[i + 1:]:
            yield first, second


def _pair_columns(design, pair_predictors):
    """Rebuild the pair columns of a design from its player columns."""
    X_home = design.X_home.tolil()
    X_away = design.X_away.tolil()
    Xh, Xa = design.X_home.tocsc(), design.X_away.tocsc()
    for pred in pair_predictors:
        i, j = (design.registry.index(m) for m in pred.members)
        both_home = Xh[:, i].multiply(Xh[:, j]).toarray().ravel()
        both_away = Xa[:, i].multiply(Xa[:, j]).toarray().ravel()
        X_home[:, pred.index] = both_home.reshape(-1, 1)
        X_away[:, pred.index] = both_away.reshape(-1, 1)
    design.X_home = X_home.tocsr()
    design.X_away = X_away.tocsr()
    design.X_home.eliminate_zeros()
    design.X_away.eliminate_zeros()
    return design


def attach_pairs(design, pairs):
    """
    Append one PlayerPair predictor per pair. A row gains the pair index on
    a side when both members are on that side's ice. Existing indices are
    unchanged.
    """
    if not design.spec.has_players:
        raise DataError('pairs can only be attached to a player design')
    registry = design.registry.copy()
    Xh, Xa = design.X_home.tocsc(), design.X_away.tocsc()
    new_h, new_a = [], []
    for pair in pairs:
        for member in (pair.first, pair.second):
            if member not in registry or \
                    registry.predictors[registry.index(member)].kind \
                    is not PredictorKind.Player:
                raise DataError('pair %s references unknown player %s'
                                % (pair.label, member))
        i, j = registry.index(pair.first), registry.index(pair.second)
        both_home = Xh[:, i].multiply(Xh[:, j])
        both_away = Xa[:, i].multiply(Xa[:, j])
        together = np.asarray((both_home + both_away).todense()).ravel()
        registry.add(PredictorKind.PlayerPair, pair.label, Group.Pair,
                     members=(pair.first, pair.second),
                     shared_time=float(together @ design.duration),
                     co_occurrence=int(together.sum()))
        new_h.append(both_home)
        new_a.append(both_away)

    X_home = sp.hstack([design.X_home] + new_h, format='csr')
    X_away = sp.hstack([design.X_away] + new_a, format='csr')
    X_home.eliminate_zeros()
    X_away.eliminate_zeros()
    spec = ModelSpec(Variant.PlayersPlusPairs, design.spec.include_teams,
                     max(len(pairs), 1))
    logger.info('attached %d pair predictors', len(pairs))
    return Design(registry, X_home, X_away, design.state, design.duration,
                  design.outcome, design.game_index, design.games, spec)


def player_teams(events, per_season=False):
    """
    Majority team of every player (by events on ice, ties by team
    identifier). With per_season the keys are (season, player).
    """
    tally = defaultdict(Counter)
    for event in events:
        for team, players in ((event.home_team, event.home_skaters |
                               {event.home_goalie}),
                              (event.away_team, event.away_skaters |
                               {event.away_goalie})):
            for player in players:
                key = (event.season, player) if per_season else player
                tally[key][team] += 1
    return {key: min(counter, key=lambda t: (-counter[t], t))
            for key, counter in tally.items()}
