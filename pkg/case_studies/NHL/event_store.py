"""
Shift-interval event records: loading, validation, summary counts and
game-level train/test splits.

An event is one full-strength interval with constant personnel and score
state. It ends with a home goal, an away goal, or a substitution (censoring).
"""
import enum
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utilities.errors import DataError

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ['season', 'game_id', 'duration_s', 'outcome', 'home_team',
                 'away_team', 'score_state', 'home_skaters', 'away_skaters',
                 'home_goalie', 'away_goalie']
ROSTER_COLUMNS = ['player_id', 'name', 'position']
SKATERS_PER_SIDE = 5


class Outcome(enum.IntEnum):
    AwayGoal = -1
    NoGoal = 0
    HomeGoal = 1


class ScoreState(enum.IntEnum):
    """Score situation from the home team's perspective."""
    HomeLeading = 0
    Tied = 1
    HomeTrailing = 2

    @property
    def code(self):
        return _STATE_CODES[self]

    @classmethod
    def from_code(cls, code):
        return _CODE_STATES[code]


_STATE_CODES = {ScoreState.HomeLeading: 'LEAD', ScoreState.Tied: 'TIED',
                ScoreState.HomeTrailing: 'TRAIL'}
_CODE_STATES = {v: k for k, v in _STATE_CODES.items()}


class Position(enum.Enum):
    Center = 'C'
    LeftWing = 'L'
    RightWing = 'R'
    Defense = 'D'
    Goaltender = 'G'

    @property
    def is_forward(self):
        return self in (Position.Center, Position.LeftWing, Position.RightWing)


@dataclass(frozen=True)
class ShiftEvent:
    season: str
    game_id: str
    duration_s: float
    outcome: Outcome
    home_team: str
    away_team: str
    score_state: ScoreState
    home_skaters: frozenset
    away_skaters: frozenset
    home_goalie: str
    away_goalie: str

    @property
    def game_key(self):
        return (self.season, self.game_id)

    def players(self):
        yield from self.home_skaters
        yield from self.away_skaters
        yield self.home_goalie
        yield self.away_goalie


@dataclass(frozen=True)
class RosterEntry:
    name: str
    position: Position


class Roster(dict):
    """player identifier -> RosterEntry"""

    def position(self, player_id):
        return self[player_id].position

    def require(self, player_id, line=None, field=None):
        if player_id not in self:
            raise DataError('unknown player identifier %r' % player_id,
                            line=line, field=field)
        return self[player_id]


@dataclass(frozen=True)
class EventCounts:
    away_goals: int
    no_goals: int
    home_goals: int
    percentages: tuple

    @property
    def total(self):
        return self.away_goals + self.no_goals + self.home_goals

    def to_dict(self):
        return {'away_goals': self.away_goals, 'no_goals': self.no_goals,
                'home_goals': self.home_goals,
                'percent_away_goal': self.percentages[0],
                'percent_no_goal': self.percentages[1],
                'percent_home_goal': self.percentages[2]}


@dataclass(frozen=True)
class DataSplit:
    train_games: frozenset
    test_games: frozenset
    seed: int

    def to_dict(self):
        return {'seed': self.seed,
                'train_games': [list(g) for g in sorted(self.train_games)],
                'test_games': [list(g) for g in sorted(self.test_games)]}


def validate_event(event, roster, line=None):
    """Check the ShiftEvent invariants; raise DataError naming the rule."""
    if not np.isfinite(event.duration_s) or event.duration_s <= 0:
        raise DataError('nonpositive duration %r' % event.duration_s,
                        line=line, field='duration_s')
    if event.home_team == event.away_team:
        raise DataError('home_team equals away_team (%s)' % event.home_team,
                        line=line, field='away_team')
    for side in ('home', 'away'):
        skaters = getattr(event, side + '_skaters')
        goalie = getattr(event, side + '_goalie')
        if len(skaters) != SKATERS_PER_SIDE:
            raise DataError('skater-count rule: %s side has %d skaters, '
                            'full strength requires %d'
                            % (side, len(skaters), SKATERS_PER_SIDE),
                            line=line, field=side + '_skaters')
        if goalie in skaters:
            raise DataError('%s goalie %s is also listed as a skater'
                            % (side, goalie), line=line, field=side + '_goalie')
        if roster is not None:
            for player in skaters:
                roster.require(player, line=line, field=side + '_skaters')
            roster.require(goalie, line=line, field=side + '_goalie')
    if (event.home_skaters | {event.home_goalie}) & \
            (event.away_skaters | {event.away_goalie}):
        raise DataError('a player appears on both sides', line=line,
                        field='away_skaters')


def _split_skaters(text, side, line):
    players = [p.strip() for p in str(text).split(';') if p.strip()]
    if len(set(players)) != len(players):
        raise DataError('duplicate skater in %s_skaters' % side, line=line,
                        field=side + '_skaters')
    return frozenset(players)


def _parse_row(row, line):
    try:
        duration = float(row['duration_s'])
    except ValueError:
        raise DataError('duration_s is not a number: %r' % row['duration_s'],
                        line=line, field='duration_s')
    try:
        outcome = Outcome(int(row['outcome']))
    except ValueError:
        raise DataError('outcome must be one of -1, 0, 1: %r' % row['outcome'],
                        line=line, field='outcome')
    state_code = str(row['score_state']).strip().upper()
    if state_code not in _CODE_STATES:
        raise DataError('score_state must be LEAD, TIED or TRAIL: %r'
                        % row['score_state'], line=line, field='score_state')
    return ShiftEvent(
        season=str(row['season']).strip(),
        game_id=str(row['game_id']).strip(),
        duration_s=duration,
        outcome=outcome,
        home_team=str(row['home_team']).strip(),
        away_team=str(row['away_team']).strip(),
        score_state=ScoreState.from_code(state_code),
        home_skaters=_split_skaters(row['home_skaters'], 'home', line),
        away_skaters=_split_skaters(row['away_skaters'], 'away', line),
        home_goalie=str(row['home_goalie']).strip(),
        away_goalie=str(row['away_goalie']).strip())


def load_roster(path):
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in ROSTER_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError('roster file %s lacks columns %s' % (path, missing),
                        line=1, field=missing[0])
    roster = Roster()
    codes = {p.value: p for p in Position}
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        player_id = row.player_id.strip()
        if not player_id:
            raise DataError('empty player_id', line=line, field='player_id')
        if player_id in roster:
            raise DataError('duplicate player_id %r' % player_id, line=line,
                            field='player_id')
        code = row.position.strip().upper()
        if code not in codes:
            raise DataError('position must be one of C, L, R, D, G: %r'
                            % row.position, line=line, field='position')
        roster[player_id] = RosterEntry(name=row.name, position=codes[code])
    return roster


def load_events(path, roster):
    """
    INPUTS
    ------------------------------------
    path:     events CSV with the header given by EVENT_COLUMNS
    roster:   Roster every player identifier must resolve in

    OUTPUTS
    ------------------------------------
    list of validated ShiftEvent, in file order. The first invalid row
    raises DataError with its file line number and field.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in EVENT_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError('events file %s lacks columns %s' % (path, missing),
                        line=1, field=missing[0])
    events = []
    for i, row in enumerate(frame[EVENT_COLUMNS].to_dict('records')):
        line = i + 2
        event = _parse_row(row, line)
        validate_event(event, roster, line=line)
        events.append(event)
    logger.info('loaded %d events from %s', len(events), path)
    return events


def events_frame(events):
    rows = [{'season': e.season, 'game_id': e.game_id,
             'duration_s': repr(float(e.duration_s)),
             'outcome': int(e.outcome), 'home_team': e.home_team,
             'away_team': e.away_team, 'score_state': e.score_state.code,
             'home_skaters': ';'.join(sorted(e.home_skaters)),
             'away_skaters': ';'.join(sorted(e.away_skaters)),
             'home_goalie': e.home_goalie, 'away_goalie': e.away_goalie}
            for e in events]
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def write_events(events, path):
    events_frame(events).to_csv(path, index=False)


def write_roster(roster, path):
    frame = pd.DataFrame([{'player_id': pid, 'name': entry.name,
                           'position': entry.position.value}
                          for pid, entry in roster.items()],
                         columns=ROSTER_COLUMNS)
    frame.to_csv(path, index=False)


def summarize(events):
    """Outcome counts and percentages (two decimals)."""
    if len(events) == 0:
        raise DataError('cannot summarize an empty event collection')
    outcomes = np.fromiter((int(e.outcome) for e in events), dtype=int,
                           count=len(events))
    counts = [int(np.sum(outcomes == k)) for k in (-1, 0, 1)]
    return counts_to_summary(*counts)


def counts_to_summary(away_goals, no_goals, home_goals):
    total = away_goals + no_goals + home_goals
    if total == 0:
        raise DataError('cannot summarize an empty event collection')
    pct = tuple(round(100.0 * c / total, 2)
                for c in (away_goals, no_goals, home_goals))
    return EventCounts(away_goals, no_goals, home_goals, pct)


def game_keys(events):
    """Distinct (season, game_id) keys in sorted order."""
    return sorted({e.game_key for e in events})


def split_by_game(events, train_fraction, seed):
    """
    Assign whole games to the training or test side uniformly at random.
    The training side holds round(train_fraction * #games) games.
    """
    if len(events) == 0:
        raise DataError('cannot split an empty event collection')
    if not 0 < train_fraction <= 1:
        raise DataError('train_fraction must lie in (0, 1], got %r'
                        % train_fraction)
    games = game_keys(events)
    if train_fraction < 1 and len(games) < 2:
        raise DataError('a split needs at least 2 distinct games')
    n_train = int(np.floor(train_fraction * len(games) + 0.5))
    order = np.random.default_rng(seed).permutation(len(games))
    train = frozenset(games[i] for i in order[:n_train])
    test = frozenset(games[i] for i in order[n_train:])
    return DataSplit(train_games=train, test_games=test, seed=seed)


def apply_split(events, split):
    train = [e for e in events if e.game_key in split.train_games]
    test = [e for e in events if e.game_key in split.test_games]
    return train, test
