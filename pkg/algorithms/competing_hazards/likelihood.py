"""
Censored competing-exponential log-likelihood for shift events.

For event i in score state s

    lam_h = exp(r_h[s] + sum_{p home} omega_p + sum_{p away} delta_p)
    lam_a = exp(r_a[s] + sum_{p away} omega_p + sum_{p home} delta_p)
    ll_i  = I(Y=+1) log lam_h + I(Y=-1) log lam_a - (lam_h + lam_a) T

The baseline hazard is h0(t) = 1 so each clock is exponential.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from case_studies.NHL.event_store import ScoreState
from utilities.errors import DataError, NumericalError
from utilities.general_utility_functions import CHUNK_SIZE, chunked_reduce

logger = logging.getLogger(__name__)

N_STATES = 3
HOME, AWAY = 0, 1


@dataclass(frozen=True)
class RatePair:
    home: float
    away: float


@dataclass
class Coefficients:
    """intercepts[side, state] in log goals per second; omega, delta per predictor."""
    intercepts: np.ndarray
    omega: np.ndarray
    delta: np.ndarray

    @classmethod
    def zeros(cls, n_predictors, intercept=0.):
        return cls(np.full((2, N_STATES), float(intercept)),
                   np.zeros(n_predictors), np.zeros(n_predictors))

    def copy(self):
        return Coefficients(self.intercepts.copy(), self.omega.copy(),
                            self.delta.copy())

    @property
    def net(self):
        return self.omega - self.delta

    def check(self, omega_fixed=None):
        for name in ('intercepts', 'omega', 'delta'):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericalError('nonfinite %s coefficients' % name)
        if omega_fixed is not None and np.any(self.omega[omega_fixed] != 0):
            raise NumericalError('goaltender omega must be exactly 0')


class ParameterLayout:
    """
    Packs the free parameters of a Coefficients into one vector:
    [6 intercepts | omega of non-goalie, non-frozen | delta of non-frozen].
    """

    def __init__(self, design, frozen=(), freeze_intercepts=False):
        P = design.n_predictors
        free = np.ones(P, dtype=bool)
        free[np.asarray(list(frozen), dtype=int)] = False
        self.omega_index = np.flatnonzero(free & ~design.omega_fixed)
        self.delta_index = np.flatnonzero(free)
        self.freeze_intercepts = freeze_intercepts
        self.n_intercepts = 0 if freeze_intercepts else 2 * N_STATES

    @property
    def size(self):
        return self.n_intercepts + len(self.omega_index) + \
            len(self.delta_index)

    @property
    def omega_slice(self):
        start = self.n_intercepts
        return slice(start, start + len(self.omega_index))

    @property
    def delta_slice(self):
        start = self.n_intercepts + len(self.omega_index)
        return slice(start, start + len(self.delta_index))

    def pack(self, intercepts, omega, delta):
        parts = [] if self.freeze_intercepts else [np.ravel(intercepts)]
        return np.concatenate(parts + [omega[self.omega_index],
                                       delta[self.delta_index]])

    def pack_coefficients(self, coeffs):
        return self.pack(coeffs.intercepts, coeffs.omega, coeffs.delta)

    def unpack(self, vector, base):
        out = base.copy()
        if not self.freeze_intercepts:
            out.intercepts = np.reshape(vector[:self.n_intercepts],
                                        (2, N_STATES)).copy()
        out.omega[self.omega_index] = vector[self.omega_slice]
        out.delta[self.delta_index] = vector[self.delta_slice]
        return out


class HazardLikelihood:
    """
    Log-likelihood, gradient and Fisher-information diagonal of a design,
    evaluated over fixed row chunks. Chunk partial sums are combined in
    chunk order, so results do not depend on the thread count.
    """

    def __init__(self, design, threads=1, chunk_size=CHUNK_SIZE):
        self.design = design
        self.threads = max(int(threads), 1)
        self.chunk_size = chunk_size
        self.home_goal = (design.outcome == 1).astype(float)
        self.away_goal = (design.outcome == -1).astype(float)
        self._chunks = {}

    def _chunk(self, start, stop):
        key = (start, stop)
        if key not in self._chunks:
            d = self.design
            self._chunks[key] = (d.X_home[start:stop], d.X_away[start:stop])
        return self._chunks[key]

    def _linear(self, coeffs, start, stop):
        Xh, Xa = self._chunk(start, stop)
        state = self.design.state[start:stop]
        eta_h = coeffs.intercepts[HOME, state] + Xh @ coeffs.omega + \
            Xa @ coeffs.delta
        eta_a = coeffs.intercepts[AWAY, state] + Xa @ coeffs.omega + \
            Xh @ coeffs.delta
        lam_h, lam_a = np.exp(eta_h), np.exp(eta_a)
        if not (np.all(np.isfinite(lam_h)) and np.all(np.isfinite(lam_a))):
            raise NumericalError('nonfinite scoring rate in rows %d-%d'
                                 % (start, stop))
        return eta_h, eta_a, lam_h, lam_a

    def _loglik_chunk(self, coeffs, start, stop):
        eta_h, eta_a, lam_h, lam_a = self._linear(coeffs, start, stop)
        T = self.design.duration[start:stop]
        return float(np.sum(self.home_goal[start:stop] * eta_h +
                            self.away_goal[start:stop] * eta_a -
                            (lam_h + lam_a) * T))

    def _gradient_chunk(self, coeffs, start, stop, fisher=False):
        eta_h, eta_a, lam_h, lam_a = self._linear(coeffs, start, stop)
        Xh, Xa = self._chunk(start, stop)
        T = self.design.duration[start:stop]
        state = self.design.state[start:stop]
        yh, ya = self.home_goal[start:stop], self.away_goal[start:stop]
        value = float(np.sum(yh * eta_h + ya * eta_a - (lam_h + lam_a) * T))
        mu_h, mu_a = lam_h * T, lam_a * T
        resid_h, resid_a = yh - mu_h, ya - mu_a
        g_r = np.vstack([np.bincount(state, resid_h, N_STATES),
                         np.bincount(state, resid_a, N_STATES)])
        g_w = Xh.T @ resid_h + Xa.T @ resid_a
        g_d = Xa.T @ resid_h + Xh.T @ resid_a
        if not fisher:
            return value, g_r, g_w, g_d
        # design entries are 0/1 so X^2 = X
        h_r = np.vstack([np.bincount(state, mu_h, N_STATES),
                         np.bincount(state, mu_a, N_STATES)])
        h_w = Xh.T @ mu_h + Xa.T @ mu_a
        h_d = Xa.T @ mu_h + Xh.T @ mu_a
        return value, g_r, g_w, g_d, h_r, h_w, h_d

    def total_loglik(self, coeffs):
        if self.design.n_rows == 0:
            return 0.
        return chunked_reduce(lambda a, b: self._loglik_chunk(coeffs, a, b),
                              self.design.n_rows, self.threads,
                              self.chunk_size)

    def value_and_gradient(self, coeffs, fisher=False):
        """
        Returns (loglik, grad) or (loglik, grad, info) where grad and info
        are Coefficients-shaped (intercepts, omega, delta). Goaltender omega
        entries of grad are zeroed.
        """
        P = self.design.n_predictors
        if self.design.n_rows == 0:
            zero = Coefficients.zeros(P)
            return (0., zero, zero.copy()) if fisher else (0., zero)
        parts = chunked_reduce(
            lambda a, b: self._gradient_chunk(coeffs, a, b, fisher),
            self.design.n_rows, self.threads, self.chunk_size)
        omega_fixed = self.design.omega_fixed
        grad = Coefficients(parts[1], np.asarray(parts[2]).ravel(),
                            np.asarray(parts[3]).ravel())
        grad.omega[omega_fixed] = 0.
        if not fisher:
            return parts[0], grad
        info = Coefficients(parts[4], np.asarray(parts[5]).ravel(),
                            np.asarray(parts[6]).ravel())
        info.omega[omega_fixed] = 0.
        return parts[0], grad, info

    def gradient(self, coeffs, layout=None):
        """Gradient over the free parameters of the layout."""
        layout = layout or ParameterLayout(self.design)
        _, grad = self.value_and_gradient(coeffs)
        return layout.pack(grad.intercepts, grad.omega, grad.delta)

    def fisher_diagonal(self, coeffs):
        return self.value_and_gradient(coeffs, fisher=True)[2]

    def linear_predictors(self, coeffs):
        """Full-length (eta_h, eta_a) arrays, as the sampler caches them."""
        eta_h = np.empty(self.design.n_rows)
        eta_a = np.empty(self.design.n_rows)
        for start in range(0, self.design.n_rows, self.chunk_size):
            stop = min(start + self.chunk_size, self.design.n_rows)
            eta_h[start:stop], eta_a[start:stop] = \
                self._linear(coeffs, start, stop)[:2]
        return eta_h, eta_a


def rates(row, coeffs):
    eta_h = coeffs.intercepts[HOME, row.score_state] + \
        np.sum(coeffs.omega[list(row.home_predictors)]) + \
        np.sum(coeffs.delta[list(row.away_predictors)])
    eta_a = coeffs.intercepts[AWAY, row.score_state] + \
        np.sum(coeffs.omega[list(row.away_predictors)]) + \
        np.sum(coeffs.delta[list(row.home_predictors)])
    pair = RatePair(float(np.exp(eta_h)), float(np.exp(eta_a)))
    if not (np.isfinite(pair.home) and np.isfinite(pair.away)):
        raise NumericalError('nonfinite scoring rate')
    return pair


def event_loglik(row, coeffs):
    pair = rates(row, coeffs)
    value = -(pair.home + pair.away) * row.duration_s
    if row.outcome == 1:
        value += np.log(pair.home)
    elif row.outcome == -1:
        value += np.log(pair.away)
    return float(value)


def total_loglik(design, coeffs, threads=1):
    return HazardLikelihood(design, threads).total_loglik(coeffs)


def gradient(design, coeffs, threads=1, layout=None):
    return HazardLikelihood(design, threads).gradient(coeffs, layout)


def empirical_intercepts(design, floor=0.5):
    """log(goals / exposure) per side and score state (floor on empty cells)."""
    exposure = np.bincount(design.state, design.duration, N_STATES)
    intercepts = np.zeros((2, N_STATES))
    for side, outcome in ((HOME, 1), (AWAY, -1)):
        goals = np.bincount(design.state,
                            (design.outcome == outcome).astype(float), N_STATES)
        with np.errstate(divide='ignore'):
            intercepts[side] = np.log(np.maximum(goals, floor) /
                                      np.maximum(exposure, 1e-12))
    return intercepts


def coefficients_frame(design, coeffs):
    return pd.DataFrame({'label': design.labels,
                         'kind': [p.kind.value for p in design.registry],
                         'group': [p.group.name for p in design.registry],
                         'omega': coeffs.omega, 'delta': coeffs.delta})


def intercepts_frame(coeffs):
    return pd.DataFrame({'score_state': [s.code for s in ScoreState],
                         'home': coeffs.intercepts[HOME],
                         'away': coeffs.intercepts[AWAY]})


def write_coefficients(design, coeffs, path, intercepts_path):
    coefficients_frame(design, coeffs).to_csv(path, index=False,
                                              float_format='%.17g')
    intercepts_frame(coeffs).to_csv(intercepts_path, index=False,
                                    float_format='%.17g')


def read_coefficients(path, design, intercepts_path=None):
    """Coefficients for a design's registry; labels missing from the file are 0."""
    frame = pd.read_csv(path)
    for column in ('label', 'omega', 'delta'):
        if column not in frame.columns:
            raise DataError('coefficient file %s lacks column %s'
                            % (path, column), line=1, field=column)
    coeffs = Coefficients.zeros(design.n_predictors)
    for i, row in enumerate(frame.itertuples(index=False)):
        if str(row.label) not in design.registry:
            logger.debug('skipping coefficient for %s (not in design)',
                         row.label)
            continue
        p = design.registry.index(str(row.label))
        coeffs.omega[p], coeffs.delta[p] = row.omega, row.delta
    coeffs.omega[design.omega_fixed] = 0.
    if intercepts_path is not None:
        ints = pd.read_csv(intercepts_path)
        coeffs.intercepts = np.vstack([ints['home'].to_numpy(float),
                                       ints['away'].to_numpy(float)])
    coeffs.check()
    return coeffs
