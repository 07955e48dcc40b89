# -*- coding: utf-8 -*-
"""
Penalized maximum likelihood by proximal-gradient ascent.

Each iteration takes a gradient step scaled by the inverse Fisher-information
diagonal, applies the prox of the group penalties, and backtracks (halving
the step) until the quadratic upper bound holds. Intercepts are never
penalized; frozen predictors and goaltender omega are left out of the free
parameter vector.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from algorithms.competing_hazards.likelihood import (
    Coefficients, HazardLikelihood, ParameterLayout, empirical_intercepts)
from algorithms.shrinkage.shrinkage import Side, log_density, prox_weights
from utilities.errors import ConfigError, NumericalError
from utilities.general_utility_functions import dump_json, warn

logger = logging.getLogger(__name__)

STALL_TOLERANCE = 1e-6


@dataclass
class FitOptions:
    max_iterations: int = 5000
    tolerance: float = 1e-8
    frozen: frozenset = frozenset()
    freeze_intercepts: bool = False
    gradient_tolerance: float = None
    max_backtracks: int = 60
    threads: int = 1

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError('tolerance must be positive')
        if self.max_iterations < 1:
            raise ConfigError('max_iterations must be positive')
        self.frozen = frozenset(int(p) for p in self.frozen)

    def to_dict(self):
        return {'max_iterations': self.max_iterations,
                'tolerance': self.tolerance,
                'frozen': sorted(self.frozen),
                'freeze_intercepts': self.freeze_intercepts,
                'gradient_tolerance': self.gradient_tolerance}


@dataclass
class FitResult:
    coefficients: Coefficients
    objective: float
    loglik: float
    trace: list
    iterations: int
    converged: bool
    wall_time: float
    penalty: dict
    nonzero: dict = field(default_factory=dict)

    def to_dict(self):
        return {'objective': self.objective, 'loglik': self.loglik,
                'objective_trace': self.trace,
                'iterations': self.iterations, 'converged': self.converged,
                'wall_time': self.wall_time, 'penalty': self.penalty,
                'nonzero': self.nonzero}

    def save(self, path):
        dump_json(self.to_dict(), path)


class PenaltyWeights:
    """Per-parameter lasso and ridge weights of a GroupShrinkage under a layout."""

    def __init__(self, design, shrinkage, layout):
        shrinkage.check_covers(design)
        groups = design.groups
        self.design, self.shrinkage, self.layout = design, shrinkage, layout
        l1 = np.zeros(layout.size)
        l2 = np.zeros(layout.size)
        for index, sl, side in ((layout.omega_index, layout.omega_slice,
                                 Side.Offense),
                                (layout.delta_index, layout.delta_slice,
                                 Side.Defense)):
            l1[sl] = [shrinkage[(groups[p], side)].l1_weight for p in index]
            l2[sl] = [shrinkage[(groups[p], side)].l2_weight for p in index]
        self.l1, self.l2 = l1, l2

    def log_prior(self, coeffs):
        """Sum of group log-densities over all penalized coefficients."""
        total = 0.
        omega_fixed = self.design.omega_fixed
        for group in self.design.groups_present():
            members = self.design.members(group)
            for side, values in ((Side.Offense, coeffs.omega[members]),
                                 (Side.Defense, coeffs.delta[members])):
                if side is Side.Offense:
                    values = values[~omega_fixed[members]]
                if len(values) == 0:
                    continue
                total += float(np.sum(log_density(self.shrinkage[(group, side)],
                                                  values)))
        return total

    def prox(self, x, step):
        return prox_weights(x, step, self.l1, self.l2)


def gradient_mapping(weights, x, g, D):
    """Max-norm of the unit-step gradient mapping; zero at a stationary point."""
    if not len(x):
        return 0.
    return float(np.max(np.abs(weights.prox(x + D * g, D) - x) / D))


def default_init(design):
    coeffs = Coefficients.zeros(design.n_predictors)
    coeffs.intercepts = empirical_intercepts(design)
    return coeffs


def count_nonzero(design, coeffs):
    out = {}
    omega_fixed = design.omega_fixed
    for group in design.groups_present():
        members = design.members(group)
        w = coeffs.omega[members][~omega_fixed[members]]
        out[group.name] = int(np.count_nonzero(w) +
                              np.count_nonzero(coeffs.delta[members]))
    return out


def fit_penalized(design, shrinkage, opts=None, init=None, likelihood=None):
    """
    INPUTS
    ------------------------------------
    design:      Design
    shrinkage:   GroupShrinkage covering every group of the design
    opts:        FitOptions
    init:        starting Coefficients (default: empirical intercepts, zeros)
    likelihood:  HazardLikelihood to reuse (default: built from design)

    OUTPUTS
    ------------------------------------
    FitResult with the final iterate. Non-convergence after max_iterations
    returns the best iterate with converged=False and a warning.
    """
    opts = opts or FitOptions()
    lik = likelihood or HazardLikelihood(design, opts.threads)
    coeffs = default_init(design) if init is None else init.copy()
    coeffs.omega[design.omega_fixed] = 0.
    coeffs.check()
    layout = ParameterLayout(design, opts.frozen, opts.freeze_intercepts)
    weights = PenaltyWeights(design, shrinkage, layout)

    start_time = time.time()
    x = layout.pack_coefficients(coeffs)
    ll, grad, info = lik.value_and_gradient(coeffs, fisher=True)
    objective = ll + weights.log_prior(coeffs)
    if not np.isfinite(objective):
        raise NumericalError('nonfinite objective at the initial point')
    trace = [objective]
    t = 1.
    converged = False
    stalled = False
    iteration = 0

    while iteration < opts.max_iterations and layout.size > 0:
        iteration += 1
        g = layout.pack(grad.intercepts, grad.omega, grad.delta)
        D = 1. / (layout.pack(info.intercepts, info.omega, info.delta) + 1e-8)
        accepted = False
        for _ in range(opts.max_backtracks):
            step = t * D
            x_new = weights.prox(x + step * g, step)
            delta_x = x_new - x
            trial = layout.unpack(x_new, coeffs)
            try:
                ll_new = lik.total_loglik(trial)
            except NumericalError:
                t *= 0.5
                continue
            bound = ll + g @ delta_x - np.sum(delta_x ** 2 / (2. * step))
            if ll_new >= bound - 1e-12 * abs(ll):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # a stalled line search only counts as convergence at a
            # stationary point
            mapping = gradient_mapping(weights, x, g, D)
            limit = opts.gradient_tolerance or STALL_TOLERANCE
            converged = mapping <= limit
            logger.debug('line search stalled at iteration %d (gradient '
                         'mapping %.3g)', iteration, mapping)
            stalled = True
            break

        mapping = np.max(np.abs(delta_x / step)) if len(x) else 0.
        x, coeffs = x_new, trial
        ll, grad, info = lik.value_and_gradient(coeffs, fisher=True)
        new_objective = ll + weights.log_prior(coeffs)
        if not np.isfinite(new_objective):
            raise NumericalError('nonfinite objective at iteration %d'
                                 % iteration)
        change = abs(new_objective - objective) / max(abs(objective), 1.)
        objective = new_objective
        trace.append(objective)
        t = min(1., 2. * t)
        small_mapping = opts.gradient_tolerance is None or \
            mapping <= opts.gradient_tolerance
        if change < opts.tolerance and small_mapping:
            converged = True
            break
    if layout.size == 0:
        converged = True

    if not converged and stalled:
        warn('fit_penalized: no convergence, line search stalled at iteration '
             '%d away from a stationary point; returning the last accepted '
             'iterate' % iteration)
    elif not converged:
        warn('fit_penalized: no convergence after %d iterations (last relative '
             'change above %g); returning the final iterate'
             % (opts.max_iterations, opts.tolerance))
    coeffs.omega[design.omega_fixed] = 0.
    result = FitResult(coefficients=coeffs, objective=objective, loglik=ll,
                       trace=trace, iterations=iteration, converged=converged,
                       wall_time=time.time() - start_time,
                       penalty={'shrinkage': shrinkage.to_dict(),
                                'options': opts.to_dict()},
                       nonzero=count_nonzero(design, coeffs))
    logger.info('fit: %d iterations, objective %.6f, converged=%s',
                iteration, objective, converged)
    return result
