"""
Closed forms for two competing exponential clocks censored at time t.

With L = lam_h + lam_a:
    P(home goal) = lam_h / L * (1 - exp(-L t))
    P(away goal) = lam_a / L * (1 - exp(-L t))
    E[min(T_h, T_a, t)] = (1 - exp(-L t)) / L
"""
import numpy as np


def outcome_probabilities(lam_h, lam_a, t):
    total = lam_h + lam_a
    fired = -np.expm1(-total * t)
    return lam_h / total * fired, lam_a / total * fired, 1. - fired


def expected_time(lam_h, lam_a, t):
    total = lam_h + lam_a
    return -np.expm1(-total * t) / total


def time_variance(lam_h, lam_a, t):
    """Var[min(T_h, T_a, t)], used for standard errors of the mean time."""
    L = lam_h + lam_a
    # E[X^2] for X = min(Exp(L), t)
    second = 2. / L ** 2 * (1. - np.exp(-L * t) * (1. + L * t))
    return second - expected_time(lam_h, lam_a, t) ** 2


def poisson_intercept(goals, exposure):
    """Exposure-weighted Poisson MLE of a log rate."""
    return np.log(goals / exposure)


# Settings (lam_h, lam_a, t) checked by the simulator law suite
LAW_SETTINGS = [
    (2e-3, 1e-3, 40.),
    (6.7554e-4, 6.7554e-4, 40.),
    (6.7554e-4, 6.7554e-4, 13.),
    (1e-2, 1e-2, 100.),
    (5e-2, 1e-2, 30.),
    (1e-3, 4e-3, 250.),
    (2e-2, 2e-2, 1.),
    (1e-1, 5e-2, 10.),
    (3e-3, 3e-3, 600.),
    (8e-4, 5e-4, 2000.),
]
