#------------------------------------------------
#  Figures for the run directory. Every function returns the Figure;
#  save_figure writes it as PNG and closes it.
import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from algorithms.shrinkage.shrinkage import (
    FamilyKind, log_density, unit_variance_family)
from case_studies.NHL.event_store import ScoreState
from utilities.metrics import SECONDS_PER_HOUR

colors = ['#A8383B', '#226765', '#AA6B39', '#328A2E', '#4B3B77', '#777777']


def _style(ax):
    ax.tick_params(right=True, top=True, left=True, bottom=True)
    ax.tick_params(axis="y", direction="in")
    ax.tick_params(axis="x", direction="in")
    ax.grid(color='k', alpha=0.5, linestyle='dashed', linewidth=0.5)


def save_figure(fig, path):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_intercept_rates(coeffs):
    """Home and away goals per 60 minutes in each score state."""
    rates = np.exp(coeffs.intercepts) * SECONDS_PER_HOUR
    x = np.arange(len(ScoreState))
    fig, ax = plt.subplots(1, 1)
    ax.bar(x - 0.2, rates[0], 0.4, color=colors[0], label='Home')
    ax.bar(x + 0.2, rates[1], 0.4, color=colors[1], label='Away')
    ax.set_xticks(x)
    ax.set_xticklabels([s.code for s in ScoreState])
    ax.set_ylabel('Goals per 60 minutes')
    _style(ax)
    ax.legend()
    fig.tight_layout()
    return fig


def plot_prior_densities(laplace_fraction=0.5, width=4.):
    """The three prior families side by side, each scaled to unit variance."""
    x = np.linspace(-width, width, 801)
    fig, ax = plt.subplots(1, 1)
    names = {FamilyKind.L1: 'Laplace', FamilyKind.L2: 'Gaussian',
             FamilyKind.L1L2: 'Laplace-Gaussian'}
    for i, kind in enumerate(FamilyKind):
        family = unit_variance_family(kind, laplace_fraction)
        ax.plot(x, np.exp(log_density(family, x)), color=colors[i],
                label=names[kind])
    ax.set_xlabel('Coefficient')
    ax.set_ylabel('Density')
    _style(ax)
    ax.legend()
    fig.tight_layout()
    return fig


def plot_cascade(cascade):
    """Cumulative number of filled MVP / LVP cells as the penalty decreases."""
    frame = cascade.to_frame().dropna(subset=['emergence_lambda'])
    fig, ax = plt.subplots(1, 1)
    for i, cell in enumerate(sorted(frame['cell'].unique())):
        lam = np.sort(frame.loc[frame['cell'] == cell,
                                'emergence_lambda'].to_numpy())[::-1]
        ax.step(lam, np.arange(1, len(lam) + 1), where='post',
                color=colors[i % len(colors)], label=cell)
    ax.invert_xaxis()
    ax.set_xlabel(r'$\lambda$')
    ax.set_ylabel('Teams with the cell filled')
    _style(ax)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_variability(decomposition):
    """Per group/side: coefficient spread and Laplace fraction, medians with 50% and 95% bars."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    names = ['%s/%s' % (g, s) for g, s in zip(decomposition['group'],
                                              decomposition['side'])]
    y = np.arange(len(names))
    for ax, prefix, label in ((axes[0], 'spread', 'Standard deviation'),
                              (axes[1], 'laplace_fraction',
                               'Laplace fraction')):
        mid = decomposition[prefix + '_median'].to_numpy()
        ax.hlines(y, decomposition[prefix + '_q025'],
                  decomposition[prefix + '_q975'], color=colors[1],
                  linewidth=1)
        ax.hlines(y, decomposition[prefix + '_q25'],
                  decomposition[prefix + '_q75'], color=colors[0],
                  linewidth=3)
        ax.plot(mid, y, 'o', color='k', markersize=3)
        ax.set_yticks(y)
        ax.set_yticklabels(names)
        ax.set_xlabel(label)
        _style(ax)
    fig.tight_layout()
    return fig


def plot_ratings(frame):
    """omega against delta for each predictor, coloured by group."""
    fig, ax = plt.subplots(1, 1)
    for i, (group, part) in enumerate(frame.groupby('group', sort=True)):
        ax.scatter(part['omega'], part['delta'], s=8,
                   color=colors[i % len(colors)], label=group)
    ax.axhline(0., color='k', linewidth=0.5)
    ax.axvline(0., color='k', linewidth=0.5)
    ax.set_xlabel(r'$\omega$ (offense)')
    ax.set_ylabel(r'$\delta$ (defensive liability)')
    _style(ax)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_objective_trace(results):
    """results: label -> FitResult. Objective gap to the best value, log scale."""
    fig, ax = plt.subplots(1, 1)
    for i, (label, result) in enumerate(results.items()):
        trace = np.asarray(result.trace, dtype=float)
        gap = np.maximum(trace.max() - trace, 1e-16)
        ax.step(np.arange(1, len(trace) + 1), gap,
                color=colors[i % len(colors)], label=label)
    ax.set_yscale('log')
    ax.set_xlabel('Iterations')
    ax.set_ylabel('Objective gap')
    _style(ax)
    ax.legend()
    fig.tight_layout()
    return fig
