from types import SimpleNamespace

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from algorithms.competing_hazards.likelihood import Coefficients
from algorithms.proximal_gradient.selection import CascadeCell, CascadeResult
from utilities.metrics import variance_decomposition
from utilities.plotting import (
    plot_cascade, plot_intercept_rates, plot_objective_trace,
    plot_prior_densities, plot_ratings, plot_variability, save_figure)


def test_figures(tmp_path, make_samples, rng):
    cells = {('T01', 'mvp_total'): CascadeCell('T01', 'mvp_total', 'T01C1',
                                               0.3, 6., False),
             ('T02', 'mvp_total'): CascadeCell('T02', 'mvp_total', 'T02D1',
                                               0.1, 0.5, True)}
    cascade = CascadeResult(cells, [], ['T01', 'T02'])
    samples = make_samples(rng.normal(0., 0.2, (1, 30, 4)),
                           rng.normal(0., 0.2, (1, 30, 4)),
                           blocks=['Center/offense'], block_kinds=['L1'],
                           lam=np.full((1, 30, 1), 2.))
    ratings = pd.DataFrame({'group': ['Center', 'Defense', 'Center'],
                            'omega': [0.1, -0.2, 0.0],
                            'delta': [0.0, 0.1, -0.3]})
    traces = {'warm': SimpleNamespace(trace=[-10., -5., -4.5, -4.5]),
              'cold': SimpleNamespace(trace=[-20., -4.5])}
    figures = [plot_intercept_rates(Coefficients.zeros(0, intercept=-7.3)),
               plot_prior_densities(),
               plot_cascade(cascade),
               plot_variability(variance_decomposition(samples)),
               plot_ratings(ratings),
               plot_objective_trace(traces)]
    for i, fig in enumerate(figures):
        assert isinstance(fig, Figure)
        path = save_figure(fig, str(tmp_path / 'figures' / ('%d.png' % i)))
        with open(path, 'rb') as handle:
            assert handle.read(8) == b'\x89PNG\r\n\x1a\n'
