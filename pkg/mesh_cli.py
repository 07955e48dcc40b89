"""
Command line for the hazard rating toolkit.

    python mesh_cli.py [--config run.toml] [--seed N] [--out DIR] \
        [--threads N] [--verbose] COMMAND [OPTIONS]

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. Failures also write error.json to the run directory.
"""
import json
import logging
import os
import sys

import click
import numpy as np
import pandas as pd

from algorithms.competing_hazards.likelihood import (
    Coefficients, coefficients_frame, write_coefficients)
from algorithms.MCMC_sampler.gibbs_sampler import (
    PosteriorSamples, run_chain, summarize_posterior)
from algorithms.proximal_gradient.proximal_gradient import fit_penalized
from algorithms.proximal_gradient.selection import (
    PLAYER_GROUPS, CascadeIncomplete, cv_select, mvp_cascade, pair_selection)
from case_studies.NHL.design import (
    ModelSpec, PredictorKind, Variant, attach_pairs, build_design,
    enumerate_pairs, player_teams)
from case_studies.NHL.event_store import (
    apply_split, counts_to_summary, load_events, load_roster, split_by_game,
    summarize, write_events, write_roster)
from case_studies.synthetic_league.systems import (
    LeagueRecipe, LeagueSystem, posterior_predictive_check, small_recipe)
from Model_comp.model_comparisons import compare_models
from utilities import plotting
from utilities.errors import ConfigError, DataError, MeshError, NumericalError
from utilities.general_utility_functions import dump_json
from utilities.metrics import (
    contribution_report, dic, intercept_rates, oos_deviance,
    variance_decomposition)
from utilities.run_config import RunConfig, write_manifest
from utilities.validation import run_validation

logger = logging.getLogger('mesh')


class Run:
    """Per-invocation state: the resolved configuration and the files written."""

    def __init__(self, config):
        self.config = config
        self.outputs = []
        self.inputs = []

    def path(self, name):
        os.makedirs(self.config.out_dir, exist_ok=True)
        path = os.path.join(self.config.out_dir, name)
        self.outputs.append(name)
        return path

    def csv(self, frame, name):
        frame.to_csv(self.path(name), index=False)

    def json(self, obj, name):
        dump_json(obj, self.path(name))

    def figure(self, fig, name):
        if self.config['output']['figures']:
            plotting.save_figure(fig, self.path(name))
        else:
            plotting.plt.close(fig)

    def manifest(self, command, extra=None):
        write_manifest(self.config, command, self.inputs, self.outputs, extra)

    def load_data(self):
        roster_path = self.config.require_file('roster')
        events_path = self.config.require_file('events')
        self.inputs += [roster_path, events_path]
        roster = load_roster(roster_path)
        return load_events(events_path, roster), roster

    def split(self, events):
        section = self.config['split']
        return split_by_game(events, float(section['train_fraction']),
                             self.config.split_seed)


pass_run = click.make_pass_decorator(Run)


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False),
              default=None, help='TOML run configuration.')
@click.option('--seed', type=int, default=None, help='Master seed.')
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Run directory.')
@click.option('--threads', type=int, default=None,
              help='Threads for likelihood reductions.')
@click.option('--verbose', is_flag=True, help='Debug logging.')
@click.pass_context
def cli(ctx, config_path, seed, out, threads, verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s: %(message)s')
    config = RunConfig.load(config_path).override(seed, out, threads)
    ctx.obj = Run(config)


@cli.command('summarize')
@click.option('--events', type=click.Path(dir_okay=False), default=None)
@click.option('--roster', type=click.Path(dir_okay=False), default=None)
@click.option('--counts', type=int, nargs=3, default=None,
              help='Away-goal, no-goal and home-goal counts instead of a file.')
@pass_run
def summarize_command(run, events, roster, counts):
    """Outcome counts and percentages of an events file."""
    if counts:
        summary = counts_to_summary(*counts)
    else:
        data = run.config['data']
        data['events'] = events or data['events']
        data['roster'] = roster or data['roster']
        summary = summarize(run.load_data()[0])
    frame = pd.DataFrame({'outcome': ['AwayGoal', 'NoGoal', 'HomeGoal'],
                          'count': [summary.away_goals, summary.no_goals,
                                    summary.home_goals],
                          'percent': list(summary.percentages)})
    click.echo(frame.to_string(index=False))
    run.json(summary.to_dict(), 'counts.json')
    run.manifest('summarize')


def _fit_mle(run, design, split, train, test, shrinkage, opts):
    section = run.config['fit']
    groups = [g for g in design.groups_present() if g in PLAYER_GROUPS]
    report = {}
    if section['lambdas'] and groups:
        cv = cv_select(design, section['lambdas'], split, shrinkage,
                       groups, opts)
        shrinkage = shrinkage.with_l1(groups, cv.selected)
        report['selection'] = cv.to_dict()
        run.csv(cv.path.to_frame(), 'penalty_path.csv')
    fit = fit_penalized(train, shrinkage, opts)
    fit.save(run.path('fit.json'))
    coeffs = fit.coefficients
    report.update({'train_loglik': fit.loglik, 'converged': fit.converged,
                   'oos_deviance': oos_deviance(coeffs, test)})
    run.figure(plotting.plot_objective_trace({'fit': fit}),
               'objective_trace.png')
    return coeffs, report, shrinkage


def _fit_mcmc(run, design, train, test, test_events, shrinkage, opts):
    init = fit_penalized(train, shrinkage, opts).coefficients
    samples = run_chain(train, shrinkage, run.config.chain_config(), init)
    samples.save(run.path('samples.npz'), run.path('samples.json'))
    run.csv(summarize_posterior(samples), 'posterior_summary.csv')
    run.csv(samples.diagnostics(), 'diagnostics.csv')
    decomposition = variance_decomposition(samples)
    run.csv(decomposition, 'variance_decomposition.csv')
    if len(decomposition):
        run.figure(plotting.plot_variability(decomposition),
                   'variability.png')
    coeffs = samples.posterior_mean()
    report = {'dic_in_sample': dic(samples, train).to_dict(),
              'oos_deviance': oos_deviance(coeffs, test),
              'acceptance_mean': float(np.mean(samples.acceptance))}
    if test.n_rows:
        report['dic_out_of_sample'] = dic(samples, test,
                                          scope='out-of-sample').to_dict()
        check = posterior_predictive_check(samples, test, test_events,
                                           n_draws=200, seed=run.config.seed)
        run.csv(check.teams, 'predictive_teams.csv')
        run.csv(check.totals, 'predictive_totals.csv')
        report['predictive_verdict'] = check.verdict
        report['predictive_team_coverage'] = check.team_coverage
    return coeffs, report


@cli.command('fit')
@click.option('--mode', type=click.Choice(['mle', 'mcmc']), default=None)
@click.option('--variant', type=click.Choice([v.value for v in Variant]),
              default=None)
@pass_run
def fit_command(run, mode, variant):
    """Penalized MLE or full posterior sampling on the training games."""
    config = run.config
    mode = mode or config['fit']['mode']
    if mode not in ('mle', 'mcmc'):
        raise ConfigError('fit.mode must be mle or mcmc')
    events, roster = run.load_data()
    spec = config.model_spec(variant)
    design = build_design(events, roster, spec)
    if spec.variant is Variant.PlayersPlusPairs:
        design = attach_pairs(design,
                              enumerate_pairs(events, roster, spec.pair_count))
    split = run.split(events)
    run.json(split.to_dict(), 'split.json')
    train_rows, test_rows = design.split_rows(split)
    train, test = design.subset(train_rows), design.subset(test_rows)
    shrinkage = config.shrinkage(design.groups_present())
    opts = config.fit_options()

    if mode == 'mle':
        coeffs, report, shrinkage = _fit_mle(run, design, split, train,
                                             test, shrinkage, opts)
    else:
        test_events = apply_split(events, split)[1]
        coeffs, report = _fit_mcmc(run, design, train, test, test_events,
                                   shrinkage, opts)
    write_coefficients(design, coeffs, run.path('coefficients.csv'),
                       run.path('intercepts.csv'))
    run.csv(intercept_rates(coeffs), 'intercept_rates.csv')
    run.figure(plotting.plot_intercept_rates(coeffs), 'intercept_rates.png')
    if design.n_predictors:
        run.figure(plotting.plot_ratings(coefficients_frame(design, coeffs)),
                   'ratings.png')
    report.update({'mode': mode, 'variant': spec.variant.value,
                   'shrinkage': shrinkage.to_dict(),
                   'train_events': train.n_rows, 'test_events': test.n_rows})
    run.json(report, 'report.json')
    click.echo(json.dumps({k: v for k, v in report.items()
                           if not isinstance(v, dict)}, indent=2, default=str))
    run.manifest('fit')


@cli.command('compare')
@pass_run
def compare_command(run):
    """Score-only, team and player models on one split."""
    config = run.config
    events, roster = run.load_data()
    split = run.split(events)
    chain = config.chain_config() if config['fit']['mode'] == 'mcmc' else None
    frame, fits = compare_models(
        events, roster, split, config.shrinkage, config.fit_options(), chain,
        include_teams=bool(config['model']['include_teams']))
    run.csv(frame, 'comparison.csv')
    run.json(frame.to_dict(orient='records'), 'comparison.json')
    run.figure(plotting.plot_objective_trace(fits), 'comparison_traces.png')
    click.echo(frame.to_string(index=False))
    run.manifest('compare')


def _team_fixed(run, events, roster, opts):
    """Team ratings and grand means from a team-only fit, mapped onto a players + teams design."""
    config = run.config
    team_design = build_design(events, roster, ModelSpec(Variant.Teams))
    team_fit = fit_penalized(team_design,
                             config.shrinkage(team_design.groups_present()),
                             opts)
    design = build_design(events, roster, ModelSpec(Variant.Players,
                                                    include_teams=True))
    fixed = Coefficients.zeros(design.n_predictors)
    fixed.intercepts = team_fit.coefficients.intercepts.copy()
    for p in team_design.registry:
        q = design.registry.index(p.label)
        fixed.omega[q] = team_fit.coefficients.omega[p.index]
        fixed.delta[q] = team_fit.coefficients.delta[p.index]
    return design, fixed


@cli.command('mvp')
@pass_run
def mvp_command(run):
    """Per-team most and least valuable players by a decreasing lasso penalty."""
    config = run.config
    section = config['fit']
    events, roster = run.load_data()
    opts = config.fit_options()
    design, fixed = _team_fixed(run, events, roster, opts)
    try:
        result = mvp_cascade(design, fixed, player_teams(events),
                             section['lambda_start'], section['lambda_step'],
                             section['weak_lambda'], opts, progress=True)
    except CascadeIncomplete as err:
        run.csv(err.result.to_frame(), 'mvp.csv')
        run.csv(err.result.trace_frame(), 'mvp_trace.csv')
        run.manifest('mvp', {'complete': False})
        raise
    run.csv(result.to_frame(), 'mvp.csv')
    run.csv(result.trace_frame(), 'mvp_trace.csv')
    run.figure(plotting.plot_cascade(result), 'mvp_cascade.png')
    click.echo(result.to_frame().to_string(index=False))
    run.manifest('mvp', {'complete': True})


@cli.command('pairs')
@click.option('--count', type=int, default=None,
              help='Candidate pairs (defaults to model.pair_count).')
@pass_run
def pairs_command(run, count):
    """Held-out selection of player-pair chemistry effects."""
    config = run.config
    section = config['fit']
    count = count or int(config['model']['pair_count'])
    if count < 1:
        raise ConfigError('pairs needs a positive --count or model.pair_count')
    if not section['pair_lambdas']:
        raise ConfigError('fit.pair_lambdas is empty')
    events, roster = run.load_data()
    design = build_design(events, roster, ModelSpec(Variant.Players))
    design = attach_pairs(design, enumerate_pairs(events, roster, count))
    split = run.split(events)
    selection = pair_selection(design, config.shrinkage(design.groups_present()),
                               section['pair_lambdas'], split,
                               config.fit_options(), section['pair_target'])
    run.csv(selection.table, 'pairs.csv')
    run.csv(selection.cv.path.to_frame(), 'pair_path.csv')
    run.json(selection.to_dict(), 'pairs.json')
    click.echo(selection.table.to_string(index=False))
    run.manifest('pairs')


@cli.command('gnet')
@click.option('--coefficients', type=click.Path(dir_okay=False), default=None,
              help='CSV with label, omega, delta and seconds (or events in '
                   'the config to compute seconds).')
@click.option('--samples', type=click.Path(dir_okay=False), default=None,
              help='samples.npz; adds %Pr(best) within each position.')
@pass_run
def gnet_command(run, coefficients, samples):
    """Goals created and prevented above average over each player's ice time."""
    config = run.config
    section = config['fit']
    path = coefficients or config.require_file('coefficients')
    run.inputs.append(path)
    table = pd.read_csv(path)
    if 'seconds' not in table.columns:
        events, roster = run.load_data()
        design = build_design(events, roster, ModelSpec(Variant.Players))
        seconds = dict(zip(design.labels, design.exposure()))
        table['seconds'] = [seconds.get(str(l), 0.) for l in table['label']]
    if 'kind' in table.columns:
        table = table[table['kind'] == PredictorKind.Player.value]
    posterior = None
    if samples is not None:
        run.inputs.append(samples)
        posterior = PosteriorSamples.load(
            samples, os.path.splitext(samples)[0] + '.json')
    report = contribution_report(table, section['r_base'], posterior,
                                 section['rank_by'], section['literal_gnet'])
    run.csv(report, 'gnet.csv')
    click.echo(report.head(20).to_string(index=False))
    run.manifest('gnet')


@cli.command('simulate')
@pass_run
def simulate_command(run):
    """Synthetic league with known coefficients."""
    config = run.config
    section = dict(config['league'])
    small = section.pop('small')
    if small:
        recipe = small_recipe(seed=config.seed)
    else:
        recipe = LeagueRecipe(seed=config.seed, **section)
    league = LeagueSystem(recipe).simulate()
    write_events(league.events, run.path('events.csv'))
    write_roster(league.roster, run.path('roster.csv'))
    run.csv(league.truth_frame(), 'truth.csv')
    pd.DataFrame({'side': ['home', 'away'],
                  'LEAD': league.truth.intercepts[:, 0],
                  'TIED': league.truth.intercepts[:, 1],
                  'TRAIL': league.truth.intercepts[:, 2]}).to_csv(
        run.path('truth_intercepts.csv'), index=False)
    summary = summarize(league.events)
    run.json(summary.to_dict(), 'counts.json')
    click.echo('%d events, %.2f%% NoGoal' % (summary.total,
                                             summary.percentages[1]))
    run.manifest('simulate')


@cli.command('validate')
@click.option('--quick', is_flag=True,
              help='Skip the sampler calibration suite.')
@pass_run
def validate_command(run, quick):
    """Invariant suites; exits 3 when any check fails."""
    results = run_validation(run.config['validate'], run.config.seed,
                             include_sampler=not quick)
    run.json([r.to_dict() for r in results], 'validation.json')
    run.figure(plotting.plot_prior_densities(), 'prior_densities.png')
    for r in results:
        click.echo('%-24s %s  %.4g (threshold %.4g)'
                   % (r.name, 'pass' if r.passed else 'FAIL', r.statistic,
                      r.threshold))
    run.manifest('validate')
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise NumericalError('validation failed: %s' % ', '.join(failed))


def _report_error(err, out_dir, code):
    payload = err.to_dict() if isinstance(err, MeshError) else \
        {'error': type(err).__name__, 'message': str(err)}
    payload['exit_code'] = code
    text = json.dumps(payload)
    click.echo(text, err=True)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, 'error.json'), 'w') as handle:
                handle.write(text + '\n')
        except OSError:
            pass


def main(argv=None):
    ctx = None
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        ctx = cli.make_context('mesh_cli', args)
        with ctx:
            cli.invoke(ctx)
        return 0
    except click.exceptions.Exit as err:
        return err.exit_code
    except click.exceptions.Abort:
        return 1
    except click.ClickException as err:
        _report_error(ConfigError(err.format_message()), _out_dir(ctx), 1)
        return 1
    except MeshError as err:
        _report_error(err, _out_dir(ctx), err.exit_code)
        return err.exit_code
    except (FileNotFoundError, PermissionError) as err:
        _report_error(DataError(str(err)), _out_dir(ctx), 2)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        _report_error(NumericalError(str(err)), _out_dir(ctx), 3)
        return 3


def _out_dir(ctx):
    if ctx is not None and isinstance(ctx.obj, Run):
        return ctx.obj.config.out_dir
    return None


if __name__ == '__main__':
    sys.exit(main())
