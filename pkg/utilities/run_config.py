#------------------------------------------------
#  Run configuration: a TOML file with one table per concern,
#  resolved into typed settings, plus the manifest every run writes.
import copy
import dataclasses
import datetime
import logging
import os
import platform
from importlib import metadata

import toml

from algorithms.MCMC_sampler.gibbs_sampler import ChainConfig
from algorithms.proximal_gradient.proximal_gradient import FitOptions
from algorithms.shrinkage.shrinkage import (
    FamilyKind, GroupShrinkage, HyperPriors, PenaltyFamily)
from case_studies.NHL.design import Group, ModelSpec, Variant
from utilities.errors import ConfigError
from utilities.general_utility_functions import dump_json, file_digest

logger = logging.getLogger(__name__)

PACKAGES = ('numpy', 'scipy', 'pandas', 'matplotlib', 'click', 'toml', 'tqdm',
            'arviz')

DEFAULTS = {
    'seed': 0,
    'data': {'events': None, 'roster': None, 'coefficients': None,
             'intercepts': None},
    'model': {'variant': 'players', 'include_teams': False, 'pair_count': 0},
    'shrinkage': {'family': 'L1L2', 'lambda': 8., 'sigma2': 0.1,
                  'goaltender_sigma2': 0.01, 'team_sigma2': 1.,
                  'pair_lambda': 8.},
    'hyperpriors': {'gamma_shape': 1., 'gamma_rate': 0.1,
                    'invgamma_shape': 2., 'invgamma_scale': 0.5},
    'fit': {'mode': 'mle', 'max_iterations': 5000, 'tolerance': 1e-8,
            'gradient_tolerance': None, 'threads': 1, 'lambdas': [],
            'lambda_start': 8., 'lambda_step': 0.25, 'weak_lambda': 1.,
            'pair_lambdas': [], 'pair_target': None, 'r_base': -7.3,
            'literal_gnet': False, 'rank_by': 'net'},
    'split': {'train_fraction': 0.8, 'seed': None},
    'chain': {'n_chains': 4, 'burn_in': 1000, 'thin': 5, 'min_kept': 500,
              'grid_points': 101, 'joint_grid': False, 'adapt_every': 50,
              'processes': 1, 'seed': None},
    'league': {'n_teams': 30, 'games_per_team': 82, 'shifts_per_game': 200,
               'shift_median_s': 13., 'shift_log_sd': 0.5,
               'evolve_score': True, 'small': False},
    'validate': {'replications': 100, 'gradient_instances': 50,
                 'density_settings': 20, 'law_draws': 100000, 'law_z': 3.,
                 'quantile_events': 5000, 'quantile_players': 10},
    'output': {'dir': 'runs/latest', 'figures': True},
}


def _merge(defaults, given, where):
    out = {}
    for key in given:
        if key not in defaults:
            raise ConfigError('unknown configuration key %s%s'
                              % (where, key))
    for key, default in defaults.items():
        value = given.get(key, default)
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError('configuration entry %s%s must be a table'
                                  % (where, key))
            value = _merge(default, value, '%s%s.' % (where, key))
        out[key] = value
    return out


@dataclasses.dataclass
class RunConfig:
    """Resolved configuration. `raw` keeps the merged TOML tables."""
    raw: dict
    source: str = None

    @classmethod
    def from_dict(cls, given, source=None):
        return cls(_merge(DEFAULTS, given or {}, ''), source)

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls.from_dict({})
        try:
            given = toml.load(path)
        except (OSError, toml.TomlDecodeError) as err:
            raise ConfigError('cannot read configuration %s: %s' % (path, err))
        return cls.from_dict(given, source=path)

    def override(self, seed=None, out=None, threads=None):
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw['seed'] = int(seed)
        if out is not None:
            raw['output']['dir'] = out
        if threads is not None:
            if threads < 1:
                raise ConfigError('threads must be positive')
            raw['fit']['threads'] = int(threads)
        return RunConfig(raw, self.source)

    def __getitem__(self, section):
        return self.raw[section]

    # ------------------------------------------------------------------
    @property
    def seed(self):
        return int(self.raw['seed'])

    @property
    def out_dir(self):
        return self.raw['output']['dir']

    @property
    def threads(self):
        return int(self.raw['fit']['threads'])

    @property
    def split_seed(self):
        seed = self.raw['split']['seed']
        return self.seed if seed is None else int(seed)

    def require_file(self, key):
        path = self.raw['data'][key]
        if path is None:
            raise ConfigError('data.%s is not set' % key)
        if not os.path.isfile(path):
            raise ConfigError('data.%s: no such file %s' % (key, path))
        return path

    def model_spec(self, variant=None):
        section = self.raw['model']
        try:
            chosen = Variant(variant or section['variant'])
        except ValueError:
            raise ConfigError('model.variant must be one of %s'
                              % [v.value for v in Variant])
        pair_count = int(section['pair_count'])
        if chosen is Variant.PlayersPlusPairs and pair_count < 1:
            raise ConfigError('model.pair_count must be positive for the '
                              'pairs variant')
        return ModelSpec(chosen, bool(section['include_teams']), pair_count)

    def hyperpriors(self):
        return HyperPriors(**self.raw['hyperpriors'])

    def skater_family(self):
        section = self.raw['shrinkage']
        try:
            kind = FamilyKind(str(section['family']).upper())
        except ValueError:
            raise ConfigError('shrinkage.family must be one of %s'
                              % [k.value for k in FamilyKind])
        return PenaltyFamily(
            kind, lam=None if kind is FamilyKind.L2 else section['lambda'],
            sigma2=None if kind is FamilyKind.L1 else section['sigma2'])

    def shrinkage(self, groups=None):
        """Skater family for every position; L2 for goaltenders, teams and pairs default."""
        section = self.raw['shrinkage']
        groups = list(Group) if groups is None else groups
        overrides = {
            Group.Goaltender: PenaltyFamily.l2(section['goaltender_sigma2']),
            Group.Team: PenaltyFamily.l2(section['team_sigma2']),
            Group.Pair: PenaltyFamily.l1(section['pair_lambda'])}
        return GroupShrinkage.uniform(groups, self.skater_family(), overrides)

    def fit_options(self, **changes):
        section = self.raw['fit']
        opts = FitOptions(max_iterations=int(section['max_iterations']),
                          tolerance=float(section['tolerance']),
                          gradient_tolerance=section['gradient_tolerance'],
                          threads=self.threads)
        return dataclasses.replace(opts, **changes)

    def chain_config(self, **changes):
        section = dict(self.raw['chain'])
        seed = section.pop('seed')
        section.update(hyperpriors=self.hyperpriors(),
                       seed=self.seed if seed is None else int(seed))
        section.update(changes)
        return ChainConfig(**section)

    def to_dict(self):
        return dict(self.raw)


def package_versions():
    versions = {'python': platform.python_version()}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_manifest(config, command, inputs=(), outputs=(), extra=None):
    """
    manifest.json in the run directory: command, resolved configuration,
    seeds, package versions and SHA-256 digests of every input file.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    manifest = {'command': command,
                'created': datetime.datetime.now().isoformat(
                    timespec='seconds'),
                'config_file': config.source,
                'config': config.to_dict(),
                'seed': config.seed,
                'versions': package_versions(),
                'inputs': {p: file_digest(p) for p in inputs if p},
                'outputs': sorted(outputs)}
    if extra:
        manifest.update(extra)
    path = os.path.join(config.out_dir, 'manifest.json')
    dump_json(manifest, path)
    logger.info('manifest written to %s', path)
    return path
