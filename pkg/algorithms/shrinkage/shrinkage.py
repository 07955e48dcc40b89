"""
Prior / penalty families for predictor coefficients.

    L1    (lam/2) exp(-lam |x|)
    L2    N(0, sigma2)
    L1L2  exp(-lam |x| - x^2 / (2 sigma2)) / normaliser  (Laplace-Gaussian)

The Laplace-Gaussian normaliser is sqrt(8 pi sigma2) exp(sigma2 lam^2 / 2)
Phi(-sigma lam), evaluated as sqrt(8 pi sigma2) * 0.5 erfcx(sigma lam / sqrt 2)
so it stays finite for large sigma * lam.
"""
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from case_studies.NHL.design import Group
from utilities.errors import ConfigError, NumericalError

SQRT2 = np.sqrt(2.)
LOG_2_SQRT2 = np.log(2. * SQRT2)


class FamilyKind(enum.Enum):
    L1 = 'L1'
    L2 = 'L2'
    L1L2 = 'L1L2'


class Side(enum.Enum):
    Offense = 'offense'
    Defense = 'defense'


@dataclass(frozen=True)
class PenaltyFamily:
    kind: FamilyKind
    lam: float = None
    sigma2: float = None

    def __post_init__(self):
        if self.kind in (FamilyKind.L1, FamilyKind.L1L2):
            if self.lam is None or not self.lam > 0 or not np.isfinite(self.lam):
                raise ConfigError('%s family needs lambda > 0, got %r'
                                  % (self.kind.value, self.lam))
        if self.kind in (FamilyKind.L2, FamilyKind.L1L2):
            if self.sigma2 is None or not self.sigma2 > 0 or \
                    not np.isfinite(self.sigma2):
                raise ConfigError('%s family needs sigma2 > 0, got %r'
                                  % (self.kind.value, self.sigma2))

    @classmethod
    def l1(cls, lam):
        return cls(FamilyKind.L1, lam=float(lam))

    @classmethod
    def l2(cls, sigma2):
        return cls(FamilyKind.L2, sigma2=float(sigma2))

    @classmethod
    def l1l2(cls, lam, sigma2):
        return cls(FamilyKind.L1L2, lam=float(lam), sigma2=float(sigma2))

    @property
    def l1_weight(self):
        return self.lam if self.kind is not FamilyKind.L2 else 0.

    @property
    def l2_weight(self):
        """1 / sigma2, or 0 without a Gaussian component."""
        return 1. / self.sigma2 if self.kind is not FamilyKind.L1 else 0.

    def to_dict(self):
        return {'kind': self.kind.value, 'lambda': self.lam,
                'sigma2': self.sigma2}

    @classmethod
    def from_dict(cls, d):
        return cls(FamilyKind(d['kind']), lam=d.get('lambda'),
                   sigma2=d.get('sigma2'))


@dataclass(frozen=True)
class HyperPriors:
    gamma_shape: float = 1.
    gamma_rate: float = 0.1
    invgamma_shape: float = 2.
    invgamma_scale: float = 0.5

    def __post_init__(self):
        for name in ('gamma_shape', 'gamma_rate', 'invgamma_shape',
                     'invgamma_scale'):
            if not getattr(self, name) > 0:
                raise ConfigError('hyperprior %s must be positive' % name)

    def to_dict(self):
        return {'gamma_shape': self.gamma_shape,
                'gamma_rate': self.gamma_rate,
                'invgamma_shape': self.invgamma_shape,
                'invgamma_scale': self.invgamma_scale}


@dataclass
class GroupShrinkage:
    """(group, side) -> PenaltyFamily. Goaltenders have no offense entry."""
    families: dict = field(default_factory=dict)

    def __getitem__(self, key):
        try:
            return self.families[key]
        except KeyError:
            raise ConfigError('no shrinkage family for group %s, side %s'
                              % (key[0].name, key[1].value))

    def __setitem__(self, key, family):
        self.families[key] = family

    def __contains__(self, key):
        return key in self.families

    def keys(self):
        return list(self.families)

    def copy(self):
        return GroupShrinkage(dict(self.families))

    @classmethod
    def uniform(cls, groups, family, overrides=None):
        """
        The same family for every group/side present; overrides maps a
        group (or (group, side)) to its own family.
        """
        overrides = overrides or {}
        shrinkage = cls()
        for group in groups:
            for side in Side:
                if group is Group.Goaltender and side is Side.Offense:
                    continue
                chosen = overrides.get((group, side), overrides.get(group,
                                                                    family))
                shrinkage[(group, side)] = chosen
        return shrinkage

    def with_l1(self, groups, lam):
        """Copy with the lasso weight of the given groups set to lam."""
        out = self.copy()
        for (group, side), family in self.families.items():
            if group not in groups:
                continue
            if family.kind is FamilyKind.L1L2:
                out[(group, side)] = PenaltyFamily.l1l2(lam, family.sigma2)
            else:
                out[(group, side)] = PenaltyFamily.l1(lam)
        return out

    def check_covers(self, design):
        for group in design.groups_present():
            for side in Side:
                if group is Group.Goaltender and side is Side.Offense:
                    continue
                if (group, side) not in self.families:
                    raise ConfigError('shrinkage does not cover group %s, '
                                      'side %s' % (group.name, side.value))

    def to_dict(self):
        return {'%s/%s' % (g.name, s.value): f.to_dict()
                for (g, s), f in self.families.items()}

    @classmethod
    def from_dict(cls, d):
        out = cls()
        for key, family in d.items():
            group, side = key.split('/')
            out[(Group[group], Side(side))] = PenaltyFamily.from_dict(family)
        return out


def _l1l2_log_norm(lam, sigma2):
    sigma = np.sqrt(sigma2)
    return 0.5 * np.log(8. * np.pi * sigma2) + \
        np.log(0.5 * special.erfcx(sigma * lam / SQRT2))


def log_density(family, x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericalError('log_density called with a nonfinite value')
    if family.kind is FamilyKind.L1:
        out = np.log(family.lam / 2.) - family.lam * np.abs(x)
    elif family.kind is FamilyKind.L2:
        out = -0.5 * np.log(2. * np.pi * family.sigma2) - \
            x ** 2 / (2. * family.sigma2)
    else:
        out = -family.lam * np.abs(x) - x ** 2 / (2. * family.sigma2) - \
            _l1l2_log_norm(family.lam, family.sigma2)
    return out if out.ndim else float(out)


def l1l2_group_loglik(lam, sigma2, n, abs_sum, sq_sum):
    """
    Sum of Laplace-Gaussian log-densities of n coefficients given their
    sufficient statistics; broadcasts over arrays of (lam, sigma2).
    """
    lam = np.asarray(lam, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    return -lam * abs_sum - sq_sum / (2. * sigma2) - \
        n * _l1l2_log_norm(lam, sigma2)


def soft_threshold(x, threshold):
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.)


def prox(family, x, step):
    """argmin_z (z - x)^2 / (2 step) - log_density(family, z)"""
    if not np.all(np.asarray(step) > 0):
        raise ConfigError('prox step must be positive')
    return prox_weights(x, step, family.l1_weight, family.l2_weight)


def prox_weights(x, step, l1_weight, l2_weight):
    """Vectorised prox with per-coordinate weights (0 switches a term off)."""
    return soft_threshold(x, step * l1_weight) / (1. + step * l2_weight)


def reparam_to_total(lam, sigma):
    """(lambda, sigma) -> (total shrinkage s, Laplace fraction f)"""
    lam = np.asarray(lam, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    laplace = lam / SQRT2
    s = 1. / sigma + laplace
    return s, laplace / s


def reparam_from_total(s, f):
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    return SQRT2 * f * s, 1. / ((1. - f) * s)


def log_jacobian_total(s, f):
    """log |d(lambda, sigma2) / d(s, f)|"""
    return LOG_2_SQRT2 - 3. * np.log1p(-np.asarray(f)) - 2. * np.log(s)


def hyper_log_prior(params, value, kind='lambda'):
    """Gamma log-density for a lambda, Inverse-Gamma for a sigma2."""
    if kind == 'lambda':
        return stats.gamma.logpdf(value, a=params.gamma_shape,
                                  scale=1. / params.gamma_rate)
    if kind == 'sigma2':
        return stats.invgamma.logpdf(value, a=params.invgamma_shape,
                                     scale=params.invgamma_scale)
    raise ConfigError('unknown hyperparameter kind %r' % kind)


def family_variance(family):
    if family.kind is FamilyKind.L1:
        return 2. / family.lam ** 2
    if family.kind is FamilyKind.L2:
        return family.sigma2
    bound = 40. * np.sqrt(family.sigma2)
    second, _ = integrate.quad(
        lambda x: x ** 2 * np.exp(log_density(family, x)), 0., bound,
        limit=200)
    return 2. * second


def unit_variance_family(kind, laplace_fraction=0.5):
    """Family parameters with variance 1 (used for density comparisons)."""
    kind = FamilyKind(kind)
    if kind is FamilyKind.L1:
        return PenaltyFamily.l1(SQRT2)
    if kind is FamilyKind.L2:
        return PenaltyFamily.l2(1.)
    # the family is a scale family in s at fixed f: variance(s) = variance(1) / s^2
    lam, sigma = reparam_from_total(1., laplace_fraction)
    base = family_variance(PenaltyFamily.l1l2(float(lam), float(sigma) ** 2))
    s = np.sqrt(base)
    lam, sigma = reparam_from_total(s, laplace_fraction)
    return PenaltyFamily.l1l2(float(lam), float(sigma) ** 2)


def sample_prior(family, size, rng):
    if family.kind is FamilyKind.L1:
        return rng.laplace(0., 1. / family.lam, size=size)
    if family.kind is FamilyKind.L2:
        return rng.normal(0., np.sqrt(family.sigma2), size=size)
    # |x| is N(-lam sigma2, sigma2) truncated to x > 0
    sigma = np.sqrt(family.sigma2)
    mean = -family.lam * family.sigma2
    magnitude = stats.truncnorm.rvs(a=-mean / sigma, b=np.inf, loc=mean,
                                    scale=sigma, size=size, random_state=rng)
    return np.where(rng.random(size) < 0.5, -1., 1.) * magnitude
