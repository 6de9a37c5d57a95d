"""
Desingularizing functions of the Kurdyka-Lojasiewicz inequality

    phi'(f(x) - f(x*)) * |df(x)|_- >= 1

for x in the strict upper level set {|x - x*| < delta, f* < f(x) < f* + eta}.
"""
import sys
import math
import logging
import numpy as np
from scipy import integrate, optimize
from .base import BlockVector
from .exceptions import (
    KlDescentDomainError, KlDescentRegionEmptyError)

logger = logging.getLogger('kldescent')

POWER = 'power'
GENERAL = 'general'

# Stands in for +inf as the validity radius of globally valid potentials
ETA_INFINITY = sys.float_info.max

KL_RATIO_TOL = 1e-9
MAX_REJECTION_ATTEMPTS = 10 ** 6
TAIL_EXPONENT_TOL = 1e-3


class Desingularizer(object):
    """
    A desingularizing function phi: concave, continuous, phi(0) = 0 and
    phi' > 0 on (0, eta).

    Use the `power` and `general` constructors rather than calling this
    directly.

    Parameters
    ----------
    kind : str
        Either 'power' (phi(t) = (C/theta) t^theta) or 'general'
    C : float
        Constant of the power family
    theta : float
        Exponent of the power family, in (0, 1]
    phi : callable
        phi for the general kind
    dphi : callable
        Derivative of phi for the general kind
    eta : float
        Validity radius of the values, t must lie in [0, eta)
    """

    def __init__(self, kind, C=None, theta=None, phi=None, dphi=None,
                 eta=ETA_INFINITY):
        if kind == POWER:
            if C is None or not C > 0:
                raise KlDescentDomainError(
                    "Power desingularizer needs C > 0 (got {})".format(C))
            check_theta(theta)
        elif kind == GENERAL:
            if phi is None or dphi is None:
                raise KlDescentDomainError(
                    "General desingularizer needs both phi and its "
                    "derivative")
        else:
            raise KlDescentDomainError(
                "Unrecognised desingularizer kind '{}'".format(kind))
        if not eta > 0:
            raise KlDescentDomainError(
                "Validity radius eta must be positive (got {})".format(eta))
        self.kind = kind
        self.C = float(C) if C is not None else None
        self.theta = float(theta) if theta is not None else None
        self._phi = phi
        self._dphi = dphi
        self.eta = float(eta)

    @classmethod
    def power(cls, C, theta, eta=ETA_INFINITY):
        return cls(POWER, C=C, theta=theta, eta=eta)

    @classmethod
    def general(cls, phi, dphi, eta=ETA_INFINITY):
        return cls(GENERAL, phi=phi, dphi=dphi, eta=eta)

    @property
    def is_power(self):
        return self.kind == POWER

    def value(self, t):
        t = self._check_domain(t)
        if self.is_power:
            return (self.C / self.theta) * t ** self.theta
        return float(self._phi(t))

    def derivative(self, t):
        t = self._check_domain(t)
        if self.is_power:
            if t == 0.0 and self.theta < 1.0:
                return math.inf
            return self.C * t ** (self.theta - 1.0)
        return float(self._dphi(t))

    def _check_domain(self, t):
        t = float(t)
        if not 0.0 <= t < self.eta:
            raise KlDescentDomainError(
                "Desingularizer evaluated at t={} outside [0, {})"
                .format(t, self.eta))
        return t

    def __repr__(self):
        if self.is_power:
            return "{}(power, C={}, theta={}, eta={})".format(
                self.__class__.__name__, self.C, self.theta, self.eta)
        return "{}(general, eta={})".format(self.__class__.__name__,
                                            self.eta)

    def to_dict(self):
        return {'kind': self.kind, 'C': self.C, 'theta': self.theta,
                'eta': self.eta}


class KLRegion(object):
    """
    The (strict or relaxed) local upper level set of f around x*

    Parameters
    ----------
    x_star : BlockVector | array-like
        The reference point
    f_star : float
        f(x*)
    delta : float
        Radius of the ball around x*
    eta : float
        Width of the value band above f*
    strict : bool
        Whether the left inequality f* < f(x) is strict. The relaxed set
        allows f* <= f(x).
    """

    def __init__(self, x_star, f_star, delta, eta=ETA_INFINITY, strict=True):
        if not delta > 0 or not eta > 0:
            raise KlDescentDomainError(
                "Region radius and value band must be positive (got "
                "delta={}, eta={})".format(delta, eta))
        self.x_star = _flatten(x_star)
        self.f_star = float(f_star)
        self.delta = float(delta)
        self.eta = float(eta)
        self.strict = strict

    def contains(self, x, f_x):
        if np.linalg.norm(_flatten(x) - self.x_star) >= self.delta:
            return False
        if f_x >= self.f_star + self.eta:
            return False
        if self.strict:
            return f_x > self.f_star
        return f_x >= self.f_star

    def __repr__(self):
        return "{}(f_star={}, delta={}, eta={}, strict={})".format(
            self.__class__.__name__, self.f_star, self.delta, self.eta,
            self.strict)


class KLReport(object):

    def __init__(self, min_ratio, violations, samples_accepted, points,
                 attempts):
        self.min_ratio = min_ratio
        self.violations = violations
        self.samples_accepted = samples_accepted
        self.points = points
        self.attempts = attempts

    @property
    def passed(self):
        return self.violations == 0

    def __repr__(self):
        return "{}(min_ratio={}, violations={}, samples={})".format(
            self.__class__.__name__, self.min_ratio, self.violations,
            self.samples_accepted)

    def to_dict(self):
        return {'min_ratio': self.min_ratio,
                'violations': self.violations,
                'samples_accepted': self.samples_accepted,
                'points': self.points}


def check_theta(theta):
    if theta is None or not 0.0 < theta <= 1.0:
        raise KlDescentDomainError(
            "KL exponent theta must lie in (0, 1] (got {})".format(theta))


def phi_eval(d, t):
    return d.value(t)


def phi_tilde(d, t):
    """
    max(phi(t), sqrt(t)), the gauge of the distance-by-gap estimate
    """
    return max(d.value(t), math.sqrt(t))


def phi_primitive(d):
    """
    Returns a primitive Phi of -(phi')^2 and whether Phi has a finite limit
    at 0 (the condition for finite termination of methods satisfying the
    relative error condition at the previous point).

    For the power family the primitive is in closed form,

        theta = 1/2:   Phi(t) = -C^2 ln(t)
        otherwise:     Phi(t) = -C^2 t^(2 theta - 1) / (2 theta - 1)

    For general desingularizers it is computed by quadrature anchored at
    t0 = eta / 2 (t0 = 1 when eta is unbounded), and finiteness at 0 is
    decided from the decay exponent of the quadrature over geometrically
    shrinking intervals towards 0.

    Parameters
    ----------
    d : Desingularizer
        The desingularizing function

    Returns
    -------
    primitive : callable
        Phi, defined on (0, eta)
    finite_at_zero : bool
        Whether Phi(t) has a finite limit as t -> 0+
    """
    if d.is_power:
        check_theta(d.theta)
        C2 = d.C ** 2
        if d.theta == 0.5:
            def primitive(t):
                return -C2 * math.log(t)
            return primitive, False
        expo = 2.0 * d.theta - 1.0

        def primitive(t):  # @IgnorePep8
            return -C2 * t ** expo / expo
        return primitive, expo > 0.0
    t0 = _anchor(d)

    def squared_slope(s):
        return d.derivative(s) ** 2

    def primitive(t):  # @IgnorePep8
        value, _ = integrate.quad(squared_slope, t, t0, limit=200)
        return value
    return primitive, _integrable_at_zero(squared_slope, t0)


def primitive_inverse(d):
    """
    Returns the inverse of the primitive given by `phi_primitive`, used to
    evaluate the Phi^-1(m * sum(b)) rate envelope.
    """
    primitive, _ = phi_primitive(d)
    if d.is_power:
        C2 = d.C ** 2
        if d.theta == 0.5:
            def inverse(u):
                return math.exp(-u / C2)
            return inverse
        expo = 2.0 * d.theta - 1.0

        def inverse(u):  # @IgnorePep8
            return (-u * expo / C2) ** (1.0 / expo)
        return inverse
    t0 = _anchor(d)

    def inverse(u):  # @IgnorePep8
        # Phi is decreasing, so bracket downwards from the anchor
        upper = t0
        lower = t0 / 2.0
        while primitive(lower) < u:
            lower /= 2.0
            if lower < 1e-300:
                raise KlDescentDomainError(
                    "Phi does not reach {} on (0, {})".format(u, t0))
        return optimize.brentq(lambda t: primitive(t) - u, lower, upper)
    return inverse


def kl_check(f_oracle, slope_oracle, region, d, samples=10000, seed=0):
    """
    Checks the KL inequality phi'(f(x) - f*) * slope(x) >= 1 on points
    sampled uniformly from the strict upper level set of `region`.

    Points are drawn uniformly in the ball of radius delta around x* and kept
    when they fall into the value band f* < f(x) < f* + eta. Sampling is
    deterministic given the seed.

    Parameters
    ----------
    f_oracle : callable
        Evaluates f at a flat numpy vector
    slope_oracle : callable
        Returns a lower bound of the slope |df(x)|_- (|grad f(x)| for smooth
        f) at a flat numpy vector
    region : KLRegion
        Region to sample
    d : Desingularizer
        Desingularizing function under test
    samples : int
        Number of accepted samples to evaluate
    seed : int
        Seed of the sampler

    Returns
    -------
    report : KLReport
        Minimum ratio, number of violations at tolerance 1 - 1e-9 and the
        violating points
    """
    if samples < 1:
        raise KlDescentDomainError(
            "Number of samples must be positive (got {})".format(samples))
    rng = np.random.default_rng(seed)
    dim = region.x_star.size
    min_ratio = math.inf
    violations = 0
    points = []
    accepted = 0
    attempts = 0
    while accepted < samples and attempts < MAX_REJECTION_ATTEMPTS:
        attempts += 1
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            continue
        radius = region.delta * rng.uniform() ** (1.0 / dim)
        x = region.x_star + direction * (radius / norm)
        r = float(f_oracle(x)) - region.f_star
        if not 0.0 < r < min(region.eta, d.eta):
            continue
        accepted += 1
        ratio = d.derivative(r) * float(slope_oracle(x))
        min_ratio = min(min_ratio, ratio)
        if ratio < 1.0 - KL_RATIO_TOL:
            violations += 1
            points.append(x.tolist())
    if not accepted:
        raise KlDescentRegionEmptyError(attempts)
    if accepted < samples:
        logger.warning("Only %s of %s requested KL samples were accepted "
                       "after %s attempts", accepted, samples, attempts)
    logger.debug("KL check: min ratio %s, %s violations over %s samples",
                 min_ratio, violations, accepted)
    return KLReport(min_ratio, violations, accepted, points, attempts)


def power_exponent_for_potential(q):
    """
    Desingularizer making f(x) = |x|^q satisfy the KL inequality at 0 with
    equality: C = theta = 1/q
    """
    if not q > 1:
        raise KlDescentDomainError(
            "Power potential exponent must exceed 1 (got {})".format(q))
    return Desingularizer.power(C=1.0 / q, theta=1.0 / q)


def _flatten(x):
    if isinstance(x, BlockVector):
        return x.flat()
    return np.asarray(x, dtype=float).ravel()


def _anchor(d):
    if d.eta >= ETA_INFINITY:
        return 1.0
    return d.eta / 2.0


def _integrable_at_zero(integrand, t0, pieces=16, shrink=4.0):
    # Integrals over [t0 s^-(j+1), t0 s^-j]; for integrands ~ t^p the ratio
    # of consecutive pieces tends to s^-(p+1), so p + 1 is read off the last
    # ratios and the integral is finite iff it is positive
    edges = t0 * shrink ** -np.arange(pieces + 1, dtype=float)
    chunks = np.array([integrate.quad(integrand, lo, hi, epsabs=0.0,
                                      limit=200)[0]
                       for hi, lo in zip(edges[:-1], edges[1:])])
    if chunks[-1] == 0.0:
        return True
    tail = chunks[-5:]
    if np.any(tail <= 0.0):
        return False
    exponents = -np.log(tail[1:] / tail[:-1]) / math.log(shrink)
    return bool(np.median(exponents) > TAIL_EXPONENT_TOL)
