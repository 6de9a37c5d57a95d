"""
Checks of the abstract descent hypotheses on iterate traces

    H1   f(x^(k+1)) + a_k |x^(k+1) - x^k|^2 <= f(x^k)
    H2   b_(k+1) |df(x^(k+1))|_- <= |x^(k+1) - x^k| + eps_(k+1)
    H2'  b_(k+1) |df(x^k)|_- <= |x^(k+1) - x^k|
    H3   a_k >= a_ > 0, (b_k) not in l1, sup 1/(a_k b_k) < inf, (eps_k) in l1

together with criticality certificates, rate predictions for power and
general desingularizers, and empirical rate fits.
"""
import math
import logging
import numpy as np
from scipy import stats
from .base import (
    BlockVector, CheckItem, CheckReport, as_sequence, summability_item, PASS,
    FAIL, INCONCLUSIVE, SUMMABLE, DIVERGENT)
from .kl_core import (
    phi_primitive, primitive_inverse, phi_tilde, check_theta)
from .traces import has_column
from .exceptions import (
    KlDescentDataError, KlDescentDomainError, KlDescentInsufficientDataError)

logger = logging.getLogger('kldescent')

H1_TOL = 1e-10
H2_TOL = 1e-10
LENGTH_TOL = 1e-9
MIN_TAIL_POINTS = 5

FINITE_TERMINATION = 'finite_termination'
EXPONENTIAL = 'exponential'
POLYNOMIAL = 'polynomial'
PHI_FORM = 'phi_form'

OK = 'ok'
PREREQUISITE_FAILED = 'prerequisite-failed'

# What a prediction rests on: the power family under H2, or the primitive
# of -(phi')^2 under H2'
POWER_FINITE = 'power:finite'
POWER_EXPONENTIAL = 'power:exponential'
POWER_POLYNOMIAL = 'power:polynomial'
PRIMITIVE_FINITE = 'primitive:finite'
PRIMITIVE_ENVELOPE = 'primitive:envelope'


class Certificate(object):

    def __init__(self, status, slope_norm, tail_sum, f_gap, window, tol):
        self.status = status
        self.slope_norm = slope_norm
        self.tail_sum = tail_sum
        self.f_gap = f_gap
        self.window = window
        self.tol = tol

    def __repr__(self):
        return "{}(status='{}', slope_norm={}, tail_sum={})".format(
            self.__class__.__name__, self.status, self.slope_norm,
            self.tail_sum)

    def to_dict(self):
        return {'status': self.status, 'slope_norm': self.slope_norm,
                'tail_sum': self.tail_sum, 'f_gap': self.f_gap,
                'window': self.window, 'tol': self.tol}


class RatePrediction(object):
    """
    Predicted convergence regime of values and iterates.

    Parameters
    ----------
    regime : str
        'finite_termination', 'exponential', 'polynomial' or 'phi_form'
    basis : str
        Which result the prediction rests on (power family under H2 or the
        primitive Phi under H2')
    c : float
        Rate constant of the exponential regime, values ~ exp(-c sum b)
    exponent_values : float
        Exponent of the polynomial regime on values, in sum b
    exponent_iterates : float
        Exponent of the polynomial regime on iterates
    status : str
        'ok' or 'prerequisite-failed'
    """

    def __init__(self, regime=None, basis=None, c=None, exponent_values=None,
                 exponent_iterates=None, status=OK, description=None,
                 desingularizer=None, m=None):
        self.regime = regime
        self.basis = basis
        self.c = c
        self.exponent_values = exponent_values
        self.exponent_iterates = exponent_iterates
        self.status = status
        self.description = description
        self.m = m
        self._d = desingularizer

    @classmethod
    def prerequisite_failed(cls, description):
        logger.warning("Rate prediction prerequisite failed: %s",
                       description)
        return cls(status=PREREQUISITE_FAILED, description=description)

    def values_envelope(self, sum_b):
        """Predicted shape of f(x^k) - f* (up to a constant factor)"""
        sum_b = np.asarray(sum_b, dtype=float)
        if self.regime == EXPONENTIAL:
            return np.exp(-self.c * sum_b)
        if self.regime == POLYNOMIAL:
            return sum_b ** self.exponent_values
        if self.regime == PHI_FORM:
            inverse = primitive_inverse(self._d)
            return np.array([inverse(self.m * s) for s in np.ravel(sum_b)])
        return None

    def iterates_envelope(self, sum_b):
        """Predicted shape of |x^k - x*| (up to a constant factor)"""
        sum_b = np.asarray(sum_b, dtype=float)
        if self.regime == EXPONENTIAL:
            return np.exp(-0.5 * self.c * sum_b)
        if self.regime == POLYNOMIAL:
            return sum_b ** self.exponent_iterates
        if self.regime == PHI_FORM:
            return np.array([self._d.value(v)
                             for v in self.values_envelope(sum_b)])
        return None

    def __repr__(self):
        return "{}(regime='{}', basis='{}', status='{}')".format(
            self.__class__.__name__, self.regime, self.basis, self.status)

    def to_dict(self):
        return {'regime': self.regime, 'basis': self.basis, 'c': self.c,
                'exponent_values': self.exponent_values,
                'exponent_iterates': self.exponent_iterates,
                'status': self.status, 'description': self.description}


class RateFit(object):

    def __init__(self, model, exp_slope=None, exp_r2=None, poly_slope=None,
                 poly_r2=None, finite_termination=False,
                 termination_index=None, tail_start=None, n_tail=0):
        self.model = model
        self.exp_slope = exp_slope
        self.exp_r2 = exp_r2
        self.poly_slope = poly_slope
        self.poly_r2 = poly_r2
        self.finite_termination = finite_termination
        self.termination_index = termination_index
        self.tail_start = tail_start
        self.n_tail = n_tail

    def __repr__(self):
        return ("{}(model='{}', exp_slope={}, poly_slope={}, "
                "finite_termination={})".format(
                    self.__class__.__name__, self.model, self.exp_slope,
                    self.poly_slope, self.finite_termination))

    def to_dict(self):
        return {'model': self.model, 'exp_slope': self.exp_slope,
                'exp_r2': self.exp_r2, 'poly_slope': self.poly_slope,
                'poly_r2': self.poly_r2,
                'finite_termination': self.finite_termination,
                'termination_index': self.termination_index,
                'tail_start': self.tail_start, 'n_tail': self.n_tail}


class DiagnosticSeries(object):

    def __init__(self, ks, ratios, entry_index, block_maxima,
                 tail_non_increasing, bound=None):
        self.ks = list(ks)
        self.ratios = np.asarray(ratios, dtype=float)
        self.running_max = (np.maximum.accumulate(self.ratios)
                            if self.ratios.size else self.ratios)
        self.entry_index = entry_index
        self.block_maxima = list(block_maxima)
        self.tail_non_increasing = tail_non_increasing
        self.bound = bound

    @property
    def sup(self):
        return float(self.running_max[-1]) if self.ratios.size else None

    def __len__(self):
        return len(self.ks)

    def to_dict(self):
        return {'k': self.ks, 'ratios': self.ratios,
                'running_max': self.running_max, 'sup': self.sup,
                'entry_index': self.entry_index,
                'block_maxima': self.block_maxima,
                'tail_non_increasing': self.tail_non_increasing,
                'bound': self.bound}


def check_H1(trace):
    """
    Sufficient decrease between consecutive records, at tolerance
    1e-10 (1 + |f(x^k)|)
    """
    _require_length(trace, 2)
    f = trace.column('f_val')
    step = trace.column('step_norm')
    a = _schedule_column(trace, 'a_k')
    violations = []
    margins = []
    for j in range(1, len(trace)):
        _require_value(step[j], 'step_norm', j)
        _require_value(a[j], 'a_k', j)
        residual = f[j - 1] - f[j] - a[j] * step[j] ** 2
        margins.append(residual)
        if residual < -H1_TOL * (1.0 + abs(f[j - 1])):
            violations.append({'k': j - 1, 'residual': residual})
    return _inequality_report('H1', margins, violations)


def check_H2(trace):
    """
    Relative error at the new point, slope witness against step plus eps, at
    tolerance 1e-10 (1 + step)
    """
    return _relative_error_check(trace, previous=False)


def check_H2prime(trace):
    """
    Relative error with the slope taken at the previous point and no eps
    term
    """
    return _relative_error_check(trace, previous=True)


def _relative_error_check(trace, previous):
    name = "H2'" if previous else 'H2'
    _require_length(trace, 2)
    if not has_column(trace, 'slope_norm'):
        raise KlDescentDataError(
            "Trace has no slope witnesses, cannot check {}".format(name))
    step = trace.column('step_norm')
    slope = trace.column('slope_norm')
    b = _schedule_column(trace, 'b_k')
    eps = trace.column('eps_k')
    violations = []
    margins = []
    for j in range(1, len(trace)):
        s = slope[j - 1] if previous else slope[j]
        _require_value(s, 'slope_norm', j - 1 if previous else j)
        _require_value(b[j], 'b_k', j)
        _require_value(step[j], 'step_norm', j)
        slack = 0.0 if previous or math.isnan(eps[j]) else eps[j]
        residual = step[j] + slack - b[j] * s
        margins.append(residual)
        if residual < -H2_TOL * (1.0 + step[j]):
            violations.append({'k': j - 1, 'residual': residual})
    return _inequality_report(name, margins, violations)


def check_H3(a, b, eps, horizon=None):
    """
    Checks the parameter hypotheses on sequences (a_k), (b_k), (eps_k). The
    summability items (ii) and (iv) are heuristics on a finite prefix.

    Parameters
    ----------
    a : sequence(float)
        Sufficient-decrease constants
    b : sequence(float)
        Relative-error constants, index-aligned with a
    eps : sequence(float)
        Relative-error slacks
    horizon : int
        Number of leading terms checked (all when None)

    Returns
    -------
    report : CheckReport
        Items H3(i) (value = a_), H3(ii), H3(iii) (value = M) and H3(iv)
    """
    a = as_sequence(a, 'a sequence')
    b = as_sequence(b, 'b sequence')
    eps = as_sequence(eps, 'eps sequence')
    if horizon is None:
        horizon = min(a.size, b.size, eps.size)
    if horizon < 1 or min(a.size, b.size, eps.size) < horizon:
        raise KlDescentDomainError(
            "Horizon {} exceeds the supplied sequences".format(horizon))
    a, b, eps = a[:horizon], b[:horizon], eps[:horizon]
    a_lower = float(np.min(a))
    worst = int(np.argmin(a))
    item_i = CheckItem('H3(i)', PASS if a_lower > 0 else FAIL,
                       value=a_lower,
                       witness=[] if a_lower > 0 else [worst])
    item_ii = summability_item('H3(ii)', b, want=DIVERGENT)
    with np.errstate(divide='ignore'):
        inv = 1.0 / (a * b)
    M = float(np.max(inv)) if np.all(a * b > 0) else math.inf
    item_iii = CheckItem('H3(iii)', PASS if math.isfinite(M) else FAIL,
                         value=M, witness=[int(np.argmax(inv))],
                         note='M = max 1/(a_k b_k)')
    item_iv = summability_item('H3(iv)', eps, want=SUMMABLE)
    return CheckReport('H3', [item_i, item_ii, item_iii, item_iv],
                       details={'a_lower': a_lower, 'M': M},
                       checked=horizon)


def trace_schedules(trace):
    """
    The schedule sequences of a trace, index-aligned for `check_H3` and
    `predict_rates`: a_k, b_k and eps_k for k = 1 ... n-2 (a_k is stored on
    the successor record).
    """
    _require_length(trace, 3)
    a = _schedule_column(trace, 'a_k')[2:]
    b = _schedule_column(trace, 'b_k')[1:-1]
    eps = trace.column('eps_k')[1:-1]
    eps = np.where(np.isnan(eps), 0.0, eps)
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise KlDescentDataError("Trace has missing schedule values")
    return a, b, eps


def criticality_certificate(trace, f_limit_tol=1e-8, tail_fraction=0.1):
    """
    Certifies that a converged trace ends at a critical point: the final
    slope witness and the sum of the trailing step norms (a proxy for the
    remainder of the finite-length series) must both be below the
    tolerance.

    Parameters
    ----------
    trace : IterateTrace
        The trace
    f_limit_tol : float
        Tolerance on the final slope and the tail sum
    tail_fraction : float
        Fraction of the steps making up the tail

    Returns
    -------
    certificate : Certificate
        Status 'pass', 'fail' or 'inconclusive' (trace not converged)
    """
    n = len(trace)
    slope = trace.final.slope_norm
    steps = trace.column('step_norm')[1:]
    window = max(1, int(tail_fraction * steps.size)) if steps.size else 0
    tail_sum = float(np.sum(steps[-window:])) if window else 0.0
    f = trace.values
    f_gap = float(abs(f[-1] - f[max(0, n - 1 - window)]))
    if not trace.converged or math.isnan(slope):
        status = INCONCLUSIVE
    elif slope <= f_limit_tol and tail_sum <= f_limit_tol:
        status = PASS
    else:
        status = FAIL
    return Certificate(status, slope, tail_sum, f_gap, window, f_limit_tol)


def check_length_inequality(trace, d, f_star, M=None):
    """
    Checks the step-length inequality driving the finite-length argument,

        2 |x^(k+1) - x^k| <= |x^k - x^(k-1)|
                             + coef_k [phi(r_k) - phi(r_(k+1))] + eps_k

    with r_k = f(x^k) - f* and coef_k = 1/(a_k b_k) (or the uniform bound M
    when given), on the indices k where both x^k and x^(k+1) carry a
    region flag.

    Parameters
    ----------
    trace : IterateTrace
        Trace with region flags
    d : Desingularizer
        Desingularizing function of the region
    f_star : float
        Value at the reference critical point
    M : float | None
        Uniform bound on 1/(a_k b_k)

    Returns
    -------
    report : CheckReport
        Violations at tolerance 1e-9. Empty (passing) when nothing is
        checkable.
    """
    f = trace.values
    step = trace.column('step_norm')
    a = trace.column('a_k')
    b = trace.column('b_k')
    eps = trace.column('eps_k')
    violations = []
    margins = []
    for k in range(1, len(trace) - 1):
        if not (trace[k].region_flag and trace[k + 1].region_flag):
            continue
        r_k = f[k] - f_star
        r_next = f[k + 1] - f_star
        if r_k <= 0 or r_next < 0:
            raise KlDescentDomainError(
                "Value gap is not positive at checked index {} (r_k={}, "
                "r_(k+1)={})".format(k, r_k, r_next))
        if M is not None:
            coef = M
        else:
            _require_value(a[k + 1], 'a_k', k + 1)
            _require_value(b[k], 'b_k', k)
            coef = 1.0 / (a[k + 1] * b[k])
        slack = 0.0 if math.isnan(eps[k]) else eps[k]
        rhs = (step[k] + coef * (d.value(r_k) - d.value(r_next)) + slack)
        residual = rhs - 2.0 * step[k + 1]
        margins.append(residual)
        if residual < -LENGTH_TOL:
            violations.append({'k': k, 'residual': residual})
    return _inequality_report('length', margins, violations)


def predict_rates(d, a, b, use_H2prime=False, eps=None):
    """
    Predicts the convergence regime of a descent sequence.

    With the relative error at the new point (H2) and a power desingularizer
    phi(t) = (C/theta) t^theta:

        theta = 1          finite termination (needs inf a_k b_(k+1)^2 > 0)
        theta in [1/2, 1)  values ~ exp(-c sum b), iterates ~ exp(-c/2 sum b)
                           with c = m / (C^2 (1 + sup b)), m = inf a_k b_(k+1)
        theta in (0, 1/2)  values ~ (sum b)^(-1/(1-2 theta)),
                           iterates ~ (sum b)^(-theta/(1-2 theta))

    With the slope at the previous point (H2'), any desingularizer: finite
    termination when the primitive Phi of -(phi')^2 is finite at 0, else
    values ~ Phi^-1(m sum b) and iterates ~ phi(Phi^-1(m sum b)).

    Parameters
    ----------
    d : Desingularizer
        The desingularizer
    a : sequence(float)
        Sufficient-decrease constants a_k
    b : sequence(float)
        Relative-error constants, b[k] pairing with a[k] as b_(k+1)
    use_H2prime : bool
        Whether the trace satisfies H2' rather than H2
    eps : sequence(float) | None
        Relative-error slacks. Predictions need eps = 0.

    Returns
    -------
    prediction : RatePrediction
    """
    a = as_sequence(a, 'a sequence')
    b = as_sequence(b, 'b sequence')
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    if d.is_power:
        check_theta(d.theta)
    if eps is not None and np.any(as_sequence(eps, 'eps sequence') != 0.0):
        return RatePrediction.prerequisite_failed(
            "rate predictions require eps_k = 0")
    m = float(np.min(a * b))
    if not use_H2prime:
        if not d.is_power:
            raise KlDescentDomainError(
                "Predictions under H2 need a power desingularizer")
        if d.theta == 1.0:
            if not np.min(a * b * b) > 0:
                return RatePrediction.prerequisite_failed(
                    "inf a_k b_(k+1)^2 is not positive")
            return RatePrediction(FINITE_TERMINATION, POWER_FINITE, m=m,
                                  desingularizer=d)
        if not m > 0:
            return RatePrediction.prerequisite_failed(
                "inf a_k b_(k+1) is not positive")
        if d.theta >= 0.5:
            c = m / (d.C ** 2 * (1.0 + float(np.max(b))))
            return RatePrediction(EXPONENTIAL, POWER_EXPONENTIAL, c=c, m=m,
                                  desingularizer=d)
        denom = 1.0 - 2.0 * d.theta
        return RatePrediction(POLYNOMIAL, POWER_POLYNOMIAL,
                              exponent_values=-1.0 / denom,
                              exponent_iterates=-d.theta / denom, m=m,
                              desingularizer=d)
    if not m > 0:
        return RatePrediction.prerequisite_failed(
            "inf a_k b_(k+1) is not positive")
    _, finite_at_zero = phi_primitive(d)
    if finite_at_zero:
        return RatePrediction(FINITE_TERMINATION, PRIMITIVE_FINITE, m=m,
                              desingularizer=d)
    if d.is_power and d.theta == 0.5:
        # Phi^-1(u) = exp(-u / C^2)
        return RatePrediction(EXPONENTIAL, PRIMITIVE_ENVELOPE,
                              c=m / d.C ** 2, m=m, desingularizer=d)
    if d.is_power:
        denom = 1.0 - 2.0 * d.theta
        return RatePrediction(POLYNOMIAL, PRIMITIVE_ENVELOPE,
                              exponent_values=-1.0 / denom,
                              exponent_iterates=-d.theta / denom, m=m,
                              desingularizer=d)
    return RatePrediction(
        PHI_FORM, PRIMITIVE_ENVELOPE, m=m, desingularizer=d,
        description="values ~ Phi^-1(m sum b), iterates ~ "
                    "phi(Phi^-1(m sum b)) with m={:.6g}".format(m))


def fit_rates(values, b=None, tail_fraction=0.8):
    """
    Least-squares rate fits on the tail of a positive sequence of value gaps
    r_k: ln r_k against S_k = sum_(n<=k) b_n (exponential model) and against
    ln S_k (polynomial model). The leading 1 - tail_fraction of the sequence
    is discarded as burn-in.

    Parameters
    ----------
    values : sequence(float)
        The gaps r_k = f(x^k) - f*
    b : sequence(float) | None
        Relative-error constants (b = 1 fits against the iteration count
        k + 1)
    tail_fraction : float
        Fraction of the sequence fitted, in (0, 1]

    Returns
    -------
    fit : RateFit
        Both slopes with their R^2 and the better model, or the
        finite-termination flag when some r_k is exactly 0
    """
    values = as_sequence(values, 'value sequence')
    if not 0.0 < tail_fraction <= 1.0:
        raise KlDescentDomainError(
            "Tail fraction must lie in (0, 1] (got {})".format(tail_fraction))
    if np.any(values < 0):
        raise KlDescentDomainError(
            "Value gaps must be nonnegative (min {})".format(values.min()))
    zeros = np.flatnonzero(values == 0.0)
    if zeros.size:
        logger.info("Value gap reached 0 at k=%s", zeros[0])
        return RateFit(FINITE_TERMINATION, finite_termination=True,
                       termination_index=int(zeros[0]))
    n = values.size
    if b is None:
        b = np.ones(n)
    else:
        b = np.where(np.isnan(as_sequence(b, 'b sequence')), 0.0,
                     as_sequence(b, 'b sequence'))
        if b.size < n:
            raise KlDescentDomainError(
                "b sequence shorter than the values ({} < {})".format(
                    b.size, n))
    S = np.cumsum(b[:n])
    start = n - int(math.ceil(tail_fraction * n))
    idx = np.arange(start, n)
    idx = idx[S[idx] > 0]
    if idx.size < MIN_TAIL_POINTS:
        raise KlDescentInsufficientDataError(idx.size, MIN_TAIL_POINTS)
    log_r = np.log(values[idx])
    exp_fit = stats.linregress(S[idx], log_r)
    poly_fit = stats.linregress(np.log(S[idx]), log_r)
    exp_r2 = float(exp_fit.rvalue ** 2)
    poly_r2 = float(poly_fit.rvalue ** 2)
    model = EXPONENTIAL if exp_r2 >= poly_r2 else POLYNOMIAL
    return RateFit(model, exp_slope=float(exp_fit.slope), exp_r2=exp_r2,
                   poly_slope=float(poly_fit.slope), poly_r2=poly_r2,
                   tail_start=int(start), n_tail=int(idx.size))


def distance_gap_diagnostic(trace, d, x_star, f_star, region=None,
                            blocks=10, a_lower=None, M=None):
    """
    The series |x* - x^k| / phi~(r_(k-1)), phi~(t) = max(phi(t), sqrt(t)),
    whose boundedness is the distance-by-gap estimate. The series stops at
    the first k with r_(k-1) = 0.

    Parameters
    ----------
    trace : IterateTrace
        Trace with iterates
    d : Desingularizer
        The desingularizer
    x_star : BlockVector | array-like
        The known solution
    f_star : float
        f(x*)
    region : KLRegion | None
        The tail is taken from the first record inside this region (from the
        start when None)
    blocks : int
        Number of consecutive windows of the tail whose maxima are compared
    a_lower, M : float | None
        Schedule bounds; when both given max(1/sqrt(a_), M) is reported as
        the reference bound

    Returns
    -------
    series : DiagnosticSeries
    """
    x_star = _flat(x_star)
    f = trace.values
    ks = []
    ratios = []
    entry = None
    for k in range(1, len(trace)):
        r_prev = f[k - 1] - f_star
        if r_prev <= 0:
            break
        x = trace[k].x
        if x is None:
            raise KlDescentDataError(
                "Trace record {} carries no iterate".format(k))
        x = _flat(x)
        if entry is None and (region is None or region.contains(x, f[k])):
            entry = len(ks)
        ks.append(k)
        ratios.append(np.linalg.norm(x_star - x) / phi_tilde(d, r_prev))
    block_maxima = []
    non_increasing = None
    if entry is not None and ratios:
        tail = np.asarray(ratios[entry:])
        chunks = [c for c in np.array_split(tail, min(blocks, tail.size))
                  if c.size]
        block_maxima = [float(c.max()) for c in chunks]
        scale = 1.0 + max(block_maxima)
        non_increasing = bool(np.all(np.diff(block_maxima)
                                     <= 1e-9 * scale))
    bound = None
    if a_lower is not None and M is not None:
        bound = max(1.0 / math.sqrt(a_lower), M)
    return DiagnosticSeries(ks, ratios, entry, block_maxima, non_increasing,
                            bound=bound)


def _flat(x):
    if isinstance(x, BlockVector):
        return x.flat()
    return np.asarray(x, dtype=float).ravel()


def _inequality_report(name, margins, violations):
    if margins:
        worst = float(np.min(margins))
    else:
        worst = None
    item = CheckItem(name, FAIL if violations else PASS, value=worst,
                     witness=[v['k'] for v in violations],
                     note='minimum residual')
    if violations:
        logger.info("%s violated at k=%s", name,
                    [v['k'] for v in violations][:10])
    return CheckReport(name, [item], violations, checked=len(margins))


def _schedule_column(trace, name):
    if not has_column(trace, name):
        raise KlDescentDataError(
            "Trace has no '{}' schedule column".format(name))
    return trace.column(name)


def _require_length(trace, n):
    if len(trace) < n:
        raise KlDescentDomainError(
            "Trace needs at least {} records (has {})".format(n, len(trace)))


def _require_value(value, name, k):
    if math.isnan(value):
        raise KlDescentDataError(
            "Missing '{}' value at record {}".format(name, k))
