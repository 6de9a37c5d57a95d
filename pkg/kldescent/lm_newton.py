"""
Generalized Levenberg-Marquardt metrics and the projected Newton method

    x^(k+1) in proj_C^(A_k)(x^k - lambda_k A_k^-1 grad h(x^k)),
    A_k = proj_PSD(H_k) + epsilon I,  H_k in d2h(x^k)

run as the single-block forward-backward method with metric A_k / lambda_k
and g the indicator of C.
"""
import math
import logging
import numpy as np
from .base import (
    BlockVector, CheckItem, CheckReport, as_sequence, summability_item, PASS,
    FAIL, DIVERGENT)
from .metric_ops import (
    SpdOperator, prox_in_metric, project_psd, spectral_bounds)
from .afb_engine import MetricSchedule, run
from .exceptions import (
    KlDescentDomainError, KlDescentScheduleError, KlDescentShapeError)

logger = logging.getLogger('kldescent')

ANALYTIC = 'analytic'
FINITE_DIFFERENCE = 'finite_difference'
USER_ELEMENT = 'user_element'
HESSIAN_MODES = (ANALYTIC, FINITE_DIFFERENCE, USER_ELEMENT)

DEFAULT_EPSILON = 1e-3
DEFAULT_RATIO_THRESHOLD = 1e3
# Growth of sup lambda_(k+1)/lambda_k from the first to the second half of
# the horizon beyond which the ratios are taken to be unbounded
RATIO_GROWTH_LIMIT = 10.0


class LmConfig(object):
    """
    Parameters of the generalized Levenberg-Marquardt method

    Parameters
    ----------
    epsilon : float
        Regularization added to the projected Hessian element
    lambdas : float | sequence(float)
        Step sizes lambda_k, a sequence being indexed by k with its last
        entry repeating
    hessian_mode : str
        'analytic' (the problem's Hessian), 'finite_difference' or
        'user_element'
    h_fd : float | None
        Finite-difference step, 1e-5 (1 + |x|) when None
    element : callable | array-like | None
        The user-supplied Hessian element (callable of x, or a fixed matrix)
    pure_newton : bool
        Diagnostic mode using A_k = H_k and lambda_k = 1 without
        regularization, outside the guaranteed schedule
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, lambdas=None,
                 hessian_mode=ANALYTIC, h_fd=None, element=None,
                 pure_newton=False):
        if not epsilon > 0:
            raise KlDescentDomainError(
                "Regularization epsilon must be positive (got {})".format(
                    epsilon))
        if hessian_mode not in HESSIAN_MODES:
            raise KlDescentDomainError(
                "Unrecognised Hessian mode '{}'".format(hessian_mode))
        if hessian_mode == USER_ELEMENT and element is None:
            raise KlDescentDomainError(
                "User-element mode needs the Hessian element")
        if lambdas is None:
            if not pure_newton:
                raise KlDescentDomainError("Step sizes lambda_k are required")
            lambdas = 1.0
        self.lambdas = as_sequence(lambdas, 'step size sequence')
        if np.any(self.lambdas <= 0):
            raise KlDescentDomainError("Step sizes must be positive")
        self.epsilon = float(epsilon)
        self.hessian_mode = hessian_mode
        self.h_fd = h_fd
        self.element = element
        self.pure_newton = pure_newton

    def lambda_k(self, k):
        if self.pure_newton:
            return 1.0
        return float(self.lambdas[min(k, self.lambdas.size - 1)])

    @property
    def lambda_bar(self):
        return float(self.lambdas.max())

    def __repr__(self):
        return "{}(epsilon={}, lambda_bar={}, hessian_mode='{}')".format(
            self.__class__.__name__, self.epsilon, self.lambda_bar,
            self.hessian_mode)


def generalized_hessian_sample(h_grad, x, mode=FINITE_DIFFERENCE,
                               hessian=None, h_fd=None, element=None):
    """
    An element (or approximation of one) of the generalized Hessian of h at x

    Parameters
    ----------
    h_grad : callable
        Gradient of h at a flat vector
    x : array-like
        The point
    mode : str
        'analytic' returns hessian(x), 'finite_difference' the symmetrized
        central-difference Jacobian of h_grad, 'user_element' the caller's
        element
    hessian : callable | None
        Analytic Hessian of h
    h_fd : float | None
        Finite-difference step, 1e-5 (1 + |x|) when None
    element : callable | array-like | None
        User-supplied element, a matrix or a callable of x

    Returns
    -------
    H : numpy.ndarray
        Symmetric n x n matrix
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if mode == ANALYTIC:
        if hessian is None:
            raise KlDescentDomainError(
                "Analytic Hessian mode needs the problem's Hessian")
        H = np.atleast_2d(np.asarray(hessian(x), dtype=float))
    elif mode == USER_ELEMENT:
        if element is None:
            raise KlDescentDomainError("No Hessian element supplied")
        H = np.atleast_2d(np.asarray(
            element(x) if callable(element) else element, dtype=float))
    elif mode == FINITE_DIFFERENCE:
        step = h_fd if h_fd is not None else 1e-5 * (1.0 + np.linalg.norm(x))
        if not step > 0 or np.any(x + step == x):
            raise KlDescentDomainError(
                "Finite-difference step {} underflows at |x| = {}".format(
                    step, np.linalg.norm(x)))
        H = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            H[:, j] = (np.asarray(h_grad(x + e), dtype=float).ravel()
                       - np.asarray(h_grad(x - e), dtype=float).ravel()) / (
                           2.0 * step)
    else:
        raise KlDescentDomainError(
            "Unrecognised Hessian mode '{}'".format(mode))
    if H.shape != (n, n):
        raise KlDescentShapeError(
            "Hessian element of shape {} does not match point of size {}"
            .format(H.shape, n))
    return (H + H.T) / 2.0


def lm_metric(H, epsilon):
    """
    A = proj_PSD(H) + epsilon I, whose least eigenvalue is at least epsilon
    """
    if not epsilon > 0:
        raise KlDescentDomainError(
            "Regularization epsilon must be positive (got {})".format(
                epsilon))
    P = project_psd(H)
    return SpdOperator(P + epsilon * np.eye(P.shape[0]))


def metric_projector(g):
    """The projector (z, A) -> proj_C^A(z) of the set C held by indicator g"""
    def projector(z, A):
        return prox_in_metric(g, A, z)
    return projector


def projected_newton_step(x, grad, A, lam, projector=None):
    """
    proj_C^A(x - lambda A^-1 grad)

    Parameters
    ----------
    x : array-like
        Current iterate
    grad : array-like
        grad h(x)
    A : SpdOperator
        The metric (the projection in A equals the one in A / lambda)
    lam : float
        Step size
    projector : callable | None
        (z, A) -> metric projection onto C, the whole space when None

    Returns
    -------
    x_next : numpy.ndarray
    """
    if not lam > 0:
        raise KlDescentDomainError(
            "Step size must be positive (got {})".format(lam))
    x = np.asarray(x, dtype=float)
    z = x - lam * A.solve(np.asarray(grad, dtype=float).reshape(x.shape))
    if projector is None:
        return z
    return np.asarray(projector(z, A), dtype=float).reshape(x.shape)


def lm_schedule_check(lambdas, epsilon, L, horizon=None,
                      ratio_threshold=DEFAULT_RATIO_THRESHOLD):
    """
    Checks the step-size conditions of the projected Newton method

        bound   0 < lambda_k <= lambda_ < epsilon / L
        non-l1  (lambda_k) not in l1 (fitted decay exponent)
        ratio   sup lambda_(k+1) / lambda_k < inf (observed supremum below
                `ratio_threshold` and not growing along the horizon)

    Returns
    -------
    report : CheckReport
        Items 'bound', 'non_l1' and 'ratio'
    """
    lambdas = as_sequence(lambdas, 'step size sequence')
    if horizon is not None:
        lambdas = lambdas[:horizon]
    if np.any(lambdas <= 0):
        raise KlDescentDomainError("Step sizes must be positive")
    lambda_bar = float(lambdas.max())
    limit = epsilon / L if L > 0 else math.inf
    bound = CheckItem(
        'bound', PASS if lambda_bar < limit else FAIL, value=lambda_bar,
        witness=[] if lambda_bar < limit else [int(np.argmax(lambdas))],
        note='lambda_ = {:.6g} against epsilon/L = {:.6g}'.format(
            lambda_bar, limit))
    non_l1 = summability_item('non_l1', lambdas, want=DIVERGENT)
    if lambdas.size > 1:
        ratios = lambdas[1:] / lambdas[:-1]
        k_max = int(np.argmax(ratios))
        sup = float(ratios[k_max])
        half = ratios.size // 2
        growing = (half >= 2 and ratios[half:].max()
                   > RATIO_GROWTH_LIMIT * ratios[:half].max())
        ok = sup <= ratio_threshold and not growing
    else:
        k_max, sup, ok = 0, 1.0, True
    ratio = CheckItem('ratio', PASS if ok else FAIL, value=sup,
                      witness=[] if ok else [k_max],
                      note='sup lambda_(k+1)/lambda_k')
    return CheckReport('LM', [bound, non_l1, ratio],
                       details={'lambda_bar': lambda_bar,
                                'epsilon_over_L': limit},
                       checked=lambdas.size)


def run_lm(problem, config, x0, stop=None, region=None, progress=False):
    """
    Projected generalized Levenberg-Marquardt method on f = h + delta_C

    Parameters
    ----------
    problem : BlockProblem
        Single-block problem with smooth h and g zero or the indicator of C
    config : LmConfig
        Method parameters
    x0 : array-like
        Initial point
    stop : StoppingRule | None
        Stopping rule
    region : KLRegion | None
        Region whose membership is recorded in the trace
    progress : bool
        Show a progress bar

    Returns
    -------
    trace : IterateTrace
    """
    if problem.p != 1:
        raise KlDescentDomainError(
            "Projected Newton runs need a single-block problem (got p={})"
            .format(problem.p))
    shape = problem.shapes[0]
    x0 = np.asarray(x0, dtype=float).reshape(shape)
    projected_start = not math.isfinite(problem.g[0].value(x0))
    if projected_start:
        x0 = prox_in_metric(problem.g[0], SpdOperator.scaled_identity(
            1.0, x0.size), x0)
        logger.info("Initial point lies outside C, starting from its "
                    "projection %s", x0.ravel())

    def h_grad(x):
        return problem.partial_gradient(
            0, BlockVector([x.reshape(shape)])).ravel()

    def sample(x):
        return generalized_hessian_sample(
            h_grad, x, mode=config.hessian_mode, hessian=problem.h_hessian,
            h_fd=config.h_fd, element=config.element)

    if config.pure_newton:
        logger.warning("Pure Newton diagnostic mode: A_k = H_k and lambda_k "
                       "= 1 lie outside the convergence-guaranteed schedule")

        def provider(i, k, state):
            return SpdOperator(sample(state.X[0]))

        alpha_lower = spectral_bounds(sample(x0))[0]
    else:
        report = lm_schedule_check(config.lambdas, config.epsilon, problem.L)
        failed = [i for i in report.items if i.status == FAIL]
        if failed:
            raise KlDescentScheduleError(
                "Step-size schedule refused: " + '; '.join(
                    "{} ({})".format(i.name, i.note) for i in failed),
                index=failed[0].witness[0] if failed[0].witness else None)

        def provider(i, k, state):  # @IgnorePep8
            A = lm_metric(sample(state.X[0]), config.epsilon)
            return A.scaled(1.0 / config.lambda_k(k))

        alpha_lower = config.epsilon / config.lambda_bar
    schedule = MetricSchedule(provider, alpha_lower, name='lm')
    trace = run(problem, schedule, [x0], stop=stop,
                hp_override=config.pure_newton, region=region,
                progress=progress)
    trace.meta['lm'] = {'epsilon': config.epsilon,
                        'lambda_bar': config.lambda_bar,
                        'hessian_mode': config.hessian_mode,
                        'diagnostic': bool(config.pure_newton),
                        'projected_start': projected_start}
    return trace
