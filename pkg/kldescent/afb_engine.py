"""
Alternating forward-backward splitting with per-block variable metrics for

    minimize f(x_1, ..., x_p) = h(x_1, ..., x_p) + sum_i g_i(x_i)

Each iteration sweeps the blocks in ascending order,

    x_i^(k+1) in prox_(g_i)^(A_ik)(x_i^k - A_ik^-1 grad_i h(X_i^k))

where X_i^k = (x_1^(k+1), ..., x_(i-1)^(k+1), x_i^k, ..., x_p^k). The
inexact variant perturbs the explicit step by r_i^k and the implicit one by
s_i^(k+1) and tracks the error-free companion sequence y^k.
"""
import math
import logging
import numpy as np
import progressbar
from .base import BlockVector, CheckItem, CheckReport, PASS, FAIL
from .metric_ops import SpdOperator, prox_in_metric, hp_check
from .traces import (
    IterateRecord, IterateTrace, HeRecord, CONVERGED, MAX_ITER, DIVERGED)
from .exceptions import (
    KlDescentDomainError, KlDescentShapeError, KlDescentScheduleError,
    KlDescentDivergenceError, KlDescentDataError)

logger = logging.getLogger('kldescent')

DERIVED = 'derived'
EXPLICIT = 'explicit'
SCHEDULE_KINDS = (DERIVED, EXPLICIT)

HE_TOL = 1e-10
MAX_ERROR_HALVINGS = 40
# Horizon over which declared metric schedules are screened before a run
HP_HORIZON = 1000


class BlockProblem(object):
    """
    Structured objective f = h + sum_i g_i over p blocks

    Parameters
    ----------
    h_eval : callable
        h(X) for a BlockVector X
    h_grad_block : callable
        (i, X) -> grad_i h(X), shaped like block i
    g : list(ProxOracle)
        Nonsmooth block terms
    L : float
        Common Lipschitz constant of the partial gradients x_i -> grad_i h
    shapes : list(tuple)
        Block shapes
    name : str
        Name used in logs and trace metadata
    h_hessian : callable | None
        X -> Hessian of h as a dense matrix over the flattened variables
        (single-block problems)
    meta : dict
        Known structure of the instance (x_star, f_star, desingularizer, ...)
    """

    def __init__(self, h_eval, h_grad_block, g, L, shapes, name='problem',
                 h_hessian=None, meta=None):
        shapes = [tuple(s) if np.ndim(s) else (int(s),) for s in shapes]
        if len(g) != len(shapes):
            raise KlDescentShapeError(
                "{} block terms supplied for {} blocks".format(len(g),
                                                               len(shapes)))
        if L < 0:
            raise KlDescentDomainError(
                "Lipschitz constant must be nonnegative (got {})".format(L))
        self.h_eval = h_eval
        self.h_grad_block = h_grad_block
        self.g = list(g)
        self.L = float(L)
        self.shapes = shapes
        self.name = name
        self.h_hessian = h_hessian
        self.meta = dict(meta) if meta else {}

    @property
    def p(self):
        return len(self.shapes)

    @property
    def dims(self):
        return [int(np.prod(s)) for s in self.shapes]

    @property
    def smooth(self):
        return all(g.is_zero for g in self.g)

    def value(self, X):
        return float(self.h_eval(X)) + sum(g.value(x)
                                           for g, x in zip(self.g, X))

    def partial_gradient(self, i, X):
        grad = np.asarray(self.h_grad_block(i, X), dtype=float)
        return grad.reshape(self.shapes[i])

    def gradient(self, X):
        return BlockVector(self.partial_gradient(i, X)
                           for i in range(self.p))

    def check_point(self, X):
        if not isinstance(X, BlockVector):
            X = BlockVector(X)
        if X.shapes != self.shapes:
            raise KlDescentShapeError(
                "Point with block shapes {} does not match problem '{}' "
                "({})".format(X.shapes, self.name, self.shapes))
        return X

    def permuted(self, order):
        """
        The same problem with its blocks relabelled, block j of the new
        problem being block order[j] of this one
        """
        order = list(order)
        inverse = np.argsort(order)

        def restore(X):
            return X.permuted(inverse)

        return BlockProblem(
            lambda X: self.h_eval(restore(X)),
            lambda j, X: self.h_grad_block(order[j], restore(X)),
            [self.g[i] for i in order], self.L,
            [self.shapes[i] for i in order], name=self.name + '-permuted',
            meta=self.meta)

    def __repr__(self):
        return "{}('{}', p={}, L={})".format(self.__class__.__name__,
                                             self.name, self.p, self.L)


class AfbState(object):

    def __init__(self, X, Y=None, k=0):
        self.X = X
        self.Y = Y if Y is not None else X
        self.k = k

    @property
    def implicit_errors(self):
        """s^k = x^k - y^k"""
        return self.X - self.Y

    def __repr__(self):
        return "{}(k={}, shapes={})".format(self.__class__.__name__, self.k,
                                            self.X.shapes)


class MetricSchedule(object):
    """
    Provides the block metrics A_ik for each iteration

    Parameters
    ----------
    provider : callable
        (i, k, state) -> SpdOperator
    alpha_lower : float
        Declared lower bound on the least eigenvalue of every metric
    declared : callable | None
        horizon -> (alphas, betas), the spectral bounds over the first
        `horizon` iterations when they are known in advance
    """

    def __init__(self, provider, alpha_lower, declared=None, name='metric'):
        self.provider = provider
        self.alpha_lower = float(alpha_lower)
        self._declared = declared
        self.name = name

    @classmethod
    def from_steps(cls, steps, shapes):
        """
        Scaled-identity metrics (1/lambda_ik) I from step sizes given per
        block as a constant or a sequence over k (the last entry repeating)
        """
        shapes = list(shapes)
        if len(steps) != len(shapes):
            raise KlDescentShapeError(
                "{} step sizes supplied for {} blocks".format(len(steps),
                                                              len(shapes)))
        steps = [np.atleast_1d(np.asarray(s, dtype=float)) for s in steps]
        if any(np.any(s <= 0) for s in steps):
            raise KlDescentDomainError("Step sizes must be positive")
        dims = [int(np.prod(s)) for s in shapes]

        def step(i, k):
            seq = steps[i]
            return seq[min(k, seq.size - 1)]

        def provider(i, k, state):
            return SpdOperator.scaled_identity(1.0 / step(i, k), dims[i])

        def declared(horizon):
            inv = np.array([[1.0 / step(i, k) for i in range(len(steps))]
                            for k in range(horizon)])
            return inv.min(axis=1), inv.max(axis=1)

        alpha_lower = min(1.0 / s.max() for s in steps)
        return cls(provider, alpha_lower, declared=declared, name='steps')

    def metrics(self, k, state, p):
        metrics = [self.provider(i, k, state) for i in range(p)]
        for i, A in enumerate(metrics):
            if A.alpha < self.alpha_lower * (1.0 - 1e-12):
                logger.warning(
                    "Metric of block %s at k=%s has least eigenvalue %s "
                    "below the declared bound %s", i, k, A.alpha,
                    self.alpha_lower)
        return metrics

    def declared(self, horizon):
        if self._declared is None:
            return None
        return self._declared(horizon)


class ErrorModel(object):
    """
    Generator of the errors of the inexact method

    By default raw error directions are rescaled after a tentative
    error-free sweep so that, for every block,

        HE1  |S_i^k| <= (sigma/2) |y_i^(k+1) - y_i^k|
        HE2  |r_i^k| <= (sigma/2) |y_i^(k+1) - y_i^k| + mu_k
        HE3  <r_i^k + s_i^k, y_i^(k+1) - y_i^k>_A
                 <= ((1 - rho)/2) |y_i^(k+1) - y_i^k|^2_A

    and the new errors are halved until the sweep satisfies them. With
    `rescale=False` the generated errors are applied verbatim.

    Parameters
    ----------
    sigma : float
        Relative error level, >= 0
    rho : float
        Inner-product slack, in (0, 1]
    mu : float | sequence | callable
        Absolute error levels mu_k (a sequence is indexed by k, a callable
        called with k)
    r_gen, s_gen : callable | None
        (i, k, rng, shape) -> error direction for r_i^k / s_i^k. Standard
        normal directions when None.
    seed : int
        Seed of the error generator
    rescale : bool
        Whether errors are rescaled to satisfy the conditions above
    enabled : bool
        Whether errors are injected at all
    safety : float
        Fraction of the admissible size given to rescaled errors
    """

    def __init__(self, sigma=0.0, rho=1.0, mu=0.0, r_gen=None, s_gen=None,
                 seed=0, rescale=True, enabled=True, safety=0.25):
        if sigma < 0:
            raise KlDescentDomainError(
                "Error level sigma must be nonnegative (got {})".format(
                    sigma))
        if not 0.0 < rho <= 1.0:
            raise KlDescentDomainError(
                "Error slack rho must lie in (0, 1] (got {})".format(rho))
        self.sigma = float(sigma)
        self.rho = float(rho)
        self._mu = mu
        self.r_gen = r_gen
        self.s_gen = s_gen
        self.seed = seed
        self.rescale = rescale
        self.enabled = enabled
        self.safety = safety
        self.rng = np.random.default_rng(seed)

    @classmethod
    def disabled(cls):
        return cls(enabled=False)

    def reset(self, seed=None):
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)

    def mu_k(self, k):
        if callable(self._mu):
            return float(self._mu(k))
        mu = np.atleast_1d(np.asarray(self._mu, dtype=float))
        return float(mu[min(k, mu.size - 1)])

    def validate(self, alpha_lower, L):
        """(sigma + 1) / rho < alpha_ / L"""
        if not self.enabled or L == 0:
            return
        if not (self.sigma + 1.0) / self.rho < alpha_lower / L:
            raise KlDescentScheduleError(
                "Error model needs (sigma + 1)/rho < alpha_/L, got "
                "({} + 1)/{} = {:.6g} >= {:.6g}".format(
                    self.sigma, self.rho, (self.sigma + 1.0) / self.rho,
                    alpha_lower / L))

    def r_direction(self, i, k, shape):
        if self.r_gen is not None:
            return np.asarray(self.r_gen(i, k, self.rng, shape),
                              dtype=float).reshape(shape)
        return self.rng.standard_normal(shape)

    def s_direction(self, i, k, shape):
        if self.s_gen is not None:
            return np.asarray(self.s_gen(i, k, self.rng, shape),
                              dtype=float).reshape(shape)
        return self.rng.standard_normal(shape)

    def __repr__(self):
        return "{}(sigma={}, rho={}, enabled={}, rescale={})".format(
            self.__class__.__name__, self.sigma, self.rho, self.enabled,
            self.rescale)


class StoppingRule(object):

    def __init__(self, tol_step=1e-10, tol_slope=1e-8, max_iter=100000):
        if max_iter < 0:
            raise KlDescentDomainError(
                "Maximum number of iterations must be nonnegative")
        self.tol_step = tol_step
        self.tol_slope = tol_slope
        self.max_iter = int(max_iter)

    def satisfied(self, record):
        return (record.step_norm <= self.tol_step
                and record.slope_norm <= self.tol_slope)

    def __repr__(self):
        return "{}(tol_step={}, tol_slope={}, max_iter={})".format(
            self.__class__.__name__, self.tol_step, self.tol_slope,
            self.max_iter)


def afb_step(problem, state, metrics):
    """
    One sweep of the exact method over the blocks

    Parameters
    ----------
    problem : BlockProblem
        The problem
    state : AfbState
        Current iterate
    metrics : list(SpdOperator)
        The block metrics A_ik of this step

    Returns
    -------
    next_state : AfbState
        x^(k+1) (with y = x)
    record : IterateRecord
        Value, step norm, slope witness norm and spectral bounds of the step
        (schedule fields are attached by `run`)
    """
    X = state.X
    inter_grads = []
    for i in range(problem.p):
        A = metrics[i]
        grad = problem.partial_gradient(i, X)
        inter_grads.append(grad)
        X = X.replace(i, prox_in_metric(problem.g[i], A, X[i] - A.solve(grad)))
    next_state = AfbState(X, X, state.k + 1)
    W = _witness(problem, X, inter_grads, X - state.X, None, metrics)
    record = IterateRecord(
        next_state.k, problem.value(X), step_norm=(X - state.X).norm(),
        slope_norm=W.norm(), alpha_k=min(A.alpha for A in metrics),
        beta_k=max(A.beta for A in metrics), x=X)
    record.f_x = record.f_val
    record.x_step_norm = record.step_norm
    return next_state, record


def afbe_step(problem, state, metrics, errors, k):
    """
    One sweep of the inexact method

        y_i^(k+1) in prox_(g_i)^(A_ik)(x_i^k - A_ik^-1 grad_i h(X_i^k) + r_i^k)
        x_i^(k+1) = y_i^(k+1) + s_i^(k+1)

    With errors disabled it reduces to `afb_step` (y = x) but still logs the
    (zero) error quantities.

    Returns
    -------
    next_state : AfbState
        x^(k+1) and y^(k+1)
    record : IterateRecord
        Values, steps and witness of the y-sequence; f_x and x_step_norm
        describe the x-sequence
    he_records : list(HeRecord)
        The error quantities of each block update
    """
    p = problem.p
    shapes = problem.shapes
    mu_k = errors.mu_k(k) if errors.enabled else 0.0
    zeros = [np.zeros(s) for s in shapes]
    if not errors.enabled:
        r, s_new = zeros, zeros
        sweep = _inexact_sweep(problem, state, metrics, r, s_new, mu_k)
    elif not errors.rescale:
        r = [errors.r_direction(i, k, shapes[i]) for i in range(p)]
        s_new = [errors.s_direction(i, k + 1, shapes[i]) for i in range(p)]
        sweep = _inexact_sweep(problem, state, metrics, r, s_new, mu_k)
    else:
        tentative = _inexact_sweep(problem, state, metrics, zeros, zeros,
                                   mu_k)
        dy_norms = [np.linalg.norm(rec.dy) for rec in tentative[3]]
        # s^(k+1) is also charged to the next sweep, so it is sized and
        # pointed against the steps that sweep is predicted to take
        ahead = _inexact_sweep(
            problem, AfbState(tentative[0], tentative[1], state.k + 1),
            metrics, zeros, zeros, 0.0)
        dy_next = [rec.dy for rec in ahead[3]]
        s_norm = min(min(dy_norms), min(np.linalg.norm(d) for d in dy_next))
        half_sigma = errors.sigma / 2.0
        r = []
        s_new = []
        for i in range(p):
            r.append(_with_norm(
                errors.r_direction(i, k, shapes[i]),
                errors.safety * (half_sigma * dy_norms[i] + mu_k)))
            s_new.append(_with_norm(
                _steer_against(errors.s_direction(i, k + 1, shapes[i]),
                               dy_next[i], metrics[i]),
                errors.safety * half_sigma * s_norm / math.sqrt(p)))
        for _ in range(MAX_ERROR_HALVINGS):
            sweep = _inexact_sweep(problem, state, metrics, r, s_new, mu_k)
            if not _he_violations(sweep[3], errors.sigma, errors.rho):
                break
            r = [0.5 * e for e in r]
            s_new = [0.5 * e for e in s_new]
        else:
            logger.info("Errors at k=%s could not be rescaled into the "
                        "admissible set, applying r = s = 0", k)
            sweep = _inexact_sweep(problem, state, metrics, zeros, zeros,
                                   mu_k)
            if _he_violations(sweep[3], errors.sigma, errors.rho):
                logger.warning("Residual error-condition slack at k=%s "
                               "from previously committed errors", k)
    X, Y, inter_grads, he_records = sweep
    next_state = AfbState(X, Y, state.k + 1)
    corrections = [rec.r + rec.s for rec in he_records]
    W = _witness(problem, Y, inter_grads, Y - state.Y, corrections, metrics)
    record = IterateRecord(
        next_state.k, problem.value(Y), step_norm=(Y - state.Y).norm(),
        slope_norm=W.norm(), alpha_k=min(A.alpha for A in metrics),
        beta_k=max(A.beta for A in metrics), x=X, y=Y,
        f_x=problem.value(X), x_step_norm=(X - state.X).norm())
    return next_state, record, he_records


def _inexact_sweep(problem, state, metrics, r, s_new, mu_k):
    X = state.X
    Y_blocks = list(state.Y)
    inter_grads = []
    he_records = []
    for i in range(problem.p):
        A = metrics[i]
        S_norm = (X - BlockVector(Y_blocks)).norm()
        grad = problem.partial_gradient(i, X)
        inter_grads.append(grad)
        y_next = prox_in_metric(problem.g[i], A,
                                X[i] - A.solve(grad) + r[i])
        s_old = state.X[i] - state.Y[i]
        he_records.append(HeRecord(i, state.k, r[i], s_old, S_norm,
                                   y_next - state.Y[i], A, mu_k))
        Y_blocks[i] = y_next
        X = X.replace(i, y_next + s_new[i])
    return X, BlockVector(Y_blocks), inter_grads, he_records


def subgradient_witness(problem, prev_state, next_state, metrics, r=None):
    """
    Explicit element of the subdifferential of f at y^(k+1),

        w_i = grad_i h(Y^(k+1)) - grad_i h(X_i^k) - A_ik (y_i^(k+1) - y_i^k)
              + A_ik (r_i^k + s_i^k)

    which for exact steps reads
    w_i = grad_i h(X^(k+1)) - grad_i h(X_i^k) - A_ik (x_i^(k+1) - x_i^k).

    Parameters
    ----------
    problem : BlockProblem
        The problem
    prev_state, next_state : AfbState
        Consecutive iterates
    metrics : list(SpdOperator)
        The block metrics of the step
    r : list(numpy.ndarray) | None
        Explicit errors of the step (zero when None)

    Returns
    -------
    W : BlockVector
        The witness
    norm : float
        Its Euclidean norm
    """
    inter_grads = []
    for i in range(problem.p):
        X_i = BlockVector([next_state.X[j] if j < i else prev_state.X[j]
                           for j in range(problem.p)])
        inter_grads.append(problem.partial_gradient(i, X_i))
    corrections = None
    s_old = prev_state.implicit_errors
    if r is not None or s_old.norm() > 0:
        corrections = [(r[i] if r is not None else 0.0) + s_old[i]
                       for i in range(problem.p)]
    W = _witness(problem, next_state.Y, inter_grads,
                 next_state.Y - prev_state.Y, corrections, metrics)
    return W, W.norm()


def _witness(problem, point, inter_grads, dy, corrections, metrics):
    blocks = []
    for i in range(problem.p):
        A = metrics[i]
        w = (problem.partial_gradient(i, point) - inter_grads[i]
             - A.apply(dy[i]))
        if corrections is not None:
            w = w + A.apply(corrections[i])
        blocks.append(w)
    return BlockVector(blocks)


def derive_schedule(alpha, beta, sigma, rho, mu, L, p):
    """
    Schedules for which the (inexact) block method satisfies H1 and H2:

        a_k      = (rho alpha_k - L (sigma sqrt(p)/p + 1)) / 2
        b_(k+1)  = 1 / (p^2 (1 + sigma) (beta_k + L))
        eps_(k+1) = beta_k mu_k / (p (1 + sigma) (beta_k + L))

    Parameters
    ----------
    alpha, beta : sequence(float)
        Spectral bounds of the metrics per step
    sigma, rho : float
        Error model parameters (0 and 1 for exact steps)
    mu : float | sequence(float)
        Absolute error levels per step
    L : float
        Per-block Lipschitz constant
    p : int
        Number of blocks

    Returns
    -------
    a, b, eps : numpy.ndarray
        Indexed by step k: a[k] = a_k, b[k] = b_(k+1), eps[k] = eps_(k+1)
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    mu = np.broadcast_to(np.asarray(mu, dtype=float), alpha.shape)
    threshold = L * (sigma * math.sqrt(p) / p + 1.0)
    bad = np.flatnonzero(rho * alpha <= threshold)
    if bad.size:
        k = int(bad[0])
        raise KlDescentScheduleError(
            "Schedule infeasible at k={}: rho alpha_k = {:.6g} does not "
            "exceed L (sigma sqrt(p)/p + 1) = {:.6g}".format(
                k, rho * alpha[k], threshold), index=k)
    a = (rho * alpha - threshold) / 2.0
    denom = (1.0 + sigma) * (beta + L)
    b = 1.0 / (p ** 2 * denom)
    eps = beta * mu / (p * denom)
    return a, b, eps


def explicit_schedule(lambdas, L):
    """
    Schedules of the explicit gradient step x^(k+1) = x^k - lambda_k grad
    f(x^k): by the descent lemma H1 holds with a_k = 1/lambda_k - L/2, and H2'
    holds with equality for b_(k+1) = lambda_k.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    a = 1.0 / lambdas - L / 2.0
    bad = np.flatnonzero(a <= 0)
    if bad.size:
        k = int(bad[0])
        raise KlDescentScheduleError(
            "Step size {} at k={} is not below 2/L = {:.6g}".format(
                lambdas[k], k, 2.0 / L), index=k)
    return a, lambdas.copy(), np.zeros_like(lambdas)


def he_check(he_records, sigma, rho):
    """
    Checks the error conditions HE1-HE3 on the recorded block updates, at
    tolerance 1e-10

    Parameters
    ----------
    he_records : list(HeRecord)
        Error quantities logged by `afbe_step`
    sigma, rho : float
        Error model parameters

    Returns
    -------
    report : CheckReport
        Items HE1, HE2, HE3 and the violating (i, k) pairs
    """
    if not he_records:
        raise KlDescentDataError("No error records to check")
    violations = _he_violations(he_records, sigma, rho)
    items = []
    for name in ('HE1', 'HE2', 'HE3'):
        bad = [v for v in violations if v['condition'] == name]
        items.append(CheckItem(name, FAIL if bad else PASS,
                               value=min((v['residual'] for v in bad),
                                         default=None),
                               witness=[v['k'] for v in bad]))
    return CheckReport('HE', items, violations, checked=len(he_records))


def _he_violations(he_records, sigma, rho):
    violations = []
    half_sigma = sigma / 2.0
    for rec in he_records:
        dy = float(np.linalg.norm(rec.dy))
        tol = HE_TOL * (1.0 + dy)
        residuals = {
            'HE1': half_sigma * dy - rec.S_norm,
            'HE2': half_sigma * dy + rec.mu_k - np.linalg.norm(rec.r)}
        dy_a = rec.metric.norm_sq(rec.dy)
        residuals['HE3'] = ((1.0 - rho) / 2.0 * dy_a
                            - rec.metric.inner(rec.r + rec.s, rec.dy))
        for name, residual in residuals.items():
            slack = HE_TOL * (1.0 + dy_a) if name == 'HE3' else tol
            if residual < -slack:
                violations.append({'condition': name, 'i': rec.i,
                                   'k': rec.k, 'residual': float(residual)})
    return violations


def error_partial_sums(trace):
    """
    Partial sums over k of sum_i |r_i^k|^2 and sum_i |s_i^k|^2 along an
    inexact run
    """
    if not trace.he_log:
        raise KlDescentDataError("Trace carries no error records")
    n_steps = max(rec.k for rec in trace.he_log) + 1
    r_sq = np.zeros(n_steps)
    s_sq = np.zeros(n_steps)
    for rec in trace.he_log:
        r_sq[rec.k] += float(np.sum(rec.r ** 2))
        s_sq[rec.k] += float(np.sum(rec.s ** 2))
    return np.cumsum(r_sq), np.cumsum(s_sq)


def run(problem, metric_schedule, x0, error_model=None, stop=None, seed=0,
        schedule_kind=DERIVED, hp_override=False, region=None,
        progress=False):
    """
    Runs the (inexact) alternating forward-backward method and records the
    trace with its H1/H2 schedules attached

    Parameters
    ----------
    problem : BlockProblem
        The problem
    metric_schedule : MetricSchedule
        Provider of the block metrics
    x0 : BlockVector | sequence(array-like)
        Initial point
    error_model : ErrorModel | None
        Errors of the inexact method (exact steps when None)
    stop : StoppingRule | None
        Stopping rule (defaults: step <= 1e-10 and slope <= 1e-8, or 10^5
        iterations)
    seed : int
        Seed of the error generator
    schedule_kind : str
        'derived' for the schedules of `derive_schedule`, 'explicit' for the
        gradient-step schedules of `explicit_schedule` (single smooth block
        with scaled-identity metrics)
    hp_override : bool
        Run even when the metric schedule fails the HP screening (the trace
        is flagged)
    region : KLRegion | None
        Region whose membership is recorded as the region flag
    progress : bool
        Show a progress bar

    Returns
    -------
    trace : IterateTrace
        Status 'converged' or 'max_iter'

    Raises
    ------
    KlDescentScheduleError
        The metric, error or derived schedules are infeasible
    KlDescentDivergenceError
        The objective became non-finite. The partial trace is attached.
    """
    if schedule_kind not in SCHEDULE_KINDS:
        raise KlDescentDomainError(
            "Unrecognised schedule kind '{}'".format(schedule_kind))
    if schedule_kind == EXPLICIT and (problem.p != 1 or not problem.smooth):
        raise KlDescentDomainError(
            "Explicit gradient schedules need a single smooth block")
    stop = stop if stop is not None else StoppingRule()
    errors = error_model if error_model is not None else \
        ErrorModel.disabled()
    X0 = problem.check_point(x0)
    _screen_schedule(problem, metric_schedule, stop, hp_override)
    errors.validate(metric_schedule.alpha_lower, problem.L)
    errors.reset(seed)
    trace = IterateTrace(meta={
        'problem': problem.name, 'L': problem.L, 'p': problem.p,
        'schedule': schedule_kind, 'errors': errors.enabled,
        'sigma': errors.sigma, 'rho': errors.rho, 'seed': seed,
        'hp_override': bool(hp_override)})
    if errors.enabled:
        trace.meta['he_slack'] = []
    f0 = problem.value(X0)
    if not math.isfinite(f0):
        trace.status = DIVERGED
        raise KlDescentDivergenceError(0, f0, trace)
    slope0 = problem.gradient(X0).norm() if problem.smooth else math.nan
    trace.append(IterateRecord(
        0, f0, slope_norm=slope0, x=X0, y=X0 if errors.enabled else None,
        f_x=f0, region_flag=_flag(region, X0, f0)))
    state = AfbState(X0, X0, 0)
    beta_max = 0.0
    bar = (progressbar.ProgressBar(max_value=max(stop.max_iter, 1))
           if progress else None)
    trace.status = MAX_ITER
    for k in range(stop.max_iter):
        metrics = metric_schedule.metrics(k, state, problem.p)
        if errors.enabled:
            next_state, record, he_records = afbe_step(
                problem, state, metrics, errors, k)
            trace.he_log.extend(he_records)
            slack = _he_violations(he_records, errors.sigma, errors.rho)
            if slack:
                trace.meta['he_slack'].extend(slack)
        else:
            next_state, record = afb_step(problem, state, metrics)
        _attach_schedule(record, metrics, problem, errors, k, schedule_kind,
                         hp_override)
        beta_max = max(beta_max, record.beta_k)
        if not math.isfinite(record.f_val):
            trace.status = DIVERGED
            raise KlDescentDivergenceError(record.k, record.f_val, trace)
        record.region_flag = _flag(
            region, record.y if record.y is not None else record.x,
            record.f_val)
        trace.append(record)
        state = next_state
        if bar is not None:
            bar.update(k + 1)
        logger.debug("k=%s f=%s step=%s slope=%s", record.k, record.f_val,
                     record.step_norm, record.slope_norm)
        if stop.satisfied(record):
            trace.status = CONVERGED
            break
    if bar is not None:
        bar.finish()
    trace.meta['beta_max'] = beta_max
    logger.info("%s on '%s' finished with status '%s' after %s iterations "
                "(f=%s)", 'AFBE' if errors.enabled else 'AFB', problem.name,
                trace.status, len(trace) - 1, trace.final.f_val)
    return trace


def _screen_schedule(problem, schedule, stop, hp_override):
    problems = []
    if not schedule.alpha_lower > problem.L:
        problems.append("declared alpha_ = {} does not exceed L = {}".format(
            schedule.alpha_lower, problem.L))
    declared = schedule.declared(max(1, min(stop.max_iter, HP_HORIZON)))
    if declared is not None:
        report = hp_check(declared[0], declared[1], problem.L)
        problems.extend("{} failed ({})".format(i.name, i.note)
                        for i in report.items if i.status == FAIL)
    if problems:
        msg = "Metric schedule fails HP: " + '; '.join(problems)
        if not hp_override:
            raise KlDescentScheduleError(msg)
        logger.warning("%s (overridden)", msg)


def _attach_schedule(record, metrics, problem, errors, k, kind, override):
    try:
        if kind == EXPLICIT:
            a, b, eps = explicit_schedule([1.0 / metrics[0].beta], problem.L)
        else:
            a, b, eps = derive_schedule(
                [record.alpha_k], [record.beta_k], errors.sigma, errors.rho,
                [errors.mu_k(k) if errors.enabled else 0.0], problem.L,
                problem.p)
    except KlDescentScheduleError as e:
        if not override:
            raise KlDescentScheduleError(
                "Schedule infeasible at k={}: {}".format(k, e), index=k)
        return
    record.a_k, record.b_k, record.eps_k = a[0], b[0], eps[0]


def _flag(region, X, f_val):
    if region is None:
        return None
    return region.contains(X, f_val)


def _with_norm(direction, norm):
    current = np.linalg.norm(direction)
    if current == 0.0 or norm == 0.0:
        return np.zeros_like(direction)
    return direction * (norm / current)


def _steer_against(direction, dy, A):
    # Result r satisfies <r, dy>_A <= -|r|_A |dy|_A / 2
    dy_norm = math.sqrt(A.norm_sq(dy))
    d_norm = math.sqrt(A.norm_sq(direction))
    if dy_norm == 0.0 or d_norm == 0.0:
        return direction
    u = direction / d_norm
    v = dy / dy_norm
    c = A.inner(u, v)
    if c > 0.0:
        u = u - 2.0 * c * v
    return u - v
