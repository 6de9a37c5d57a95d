"""
Test problems with known structure: power potentials, the absolute value,
constrained quadratics, a double well, the counting function and the
sparse plus low-rank matrix decomposition

    minimize 1/2 |A - X - Y|_F^2  s.t.  rank(X) <= r, |Y|_0 <= s

solved by alternating averaged projections, an instance of the block
forward-backward method with h = 1/2 |A - X - Y|_F^2 (L = 1 per block),
g_1 = indicator(rank <= r) and g_2 = indicator(|.|_0 <= s).
"""
import os.path
import math
import logging
import numpy as np
from scipy import linalg, optimize
from .base import BlockVector
from .kl_core import Desingularizer, power_exponent_for_potential
from .metric_ops import (
    ProxOracle, project_rank, project_l0, spectral_bounds, CONDITION_LIMIT)
from .afb_engine import BlockProblem, MetricSchedule, StoppingRule, run
from .exceptions import (
    KlDescentDomainError, KlDescentConfigError, KlDescentConditioningError,
    KlDescentDataError, KlDescentUsageError)

logger = logging.getLogger('kldescent')

GRADIENT = 'gradient'
PROXIMAL = 'proximal'

PLANTED_HEADER = 'm,n,r,s,seed,planted'

RECOVERED = 'recovered'
NOT_RECOVERED = 'not_recovered'
NOT_APPLICABLE = 'not_applicable'

# Decomposition: per-block Lipschitz constant of X -> X + Y - A
DECOMPOSITION_L = 1.0


def make_power_potential(q, dim=1, radius=1.0, mode=GRADIENT):
    """
    f(x) = |x|^q, with minimizer 0 and KL exponent 1/q

    Parameters
    ----------
    q : float
        Exponent, > 1 (>= 2 for gradient runs)
    dim : int
        Dimension of x
    radius : float
        Radius of the ball around 0 the runs stay in, on which the gradient
        Lipschitz constant q (q - 1) radius^(q - 2) is computed
    mode : str
        'gradient' puts f in the smooth part h, 'proximal' in the nonsmooth
        part g with an exact radial prox (h = 0)

    Returns
    -------
    problem : BlockProblem
    """
    desingularizer = power_exponent_for_potential(q)
    q = float(q)
    meta = {'x_star': BlockVector([np.zeros(dim)]), 'f_star': 0.0,
            'desingularizer': desingularizer, 'radius': radius, 'q': q}
    name = 'power{:g}'.format(q)
    if mode == GRADIENT:
        if q < 2:
            raise KlDescentConfigError(
                "Gradient runs on |x|^q need q >= 2 (got {}), use proximal "
                "mode instead".format(q))

        def h_eval(X):
            return np.linalg.norm(X[0]) ** q

        def h_grad(i, X):
            x = X[0]
            nrm = np.linalg.norm(x)
            if nrm == 0.0:
                return np.zeros_like(x)
            return q * nrm ** (q - 2.0) * x

        def h_hessian(x):
            x = np.asarray(x, dtype=float).ravel()
            nrm = np.linalg.norm(x)
            if nrm == 0.0:
                return (2.0 if q == 2 else 0.0) * np.eye(x.size)
            u = x / nrm
            return q * nrm ** (q - 2.0) * (
                np.eye(x.size) + (q - 2.0) * np.outer(u, u))

        L = q * (q - 1.0) * radius ** (q - 2.0)
        return BlockProblem(h_eval, h_grad, [ProxOracle.zero()], L, [(dim,)],
                            name=name, h_hessian=h_hessian, meta=meta)
    if mode != PROXIMAL:
        raise KlDescentDomainError(
            "Unrecognised power potential mode '{}'".format(mode))

    def g_eval(y):
        return float(np.linalg.norm(y) ** q)

    def radial_prox(x, A):
        if not A.is_scalar:
            raise KlDescentDomainError(
                "Radial prox of |x|^q needs a scaled-identity metric")
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            return np.zeros_like(x)
        res = optimize.minimize_scalar(
            lambda rho: rho ** q + 0.5 * A.scale * (rho - nrm) ** 2,
            bounds=(0.0, nrm), method='bounded',
            options={'xatol': 1e-14 * max(1.0, nrm)})
        return x * (res.x / nrm)

    g = ProxOracle(name, generic_solver=radial_prox, g_eval=g_eval)
    return BlockProblem(_zero_h, _zero_grad, [g], 0.0, [(dim,)], name=name,
                        meta=meta)


def make_abs_prox_problem(lam):
    """
    Proximal point on f(x) = |x| with step lambda (h = 0, g = |.|), which
    satisfies the KL inequality with phi(t) = t and terminates after
    ceil(|x0| / lambda) steps

    Returns
    -------
    problem : BlockProblem
    expected_steps : callable
        x0 -> number of steps to reach 0
    """
    if not lam > 0:
        raise KlDescentDomainError(
            "Step size must be positive (got {})".format(lam))
    problem = BlockProblem(
        _zero_h, _zero_grad, [ProxOracle.l1(1.0)], 0.0, [(1,)], name='abs',
        meta={'x_star': BlockVector([np.zeros(1)]), 'f_star': 0.0,
              'desingularizer': Desingularizer.power(C=1.0, theta=1.0),
              'step': lam})

    def expected_steps(x0):
        return int(math.ceil(abs(float(np.ravel(x0)[0])) / lam))

    return problem, expected_steps


def make_quadratic(Q, b, C=None):
    """
    h(x) = 1/2 x'Qx - b'x, optionally constrained to the affine set
    C = {x: Bx = c}

    Parameters
    ----------
    Q : array-like
        Symmetric positive-definite matrix
    b : array-like
        Linear term
    C : tuple(array-like, array-like) | None
        (B, c) of the affine constraint

    Returns
    -------
    problem : BlockProblem
        L = beta(Q); the minimizer and its value in `meta`
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    alpha, beta = spectral_bounds(Q)
    if not alpha > 0:
        raise KlDescentDomainError(
            "Quadratic term is not positive definite (least eigenvalue {})"
            .format(alpha))

    def h_eval(X):
        x = X[0]
        return 0.5 * x @ Q @ x - b @ x

    def h_grad(i, X):
        return Q @ X[0] - b

    x_star = quadratic_minimizer(Q, b, C)
    meta = {'x_star': BlockVector([x_star]),
            'f_star': float(0.5 * x_star @ Q @ x_star - b @ x_star)}
    if C is None:
        g = ProxOracle.zero()
        # r = 1/2 (x - x*)'Q(x - x*) and |grad| >= alpha |x - x*|
        meta['desingularizer'] = Desingularizer.power(
            C=math.sqrt(beta / 2.0) / alpha, theta=0.5)
    else:
        g = ProxOracle.affine_indicator(*C)
    return BlockProblem(h_eval, h_grad, [g], beta, [(b.size,)],
                        name='quadratic', h_hessian=lambda x: Q, meta=meta)


def quadratic_minimizer(Q, b, C=None):
    """
    Minimizer of 1/2 x'Qx - b'x (over Bx = c), from the KKT system

        [Q  B'] [x ]   [b]
        [B  0 ] [nu] = [c]
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if C is None:
        K, rhs = Q, b
    else:
        B = np.atleast_2d(np.asarray(C[0], dtype=float))
        c = np.atleast_1d(np.asarray(C[1], dtype=float))
        K = np.block([[Q, B.T], [B, np.zeros((B.shape[0], B.shape[0]))]])
        rhs = np.concatenate([b, c])
    if np.linalg.cond(K) > CONDITION_LIMIT:
        raise KlDescentConditioningError(
            "KKT system is singular (condition number {:.3g})".format(
                np.linalg.cond(K)))
    return linalg.solve(K, rhs)[:b.size]


def make_double_well():
    """
    h(x) = 1/4 (x^2 - 1)^2 on the real line, critical points {-1, 0, 1};
    L = 11 bounds h'' on [-2, 2]
    """
    def h_eval(X):
        return 0.25 * (X[0][0] ** 2 - 1.0) ** 2

    def h_grad(i, X):
        x = X[0]
        return x ** 3 - x

    def h_hessian(x):
        x = np.asarray(x, dtype=float).ravel()
        return np.array([[3.0 * x[0] ** 2 - 1.0]])

    return BlockProblem(
        h_eval, h_grad, [ProxOracle.zero()], 11.0, [(1,)],
        name='double_well', h_hessian=h_hessian,
        meta={'x_star': BlockVector([np.ones(1)]), 'f_star': 0.0,
              'desingularizer': Desingularizer.power(C=1.0, theta=0.5)})


def make_counting_problem(weight=1.0):
    """f(x) = weight * |x|_0 on the real line (h = 0)"""
    return BlockProblem(
        _zero_h, _zero_grad, [ProxOracle.counting(weight)], 0.0, [(1,)],
        name='counting',
        meta={'x_star': BlockVector([np.zeros(1)]), 'f_star': 0.0})


class DecompositionInstance(object):
    """
    An observed matrix A with rank bound r and sparsity bound s, and the
    planted factors when it was generated

    Parameters
    ----------
    A : array-like
        The m x n observation
    r : int
        Rank bound of X
    s : int
        Sparsity bound of Y
    X_true, Y_true : array-like | None
        Planted low-rank and sparse parts, A = X_true + Y_true
    seed : int | None
        Seed the instance was generated with
    """

    def __init__(self, A, r, s, X_true=None, Y_true=None, seed=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m, n = A.shape
        if not 0 <= r <= min(m, n) or not 0 <= s <= m * n:
            raise KlDescentDomainError(
                "Infeasible bounds r={}, s={} for a {}x{} matrix".format(
                    r, s, m, n))
        if (X_true is None) != (Y_true is None):
            raise KlDescentDomainError(
                "Both planted parts are needed, or neither")
        self.A = A
        self.r = int(r)
        self.s = int(s)
        self.X_true = (np.asarray(X_true, dtype=float)
                       if X_true is not None else None)
        self.Y_true = (np.asarray(Y_true, dtype=float)
                       if Y_true is not None else None)
        self.seed = seed

    @property
    def shape(self):
        return self.A.shape

    @property
    def planted(self):
        return self.X_true is not None

    def save(self, path):
        """
        Writes the header line 'm,n,r,s,seed,planted', its values, and the
        rows of A (then X_true and Y_true when planted)
        """
        m, n = self.shape
        mats = [self.A]
        if self.planted:
            mats.extend([self.X_true, self.Y_true])
        with open(path, 'w') as f:
            f.write(PLANTED_HEADER + '\n')
            f.write('{},{},{},{},{},{}\n'.format(
                m, n, self.r, self.s,
                self.seed if self.seed is not None else '',
                int(self.planted)))
            np.savetxt(f, np.vstack(mats), fmt='%.17g', delimiter=',')
        logger.info("Saved %sx%s decomposition instance to '%s'", m, n, path)

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise KlDescentUsageError(
                "Instance file '{}' does not exist".format(path))
        try:
            with open(path) as f:
                header = f.readline().strip()
                if header != PLANTED_HEADER:
                    raise ValueError("unexpected header '{}'".format(header))
                fields = f.readline().strip().split(',')
                m, n, r, s = (int(v) for v in fields[:4])
                seed = int(fields[4]) if fields[4] else None
                planted = bool(int(fields[5]))
                rows = np.atleast_2d(np.loadtxt(f, delimiter=',', ndmin=2))
        except (ValueError, IndexError) as e:
            raise KlDescentDataError(
                "Malformed instance file '{}': {}".format(path, e))
        expected = (3 * m if planted else m, n)
        if rows.shape != expected:
            raise KlDescentDataError(
                "Instance file '{}' holds a {} matrix block, expected {}"
                .format(path, rows.shape, expected))
        if planted:
            return cls(rows[:m], r, s, X_true=rows[m:2 * m],
                       Y_true=rows[2 * m:], seed=seed)
        return cls(rows, r, s, seed=seed)

    def __repr__(self):
        return "{}(shape={}, r={}, s={}, planted={})".format(
            self.__class__.__name__, self.shape, self.r, self.s,
            self.planted)

    def to_dict(self):
        return {'shape': list(self.shape), 'r': self.r, 's': self.s,
                'seed': self.seed, 'planted': self.planted}


def generate_decomposition(m, n, r, s, magnitude_gap=10.0, seed=0):
    """
    Planted instance: X_true is the product of seeded Gaussian m x r and
    r x n factors; Y_true has s entries at positions drawn without
    replacement with random signs and magnitudes uniform in
    [gap, 2 gap] * max |X_true|

    Returns
    -------
    instance : DecompositionInstance
    """
    if not 0 <= r <= min(m, n):
        raise KlDescentDomainError(
            "Rank bound {} infeasible for a {}x{} matrix".format(r, m, n))
    if not 0 <= s <= m * n:
        raise KlDescentDomainError(
            "Sparsity bound {} infeasible for a {}x{} matrix".format(s, m, n))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    scale = float(np.max(np.abs(X))) if r > 0 else 1.0
    Y = np.zeros(m * n)
    positions = rng.choice(m * n, size=s, replace=False)
    magnitudes = rng.uniform(magnitude_gap, 2.0 * magnitude_gap, size=s)
    signs = rng.choice([-1.0, 1.0], size=s)
    Y[positions] = signs * magnitudes * scale
    Y = Y.reshape(m, n)
    return DecompositionInstance(X + Y, r, s, X_true=X, Y_true=Y, seed=seed)


def make_decomposition_problem(instance):
    A = instance.A

    def h_eval(XY):
        return 0.5 * np.sum((A - XY[0] - XY[1]) ** 2)

    def h_grad(i, XY):
        return XY[0] + XY[1] - A

    meta = {'f_star': 0.0}
    if instance.planted:
        meta['x_star'] = BlockVector([instance.X_true, instance.Y_true])
    return BlockProblem(
        h_eval, h_grad,
        [ProxOracle.rank_indicator(instance.r),
         ProxOracle.l0_ball_indicator(instance.s)],
        DECOMPOSITION_L, [A.shape, A.shape], name='decomposition', meta=meta)


def aapm_step(instance, X, Y, lam, mu):
    """
    One sweep of alternating averaged projections,

        X' in proj_(rank <= r)(lam (A - Y) + (1 - lam) X)
        Y' in proj_(|.|_0 <= s)(mu (A - X') + (1 - mu) Y)
    """
    for name, w in (('lambda', lam), ('mu', mu)):
        if not 0.0 < w <= 1.0:
            raise KlDescentDomainError(
                "Averaging weight {} must lie in (0, 1] (got {})".format(
                    name, w))
    A = instance.A
    X_next = project_rank(lam * (A - Y) + (1.0 - lam) * X, instance.r)
    Y_next = project_l0(mu * (A - X_next) + (1.0 - mu) * Y, instance.s)
    return X_next, Y_next


def aapm_iterates(instance, X0, Y0, lam=0.5, mu=0.5, n_iter=100):
    """The first n_iter + 1 iterates of `aapm_step`, initial pair first"""
    pairs = [(np.asarray(X0, dtype=float), np.asarray(Y0, dtype=float))]
    for _ in range(n_iter):
        pairs.append(aapm_step(instance, pairs[-1][0], pairs[-1][1], lam,
                               mu))
    return pairs


def initial_point(instance, radius=None, seed=0):
    """
    Starting pair for decomposition runs. Without a radius, or for an
    instance without planted parts, (0, 0). Otherwise the planted parts
    perturbed by Gaussian noise of Frobenius norm radius * |X_true|_F
    (resp. |Y_true|_F) and made feasible: X0 is projected to rank r and the
    noise on Y is restricted to the support of Y_true.
    """
    m, n = instance.shape
    if radius is None or not instance.planted:
        return np.zeros((m, n)), np.zeros((m, n))
    if radius < 0:
        raise KlDescentDomainError(
            "Perturbation radius must be nonnegative (got {})".format(radius))
    rng = np.random.default_rng(seed)
    X0 = instance.X_true + _noise(rng, (m, n), radius
                                  * np.linalg.norm(instance.X_true))
    support = instance.Y_true != 0
    E = np.where(support, rng.standard_normal((m, n)), 0.0)
    E_norm = np.linalg.norm(E)
    if E_norm > 0:
        E *= radius * np.linalg.norm(instance.Y_true) / E_norm
    return project_rank(X0, instance.r), instance.Y_true + E


def run_aapm(instance, X0, Y0, lam=0.5, mu=0.5, stop=None, region=None,
             progress=False):
    """
    Alternating averaged projections run through the block forward-backward
    engine with metrics (1/lam) I and (1/mu) I

    Returns
    -------
    trace : IterateTrace
    """
    problem = make_decomposition_problem(instance)
    schedule = MetricSchedule.from_steps([lam, mu], problem.shapes)
    # lam = 1 or mu = 1 gives alpha = L, the plain alternating projection
    override = max(lam, mu) >= 1.0
    return run(problem, schedule, [X0, Y0], stop=stop,
               hp_override=override, region=region, progress=progress)


class RecoveryMetrics(object):

    def __init__(self, status, residual, x_error=None, y_error=None,
                 support_agreement=None):
        self.status = status
        self.residual = residual
        self.x_error = x_error
        self.y_error = y_error
        self.support_agreement = support_agreement

    def __repr__(self):
        return ("{}(status='{}', x_error={}, y_error={}, support_agreement={}"
                ", residual={})".format(
                    self.__class__.__name__, self.status, self.x_error,
                    self.y_error, self.support_agreement, self.residual))

    def to_dict(self):
        return {'status': self.status, 'residual': self.residual,
                'x_error': self.x_error, 'y_error': self.y_error,
                'support_agreement': self.support_agreement}


def recovery_report(instance, X, Y, tol=1e-6):
    """
    Relative Frobenius errors of X and Y against the planted parts (absolute
    when a planted part is 0), Jaccard agreement of the supports of Y and
    Y_true, and the residual |A - X - Y|_F
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    residual = float(np.linalg.norm(instance.A - X - Y))
    if not instance.planted:
        return RecoveryMetrics(NOT_APPLICABLE, residual)
    x_error = _relative_error(X, instance.X_true)
    y_error = _relative_error(Y, instance.Y_true)
    found = Y != 0
    true = instance.Y_true != 0
    union = np.count_nonzero(found | true)
    agreement = (np.count_nonzero(found & true) / union) if union else 1.0
    status = (RECOVERED if x_error <= tol and y_error <= tol
              else NOT_RECOVERED)
    return RecoveryMetrics(status, residual, x_error=x_error,
                           y_error=y_error,
                           support_agreement=float(agreement))


def capture_sweep(instance, radii, lam=0.5, mu=0.5, stop=None, seed=0,
                  tol=1e-6):
    """
    Runs the decomposition from the planted parts perturbed at each radius
    and reports whether the run recovered them

    Returns
    -------
    results : list(dict)
        Radius, terminal status, iterations and recovery metrics per radius
    """
    if not instance.planted:
        raise KlDescentDomainError(
            "Capture sweeps need an instance with planted parts")
    stop = stop if stop is not None else StoppingRule(max_iter=2000)
    results = []
    for radius in radii:
        X0, Y0 = initial_point(instance, radius=radius, seed=seed)
        trace = run_aapm(instance, X0, Y0, lam=lam, mu=mu, stop=stop)
        X, Y = trace.final.x
        metrics = recovery_report(instance, X, Y, tol=tol)
        logger.info("Capture radius %s: %s (x_error=%s, y_error=%s)", radius,
                    metrics.status, metrics.x_error, metrics.y_error)
        results.append({'radius': float(radius), 'status': trace.status,
                        'iterations': len(trace) - 1,
                        'recovery': metrics.to_dict()})
    return results


def _relative_error(estimate, truth):
    err = float(np.linalg.norm(estimate - truth))
    nrm = float(np.linalg.norm(truth))
    return err / nrm if nrm > 0 else err


def _noise(rng, shape, norm):
    E = rng.standard_normal(shape)
    E_norm = np.linalg.norm(E)
    return E * (norm / E_norm) if E_norm > 0 else E


def _zero_h(X):
    return 0.0


def _zero_grad(i, X):
    return np.zeros_like(X[i])
