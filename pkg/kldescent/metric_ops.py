import math
import logging
import numpy as np
from scipy import linalg
from .base import (
    CheckItem, CheckReport, as_sequence, summability_item, PASS, FAIL,
    DIVERGENT)
from .exceptions import (
    KlDescentDomainError, KlDescentShapeError, KlDescentRankError,
    KlDescentConditioningError, KlDescentInnerSolverError)

logger = logging.getLogger('kldescent')

SYMMETRY_TOL = 1e-12
INNER_MAX_ITER = 10 ** 4
INNER_TOL = 1e-12
CONDITION_LIMIT = 1e12
FEASIBILITY_TOL = 1e-8

ZERO = 'zero'
L1 = 'l1'
L0 = 'l0'
RANK = 'indicator_rank'
L0_BALL = 'indicator_l0ball'
AFFINE = 'indicator_affine'
BOX = 'indicator_box'

CLOSED_FORMS = (ZERO, L1, L0, RANK, L0_BALL, AFFINE, BOX)


class SpdOperator(object):
    """
    A symmetric positive-definite operator A inducing the metric <Ax, y>.

    The spectral bounds alpha(A) (least eigenvalue) and beta(A) (operator
    norm) are computed once at construction. Scaled identities are held
    without materialising the dense matrix.

    Parameters
    ----------
    matrix : array-like
        Dense real symmetric n x n matrix
    """

    def __init__(self, matrix=None, scale=None, dim=None):
        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            alpha, beta = spectral_bounds(matrix)
            self._matrix = (matrix + matrix.T) / 2.0
            self._scale = None
            self.dim = matrix.shape[0]
        else:
            if scale is None or dim is None:
                raise KlDescentDomainError(
                    "Either a matrix or a scale and dimension are required")
            alpha = beta = float(scale)
            self._matrix = None
            self._scale = float(scale)
            self.dim = int(dim)
        if not alpha > 0.0:
            raise KlDescentDomainError(
                "Metric operator is not positive definite (least eigenvalue "
                "{})".format(alpha))
        self.alpha = alpha
        self.beta = beta
        self._factor = None

    @classmethod
    def scaled_identity(cls, scale, dim):
        return cls(scale=scale, dim=dim)

    @property
    def is_scalar(self):
        return self._scale is not None

    @property
    def is_diagonal(self):
        if self.is_scalar:
            return True
        return not np.count_nonzero(self._matrix
                                    - np.diag(np.diag(self._matrix)))

    @property
    def scale(self):
        return self._scale

    @property
    def diagonal(self):
        if self.is_scalar:
            return np.full(self.dim, self._scale)
        return np.diag(self._matrix).copy()

    @property
    def matrix(self):
        if self.is_scalar:
            return self._scale * np.eye(self.dim)
        return self._matrix

    @property
    def condition_number(self):
        return self.beta / self.alpha

    def apply(self, v):
        """A v, for v of any shape holding dim entries (column-wise for
        matrices of shape (dim, k))"""
        v = np.asarray(v, dtype=float)
        if self.is_scalar:
            return self._scale * v
        return (self._matrix @ v.reshape(self.dim, -1)).reshape(v.shape)

    def solve(self, v):
        """A^-1 v, shapes as for `apply`"""
        v = np.asarray(v, dtype=float)
        if self.is_scalar:
            return v / self._scale
        if self._factor is None:
            self._factor = linalg.cho_factor(self._matrix)
        return linalg.cho_solve(
            self._factor, v.reshape(self.dim, -1)).reshape(v.shape)

    def inner(self, x, y):
        return float(np.sum(self.apply(x) * np.asarray(y, dtype=float)))

    def norm_sq(self, x):
        return self.inner(x, x)

    def scaled(self, factor):
        """The operator factor * A"""
        if self.is_scalar:
            return SpdOperator.scaled_identity(self._scale * factor,
                                               self.dim)
        return SpdOperator(self._matrix * factor)

    def __repr__(self):
        return "{}(dim={}, alpha={}, beta={})".format(
            self.__class__.__name__, self.dim, self.alpha, self.beta)


class ProxOracle(object):
    """
    Proximal oracle of a nonsmooth block term g_i.

    Calls resolve to the closed form when one applies to the metric at hand
    and to the generic solver otherwise.

    Parameters
    ----------
    g_id : str
        Name of the term
    closed_form : tuple | None
        Tag of a closed-form term followed by its parameters:
        ('zero',), ('l1', weight), ('l0', weight), ('indicator_rank', r),
        ('indicator_l0ball', s), ('indicator_affine', B, c) or
        ('indicator_box', lo, hi)
    generic_solver : callable | None
        Callable (x, A) -> argmin_y g(y) + 1/2 |y - x|^2_A, used when no
        closed form applies
    g_eval : callable | None
        Evaluates g. Required when there is no closed form.
    """

    def __init__(self, g_id, closed_form=None, generic_solver=None,
                 g_eval=None):
        if closed_form is not None:
            closed_form = tuple(closed_form)
            if closed_form[0] not in CLOSED_FORMS:
                raise KlDescentDomainError(
                    "Unrecognised closed-form prox '{}'".format(
                        closed_form[0]))
        elif generic_solver is None:
            raise KlDescentDomainError(
                "Prox oracle '{}' needs a closed form or a generic solver"
                .format(g_id))
        if closed_form is None and g_eval is None:
            raise KlDescentDomainError(
                "Prox oracle '{}' needs an evaluator for g".format(g_id))
        self.g_id = g_id
        self.closed_form = closed_form
        self.generic_solver = generic_solver
        self._g_eval = g_eval

    @classmethod
    def zero(cls):
        return cls('zero', closed_form=(ZERO,))

    @classmethod
    def l1(cls, weight=1.0):
        return cls('l1', closed_form=(L1, float(weight)))

    @classmethod
    def counting(cls, weight=1.0):
        return cls('l0', closed_form=(L0, float(weight)))

    @classmethod
    def rank_indicator(cls, r):
        return cls('rank<={}'.format(r), closed_form=(RANK, int(r)))

    @classmethod
    def l0_ball_indicator(cls, s):
        return cls('nnz<={}'.format(s), closed_form=(L0_BALL, int(s)))

    @classmethod
    def affine_indicator(cls, B, c):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls('affine', closed_form=(AFFINE, B, c))

    @classmethod
    def box_indicator(cls, lo, hi):
        return cls('box', closed_form=(BOX, lo, hi))

    @property
    def tag(self):
        return self.closed_form[0] if self.closed_form else None

    @property
    def is_zero(self):
        return self.tag == ZERO

    def value(self, y):
        """g(y); indicators are 0 on their set (up to a small feasibility
        tolerance) and +inf elsewhere"""
        y = np.asarray(y, dtype=float)
        if self.closed_form is None:
            return float(self._g_eval(y))
        tag = self.tag
        if tag == ZERO:
            return 0.0
        if tag == L1:
            return self.closed_form[1] * float(np.sum(np.abs(y)))
        if tag == L0:
            return self.closed_form[1] * float(np.count_nonzero(y))
        if tag == RANK:
            sv = linalg.svdvals(y)
            r = self.closed_form[1]
            tol = FEASIBILITY_TOL * max(1.0, sv[0] if sv.size else 0.0)
            return 0.0 if np.all(sv[r:] <= tol) else math.inf
        if tag == L0_BALL:
            return (0.0 if np.count_nonzero(y) <= self.closed_form[1]
                    else math.inf)
        if tag == AFFINE:
            B, c = self.closed_form[1:]
            resid = np.linalg.norm(B @ y.ravel() - c)
            return (0.0 if resid <= FEASIBILITY_TOL * (1 + np.linalg.norm(c))
                    else math.inf)
        lo, hi = self.closed_form[1:]
        return (0.0 if np.all(y >= np.asarray(lo) - FEASIBILITY_TOL)
                and np.all(y <= np.asarray(hi) + FEASIBILITY_TOL)
                else math.inf)

    def euclidean_prox(self, x, step):
        """prox of step * g in the Euclidean metric, available for every
        closed form"""
        return self._closed_form_prox(x, np.full(np.size(x), 1.0 / step))

    def _closed_form_prox(self, x, diag):
        # Proximal map in the diagonal metric diag(diag), separable terms only
        tag = self.tag
        shape = np.shape(x)
        x = np.asarray(x, dtype=float)
        d = diag.reshape(shape) if np.size(diag) == x.size else diag
        if tag == ZERO:
            return x.copy()
        if tag == L1:
            thresh = self.closed_form[1] / d
            return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)
        if tag == L0:
            # keep x_j iff d_j x_j^2 / 2 > w, ties go to zero
            return np.where(0.5 * d * x ** 2 > self.closed_form[1], x, 0.0)
        if tag == BOX:
            lo, hi = self.closed_form[1:]
            return np.clip(x, lo, hi)
        if tag == RANK:
            return project_rank(x, self.closed_form[1])
        if tag == L0_BALL:
            return project_l0(x, self.closed_form[1])
        raise KlDescentDomainError(
            "No separable closed form for '{}'".format(tag))

    def __repr__(self):
        return "{}('{}')".format(self.__class__.__name__, self.g_id)


def spectral_bounds(M):
    """
    Least and greatest eigenvalue of a symmetric matrix

    Parameters
    ----------
    M : array-like
        Dense symmetric matrix (symmetric up to 1e-12 (1 + |||M|||))

    Returns
    -------
    alpha : float
        Least eigenvalue
    beta : float
        Greatest eigenvalue
    """
    M = _check_symmetric(M)
    eigvals = linalg.eigvalsh(M)
    return float(eigvals[0]), float(eigvals[-1])


def prox_in_metric(g, A, x):
    """
    argmin_y g(y) + 1/2 |y - x|^2_A

    Closed forms are used when they apply to the metric: every tag in a
    scaled-identity metric, the separable tags (l1, l0, box) in diagonal
    metrics, and affine constraints in any metric. Otherwise the oracle's
    generic solver is used, or failing that proximal-gradient iterations on
    the subproblem in the Euclidean metric with step 1/beta(A).

    Parameters
    ----------
    g : ProxOracle
        The nonsmooth term
    A : SpdOperator
        The metric
    x : numpy.ndarray
        The point, of any shape holding A.dim entries

    Returns
    -------
    y : numpy.ndarray
        A minimiser, with the shape of x
    """
    x = np.asarray(x, dtype=float)
    if x.size != A.dim:
        raise KlDescentShapeError(
            "Point of size {} does not match metric of dimension {}"
            .format(x.size, A.dim))
    tag = g.tag
    if tag == ZERO:
        return x.copy()
    if tag == AFFINE:
        B, c = g.closed_form[1:]
        return project_affine_in_metric(B, c, A, x.ravel()).reshape(x.shape)
    if tag is not None:
        if A.is_scalar:
            return g._closed_form_prox(x, np.full(x.size, A.scale))
        if A.is_diagonal and tag in (L1, L0, BOX):
            return g._closed_form_prox(x, A.diagonal)
    if g.generic_solver is not None:
        return np.asarray(g.generic_solver(x, A), dtype=float).reshape(
            x.shape)
    return _inner_prox_gradient(g, A, x)


def _inner_prox_gradient(g, A, x):
    step = 1.0 / A.beta
    y = x.copy()
    residual = math.inf
    for _ in range(INNER_MAX_ITER):
        y_next = g.euclidean_prox(y - step * A.apply(y - x), step)
        residual = float(np.linalg.norm(y_next - y))
        y = y_next
        if residual <= INNER_TOL:
            return y
    raise KlDescentInnerSolverError(
        "Inner prox solver for '{}' did not converge in {} iterations "
        "(last step {})".format(g.g_id, INNER_MAX_ITER, residual),
        residual=residual)


def project_rank(X, r):
    """
    Frobenius-nearest matrix of rank at most r (truncated SVD)
    """
    X = _check_matrix(X)
    if r < 0:
        raise KlDescentDomainError(
            "Rank bound must be nonnegative (got {})".format(r))
    if r >= min(X.shape):
        return X.copy()
    if r == 0:
        return np.zeros_like(X)
    U, sv, Vt = linalg.svd(X, full_matrices=False)
    U, Vt = _fix_svd_signs(U[:, :r], Vt[:r])
    return (U * sv[:r]) @ Vt


def project_l0(X, s):
    """
    Keeps the s entries of largest magnitude, ties broken by the smallest
    row-major index
    """
    X = np.asarray(X, dtype=float)
    if s < 0:
        raise KlDescentDomainError(
            "Sparsity bound must be nonnegative (got {})".format(s))
    flat = X.ravel()
    out = np.zeros_like(flat)
    if s > 0:
        keep = np.argsort(-np.abs(flat), kind='stable')[:s]
        out[keep] = flat[keep]
    return out.reshape(X.shape)


def project_psd(H):
    """
    Frobenius-nearest positive semidefinite matrix, by clamping negative
    eigenvalues to zero
    """
    H = _check_symmetric(H)
    eigvals, eigvecs = linalg.eigh((H + H.T) / 2.0)
    P = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
    return (P + P.T) / 2.0


def project_affine_in_metric(B, c, A, x):
    """
    argmin |y - x|^2_A subject to B y = c, from the normal equations

        y = x + A^-1 B^T mu,    B A^-1 B^T mu = c - B x

    Parameters
    ----------
    B : array-like
        k x n constraint matrix of full row rank
    c : array-like
        Right-hand side, length k
    A : SpdOperator
        The metric
    x : array-like
        Point to project, length n

    Returns
    -------
    y : numpy.ndarray
        The projection
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    if B.shape[1] != x.size or B.shape[0] != c.size:
        raise KlDescentShapeError(
            "Constraint of shape {} with right-hand side of length {} does "
            "not match point of length {}".format(B.shape, c.size, x.size))
    if np.linalg.matrix_rank(B) < B.shape[0]:
        raise KlDescentRankError(
            "Constraint matrix of shape {} is rank deficient".format(B.shape))
    AinvBt = A.solve(B.T)
    S = B @ AinvBt
    if np.linalg.cond(S) > CONDITION_LIMIT:
        raise KlDescentConditioningError(
            "Normal equations of the metric projection are singular "
            "(condition number {:.3g})".format(np.linalg.cond(S)))
    mu = linalg.solve(S, c - B @ x, assume_a='pos')
    return x + AinvBt @ mu


def hp_check(alphas, betas, L, horizon=None, hp3_threshold=math.inf):
    """
    Checks the metric-schedule hypotheses

        HP1  alpha_k >= alpha_ > L
        HP2  (1 / beta_k) not in l1
        HP3  sup beta_k / alpha_{k+1} < inf

    on a finite horizon. HP2 can only be decided heuristically from a prefix
    (fitted decay exponent); HP3 passes when the observed supremum is below
    the caller's threshold.

    Parameters
    ----------
    alphas : sequence(float)
        Least eigenvalues alpha_k of the block metrics (minimum over blocks)
    betas : sequence(float)
        Greatest eigenvalues beta_k (maximum over blocks)
    L : float
        Per-block Lipschitz constant of the coupling gradient
    horizon : int
        Number of leading terms checked (all when None)
    hp3_threshold : float
        Bound for sup beta_k / alpha_{k+1}

    Returns
    -------
    report : CheckReport
        Items HP1, HP2, HP3 plus condition numbers in the details
    """
    alphas = as_sequence(alphas, 'alpha sequence')
    betas = as_sequence(betas, 'beta sequence')
    if horizon is None:
        horizon = min(alphas.size, betas.size)
    if horizon < 1 or alphas.size < horizon or betas.size < horizon:
        raise KlDescentDomainError(
            "Horizon {} exceeds the supplied sequences ({}, {})".format(
                horizon, alphas.size, betas.size))
    alphas = alphas[:horizon]
    betas = betas[:horizon]
    if np.any(alphas > betas * (1 + 1e-12)):
        raise KlDescentDomainError(
            "Least eigenvalues must not exceed the greatest ones")
    worst = int(np.argmin(alphas))
    hp1 = CheckItem('HP1', PASS if alphas[worst] > L else FAIL,
                    value=float(alphas[worst]),
                    witness=[] if alphas[worst] > L else [worst],
                    note='min alpha_k against L={}'.format(L))
    hp2 = summability_item('HP2', 1.0 / betas, want=DIVERGENT)
    if horizon > 1:
        ratios = betas[:-1] / alphas[1:]
        k_max = int(np.argmax(ratios))
        hp3_value = float(ratios[k_max])
    else:
        k_max = 0
        hp3_value = float(betas[0] / alphas[0])
    hp3 = CheckItem('HP3', PASS if hp3_value <= hp3_threshold else FAIL,
                    value=hp3_value, witness=[k_max],
                    note='max beta_k / alpha_(k+1)')
    kappa = betas / alphas
    details = {'kappa_max': float(np.max(kappa)),
               'alpha_lower': float(alphas[worst])}
    if horizon > 1:
        variation = np.minimum(alphas[:-1] / alphas[1:],
                               betas[:-1] / betas[1:])
        # bounded condition numbers with bounded variation imply HP3
        details['variation_max'] = float(np.max(variation))
        details['hp3_sufficient_bound'] = float(np.max(kappa)
                                                * np.max(variation))
    report = CheckReport('HP', [hp1, hp2, hp3], details=details,
                         checked=horizon)
    logger.debug("HP check: %s", [(i.name, i.status) for i in report.items])
    return report


def _check_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise KlDescentShapeError(
            "Expected a matrix, got array of shape {}".format(X.shape))
    return X


def _check_symmetric(M):
    M = _check_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise KlDescentShapeError(
            "Expected a square matrix, got shape {}".format(M.shape))
    scale = 1.0 + (np.linalg.norm(M, 2) if M.size else 0.0)
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise KlDescentShapeError(
            "Matrix is not symmetric (max asymmetry {:.3g})".format(asym))
    return M


def _fix_svd_signs(U, Vt):
    # Make the first nonzero component of every left singular vector positive
    for j in range(U.shape[1]):
        nonzero = np.flatnonzero(np.abs(U[:, j]) > 0)
        if nonzero.size and U[nonzero[0], j] < 0:
            U[:, j] = -U[:, j]
            Vt[j] = -Vt[j]
    return U, Vt
