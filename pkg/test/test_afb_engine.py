import math
from unittest import TestCase
import numpy as np
from kldescent.base import BlockVector
from kldescent.metric_ops import SpdOperator, ProxOracle
from kldescent.traces import HeRecord, CONVERGED, MAX_ITER, DIVERGED
from kldescent.afb_engine import (
    BlockProblem, AfbState, MetricSchedule, ErrorModel, StoppingRule,
    afb_step, afbe_step, subgradient_witness, derive_schedule,
    explicit_schedule, he_check, error_partial_sums, run, EXPLICIT)
from kldescent.descent_monitor import (
    check_H1, check_H2, check_H2prime, fit_rates, EXPONENTIAL)
from kldescent.problems import (
    make_quadratic, make_counting_problem, generate_decomposition,
    make_decomposition_problem, initial_point, aapm_iterates, run_aapm)
from kldescent.exceptions import (
    KlDescentScheduleError, KlDescentDivergenceError, KlDescentDataError,
    KlDescentShapeError)

# Never satisfied, so runs last max_iter iterations
NO_EARLY_STOP = dict(tol_step=-1.0, tol_slope=-1.0)


class ScheduleTest(TestCase):

    def test_exact_two_blocks(self):
        a, b, eps = derive_schedule([2.0], [2.0], sigma=0.0, rho=1.0, mu=0.0,
                                    L=1.0, p=2)
        self.assertAlmostEqual(a[0], 0.5)
        self.assertAlmostEqual(b[0], 1.0 / 12.0)
        self.assertEqual(eps[0], 0.0)

    def test_inexact(self):
        a, b, eps = derive_schedule([4.0], [4.0], sigma=0.5, rho=0.5,
                                    mu=0.3, L=1.0, p=1)
        self.assertAlmostEqual(a[0], (2.0 - 1.5) / 2.0)
        self.assertAlmostEqual(b[0], 1.0 / (1.5 * 5.0))
        self.assertAlmostEqual(eps[0], 4.0 * 0.3 / (1.5 * 5.0))

    def test_infeasible_index(self):
        with self.assertRaises(KlDescentScheduleError) as cm:
            derive_schedule([3.0, 3.0, 3.0, 1.0], [3.0] * 4, sigma=0.0,
                            rho=1.0, mu=0.0, L=1.0, p=1)
        self.assertEqual(cm.exception.index, 3)

    def test_explicit(self):
        a, b, eps = explicit_schedule([0.3, 0.5], L=1.0)
        np.testing.assert_allclose(a, [1.0 / 0.3 - 0.5, 1.5])
        np.testing.assert_allclose(b, [0.3, 0.5])
        self.assertRaises(KlDescentScheduleError, explicit_schedule, [2.5],
                          1.0)


class ExactStepTest(TestCase):

    def test_gradient_descent_rate(self):
        problem = make_quadratic([[1.0]], [0.0])
        schedule = MetricSchedule.from_steps([0.3], problem.shapes)
        trace = run(problem, schedule, [np.array([1.0])],
                    stop=StoppingRule(max_iter=60, **NO_EARLY_STOP),
                    schedule_kind=EXPLICIT)
        self.assertEqual(trace.status, MAX_ITER)
        x = np.array([r.x[0][0] for r in trace])
        np.testing.assert_allclose(x, 0.7 ** np.arange(61), rtol=1e-12)
        fit = fit_rates(trace.values)
        self.assertEqual(fit.model, EXPONENTIAL)
        self.assertLess(abs(fit.exp_slope - 2.0 * math.log(0.7)), 1e-6)
        self.assertGreaterEqual(fit.exp_r2, 0.999)
        self.assertTrue(check_H1(trace).passed)
        self.assertTrue(check_H2prime(trace).passed)

    def test_gradient_slope_is_witness(self):
        problem = make_quadratic(np.diag([1.0, 2.0]), [1.0, 1.0])
        schedule = MetricSchedule.from_steps([0.25], problem.shapes)
        state = AfbState(BlockVector([np.array([3.0, -1.0])]))
        metrics = schedule.metrics(0, state, 1)
        next_state, record = afb_step(problem, state, metrics)
        grad = problem.gradient(next_state.X).norm()
        self.assertAlmostEqual(record.slope_norm, grad)
        _, norm = subgradient_witness(problem, state, next_state, metrics)
        self.assertAlmostEqual(norm, grad)

    def test_decomposition_hypotheses(self):
        for seed in range(5):
            instance = generate_decomposition(20, 20, 2, 10, seed=seed)
            problem = make_decomposition_problem(instance)
            X0, Y0 = initial_point(instance, radius=0.1, seed=seed)
            trace = run(problem,
                        MetricSchedule.from_steps([0.5, 0.5], problem.shapes),
                        [X0, Y0], stop=StoppingRule(max_iter=200),
                        seed=seed)
            self.assertEqual(check_H1(trace).violations, [], seed)
            self.assertEqual(check_H2(trace).violations, [], seed)

    def test_matches_direct_projections(self):
        for seed in range(5):
            instance = generate_decomposition(20, 20, 2, 10, seed=seed)
            X0, Y0 = initial_point(instance, radius=0.1, seed=seed)
            direct = aapm_iterates(instance, X0, Y0, lam=0.5, mu=0.5,
                                   n_iter=100)
            trace = run_aapm(instance, X0, Y0, lam=0.5, mu=0.5,
                             stop=StoppingRule(max_iter=100,
                                               **NO_EARLY_STOP))
            self.assertEqual(len(trace), 101)
            scale = 1.0 + np.max(np.abs(instance.A))
            for rec, (X, Y) in zip(trace, direct):
                np.testing.assert_allclose(rec.x[0], X, rtol=0,
                                           atol=1e-12 * scale)
                np.testing.assert_allclose(rec.x[1], Y, rtol=0,
                                           atol=1e-12 * scale)

    def test_block_order(self):
        instance = generate_decomposition(6, 5, 1, 3, seed=1)
        problem = make_decomposition_problem(instance)
        swapped = problem.permuted([1, 0])
        X = BlockVector([np.ones((6, 5)), np.zeros((6, 5))])
        self.assertAlmostEqual(problem.value(X),
                               swapped.value(X.permuted([1, 0])))
        self.assertEqual(swapped.g[0].tag, problem.g[1].tag)

    def test_permuted_run(self):
        c0, c1 = np.array([1.0, -0.5]), np.array([0.3, 2.0, -1.5])

        def h_eval(X):
            return 0.5 * np.sum((X[0] - c0) ** 2) + np.sum((X[1] - c1) ** 2)

        def h_grad(i, X):
            return X[0] - c0 if i == 0 else 2.0 * (X[1] - c1)

        problem = BlockProblem(
            h_eval, h_grad,
            [ProxOracle.counting(0.05), ProxOracle.box_indicator(-1.0, 1.0)],
            2.0, [(2,), (3,)], name='separable')
        swapped = problem.permuted([1, 0])
        x0 = [np.array([3.0, 0.2]), np.array([0.5, -0.4, 0.9])]
        stop = StoppingRule(max_iter=20, **NO_EARLY_STOP)
        trace = run(problem, MetricSchedule.from_steps(
            [0.4, 0.4], problem.shapes), x0, stop=stop)
        other = run(swapped, MetricSchedule.from_steps(
            [0.4, 0.4], swapped.shapes), x0[::-1], stop=stop)
        self.assertEqual(len(trace), len(other))
        for rec, rec_p in zip(trace, other):
            self.assertAlmostEqual(rec.f_val, rec_p.f_val, places=12)
            self.assertAlmostEqual(rec.step_norm, rec_p.step_norm,
                                   places=12)
            np.testing.assert_allclose(rec_p.x[0], rec.x[1])
            np.testing.assert_allclose(rec_p.x[1], rec.x[0])

    def test_shape_mismatch(self):
        problem = make_quadratic([[1.0]], [0.0])
        schedule = MetricSchedule.from_steps([0.3], problem.shapes)
        self.assertRaises(KlDescentShapeError, run, problem, schedule,
                          [np.zeros(2)])

    def test_converges(self):
        problem = make_quadratic([[1.0]], [0.0])
        schedule = MetricSchedule.from_steps([0.9], problem.shapes)
        trace = run(problem, schedule, [np.array([1.0])])
        self.assertEqual(trace.status, CONVERGED)
        self.assertLess(abs(trace.final.x[0][0]), 1e-8)


class ScreeningTest(TestCase):

    def setUp(self):
        instance = generate_decomposition(6, 6, 1, 4, seed=0)
        self.problem = make_decomposition_problem(instance)
        self.x0 = initial_point(instance, radius=0.1)

    def test_alpha_not_above_L(self):
        schedule = MetricSchedule.from_steps([1.0, 1.0], self.problem.shapes)
        self.assertRaises(KlDescentScheduleError, run, self.problem,
                          schedule, self.x0)

    def test_override(self):
        schedule = MetricSchedule.from_steps([1.0, 1.0], self.problem.shapes)
        trace = run(self.problem, schedule, self.x0,
                    stop=StoppingRule(max_iter=5), hp_override=True)
        self.assertTrue(trace.meta['hp_override'])
        self.assertTrue(math.isnan(trace[1].a_k))

    def test_error_model_refused(self):
        schedule = MetricSchedule.from_steps([0.5, 0.5], self.problem.shapes)
        errors = ErrorModel(sigma=1.0, rho=0.5)
        self.assertRaises(KlDescentScheduleError, run, self.problem,
                          schedule, self.x0, error_model=errors)

    def test_divergence(self):

        def h_eval(X):
            x = X[0][0]
            return -0.5 * x ** 2 if abs(x) < 10.0 else math.inf

        problem = BlockProblem(h_eval, lambda i, X: -X[0],
                               [ProxOracle.zero()], 1.0, [(1,)])
        schedule = MetricSchedule.from_steps([0.5], problem.shapes)
        with self.assertRaises(KlDescentDivergenceError) as cm:
            run(problem, schedule, [np.array([1.0])])
        self.assertEqual(cm.exception.trace.status, DIVERGED)
        self.assertEqual(len(cm.exception.trace), 6)
        self.assertEqual(cm.exception.k, 6)


class InexactStepTest(TestCase):

    def test_disabled_errors_match_exact_step(self):
        instance = generate_decomposition(8, 7, 2, 5, seed=2)
        problem = make_decomposition_problem(instance)
        X0, Y0 = initial_point(instance, radius=0.1, seed=2)
        state = AfbState(BlockVector([X0, Y0]))
        metrics = MetricSchedule.from_steps(
            [0.5, 0.5], problem.shapes).metrics(0, state, 2)
        exact_state, exact = afb_step(problem, state, metrics)
        inexact_state, record, he_records = afbe_step(
            problem, state, metrics, ErrorModel.disabled(), 0)
        self.assertEqual(len(he_records), 2)
        for rec in he_records:
            self.assertEqual(np.linalg.norm(rec.r), 0.0)
            self.assertEqual(rec.S_norm, 0.0)
        self.assertAlmostEqual(record.f_val, exact.f_val)
        self.assertAlmostEqual(record.slope_norm, exact.slope_norm)
        for a, b in zip(inexact_state.X, exact_state.X):
            np.testing.assert_allclose(a, b)

    def test_error_robustness(self):
        instance = generate_decomposition(20, 20, 2, 10, seed=0)
        problem = make_decomposition_problem(instance)
        X0, Y0 = initial_point(instance, radius=1e-3, seed=0)
        errors = ErrorModel(sigma=0.1, rho=0.9,
                            mu=lambda k: 1e-3 * 2.0 ** -k, seed=0)
        trace = run(problem,
                    MetricSchedule.from_steps([0.5, 0.5], problem.shapes),
                    [X0, Y0], error_model=errors,
                    stop=StoppingRule(max_iter=500))
        self.assertLessEqual(trace.final.slope_norm, 1e-6)
        report = he_check(trace.he_log, 0.1, 0.9)
        self.assertTrue(report.passed)
        self.assertEqual(report.violations, [])
        r_sums, s_sums = error_partial_sums(trace)
        window = min(10, r_sums.size - 1)
        self.assertLess(r_sums[-1] - r_sums[-1 - window], 1e-10)
        self.assertLess(s_sums[-1] - s_sums[-1 - window], 1e-10)

    def test_counting_counterexample(self):
        problem = make_counting_problem(1.0)

        def s_gen(i, k, rng, shape):
            return np.full(shape, 1.0 / k)

        errors = ErrorModel(r_gen=lambda i, k, rng, shape: np.zeros(shape),
                            s_gen=s_gen, rescale=False)
        trace = run(problem, MetricSchedule.from_steps([0.5],
                                                       problem.shapes),
                    [np.zeros(1)], error_model=errors,
                    stop=StoppingRule(max_iter=50, **NO_EARLY_STOP))
        self.assertEqual(len(trace), 51)
        for rec in trace[1:]:
            self.assertEqual(rec.f_val, 0.0)
            self.assertEqual(rec.f_x, 1.0)
            self.assertEqual(rec.x[0][0], 1.0 / rec.k)

    def test_fast_contraction_keeps_error_conditions(self):
        # y contracts by a factor 10 per step, so implicit errors committed
        # against the current step would overshoot the next one
        problem = make_quadratic(np.eye(2), [0.0, 0.0])
        trace = run(problem, MetricSchedule.from_steps([0.9],
                                                       problem.shapes),
                    [np.array([1.0, -2.0])],
                    error_model=ErrorModel(sigma=0.05, rho=1.0),
                    stop=StoppingRule(max_iter=30))
        report = he_check(trace.he_log, 0.05, 1.0)
        self.assertTrue(report.passed, report.violations)
        self.assertEqual(trace.meta['he_slack'], [])

    def test_slack_recorded(self):
        problem = make_counting_problem(1.0)
        errors = ErrorModel(
            r_gen=lambda i, k, rng, shape: np.zeros(shape),
            s_gen=lambda i, k, rng, shape: np.full(shape, 1.0 / k),
            rescale=False)
        trace = run(problem, MetricSchedule.from_steps([0.5],
                                                       problem.shapes),
                    [np.zeros(1)], error_model=errors,
                    stop=StoppingRule(max_iter=5, **NO_EARLY_STOP))
        self.assertTrue(trace.meta['he_slack'])
        self.assertEqual({v['condition'] for v in trace.meta['he_slack']},
                         {'HE1'})

    def test_he_violations(self):
        metric = SpdOperator.scaled_identity(1.0, 1)
        report = he_check([HeRecord(0, 0, [1.0], [0.0], 0.0, [0.1], metric,
                                    0.0)], sigma=0.1, rho=0.9)
        self.assertFalse(report.passed)
        self.assertEqual(report.status('HE1'), 'pass')
        self.assertEqual(report.status('HE2'), 'fail')
        self.assertEqual(report.status('HE3'), 'fail')

    def test_he_check_needs_records(self):
        self.assertRaises(KlDescentDataError, he_check, [], 0.1, 0.9)

    def test_mu_sequences(self):
        self.assertEqual(ErrorModel(mu=[1.0, 0.5]).mu_k(5), 0.5)
        self.assertEqual(ErrorModel(mu=0.2).mu_k(3), 0.2)
        self.assertEqual(ErrorModel(mu=lambda k: k).mu_k(3), 3.0)
