import os.path
import shutil
import tempfile
from unittest import TestCase
import numpy as np
from kldescent.metric_ops import SpdOperator, prox_in_metric
from kldescent.afb_engine import MetricSchedule, StoppingRule, run
from kldescent.descent_monitor import (
    fit_rates, predict_rates, trace_schedules, criticality_certificate,
    FINITE_TERMINATION)
from kldescent.traces import CONVERGED
from kldescent.problems import (
    make_power_potential, make_abs_prox_problem, make_quadratic,
    quadratic_minimizer, make_double_well, DecompositionInstance,
    generate_decomposition, initial_point, aapm_step, run_aapm,
    recovery_report, capture_sweep, PROXIMAL, RECOVERED, NOT_APPLICABLE)
from kldescent.exceptions import (
    KlDescentConfigError, KlDescentConditioningError, KlDescentDataError,
    KlDescentDomainError, KlDescentUsageError)


class PowerPotentialTest(TestCase):

    def test_gradient_lipschitz(self):
        problem = make_power_potential(4)
        self.assertAlmostEqual(problem.L, 12.0)
        self.assertAlmostEqual(problem.meta['desingularizer'].theta, 0.25)
        np.testing.assert_allclose(
            problem.partial_gradient(0, problem.check_point([[0.5]])),
            [0.5])

    def test_gradient_mode_needs_q_2(self):
        self.assertRaises(KlDescentConfigError, make_power_potential, 1.5)

    def test_radial_prox(self):
        problem = make_power_potential(1.5, mode=PROXIMAL)
        y = prox_in_metric(problem.g[0], SpdOperator.scaled_identity(1.0, 1),
                           np.array([1.0]))
        self.assertAlmostEqual(y[0], 0.25, places=6)
        self.assertRaises(KlDescentDomainError, prox_in_metric,
                          problem.g[0], SpdOperator(np.diag([1.0, 2.0])),
                          np.ones(2))

    def test_polynomial_rate(self):
        """Values decay like k^(-1/(1-2 theta)) and iterates like
        k^(-theta/(1-2 theta)), i.e. -2 and -1/2 at theta = 1/4"""
        problem = make_power_potential(4)
        schedule = MetricSchedule.from_steps([0.9 / 12.0], problem.shapes)
        trace = run(problem, schedule, [np.array([1.0])],
                    stop=StoppingRule(max_iter=10000, tol_step=-1.0,
                                      tol_slope=-1.0))
        self.assertEqual(len(trace), 10001)
        values = fit_rates(trace.values, tail_fraction=0.9)
        self.assertAlmostEqual(values.poly_slope, -2.0, delta=0.4)
        iterates = fit_rates([abs(rec.x[0][0]) for rec in trace],
                             tail_fraction=0.9)
        self.assertAlmostEqual(iterates.poly_slope, -0.5, delta=0.125)


class AbsoluteValueTest(TestCase):

    def test_expected_steps(self):
        _, expected_steps = make_abs_prox_problem(0.3)
        self.assertEqual(expected_steps(1.0), 4)
        self.assertEqual(expected_steps(-0.6), 2)
        self.assertRaises(KlDescentDomainError, make_abs_prox_problem, 0.0)

    def test_finite_termination(self):
        problem, _ = make_abs_prox_problem(0.3)
        schedule = MetricSchedule.from_steps([0.3], problem.shapes)
        trace = run(problem, schedule, [np.array([1.0])])
        self.assertEqual(trace.status, CONVERGED)
        np.testing.assert_allclose(trace.values[:4], [1.0, 0.7, 0.4, 0.1])
        self.assertEqual(trace[4].f_val, 0.0)
        fit = fit_rates(trace.values)
        self.assertTrue(fit.finite_termination)
        self.assertEqual(fit.termination_index, 4)
        a, b, _ = trace_schedules(trace)
        prediction = predict_rates(problem.meta['desingularizer'], a, b)
        self.assertEqual(prediction.regime, FINITE_TERMINATION)


class QuadraticTest(TestCase):

    def test_kkt_point(self):
        x = quadratic_minimizer(np.diag([2.0, 8.0]), [2.0, 8.0],
                                C=([[1.0, 1.0]], [1.0]))
        np.testing.assert_allclose(x, [0.2, 0.8], atol=1e-12)

    def test_unconstrained(self):
        problem = make_quadratic(np.diag([1.0, 4.0]), [1.0, 4.0])
        np.testing.assert_allclose(problem.meta['x_star'][0], [1.0, 1.0])
        self.assertAlmostEqual(problem.meta['f_star'], -2.5)
        self.assertAlmostEqual(problem.L, 4.0)
        d = problem.meta['desingularizer']
        self.assertAlmostEqual(d.theta, 0.5)

    def test_singular_constraint(self):
        self.assertRaises(KlDescentConditioningError, quadratic_minimizer,
                          np.eye(2), [0.0, 0.0],
                          C=([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0]))

    def test_indefinite(self):
        self.assertRaises(KlDescentDomainError, make_quadratic,
                          np.diag([1.0, -1.0]), [0.0, 0.0])

    def test_double_well(self):
        problem = make_double_well()
        X = problem.check_point([[1.0]])
        self.assertEqual(problem.value(X), 0.0)
        np.testing.assert_allclose(problem.partial_gradient(0, X), [0.0])
        self.assertEqual(problem.L, 11.0)


class DecompositionInstanceTest(TestCase):

    def setUp(self):
        self.work_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.work_dir)

    def test_planted(self):
        instance = generate_decomposition(20, 20, 2, 10, seed=4)
        self.assertEqual(np.linalg.matrix_rank(instance.X_true), 2)
        self.assertEqual(np.count_nonzero(instance.Y_true), 10)
        np.testing.assert_allclose(instance.A,
                                   instance.X_true + instance.Y_true)
        smallest = np.min(np.abs(instance.Y_true[instance.Y_true != 0]))
        self.assertGreaterEqual(smallest,
                                10.0 * np.max(np.abs(instance.X_true)))

    def test_infeasible_bounds(self):
        self.assertRaises(KlDescentDomainError, generate_decomposition, 3, 3,
                          4, 1)
        self.assertRaises(KlDescentDomainError, generate_decomposition, 3, 3,
                          1, 10)

    def test_save_load(self):
        instance = generate_decomposition(4, 5, 1, 3, seed=2)
        path = os.path.join(self.work_dir, 'instance.txt')
        instance.save(path)
        loaded = DecompositionInstance.load(path)
        self.assertTrue(loaded.planted)
        self.assertEqual((loaded.r, loaded.s, loaded.seed), (1, 3, 2))
        np.testing.assert_array_equal(loaded.A, instance.A)
        np.testing.assert_array_equal(loaded.Y_true, instance.Y_true)

    def test_malformed(self):
        path = os.path.join(self.work_dir, 'bad.txt')
        with open(path, 'w') as f:
            f.write('m,n,r,s,seed,planted\n2,2,1,1,,0\n1,2\n3,4\n5,6\n')
        self.assertRaises(KlDescentDataError, DecompositionInstance.load,
                          path)
        with open(path, 'w') as f:
            f.write('not an instance\n')
        self.assertRaises(KlDescentDataError, DecompositionInstance.load,
                          path)
        self.assertRaises(KlDescentUsageError, DecompositionInstance.load,
                          os.path.join(self.work_dir, 'missing.txt'))


class AlternatingProjectionTest(TestCase):

    def test_recovery(self):
        instance = generate_decomposition(20, 20, 2, 10, seed=0)
        X0, Y0 = initial_point(instance, radius=1e-3, seed=0)
        self.assertLessEqual(np.linalg.matrix_rank(X0), 2)
        self.assertLessEqual(np.count_nonzero(Y0), 10)
        trace = run_aapm(instance, X0, Y0, lam=0.5, mu=0.5,
                         stop=StoppingRule(max_iter=500))
        values = np.asarray(trace.values)
        self.assertTrue(np.all(np.diff(values)
                               <= 1e-12 * (1.0 + values[:-1])))
        X, Y = trace.final.x
        metrics = recovery_report(instance, X, Y)
        self.assertEqual(metrics.status, RECOVERED)
        self.assertEqual(metrics.support_agreement, 1.0)
        certificate = criticality_certificate(trace)
        self.assertLessEqual(certificate.tail_sum, 1e-8)

    def test_capture_sweep(self):
        instance = generate_decomposition(10, 10, 1, 5, seed=1)
        results = capture_sweep(instance, [1e-4], stop=StoppingRule(
            max_iter=500))
        self.assertEqual(len(results), 1)
        self.assertEqual(results[0]['recovery']['status'], RECOVERED)

    def test_unplanted(self):
        instance = DecompositionInstance(np.ones((2, 2)), 1, 1)
        X0, Y0 = initial_point(instance, radius=0.1)
        np.testing.assert_array_equal(X0, np.zeros((2, 2)))
        metrics = recovery_report(instance, X0, Y0)
        self.assertEqual(metrics.status, NOT_APPLICABLE)
        self.assertAlmostEqual(metrics.residual, 2.0)
        self.assertRaises(KlDescentDomainError, capture_sweep, instance,
                          [0.1])

    def test_weights(self):
        instance = generate_decomposition(3, 3, 1, 1)
        X = np.zeros((3, 3))
        for w in (0.0, 1.5):
            self.assertRaises(KlDescentDomainError, aapm_step, instance, X, X,
                              w, 0.5)
