from unittest import TestCase
import numpy as np
from kldescent.base import PASS, FAIL
from kldescent.metric_ops import SpdOperator, ProxOracle
from kldescent.lm_newton import (
    LmConfig, generalized_hessian_sample, lm_metric, metric_projector,
    projected_newton_step, lm_schedule_check, run_lm, ANALYTIC,
    FINITE_DIFFERENCE, USER_ELEMENT)
from kldescent.problems import (
    make_quadratic, make_double_well, quadratic_minimizer)
from kldescent.descent_monitor import check_H1, check_H2
from kldescent.traces import CONVERGED
from kldescent.exceptions import (
    KlDescentDomainError, KlDescentScheduleError, KlDescentShapeError)

Q = np.diag([2.0, 8.0])
B = np.array([2.0, 8.0])
C = ([[1.0, 1.0]], [1.0])


class HessianSampleTest(TestCase):

    def test_finite_difference(self):
        M = np.array([[3.0, 1.0], [1.0, 2.0]])
        H = generalized_hessian_sample(lambda x: M @ x, [0.3, -0.7],
                                       mode=FINITE_DIFFERENCE)
        np.testing.assert_allclose(H, M, atol=1e-6)

    def test_symmetrized_element(self):
        H = generalized_hessian_sample(None, [0.0, 0.0], mode=USER_ELEMENT,
                                       element=[[1.0, 2.0], [0.0, 1.0]])
        np.testing.assert_allclose(H, [[1.0, 1.0], [1.0, 1.0]])

    def test_analytic(self):
        H = generalized_hessian_sample(None, [1.0], mode=ANALYTIC,
                                       hessian=make_double_well().h_hessian)
        np.testing.assert_allclose(H, [[2.0]])
        self.assertRaises(KlDescentDomainError, generalized_hessian_sample,
                          None, [1.0], mode=ANALYTIC)

    def test_shape_mismatch(self):
        self.assertRaises(KlDescentShapeError, generalized_hessian_sample,
                          None, [0.0, 0.0], mode=USER_ELEMENT,
                          element=np.eye(3))

    def test_step_underflow(self):
        self.assertRaises(KlDescentDomainError, generalized_hessian_sample,
                          lambda x: x, [1e20], mode=FINITE_DIFFERENCE,
                          h_fd=1.0)


class MetricTest(TestCase):

    def test_lm_metric(self):
        A = lm_metric(np.diag([-1.0, 2.0]), 0.5)
        np.testing.assert_allclose(A.matrix, np.diag([0.5, 2.5]))
        self.assertAlmostEqual(A.alpha, 0.5)
        self.assertRaises(KlDescentDomainError, lm_metric, np.eye(2), 0.0)

    def test_one_newton_step_to_kkt_point(self):
        projector = metric_projector(ProxOracle.affine_indicator(*C))
        x = projected_newton_step(np.zeros(2), -B, SpdOperator(Q), 1.0,
                                  projector=projector)
        np.testing.assert_allclose(x, [0.2, 0.8], atol=1e-12)

    def test_unconstrained_step(self):
        x = projected_newton_step(np.zeros(2), -B, SpdOperator(Q), 0.5)
        np.testing.assert_allclose(x, [0.5, 0.5])


class ScheduleCheckTest(TestCase):

    def test_feasible(self):
        report = lm_schedule_check(np.full(100, 0.9), 10.0, 11.0)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.details['epsilon_over_L'], 10.0 / 11.0)

    def test_bound(self):
        report = lm_schedule_check(np.full(100, 1.0), 10.0, 11.0)
        self.assertEqual(report.status('bound'), FAIL)
        self.assertEqual(report.status('non_l1'), PASS)

    def test_summable(self):
        k = np.arange(1, 201, dtype=float)
        report = lm_schedule_check(0.5 * k ** -2, 10.0, 11.0)
        self.assertEqual(report.status('bound'), PASS)
        self.assertEqual(report.status('non_l1'), FAIL)

    def test_unbounded_ratio(self):
        lambdas = np.full(50, 0.5)
        lambdas[20] = 0.5e-4
        report = lm_schedule_check(lambdas, 10.0, 11.0)
        self.assertEqual(report.status('ratio'), FAIL)
        self.assertEqual(report.item('ratio').witness, [20])

    def test_config(self):
        config = LmConfig(epsilon=1.0, lambdas=[0.1, 0.05])
        self.assertEqual(config.lambda_k(10), 0.05)
        self.assertEqual(config.lambda_bar, 0.1)
        self.assertRaises(KlDescentDomainError, LmConfig, epsilon=1.0)
        self.assertRaises(KlDescentDomainError, LmConfig, epsilon=0.0,
                          lambdas=0.1)
        self.assertRaises(KlDescentDomainError, LmConfig, epsilon=1.0,
                          lambdas=0.1, hessian_mode=USER_ELEMENT)


class ProjectedNewtonTest(TestCase):

    def test_pure_newton_one_step(self):
        problem = make_quadratic(Q, B, C=C)
        kkt = quadratic_minimizer(Q, B, C=C)
        np.testing.assert_allclose(kkt, [0.2, 0.8], atol=1e-12)
        trace = run_lm(problem, LmConfig(pure_newton=True), np.zeros(2))
        self.assertTrue(trace.meta['lm']['projected_start'])
        self.assertTrue(trace.meta['lm']['diagnostic'])
        self.assertLessEqual(np.linalg.norm(trace[1].x[0] - kkt), 1e-10)
        self.assertEqual(trace.status, CONVERGED)

    def test_double_well(self):
        config = LmConfig(epsilon=10.0, lambdas=0.9)
        trace = run_lm(make_double_well(), config, [0.5])
        self.assertEqual(trace.status, CONVERGED)
        self.assertAlmostEqual(trace.final.x[0][0], 1.0, places=8)
        self.assertTrue(check_H1(trace).passed)

    def test_descent_hypotheses(self):
        config = LmConfig(epsilon=10.0, lambdas=0.9)
        for problem, x0 in ((make_double_well(), [0.5]),
                            (make_double_well(), [-0.3]),
                            (make_quadratic(Q, B, C=C), [1.0, 0.0])):
            trace = run_lm(problem, config, x0)
            self.assertTrue(check_H1(trace).passed, problem.name)
            self.assertTrue(check_H2(trace).passed, problem.name)

    def test_finite_difference_mode(self):
        config = LmConfig(epsilon=10.0, lambdas=0.9,
                          hessian_mode=FINITE_DIFFERENCE)
        trace = run_lm(make_double_well(), config, [0.5])
        self.assertAlmostEqual(trace.final.x[0][0], 1.0, places=8)

    def test_refuses_long_steps(self):
        config = LmConfig(epsilon=10.0, lambdas=1.0)
        self.assertRaises(KlDescentScheduleError, run_lm, make_double_well(),
                          config, [0.5])

    def test_multi_block_refused(self):
        from kldescent.problems import (
            generate_decomposition, make_decomposition_problem)
        problem = make_decomposition_problem(
            generate_decomposition(3, 3, 1, 1))
        self.assertRaises(KlDescentDomainError, run_lm, problem,
                          LmConfig(epsilon=1.0, lambdas=0.1), np.zeros(9))
