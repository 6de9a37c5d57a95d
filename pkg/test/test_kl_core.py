import math
from unittest import TestCase, mock
import numpy as np
from kldescent.kl_core import (
    Desingularizer, KLRegion, kl_check, phi_primitive, primitive_inverse,
    phi_tilde, power_exponent_for_potential)
from kldescent.exceptions import (
    KlDescentDomainError, KlDescentRegionEmptyError)


def power_oracles(q):

    def f(x):
        return float(np.sum(np.abs(x)) ** q)

    def slope(x):
        a = float(np.sum(np.abs(x)))
        return q * a ** (q - 1.0)

    return f, slope


class DesingularizerTest(TestCase):

    def test_power_values(self):
        d = Desingularizer.power(C=2.0, theta=0.5)
        self.assertAlmostEqual(d.value(4.0), 8.0)
        self.assertAlmostEqual(d.derivative(4.0), 1.0)
        self.assertEqual(d.value(0.0), 0.0)
        self.assertEqual(d.derivative(0.0), math.inf)

    def test_linear_derivative_at_zero(self):
        d = Desingularizer.power(C=1.0, theta=1.0)
        self.assertEqual(d.derivative(0.0), 1.0)

    def test_invalid_parameters(self):
        self.assertRaises(KlDescentDomainError, Desingularizer.power,
                          1.0, 0.0)
        self.assertRaises(KlDescentDomainError, Desingularizer.power,
                          1.0, 1.5)
        self.assertRaises(KlDescentDomainError, Desingularizer.power,
                          -1.0, 0.5)
        self.assertRaises(KlDescentDomainError, Desingularizer.general,
                          lambda t: t, None)

    def test_domain(self):
        d = Desingularizer.power(C=1.0, theta=0.5, eta=1.0)
        self.assertRaises(KlDescentDomainError, d.value, -0.1)
        self.assertRaises(KlDescentDomainError, d.value, 1.0)

    def test_potential_exponent(self):
        d = power_exponent_for_potential(4)
        self.assertAlmostEqual(d.C, 0.25)
        self.assertAlmostEqual(d.theta, 0.25)
        self.assertRaises(KlDescentDomainError, power_exponent_for_potential,
                          1.0)

    def test_power_concave(self):
        grid = np.linspace(1e-3, 5.0, 400)
        for theta in (0.25, 0.5, 0.75, 1.0):
            d = Desingularizer.power(C=1.5, theta=theta)
            values = np.array([d.value(t) for t in grid])
            slopes = np.array([d.derivative(t) for t in grid])
            # Uniform grid, so concavity is non-positive second differences
            self.assertTrue(np.all(np.diff(values, 2) <= 1e-12), theta)
            self.assertTrue(np.all(np.diff(slopes) <= 0.0), theta)
            self.assertTrue(np.all(slopes > 0.0), theta)

    def test_phi_tilde(self):
        d = Desingularizer.power(C=1.0, theta=1.0)
        self.assertAlmostEqual(phi_tilde(d, 0.04), 0.2)
        self.assertAlmostEqual(phi_tilde(d, 4.0), 4.0)


class PrimitiveTest(TestCase):

    def test_power_finiteness(self):
        for theta, finite in ((1.0, True), (0.75, True), (0.5, False),
                              (0.25, False)):
            _, finite_at_zero = phi_primitive(
                Desingularizer.power(C=1.0, theta=theta))
            self.assertEqual(finite_at_zero, finite, theta)

    def test_power_closed_form(self):
        primitive, _ = phi_primitive(Desingularizer.power(C=1.0,
                                                          theta=0.25))
        self.assertAlmostEqual(primitive(0.25), 4.0)
        primitive, _ = phi_primitive(Desingularizer.power(C=2.0, theta=0.5))
        self.assertAlmostEqual(primitive(math.e), -4.0)

    def test_general_finiteness(self):
        integrable = Desingularizer.general(
            lambda t: t ** 0.75 / 0.75, lambda t: t ** -0.25)
        self.assertTrue(phi_primitive(integrable)[1])
        singular = Desingularizer.general(
            lambda t: 4.0 * t ** 0.25, lambda t: t ** -0.75)
        self.assertFalse(phi_primitive(singular)[1])

    def test_general_matches_power_finiteness(self):
        # phi'^2 ~ t^(2 theta - 2) is integrable at 0 iff theta > 1/2,
        # including exponents just above the threshold
        for theta in (0.51, 0.55, 0.75, 0.5, 0.45):
            general = Desingularizer.general(
                lambda t, th=theta: t ** th / th,
                lambda t, th=theta: t ** (th - 1.0))
            power = Desingularizer.power(C=1.0, theta=theta)
            self.assertEqual(phi_primitive(general)[1],
                             phi_primitive(power)[1], theta)

    def test_primitive_derivative(self):
        h = 1e-4
        for d in (Desingularizer.power(C=1.0, theta=0.25),
                  Desingularizer.power(C=2.0, theta=0.5),
                  Desingularizer.power(C=0.5, theta=0.75),
                  Desingularizer.general(lambda t: t ** 0.75 / 0.75,
                                         lambda t: t ** -0.25)):
            primitive, _ = phi_primitive(d)
            for t in (0.2, 0.5, 0.8):
                slope = d.derivative(t) ** 2
                central = (primitive(t + h) - primitive(t - h)) / (2.0 * h)
                self.assertLessEqual(abs(central + slope),
                                     1e-6 * (1.0 + slope), (d, t))

    def test_inverse(self):
        for d in (Desingularizer.power(C=1.0, theta=0.25),
                  Desingularizer.power(C=0.5, theta=0.5),
                  Desingularizer.general(lambda t: 4.0 * t ** 0.25,
                                         lambda t: t ** -0.75)):
            primitive, _ = phi_primitive(d)
            inverse = primitive_inverse(d)
            self.assertAlmostEqual(inverse(primitive(0.2)), 0.2, places=6)


class KlCheckTest(TestCase):

    def test_power_potentials_pass(self):
        for q in (1.5, 2.0, 4.0):
            f, slope = power_oracles(q)
            region = KLRegion([0.0], 0.0, delta=1.0)
            d = Desingularizer.power(C=1.0 / q, theta=1.0 / q)
            report = kl_check(f, slope, region, d, samples=10000, seed=0)
            self.assertEqual(report.violations, 0, q)
            self.assertGreaterEqual(report.min_ratio, 1.0 - 1e-9)
            self.assertEqual(report.samples_accepted, 10000)

    def test_halved_exponent_violates(self):
        for q in (1.5, 2.0, 4.0):
            f, slope = power_oracles(q)
            region = KLRegion([0.0], 0.0, delta=2.0)
            d = Desingularizer.power(C=1.0 / q, theta=0.5 / q)
            report = kl_check(f, slope, region, d, samples=10000, seed=0)
            self.assertGreater(report.violations, 0, q)
            self.assertLess(report.min_ratio, 1.0)
            self.assertFalse(report.passed)

    def test_deterministic(self):
        f, slope = power_oracles(2.0)
        region = KLRegion([0.0, 0.0], 0.0, delta=1.0)
        d = Desingularizer.power(C=0.5, theta=0.5)
        first = kl_check(f, slope, region, d, samples=200, seed=3)
        second = kl_check(f, slope, region, d, samples=200, seed=3)
        self.assertEqual(first.min_ratio, second.min_ratio)

    @mock.patch('kldescent.kl_core.MAX_REJECTION_ATTEMPTS', 1000)
    def test_empty_band(self):
        region = KLRegion([0.0], 0.0, delta=1.0)
        d = Desingularizer.power(C=1.0, theta=0.5)
        self.assertRaises(KlDescentRegionEmptyError, kl_check,
                          lambda x: 0.0, lambda x: 1.0, region, d,
                          samples=10)

    def test_region_membership(self):
        region = KLRegion([0.0], 0.0, delta=1.0, eta=1.0)
        self.assertTrue(region.contains([0.5], 0.25))
        self.assertFalse(region.contains([0.5], 0.0))
        self.assertFalse(region.contains([1.5], 0.25))
        self.assertFalse(region.contains([0.5], 1.0))
        relaxed = KLRegion([0.0], 0.0, delta=1.0, strict=False)
        self.assertTrue(relaxed.contains([0.0], 0.0))
