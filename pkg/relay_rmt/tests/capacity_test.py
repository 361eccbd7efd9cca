import json
import math
import unittest

import numpy as np

from relay_rmt import capacity, freeprob
from relay_rmt.capacity import CapacityResult
from relay_rmt.constants import LN2, MASS_TOLERANCE
from relay_rmt.exceptions import ConfigError, DomainError, NumericalError,\
     NormalizationWarning
from relay_rmt.freeprob import SpectralDensity
from relay_rmt.montecarlo import sample_channel_pair
from relay_rmt.params import SystemConfig, derive_coefficients

BASELINE = SystemConfig(K=50, M=10, N=100, mu=100.0, nu=100.0)
SMALL = SystemConfig(K=8, M=4, N=12, mu=5.0, nu=2.0, delta_t1=0.05,
                     delta_r1=0.05, delta_t2=0.05, delta_r2=0.05)


def random_config(rng):
    K, M, N = (int(v) for v in rng.integers(1, 7, size=3))
    mu, nu = rng.uniform(0.5, 5.0, size=2)
    deltas = rng.uniform(0.0, 0.2, size=4)
    if rng.random() < 0.3:
        deltas[0] = 0.0
    return SystemConfig(K=K, M=M, N=N, mu=float(mu), nu=float(nu),
                        delta_t1=float(deltas[0]), delta_r1=float(deltas[1]),
                        delta_t2=float(deltas[2]), delta_r2=float(deltas[3]))


class ShannonIntegralTestCase(unittest.TestCase):
    def test_point_mass(self):
        density = SpectralDensity.point_mass(2.0)
        self.assertAlmostEqual(capacity.shannon_integral(density, 3.0),
                               math.log(7.0), places=14)

    def test_zero_scale(self):
        self.assertEqual(
            capacity.shannon_integral(SpectralDensity.from_mp(5.0), 0.0), 0.0)
        with self.assertRaises(DomainError):
            capacity.shannon_integral(SpectralDensity.from_mp(5.0), -1.0)

    def test_matches_closed_form(self):
        for ratio in (0.5, 5.0):
            for scale in (0.1, 2.0, 1000.0):
                self.assertAlmostEqual(
                    capacity.shannon_integral(SpectralDensity.from_mp(ratio), scale),
                    freeprob.mp_shannon(scale, ratio), delta=1e-7)

    def test_renormalizes_and_warns(self):
        density = SpectralDensity(grid=[0.0, 1.0], values=[0.995, 0.995],
                                  support=(0.0, 1.0))
        with self.assertWarns(NormalizationWarning):
            value = capacity.shannon_integral(density, 1.0)
        self.assertAlmostEqual(value, 0.5 * math.log(2.0), places=14)

    def test_rejects_large_mass_defect(self):
        density = SpectralDensity(grid=[0.0, 1.0], values=[0.5, 0.5],
                                  support=(0.0, 1.0))
        with self.assertRaises(NumericalError):
            capacity.shannon_integral(density, 1.0)


class LogdetTestCase(unittest.TestCase):
    def test_silent_first_hop(self):
        coeffs = derive_coefficients(SMALL)
        pair = sample_channel_pair(SMALL.dims, 0)
        self.assertEqual(capacity.logdet_capacity_sample(
            np.zeros_like(pair.H1), pair.H2, coeffs), 0.0)

    def test_two_forms_agree(self):
        rng = np.random.default_rng(2024)
        for trial in range(100):
            cfg = random_config(rng)
            coeffs = derive_coefficients(cfg)
            pair = sample_channel_pair(cfg.dims, 17, trial)
            signal, noise = capacity._logdet_pair(pair.H1, pair.H2, coeffs)
            c1, c2 = capacity.logdet_capacity_terms(pair.H1, pair.H2, coeffs)
            self.assertAlmostEqual(c1, signal, delta=1e-10 * max(1.0, abs(signal)))
            self.assertAlmostEqual(c2, noise, delta=1e-10 * max(1.0, abs(noise)))
            self.assertGreaterEqual(
                capacity.logdet_capacity_sample(pair.H1, pair.H2, coeffs), -1e-12)

    def test_shape_mismatch(self):
        coeffs = derive_coefficients(SMALL)
        with self.assertRaises(DomainError):
            capacity.logdet_capacity_sample(np.ones((3, 2)), np.ones((4, 5)), coeffs)


class AsymptoticCapacityTestCase(unittest.TestCase):
    def test_second_term_without_impairments_is_closed_form(self):
        result, densities = capacity.asymptotic_capacity(
            BASELINE, return_densities=True)
        coeffs = derive_coefficients(BASELINE)
        self.assertEqual(result.method, "asymptotic")
        self.assertIsNotNone(densities[1].edge_form)
        self.assertAlmostEqual(
            result.c2, freeprob.mp_shannon(coeffs.f3 * BASELINE.M, coeffs.gamma)
            / coeffs.gamma, delta=1e-7)
        self.assertGreater(result.c1, result.c2)
        self.assertLess(result.quadrature_defect, MASS_TOLERANCE)

    def test_increases_with_user_power(self):
        values = [capacity.asymptotic_capacity(BASELINE.replace(mu=mu), points=1024).c
                  for mu in (1.0, 10.0, 100.0)]
        self.assertTrue(values[0] < values[1] < values[2], values)

    def test_impairments_reduce_capacity(self):
        clean = capacity.asymptotic_capacity(BASELINE, points=1024).c
        impaired = capacity.asymptotic_capacity(BASELINE.with_delta(0.08),
                                                points=1024).c
        self.assertLess(impaired, clean)
        self.assertGreater(impaired, 0.0)

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            capacity.asymptotic_capacity(SystemConfig(mu=-1.0))


class MonteCarloCapacityTestCase(unittest.TestCase):
    def test_deterministic(self):
        first = capacity.mc_ergodic_capacity(SMALL, 20, seed=3)
        second = capacity.mc_ergodic_capacity(SMALL, 20, seed=3)
        self.assertEqual(first, second)
        self.assertEqual(first.method, "montecarlo")
        self.assertEqual(first.trials, 20)

    def test_jobs_do_not_change_result(self):
        serial = capacity.mc_ergodic_capacity(SMALL, 30, seed=4)
        threaded = capacity.mc_ergodic_capacity(SMALL, 30, seed=4, jobs=4)
        self.assertEqual(serial.c1, threaded.c1)
        self.assertEqual(serial.c2, threaded.c2)
        self.assertEqual(serial.ci_halfwidth, threaded.ci_halfwidth)

    def test_single_trial(self):
        with self.assertLogs("relay_rmt.capacity", level="WARNING"):
            result = capacity.mc_ergodic_capacity(SMALL, 1)
        self.assertIsNone(result.ci_halfwidth)
        self.assertTrue(math.isfinite(result.c))

    def test_bad_trials(self):
        for trials in (0, -3, 2.5):
            with self.assertRaises(ConfigError):
                capacity.mc_ergodic_capacity(SMALL, trials)

    def test_interval_shrinks_with_trials(self):
        short = capacity.mc_ergodic_capacity(SMALL, 200, seed=5)
        long = capacity.mc_ergodic_capacity(SMALL, 400, seed=5)
        ratio = long.ci_halfwidth / short.ci_halfwidth
        self.assertAlmostEqual(ratio / (1.0 / math.sqrt(2.0)), 1.0, delta=0.2)

    def test_terms_match_m_by_m_form(self):
        coeffs = derive_coefficients(SMALL)
        result = capacity.mc_ergodic_capacity(SMALL, 5, seed=6)
        terms = []
        for trial in range(5):
            pair = sample_channel_pair(SMALL.dims, 6, trial)
            terms.append(capacity.logdet_capacity_terms(pair.H1, pair.H2, coeffs))
        terms = np.array(terms)
        self.assertAlmostEqual(result.c1, terms[:, 0].mean(), places=10)
        self.assertAlmostEqual(result.c2, terms[:, 1].mean(), places=10)


class CapacityResultTestCase(unittest.TestCase):
    result = CapacityResult(c1=3.0, c2=1.0, method="montecarlo", trials=10,
                            ci_halfwidth=0.5)

    def test_units(self):
        bits = self.result.in_units("bits")
        self.assertEqual(bits.units, "bits")
        self.assertAlmostEqual(bits.c, 2.0 / LN2)
        self.assertAlmostEqual(bits.ci_halfwidth, 0.5 / LN2)
        self.assertAlmostEqual(bits.in_units("nats").c, 2.0)
        self.assertIs(self.result.in_units("nats"), self.result)
        with self.assertRaises(DomainError):
            self.result.in_units("bans")

    def test_json(self):
        data = json.loads(self.result.to_json())
        self.assertEqual(data["c"], 2.0)
        self.assertIsNone(data["quadrature_defect"])
        self.assertEqual(data["units"], "nats")


if __name__ == '__main__':
    unittest.main()
