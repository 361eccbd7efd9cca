import math
import unittest

import numpy as np

from relay_rmt.exceptions import ConfigError
from relay_rmt.params import SystemConfig, Coefficients, validate_config,\
     derive_coefficients, nu_from_alpha, distortion_covariances


BASELINE = SystemConfig(K=50, M=10, N=100, mu=100.0, nu=100.0)


def random_config(rng):
    return SystemConfig(
        K=int(rng.integers(1, 200)), M=int(rng.integers(1, 64)),
        N=int(rng.integers(1, 200)),
        mu=10 ** rng.uniform(-2, 5), nu=10 ** rng.uniform(-2, 5),
        delta_t1=rng.uniform(0, 0.3), delta_r1=rng.uniform(0, 0.3),
        delta_t2=rng.uniform(0, 0.3), delta_r2=rng.uniform(0, 0.3))


class DeriveCoefficientsTestCase(unittest.TestCase):
    def test_baseline_without_impairments(self):
        coeffs = derive_coefficients(BASELINE)
        self.assertEqual(coeffs.beta, 5.0)
        self.assertEqual(coeffs.gamma, 10.0)
        self.assertAlmostEqual(coeffs.mu_tilde, 100.02, places=12)
        self.assertEqual(coeffs.B, 1.0)
        self.assertEqual(coeffs.f2, 0.0)
        self.assertEqual(coeffs.f4, 10000.0)
        self.assertEqual(coeffs.f3, 100.0)
        self.assertEqual(coeffs.f1, 100.0)
        self.assertEqual(coeffs.alpha_bar_c1, 1000.0)
        self.assertEqual(coeffs.alpha_bar_c2, 0.0)

    def test_mu_tilde_offset_is_one_over_k(self):
        coeffs = derive_coefficients(BASELINE)
        self.assertAlmostEqual(coeffs.mu_tilde - BASELINE.mu, 0.02, places=12)

    def test_baseline_with_impairments(self):
        coeffs = derive_coefficients(BASELINE.with_delta(0.08))
        self.assertAlmostEqual(coeffs.mu_tilde, 101.3, places=10)
        expected_B = 0.0064 * 101.3 * 100 * 50 * 10 + 1
        self.assertAlmostEqual(coeffs.B / expected_B, 1.0, places=12)
        self.assertGreater(coeffs.f2, 0.0)
        self.assertGreater(coeffs.alpha_bar_c2, 0.0)

    def test_defining_identity_and_bounds(self):
        rng = np.random.default_rng(1234)
        for _ in range(2000):
            coeffs = derive_coefficients(random_config(rng))
            np.testing.assert_allclose(coeffs.f1 * coeffs.f3,
                                       coeffs.f2 + coeffs.f4, rtol=1e-14)
            self.assertGreaterEqual(coeffs.B, 1.0)
            self.assertGreater(coeffs.f3, 0.0)
            self.assertGreater(coeffs.f4, 0.0)
            self.assertGreaterEqual(coeffs.f2, 0.0)
            self.assertGreaterEqual(coeffs.f1 * (1 + 1e-14),
                                    coeffs.f4 / coeffs.f3)

    def test_zero_impairments_are_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            coeffs = derive_coefficients(random_config(rng).with_delta(0.0))
            self.assertEqual(coeffs.B, 1.0)
            self.assertEqual(coeffs.f2, 0.0)
            self.assertEqual(coeffs.alpha_bar_c2, 0.0)

    def test_continuous_in_delta(self):
        base = BASELINE.with_delta(0.05)
        reference = derive_coefficients(base).to_dict()
        eps = 1e-8
        for name in ("delta_t1", "delta_r1", "delta_t2", "delta_r2"):
            moved = derive_coefficients(
                base.replace(**{name: getattr(base, name) + eps})).to_dict()
            for key, value in reference.items():
                scale = max(abs(value), 1.0)
                self.assertLess(abs(moved[key] - value) / scale, 1e-4,
                                "%s jumps when %s moves" % (key, name))

    def test_invalid_config_raises_with_violations(self):
        with self.assertRaises(ConfigError) as ctx:
            derive_coefficients(SystemConfig(mu=0.0, M=0))
        self.assertEqual(len(ctx.exception.violations), 2)
        self.assertIn("mu must be positive", str(ctx.exception))


class ValidateConfigTestCase(unittest.TestCase):
    def test_baseline_is_valid(self):
        self.assertEqual(validate_config(BASELINE), [])

    def test_mu_zero(self):
        violations = validate_config(BASELINE.replace(mu=0.0))
        self.assertEqual(len(violations), 1)
        self.assertIn("mu must be positive", violations[0])

    def test_negative_delta(self):
        violations = validate_config(BASELINE.replace(delta_t1=-0.1))
        self.assertEqual(len(violations), 1)
        self.assertIn("delta_t1", violations[0])
        self.assertIn("non-negative", violations[0])

    def test_counts(self):
        violations = validate_config(BASELINE.replace(K=0, N=2.5))
        self.assertEqual(len(violations), 2)
        self.assertTrue(violations[0].startswith("K"))
        self.assertTrue(violations[1].startswith("N"))

    def test_numpy_integers_are_counts(self):
        cfg = BASELINE.replace(K=np.int64(50), M=np.int32(10))
        self.assertEqual(validate_config(cfg), [])

    def test_non_positive_nu(self):
        self.assertIn("nu must be positive, got -1.0",
                      validate_config(BASELINE.replace(nu=-1.0)))

    def test_alpha_mode_needs_alpha(self):
        cfg = SystemConfig(nu_mode="from-alpha", nu=None)
        self.assertTrue(any(v.startswith("alpha") for v in validate_config(cfg)))

    def test_unknown_nu_mode(self):
        cfg = BASELINE.replace(nu_mode="guess")
        self.assertTrue(any(v.startswith("nu_mode") for v in validate_config(cfg)))


class RelayGainTestCase(unittest.TestCase):
    def test_from_alpha_overwrites_nu(self):
        cfg = SystemConfig(K=50, M=10, mu=100.0, nu=1.0, delta_t1=0.1,
                           nu_mode="from-alpha", alpha=1000.0)
        coeffs = derive_coefficients(cfg)
        self.assertAlmostEqual(cfg.nu * cfg.K * cfg.M * coeffs.mu_tilde,
                               1000.0, places=9)

    def test_from_alpha_keeps_agreeing_nu(self):
        nu = nu_from_alpha(500.0, 20, 8, 10.0, 0.05, 0.02)
        cfg = SystemConfig(K=20, M=8, mu=10.0, nu=nu, delta_t1=0.05,
                           delta_r1=0.02, nu_mode="from-alpha", alpha=500.0)
        self.assertEqual(cfg.nu, nu)

    def test_ideal_normalization(self):
        cfg = SystemConfig(K=50, M=10, mu=100.0, nu=None,
                           nu_mode="from-alpha-ideal", alpha=2.0)
        self.assertAlmostEqual(cfg.nu, 2.0 / (10 * (1 + 100.0 * 50)), places=15)

    def test_both_normalizations_agree_without_impairments(self):
        self.assertAlmostEqual(nu_from_alpha(3.0, 50, 10, 100.0),
                               nu_from_alpha(3.0, 50, 10, 100.0, ideal=True),
                               places=15)

    def test_replace_derives_nu_again(self):
        cfg = SystemConfig(nu_mode="from-alpha", nu=None, alpha=10.0)
        louder = cfg.replace(mu=cfg.mu * 10)
        self.assertLess(louder.nu, cfg.nu)
        self.assertAlmostEqual(
            louder.nu, nu_from_alpha(10.0, cfg.K, cfg.M, louder.mu), places=15)

    def test_rho(self):
        self.assertEqual(BASELINE.rho, 5000.0)
        self.assertEqual(BASELINE.dims, (50, 10, 100))


class DistortionCovariancesTestCase(unittest.TestCase):
    def test_variances(self):
        cfg = BASELINE.replace(delta_t1=0.1, delta_r1=0.2, delta_t2=0.3,
                           delta_r2=0.4)
        noise = distortion_covariances(cfg)
        coeffs = derive_coefficients(cfg)
        q2 = coeffs.mu_tilde * cfg.nu * cfg.K
        self.assertAlmostEqual(noise.eta_t1, 0.01 * cfg.mu)
        self.assertAlmostEqual(noise.eta_r1, 0.04 * cfg.rho)
        self.assertAlmostEqual(noise.q2, q2)
        self.assertAlmostEqual(noise.eta_t2 / (0.09 * q2), 1.0, places=12)
        self.assertAlmostEqual(noise.eta_r2 / (0.16 * q2 * cfg.M), 1.0,
                               places=12)
        self.assertAlmostEqual(noise.relay_power / (q2 * cfg.M), 1.0,
                               places=12)

    def test_b_matches_receiver_distortion(self):
        cfg = BASELINE.with_delta(0.08)
        noise = distortion_covariances(cfg)
        self.assertTrue(math.isclose(derive_coefficients(cfg).B,
                                     noise.eta_r2 + 1.0, rel_tol=1e-12))


if __name__ == '__main__':
    unittest.main()
