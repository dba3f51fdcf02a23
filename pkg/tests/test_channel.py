"""
Test cases for rispls.channel.
"""

import math
from unittest import TestCase

import numpy as np

from rispls.channel import (
    ChannelBatch,
    ScenarioConfig,
    db_to_linear,
    dbm_to_watt,
    effective_csi,
    generate,
    path_gain,
    rayleigh,
    rician,
    steering_vector,
)
from rispls.errors import ConfigurationError, DimensionError
from rispls.numerics import abs2, check_gradients, mean, tensor

from .support import random_batch


class Scenario(TestCase):
    """Scenario configuration."""

    def test_conversions(self):
        """dB and dBm values are converted once."""
        cfg = ScenarioConfig()
        self.assertAlmostEqual(1.0, cfg.p_max_w)
        self.assertAlmostEqual(1e-11, cfg.sigma2_w, delta=1e-20)
        self.assertAlmostEqual(0.01, cfg.rho)
        self.assertAlmostEqual(10**0.3, cfg.rician_beta)
        self.assertEqual((4, 4, 2, 2), cfg.dims)
        self.assertAlmostEqual(1e-3, dbm_to_watt(0.0))

    def test_infinite_rician_factor(self):
        cfg = ScenarioConfig(rician_beta_db=math.inf)
        self.assertTrue(math.isinf(cfg.rician_beta))

    def test_invalid(self):
        """Counts below one and non-positive radii are rejected."""
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(k=0)
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(lu_radius=0)
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(p_c_watt=-1)

    def test_replace(self):
        cfg = ScenarioConfig().replace(l=6, p_max_dbm=20)
        self.assertEqual((4, 6, 2, 2), cfg.dims)
        self.assertAlmostEqual(0.1, cfg.p_max_w)

    def test_echo(self):
        """to_dict holds only constructor fields."""
        d = ScenarioConfig().to_dict()
        self.assertNotIn("p_max_w", d)
        self.assertEqual(ScenarioConfig(), ScenarioConfig(**d))


class Synthesis(TestCase):
    """Channel generation."""

    def test_shapes(self):
        ch = generate(ScenarioConfig(n_t=3, l=5, k=2, m=1), 4, seed=1)
        self.assertEqual(4, len(ch))
        self.assertEqual((3, 5, 2, 1), ch.dims)
        self.assertEqual((4, 5, 3), ch.H.shape)
        self.assertEqual((4, 2, 5), ch.h_r.shape)
        self.assertEqual((4, 1, 3), ch.f_b.shape)
        np.testing.assert_allclose(1.0, ch.p_max)

    def test_deterministic(self):
        """Same seed, same channels; another seed, other channels."""
        cfg = ScenarioConfig()
        a = generate(cfg, 3, seed=7)
        b = generate(cfg, 3, seed=7)
        c = generate(cfg, 3, seed=8)
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(a.f_r, b.f_r)
        self.assertFalse(np.array_equal(a.h_b, c.h_b))

    def test_prefix_stable(self):
        """Sample i does not depend on how many samples are drawn."""
        cfg = ScenarioConfig()
        a = generate(cfg, 2, seed=3)
        b = generate(cfg, 5, seed=3)
        np.testing.assert_array_equal(a.h_r, b.h_r[:2])

    def test_streams_independent(self):
        """Changing K leaves the Eve and RIS draws alone."""
        a = generate(ScenarioConfig(k=2), 2, seed=4)
        b = generate(ScenarioConfig(k=3), 2, seed=4)
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(a.f_b, b.f_b)
        np.testing.assert_array_equal(a.f_r, b.f_r)

    def test_steering_vector(self):
        v = steering_vector(6, 0.7)
        np.testing.assert_allclose(np.ones(6), np.abs(v))
        self.assertEqual(1.0, v[0])
        np.testing.assert_allclose(np.ones(3), steering_vector(3, 0.0))

    def test_broadside_half_wavelength(self):
        """Half-wavelength spacing at pi / 2 flips every other element."""
        np.testing.assert_allclose(
            [1.0, -1.0], steering_vector(2, math.pi / 2), atol=1e-12
        )

    def test_path_gain(self):
        self.assertAlmostEqual(0.1, path_gain(db_to_linear(-20), 1.0, 2.8))

    def test_rayleigh_variance(self):
        """Scaled Rayleigh entries have variance rho d^-alpha."""
        rho, d, alpha = db_to_linear(-20), 35.0, 3.5
        rng = np.random.default_rng(8)
        draws = path_gain(rho, d, alpha) * rayleigh(rng, 10**5)
        expected = rho * d**-alpha
        self.assertLess(abs(np.mean(np.abs(draws) ** 2) / expected - 1), 0.03)

    def test_pure_line_of_sight(self):
        los = steering_vector(4, 0.3)
        out = rician(np.random.default_rng(0), los, math.inf)
        np.testing.assert_array_equal(los, out)


class Batches(TestCase):
    """Batch manipulation."""

    def setUp(self):
        self.batch = random_batch(np.random.default_rng(2), 3, 2, 3, 2, 1)

    def test_select_and_repeat(self):
        """repeat() is sample-major."""
        rep = self.batch.repeat(2)
        self.assertEqual(6, len(rep))
        np.testing.assert_array_equal(rep.H[0], rep.H[1])
        np.testing.assert_array_equal(self.batch.H[1], rep.H[2])
        sel = self.batch.select([2, 0])
        np.testing.assert_array_equal(self.batch.h_b[2], sel.h_b[0])

    def test_with_power(self):
        np.testing.assert_array_equal(
            [2.0, 2.0, 2.0], self.batch.with_power(2.0).p_max
        )

    def test_mixed_dimensions(self):
        a = self.batch.realization(0)
        b = random_batch(np.random.default_rng(1), 1, 2, 3, 1, 1)
        with self.assertRaises(DimensionError):
            ChannelBatch.from_realizations([a, b.realization(0)])


class EffectiveCsi(TestCase):
    """h_b + H^H diag(e^{-j phi}) h_r."""

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(6)
        ch = random_batch(rng, 2, 3, 4, 2, 2)
        phi = rng.uniform(0, 2 * np.pi, (2, 4))
        h_eff, f_eff = effective_csi(ch, phi)
        for b in range(2):
            theta = np.diag(np.exp(-1j * phi[b]))
            cascade = ch.H[b].conj().T @ theta
            for k in range(2):
                np.testing.assert_allclose(
                    ch.h_b[b, k] + cascade @ ch.h_r[b, k],
                    h_eff.numpy()[b, k],
                    atol=1e-12,
                )
                np.testing.assert_allclose(
                    ch.f_b[b, k] + cascade @ ch.f_r[b, k],
                    f_eff.numpy()[b, k],
                    atol=1e-12,
                )

    def test_wrong_phase_shape(self):
        ch = random_batch(np.random.default_rng(0), 1, 2, 3, 1, 1)
        with self.assertRaises(DimensionError):
            effective_csi(ch, np.zeros((1, 2)))

    def test_phase_gradient(self):
        """Gradients with respect to the phases match central differences."""
        rng = np.random.default_rng(9)
        ch = random_batch(rng, 2, 3, 4, 2, 2)
        phi = tensor(rng.uniform(0, 2 * np.pi, (2, 4)), requires_grad=True)
        weights_h = rng.uniform(0.5, 1.5, (2, 2, 3))
        weights_f = rng.uniform(0.5, 1.5, (2, 2, 3))

        def fn():
            h_eff, f_eff = effective_csi(ch, phi)
            return mean(abs2(h_eff) * weights_h) + mean(
                abs2(f_eff) * weights_f
            )

        self.assertLess(check_gradients(fn, [phi]), 1e-5)
