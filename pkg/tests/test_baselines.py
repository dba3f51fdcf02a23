"""
Test cases for rispls.baselines.
"""

from unittest import TestCase

import numpy as np

from rispls.baselines import OracleConfig, gradient_oracle, random_mrt
from rispls.channel import ChannelBatch, ChannelRealization, effective_csi
from rispls.errors import ConfigurationError
from rispls.metrics import see

from .support import random_batch

QUICK = OracleConfig(restarts=2, steps=60, decay_every=20)


def single_user(gain: float) -> ChannelBatch:
    """One LU, no Eve, and a RIS whose reflected paths are all zero."""
    h = np.zeros(4, dtype=complex)
    h[0] = np.sqrt(gain / 2) * (1 + 1j)
    return ChannelBatch.from_realizations(
        [
            ChannelRealization(
                H=np.ones((1, 4)),
                h_b=h[None],
                h_r=np.zeros((1, 1)),
                f_b=np.zeros((0, 4)),
                f_r=np.zeros((0, 1)),
                sigma2=1.0,
                sigma2_e=1.0,
                p_max=1.0,
                p_c=0.5,
            )
        ]
    )


class Settings(TestCase):
    def test_invalid(self):
        for changes in (
            dict(restarts=0),
            dict(steps=0),
            dict(step_size=0),
            dict(decay=1.5),
            dict(decay_every=0),
        ):
            with self.assertRaises(ConfigurationError):
                OracleConfig(**changes)


class RandomMrt(TestCase):
    def test_full_power(self):
        rng = np.random.default_rng(0)
        ch = random_batch(rng, 5, 4, 3, 2, 1, p_max=2.0)
        design = random_mrt(ch, rng)
        np.testing.assert_allclose(2.0, design.power())
        self.assertTrue(np.all(design.feasible(ch.p_max)))

    def test_matched_filter(self):
        """A lone LU is served along its effective channel."""
        rng = np.random.default_rng(1)
        ch = random_batch(rng, 4, 4, 3, 1, 0)
        design = random_mrt(ch, rng)
        h, _ = effective_csi(ch, design.phi.values)
        h, w = h.numpy()[:, 0], design.w.numpy()[:, 0]
        cosine = np.abs(np.sum(np.conj(h) * w, axis=-1)) / (
            np.linalg.norm(h, axis=-1) * np.linalg.norm(w, axis=-1)
        )
        np.testing.assert_allclose(1.0, cosine, atol=1e-12)

    def test_crowded(self):
        """Without room to null the LUs the AN directions are random."""
        rng = np.random.default_rng(2)
        ch = random_batch(rng, 3, 2, 2, 2, 1)
        design = random_mrt(ch, rng)
        np.testing.assert_allclose(1.0, design.power())


class Oracle(TestCase):
    def setUp(self):
        self.ch = random_batch(np.random.default_rng(7), 6, 4, 3, 2, 1)

    def test_deterministic(self):
        _, a = gradient_oracle(self.ch, QUICK)
        _, b = gradient_oracle(self.ch, QUICK)
        np.testing.assert_array_equal(a, b)

    def test_grouping(self):
        """A sample's result does not depend on its batch neighbors."""
        _, whole = gradient_oracle(self.ch, QUICK)
        _, one = gradient_oracle(self.ch.select([3]), QUICK, sample_ids=[3])
        np.testing.assert_allclose(whole[3], one[0], rtol=1e-8)

    def test_more_restarts(self):
        """Extra restarts only add starting points."""
        _, few = gradient_oracle(self.ch, QUICK)
        more = OracleConfig(restarts=4, steps=60, decay_every=20)
        _, many = gradient_oracle(self.ch, more)
        self.assertTrue(np.all(many >= few - 1e-8 * np.abs(few)))

    def test_reported_value(self):
        """The returned SEE is the hard SEE of the returned design."""
        design, value = gradient_oracle(self.ch, QUICK)
        self.assertTrue(np.all(design.feasible(self.ch.p_max)))
        np.testing.assert_allclose(see(self.ch, design).see, value)

    def test_beats_random_mrt(self):
        cfg = OracleConfig(restarts=2, steps=200)
        _, value = gradient_oracle(self.ch, cfg)
        floor = see(self.ch, random_mrt(self.ch, np.random.default_rng(9)))
        self.assertGreater(np.mean(value >= floor.see), 0.8)
        self.assertGreater(np.mean(value), np.mean(floor.see))

    def test_vanishing_budget(self):
        ch = self.ch.with_power(1e-9)
        _, value = gradient_oracle(ch, QUICK)
        self.assertTrue(np.all(value < 1e-6))

    def test_single_user_power(self):
        """With one LU the best SEE comes from a line search over power."""
        gain = 10.0
        p = np.linspace(0.0, 1.0, 100001)
        best = np.max(np.log2(1 + gain * p) / (p + 0.5))
        _, value = gradient_oracle(single_user(gain), OracleConfig())
        self.assertGreater(value[0], 0.99 * best)
        self.assertLess(value[0], best * (1 + 1e-6))
