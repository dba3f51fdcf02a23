"""
Test cases for rispls.stage1 and rispls.stage2.
"""

import math
from unittest import TestCase

import numpy as np

from rispls.errors import ConfigurationError
from rispls.hetgraph import build_stage1
from rispls.numerics import ComplexPair, DiffTensor, ModelParams
from rispls.stage1 import Stage1Params, phase_output, run_stage1
from rispls.stage2 import (
    _mix,
    hybrid_directions,
    project_power,
    scale_powers,
    zf_rows,
)

from .support import random_batch, tiny_model_config


def unit_directions(h, f, alpha, beta):
    w, z = hybrid_directions(
        ComplexPair.from_numpy(h),
        ComplexPair.from_numpy(f),
        DiffTensor(alpha),
        DiffTensor(beta),
    )
    return w.numpy(), z.numpy()


class Stage1(TestCase):
    """Phase shifts and embeddings."""

    def setUp(self):
        self.rng = np.random.default_rng(12)
        self.ch = random_batch(self.rng, 3, 4, 5, 2, 2)

    def create(self, cfg):
        return Stage1Params.create(ModelParams(), 4, cfg, self.rng)

    def test_shapes(self):
        p = self.create(tiny_model_config())
        out = run_stage1(build_stage1(self.ch), p)
        self.assertEqual((3, 5), out.phi.shape)
        self.assertEqual((15, 16), out.ris.shape)
        self.assertEqual((6, 16), out.lu.shape)
        self.assertEqual((6, 16), out.eve.shape)
        self.assertTrue(np.all(out.phi.values >= 0))
        self.assertTrue(np.all(out.phi.values < 2 * math.pi))

    def test_narrow_residual(self):
        """A layer narrower than its residual inputs is rejected."""
        cfg = tiny_model_config(stage1_layers=((1, 2), (4, 4)))
        p = self.create(cfg)
        g = build_stage1(self.ch)
        with self.assertRaises(ConfigurationError):
            run_stage1(g, p)
        out = run_stage1(g, p, residual_on=False)
        self.assertEqual((6, 16), out.lu.shape)

    def test_single_receivers(self):
        """One LU and one Eve have no same-type neighbors."""
        ch = random_batch(self.rng, 2, 4, 3, 1, 1)
        out = run_stage1(build_stage1(ch), self.create(tiny_model_config()))
        self.assertTrue(np.all(np.isfinite(out.phi.values)))

    def test_saturated_phase(self):
        """A saturated sigmoid maps to phase zero, not 2 pi."""
        p = self.create(tiny_model_config())
        ris = DiffTensor(self.rng.standard_normal((1, 16)))
        row = ris.values - ris.values.mean()
        row = row / np.sqrt(np.mean(row**2) + 1e-12)
        hidden = row @ p.w3.values
        hidden = np.where(hidden > 0, hidden, 0.01 * hidden) @ p.w2.values
        hidden = np.where(hidden > 0, hidden, 0.01 * hidden)
        p.c1.values[:, 0] = 1e6 * hidden[0] / np.linalg.norm(hidden[0])
        phi = phase_output(ris, p, 1)
        self.assertEqual(0.0, phi.values[0, 0])


class Directions(TestCase):
    """Hybrid ZF / MRT directions."""

    def setUp(self):
        rng = np.random.default_rng(31)
        self.h = rng.standard_normal((4, 2, 4)) + 1j * rng.standard_normal(
            (4, 2, 4)
        )
        self.f = rng.standard_normal((4, 3, 4)) + 1j * rng.standard_normal(
            (4, 3, 4)
        )

    def test_zero_forcing(self):
        """With alpha = 1 every beam is orthogonal to the other LUs."""
        w, _ = unit_directions(
            self.h, self.f, np.ones((4, 2)), np.ones((4, 3))
        )
        for b in range(4):
            for k in range(2):
                for j in range(2):
                    if j == k:
                        continue
                    leak = abs(np.vdot(self.h[b, j], w[b, k]))
                    bound = 1e-8 * np.linalg.norm(self.h[b, j])
                    self.assertLess(leak, bound)

    def test_maximum_ratio(self):
        """With alpha = 0 every beam points along its own channel."""
        w, _ = unit_directions(
            self.h, self.f, np.zeros((4, 2)), np.zeros((4, 3))
        )
        for b in range(4):
            for k in range(2):
                cosine = abs(np.vdot(self.h[b, k], w[b, k])) / np.linalg.norm(
                    self.h[b, k]
                )
                self.assertGreater(cosine, 1 - 1e-10)

    def test_nulling(self):
        """With beta = 1 the AN is invisible to every LU."""
        _, z = unit_directions(
            self.h, self.f, np.ones((4, 2)), np.ones((4, 3))
        )
        for b in range(4):
            for m in range(3):
                for k in range(2):
                    self.assertLess(
                        abs(np.vdot(self.h[b, k], z[b, m])),
                        1e-8 * np.linalg.norm(self.h[b, k]),
                    )

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        w, z = unit_directions(
            self.h, self.f, rng.uniform(size=(4, 2)), rng.uniform(size=(4, 3))
        )
        np.testing.assert_allclose(1.0, np.linalg.norm(w, axis=-1), atol=1e-12)
        np.testing.assert_allclose(1.0, np.linalg.norm(z, axis=-1), atol=1e-12)

    def test_too_many_users(self):
        """Nulling needs room for K + 1 constraints."""
        h = np.ones((1, 4, 4), dtype=complex)
        f = np.ones((1, 1, 4), dtype=complex)
        with self.assertRaises(ConfigurationError):
            unit_directions(h, f, np.ones((1, 4)), np.ones((1, 1)))

    def test_ill_conditioned(self):
        """Parallel channels get a regularized inverse and a warning."""
        row = self.h[0, 0]
        rows = ComplexPair.from_numpy(np.stack([row, 2 * row])[None])
        with self.assertLogs(level="WARNING"):
            out = zf_rows(rows)
        self.assertTrue(np.all(np.isfinite(out.numpy())))

    def test_cancelled_mix(self):
        """Opposite ZF and MRT directions fall back to MRT."""
        mrt = ComplexPair.from_numpy(self.h[:1])
        zf = ComplexPair.from_numpy(-self.h[:1])
        with self.assertLogs(level="WARNING"):
            out = _mix(zf, mrt, DiffTensor(np.full((1, 2), 0.5)))
        expected = self.h[0] / np.linalg.norm(self.h[0], axis=-1)[:, None]
        np.testing.assert_allclose(expected, out.numpy()[0], atol=1e-12)


class Power(TestCase):
    """Projection onto the power budget."""

    def test_project_power(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((2, 2, 3)) + 1j * rng.standard_normal(
            (2, 2, 3)
        )
        z = rng.standard_normal((2, 1, 3)) + 1j * rng.standard_normal(
            (2, 1, 3)
        )
        total = np.sum(np.abs(w) ** 2, axis=(1, 2)) + np.sum(
            np.abs(z) ** 2, axis=(1, 2)
        )
        p_max = np.array([total[0] / 2, total[1] * 2])
        pw, pz = project_power(
            ComplexPair.from_numpy(w), ComplexPair.from_numpy(z), p_max
        )
        after = np.sum(np.abs(pw.numpy()) ** 2, axis=(1, 2)) + np.sum(
            np.abs(pz.numpy()) ** 2, axis=(1, 2)
        )
        self.assertAlmostEqual(p_max[0], after[0])
        np.testing.assert_allclose(w[1], pw.numpy()[1])

    def test_scale_powers(self):
        powers = DiffTensor(np.array([[1.0, 3.0], [0.1, 0.2]]))
        out = scale_powers(powers, np.array([2.0, 2.0])).values
        np.testing.assert_allclose([[0.5, 1.5], [0.1, 0.2]], out)
