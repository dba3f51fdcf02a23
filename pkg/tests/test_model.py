"""
Test cases for rispls.model.
"""

from dataclasses import replace
from functools import partial
from unittest import TestCase

import numpy as np

from rispls.channel import ScenarioConfig, generate
from rispls.dataset import make_dataset
from rispls.errors import ConfigurationError
from rispls.model import ModelConfig, TwoStageHGNN
from rispls.numerics import check_gradients
from rispls.stage2 import HEADS
from rispls.training import TrainConfig, train, validation_see

from .support import random_batch, tiny_model_config

DIMS = (4, 4, 2, 2)


def permuted(ch, ris=None, lu=None, eve=None):
    """The same scenario with nodes of one or more types relabeled."""
    H, h_b, h_r, f_b, f_r = ch.H, ch.h_b, ch.h_r, ch.f_b, ch.f_r
    if ris is not None:
        H, h_r, f_r = H[:, ris], h_r[:, :, ris], f_r[:, :, ris]
    if lu is not None:
        h_b, h_r = h_b[:, lu], h_r[:, lu]
    if eve is not None:
        f_b, f_r = f_b[:, eve], f_r[:, eve]
    return replace(ch, H=H, h_b=h_b, h_r=h_r, f_b=f_b, f_r=f_r)


class Configuration(TestCase):
    def test_default_widths(self):
        cfg = ModelConfig()
        self.assertEqual(480, cfg.fal_output)
        self.assertEqual(640, cfg.stage1_width)
        self.assertEqual(2560, cfg.stage2_width)
        cfg.validate(4)

    def test_stage_mismatch(self):
        """Stage 1 must end as wide as Stage 2 starts."""
        with self.assertRaises(ConfigurationError):
            ModelConfig(stage2_init_width=100)

    def test_narrow_layer(self):
        cfg = tiny_model_config(stage1_layers=((1, 2), (4, 4)))
        with self.assertRaises(ConfigurationError):
            TwoStageHGNN(4, cfg)

    def test_unknown_head(self):
        with self.assertRaises(ConfigurationError):
            TwoStageHGNN(4, tiny_model_config(), head="direct")

    def test_to_dict(self):
        d = tiny_model_config().to_dict()
        self.assertEqual([[4, 4], [4, 4]], d["stage1_layers"])
        self.assertEqual(tiny_model_config(), ModelConfig(**d))


class Forward(TestCase):
    """Outputs of both heads."""

    def setUp(self):
        self.ch = generate(ScenarioConfig(), 32, seed=5)

    def test_feasible(self):
        """Every design meets the power budget with phases in range."""
        for head in ("beam_direct", "model_based"):
            for seed in range(3):
                model = TwoStageHGNN(4, tiny_model_config(), head, seed)
                design = model(self.ch)
                self.assertTrue(np.all(design.feasible(self.ch.p_max)))
                self.assertEqual((32, 4), design.phi.shape)
                self.assertEqual((32, 2, 4), design.w.shape)
                self.assertEqual((32, 2, 4), design.z.shape)

    def test_low_budget(self):
        ch = self.ch.with_power(1e-3)
        for head in ("beam_direct", "model_based"):
            design = TwoStageHGNN(4, tiny_model_config(), head)(ch)
            self.assertTrue(np.all(design.feasible(ch.p_max)))

    def test_deterministic(self):
        a = TwoStageHGNN(4, tiny_model_config(), seed=3)(self.ch)
        b = TwoStageHGNN(4, tiny_model_config(), seed=3)(self.ch)
        np.testing.assert_array_equal(a.w.numpy(), b.w.numpy())

    def test_detached(self):
        design = TwoStageHGNN(4, tiny_model_config())(self.ch)
        self.assertFalse(design.phi.requires_grad)

    def test_single_stage(self):
        """Without Stage 1 the phases stay at zero."""
        model = TwoStageHGNN(4, tiny_model_config(), two_stage_on=False)
        self.assertIsNone(model.stage1)
        design = model(self.ch)
        np.testing.assert_array_equal(np.zeros((32, 4)), design.phi.values)
        self.assertTrue(np.all(design.feasible(self.ch.p_max)))
        full = TwoStageHGNN(4, tiny_model_config())
        self.assertLess(model.parameter_count(), full.parameter_count())

    def test_antenna_mismatch(self):
        model = TwoStageHGNN(3, tiny_model_config())
        with self.assertRaises(ConfigurationError):
            model(self.ch)


class Equivariance(TestCase):
    """Relabeling nodes relabels the outputs and nothing else."""

    def setUp(self):
        rng = np.random.default_rng(8)
        self.ch = random_batch(rng, 3, *DIMS)
        self.rng = rng

    def check(self, head):
        model = TwoStageHGNN(4, tiny_model_config(), head, seed=2)
        base = model(self.ch)
        ris = self.rng.permutation(4)
        lu = np.array([1, 0])
        eve = np.array([1, 0])

        out = model(permuted(self.ch, ris=ris))
        np.testing.assert_allclose(
            base.phi.values[:, ris], out.phi.values, atol=1e-9
        )
        np.testing.assert_allclose(base.w.numpy(), out.w.numpy(), atol=1e-9)

        out = model(permuted(self.ch, lu=lu))
        np.testing.assert_allclose(base.phi.values, out.phi.values, atol=1e-9)
        np.testing.assert_allclose(
            base.w.numpy()[:, lu], out.w.numpy(), atol=1e-9
        )
        np.testing.assert_allclose(base.z.numpy(), out.z.numpy(), atol=1e-9)

        out = model(permuted(self.ch, eve=eve))
        np.testing.assert_allclose(
            base.z.numpy()[:, eve], out.z.numpy(), atol=1e-9
        )
        np.testing.assert_allclose(base.w.numpy(), out.w.numpy(), atol=1e-9)

    def test_model_based(self):
        self.check("model_based")

    def test_beam_direct(self):
        self.check("beam_direct")


class Scalability(TestCase):
    """One set of parameters serves any L, K and M."""

    def test_other_sizes(self):
        model = TwoStageHGNN(4, tiny_model_config())
        count = model.parameter_count()
        rng = np.random.default_rng(1)
        for dims in ((4, 6, 3, 1), (4, 2, 1, 3), (4, 3, 1, 1)):
            ch = random_batch(rng, 2, *dims)
            design = model(ch)
            self.assertEqual((2, dims[1]), design.phi.shape)
            self.assertEqual((2, dims[2], 4), design.w.shape)
            self.assertEqual((2, dims[3], 4), design.z.shape)
            self.assertTrue(np.all(design.feasible(ch.p_max)))
        self.assertEqual(count, model.parameter_count())


class Gradients(TestCase):
    def test_loss_gradient(self):
        """
        Backpropagation through both stages matches central differences on
        every parameter tensor, over fifty random instances at (4, 4, 2, 2).
        """
        rng = np.random.default_rng(3)
        worst = 0.0
        for instance in range(50):
            ch = random_batch(rng, 1, *DIMS)
            model = TwoStageHGNN(
                4, tiny_model_config(), HEADS[instance % 2], seed=instance
            )
            tensors = [t for _, t in model.params.items()]
            error = check_gradients(
                partial(model.loss, ch), tensors, samples=1, rng=rng, refine=8
            )
            worst = max(worst, error)
        self.assertLess(worst, 1e-4)


class DefaultConfiguration(TestCase):
    """The full-width model the command line trains by default."""

    def setUp(self):
        self.ch = generate(ScenarioConfig(), 8, seed=1)

    def test_powers_live_at_init(self):
        """Every sample starts with power on every beamformer."""
        for seed in range(4):
            design = TwoStageHGNN(4, seed=seed)(self.ch)
            w_power = np.sum(np.abs(design.w.numpy()) ** 2, axis=-1)
            self.assertTrue(np.all(w_power > 0))
            self.assertTrue(np.all(design.feasible(self.ch.p_max)))

    def test_gradient_reaches_both_stages(self):
        for seed in range(3):
            model = TwoStageHGNN(4, seed=seed)
            loss = model.loss(self.ch)
            self.assertNotEqual(0.0, loss.item())
            loss.backward()
            for path in (
                "stage1.w1",
                "stage1.c1",
                "stage2.w4",
                "stage2.w5",
                "stage2.model_based.lu_out.weight",
                "stage2.model_based.eve_out.weight",
            ):
                grad = model.params[path].grad
                self.assertGreater(np.sum(np.abs(grad)), 0.0, path)

    def test_training_improves_validation(self):
        ds = make_dataset(ScenarioConfig(), 16, seed=1)
        cfg = TrainConfig(batch_size=8, epochs=2, gamma=1.0)
        initial = TwoStageHGNN(4, ModelConfig(), cfg.head, seed=cfg.seed)
        before = validation_see(initial, ds.channels, cfg.batch_size)
        report = train(cfg, ModelConfig(), ds, ds)
        self.assertGreater(report.best_val_see, before)
