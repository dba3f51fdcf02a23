"""
Shared fixtures: a small model configuration and channel helpers.
"""

import numpy as np

from rispls.channel import ChannelBatch, ChannelRealization, ScenarioConfig
from rispls.model import ModelConfig


def tiny_model_config(**changes) -> ModelConfig:
    values = dict(
        lift_width=4,
        fal_heads=2,
        fal_width=2,
        stage1_layers=((4, 4), (4, 4)),
        phase_hidden=(6, 4),
        stage2_init_width=16,
        stage2_layers=((5, 4), (6, 4)),
        head_hidden=8,
    )
    values.update(changes)
    return ModelConfig(**values)


def scenario(**changes) -> ScenarioConfig:
    return ScenarioConfig(**changes)


def random_channel(
    rng: np.random.Generator,
    n_t: int,
    n_l: int,
    k: int,
    m: int,
    sigma2: float = 1.0,
    p_max: float = 1.0,
    p_c: float = 0.5,
) -> ChannelRealization:
    """Unit-scale CN(0, 1) channels, handy for metric checks."""

    def cn(*shape):
        return (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        ) / np.sqrt(2)

    return ChannelRealization(
        H=cn(n_l, n_t),
        h_b=cn(k, n_t),
        h_r=cn(k, n_l),
        f_b=cn(m, n_t),
        f_r=cn(m, n_l),
        sigma2=sigma2,
        sigma2_e=sigma2,
        p_max=p_max,
        p_c=p_c,
    )


def random_batch(rng, count, *dims, **kw) -> ChannelBatch:
    return ChannelBatch.from_realizations(
        [random_channel(rng, *dims, **kw) for _ in range(count)]
    )


def random_design_arrays(rng, count, n_t, n_l, k, m, power=1.0):
    """Random phases and vectors scaled to the given total power."""
    phi = rng.uniform(0, 2 * np.pi, size=(count, n_l))
    w = rng.standard_normal((count, k, n_t)) + 1j * rng.standard_normal(
        (count, k, n_t)
    )
    z = rng.standard_normal((count, m, n_t)) + 1j * rng.standard_normal(
        (count, m, n_t)
    )
    total = np.sum(np.abs(w) ** 2, axis=(1, 2)) + np.sum(
        np.abs(z) ** 2, axis=(1, 2)
    )
    scale = np.sqrt(power / total)[:, None, None]
    return phi, w * scale, z * scale
