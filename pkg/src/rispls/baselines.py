"""
Reference designs: a projected gradient ascent oracle that provides the
SEE denominators for evaluation, and a random-phase MRT floor.
"""

import math
from dataclasses import dataclass

import numpy as np

from rispls.channel import ChannelBatch, as_batch, effective_csi
from rispls.errors import ConfigurationError
from rispls.metrics import TransmitDesign, link_rates
from rispls.numerics import (
    ComplexPair,
    DiffTensor,
    max_with_argmax,
    no_grad,
    sum,
)
from rispls.stage2 import hybrid_directions

TWO_PI = 2 * math.pi


@dataclass
class OracleConfig:
    restarts: int = 8
    steps: int = 1500
    step_size: float = 0.05
    decay: float = 0.5
    decay_every: int = 500
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.steps < 1:
            raise ConfigurationError(
                "The oracle needs at least one restart and one step"
            )
        if self.step_size <= 0 or not 0 < self.decay <= 1:
            raise ConfigurationError(
                "Oracle step size must be positive and decay in (0, 1]"
            )
        if self.decay_every < 1:
            raise ConfigurationError("decay_every must be at least 1")


def _random_unit(rng: np.random.Generator, shape) -> np.ndarray:
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_mrt(ch, rng: np.random.Generator) -> TransmitDesign:
    """
    Random phases, MRT beamformers and LU-nulling AN (random AN directions
    when N_T has no room to null every LU), with P_max split evenly over
    all K + M vectors.
    """
    ch = as_batch(ch)
    n_t, n_l, k, m = ch.dims
    samples = len(ch)
    phi = rng.uniform(0.0, TWO_PI, size=(samples, n_l))
    with no_grad():
        h_eff, f_eff = effective_csi(ch, phi)
        if k + 1 <= n_t or m == 0:
            w_bar, z_bar = hybrid_directions(
                h_eff,
                f_eff,
                DiffTensor(np.zeros((samples, k))),
                DiffTensor(np.ones((samples, m))),
            )
            w_dir, z_dir = w_bar.numpy(), z_bar.numpy()
        else:
            h = h_eff.numpy()
            w_dir = h / np.linalg.norm(h, axis=-1, keepdims=True)
            z_dir = _random_unit(rng, (samples, m, n_t))
    amplitude = np.sqrt(ch.p_max / max(k + m, 1))[:, None, None]
    return TransmitDesign.from_arrays(
        phi, amplitude * w_dir, amplitude * z_dir
    )


def _random_design(ch: ChannelBatch, rng: np.random.Generator):
    n_t, n_l, k, m = ch.dims
    samples = len(ch)
    phi = rng.uniform(0.0, TWO_PI, size=(samples, n_l))
    w = rng.standard_normal((samples, k, n_t)) + 1j * rng.standard_normal(
        (samples, k, n_t)
    )
    z = rng.standard_normal((samples, m, n_t)) + 1j * rng.standard_normal(
        (samples, m, n_t)
    )
    total = np.sum(np.abs(w) ** 2, axis=(1, 2)) + np.sum(
        np.abs(z) ** 2, axis=(1, 2)
    )
    scale = np.sqrt(ch.p_max / total)[:, None, None]
    return phi, w * scale, z * scale


def _objective(ch: ChannelBatch, design: TransmitDesign):
    """Unclamped SEE with gamma 1 (differentiable) and the hard SEE."""
    links = link_rates(ch, design)
    _, _, k, m = ch.dims
    gap = links.rate
    hard_gap = links.rate.values
    if m:
        worst, _ = max_with_argmax(links.leakage, axis=1)
        gap = gap - worst
        hard_gap = hard_gap - worst.values
    consumed = links.power + DiffTensor(ch.p_c)
    if k:
        soft = sum(gap, axis=-1) * (1.0 / consumed)
    else:
        soft = DiffTensor(np.zeros(len(ch)))
    hard = np.maximum(0.0, hard_gap).sum(axis=-1) / consumed.values
    return soft, hard


def _project(w: np.ndarray, z: np.ndarray, p_max: np.ndarray):
    total = np.sum(np.abs(w) ** 2, axis=(1, 2)) + np.sum(
        np.abs(z) ** 2, axis=(1, 2)
    )
    factor = np.sqrt(p_max / np.maximum(p_max, total))[:, None, None]
    return w * factor, z * factor


def _unit_step(*grads: np.ndarray) -> list[np.ndarray]:
    """Scale a group of per-row gradients to unit joint norm."""
    norm = np.sqrt(
        np.sum(
            [
                np.sum(np.abs(g) ** 2, axis=tuple(range(1, g.ndim)))
                for g in grads
            ],
            axis=0,
        )
    )
    norm = np.where(norm > 0, norm, 1.0)
    return [g / norm.reshape((-1,) + (1,) * (g.ndim - 1)) for g in grads]


def gradient_oracle(
    ch, cfg: OracleConfig | None = None, sample_ids=None
) -> tuple[TransmitDesign, np.ndarray]:
    """
    Best design found by projected gradient ascent from cfg.restarts
    starting points per sample, and its hard-clamped SEE. Sample i draws
    its starting points from a stream keyed by (cfg.seed, sample_ids[i]),
    so results do not depend on how samples are grouped into calls.
    """
    cfg = cfg if cfg is not None else OracleConfig()
    ch = as_batch(ch)
    n_t, n_l, k, m = ch.dims
    samples = len(ch)
    restarts = cfg.restarts
    if sample_ids is None:
        sample_ids = np.arange(samples)

    # Rows are sample-major: sample i owns rows i*R .. i*R + R - 1.
    rows = ch.repeat(restarts)
    phi = np.empty((samples * restarts, n_l))
    w = np.empty((samples * restarts, k, n_t), dtype=np.complex128)
    z = np.empty((samples * restarts, m, n_t), dtype=np.complex128)
    for i, sid in enumerate(sample_ids):
        seed = np.random.SeedSequence(cfg.seed, spawn_key=(int(sid),))
        rng = np.random.Generator(np.random.Philox(seed))
        one = ch.select([i])
        for r in range(restarts):
            row = i * restarts + r
            if r == 0:
                start = random_mrt(one, rng).arrays()
            else:
                start = _random_design(one, rng)
            phi[row], w[row], z[row] = (a[0] for a in start)

    p_max = rows.p_max
    w_scale = np.sqrt(p_max)[:, None, None]
    best = np.full(samples * restarts, -np.inf)
    best_phi, best_w, best_z = phi.copy(), w.copy(), z.copy()
    step = cfg.step_size
    window_start = best.copy()
    # Rows stop moving once a decay window brings no gain.
    active = np.ones(samples * restarts, dtype=bool)

    for t in range(cfg.steps + 1):
        design = TransmitDesign(
            DiffTensor(phi, requires_grad=True),
            ComplexPair.from_numpy(w, requires_grad=True),
            ComplexPair.from_numpy(z, requires_grad=True),
        )
        soft, hard = _objective(rows, design)
        improved = hard > best
        best = np.where(improved, hard, best)
        best_phi[improved] = phi[improved]
        best_w[improved] = w[improved]
        best_z[improved] = z[improved]
        if t == cfg.steps:
            break

        if t and t % cfg.decay_every == 0:
            gain = best - window_start
            active &= gain > cfg.tolerance * np.maximum(np.abs(best), 1)
            if not np.any(active):
                break
            window_start = best.copy()
            step *= cfg.decay

        if soft.requires_grad:
            sum(soft).backward()
        g_phi = design.phi.grad
        g_wr, g_wi = design.w.re.grad, design.w.im.grad
        g_zr, g_zi = design.z.re.grad, design.z.im.grad
        g_wr, g_wi, g_zr, g_zi = _unit_step(g_wr, g_wi, g_zr, g_zi)
        (g_phi,) = _unit_step(g_phi)

        moving = np.where(active, step, 0.0)
        w_step = moving[:, None, None] * w_scale
        w = w + w_step * (g_wr + 1j * g_wi)
        z = z + w_step * (g_zr + 1j * g_zi)
        w, z = _project(w, z, p_max)
        phi = np.mod(phi + (moving * TWO_PI)[:, None] * g_phi, TWO_PI)
        phi = np.where(phi >= TWO_PI, 0.0, phi)

    per_sample = best.reshape(samples, restarts)
    choice = np.argmax(per_sample, axis=1)
    pick = np.arange(samples) * restarts + choice
    return (
        TransmitDesign.from_arrays(best_phi[pick], best_w[pick], best_z[pick]),
        per_sample[np.arange(samples), choice],
    )
