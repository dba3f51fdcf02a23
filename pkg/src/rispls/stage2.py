"""
Stage 2: beamformers and artificial noise from the fully connected
BS-RIS-LU / BS-RIS-Eve graph.

Node features start from the effective CSI under the Stage-1 phases plus
the Stage-1 embeddings, pass through edge-free attention layers, and are
mapped to a TransmitDesign by one of two heads:

- beam_direct: an MLP emits each vector, then Psi scales them onto the
  power budget.
- model_based: an MLP emits a direction mix and a power per node, and the
  vectors are built from hybrid ZF/MRT directions.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from rispls.attention import AttentionParams, att
from rispls.errors import ConfigurationError, UsageError
from rispls.hetgraph import Stage2Graph, psi_fc, psi_uni
from rispls.numerics import (
    ComplexPair,
    DiffTensor,
    abs2,
    broadcast_to,
    cgram,
    cinv,
    cmatmul,
    cnorm,
    concat,
    expand_last,
    index,
    layer_norm,
    leaky_relu,
    maximum,
    reciprocal,
    relu,
    reshape,
    sigmoid,
    sqrt,
    sum,
    swap_last,
    where,
    zero_pad,
)
from rispls.stage1 import dense

if TYPE_CHECKING:
    from rispls.model import ModelConfig

HEADS = ("beam_direct", "model_based")

# Above this condition number the Gram matrix gets a diagonal load.
CONDITION_LIMIT = 1e12
REGULARIZATION = 1e-10
DEGENERATE_NORM = 1e-12
# Power logits start near this value so ReLU(logit) is live at init.
POWER_LOGIT_BIAS = 1.0
POWER_WEIGHT_SCALE = 0.1


def bias(params, path: str, width: int) -> DiffTensor:
    return params.add(path, np.zeros(width))


@dataclass
class DenseLayer:
    weight: DiffTensor
    bias: DiffTensor

    def __call__(self, x: DiffTensor) -> DiffTensor:
        rows = x.shape[0]
        width = self.weight.shape[1]
        return x @ self.weight + broadcast_to(
            reshape(self.bias, (1, width)), (rows, width)
        )


def dense_layer(params, path, fan_in, fan_out, rng) -> DenseLayer:
    return DenseLayer(
        dense(params, f"{path}.weight", fan_in, fan_out, rng),
        bias(params, f"{path}.bias", fan_out),
    )


@dataclass
class HeadParams:
    """Two dense layers for LU nodes and two for Eve nodes."""

    lu_hidden: DenseLayer
    lu_out: DenseLayer
    eve_hidden: DenseLayer
    eve_out: DenseLayer

    def lu(self, x: DiffTensor) -> DiffTensor:
        return self.lu_out(leaky_relu(self.lu_hidden(layer_norm(x))))

    def eve(self, x: DiffTensor) -> DiffTensor:
        return self.eve_out(leaky_relu(self.eve_hidden(layer_norm(x))))


@dataclass
class Stage2Params:
    head: str
    w4: DiffTensor
    w5: DiffTensor
    layers: list[dict[str, AttentionParams]]
    out: HeadParams
    output_width: int

    @classmethod
    def create(
        cls,
        params,
        n_t: int,
        cfg: "ModelConfig",
        head: str,
        rng: np.random.Generator,
    ) -> "Stage2Params":
        if head not in HEADS:
            raise ConfigurationError(
                f"Unknown head {head}, expected one of {', '.join(HEADS)}"
            )
        raw = 2 * n_t
        width = cfg.stage2_init_width
        w4 = dense(params, "stage2.w4", raw, width, rng)
        w5 = dense(params, "stage2.w5", raw, width, rng)

        layers = []
        for tau, (out, heads) in enumerate(cfg.stage2_layers, start=1):
            layers.append(
                {
                    op: AttentionParams.create(
                        params,
                        f"stage2.layer{tau}.{op}",
                        width,
                        heads,
                        out,
                        rng,
                    )
                    for op in ("eve_to_lu", "lu_to_eve", "lu_fc", "eve_fc")
                }
            )
            width = out * heads

        # beam_direct emits 2 N_T reals per node, model_based two scalars.
        emitted = raw if head == "beam_direct" else 2
        hidden = cfg.head_hidden
        prefix = f"stage2.{head}"
        out = HeadParams(
            dense_layer(params, f"{prefix}.lu_hidden", width, hidden, rng),
            dense_layer(params, f"{prefix}.lu_out", hidden, emitted, rng),
            dense_layer(params, f"{prefix}.eve_hidden", width, hidden, rng),
            dense_layer(params, f"{prefix}.eve_out", hidden, emitted, rng),
        )
        if head == "model_based":
            for layer in (out.lu_out, out.eve_out):
                layer.weight.values[:, 1] *= POWER_WEIGHT_SCALE
                layer.bias.values[1] = POWER_LOGIT_BIAS
        return cls(head, w4, w5, layers, out, width)


def feature_init(
    g: Stage2Graph, p: Stage2Params
) -> tuple[DiffTensor, DiffTensor]:
    """Lifted effective CSI plus the Stage-1 embedding of each node."""
    width = p.w4.shape[1]
    if g.aug_u.shape[1] != width:
        raise ConfigurationError(
            f"Stage-1 embeddings are {g.aug_u.shape[1]} wide, Stage 2 "
            f"starts at {width}"
        )
    lu = leaky_relu(g.x_bru @ p.w4) + g.aug_u
    eve = leaky_relu(g.x_bre @ p.w5) + g.aug_e
    return lu, eve


def stage2_gnn_layer(
    g: Stage2Graph,
    ops: dict[str, AttentionParams],
    inputs: tuple[DiffTensor, DiffTensor],
    bases: tuple[DiffTensor, DiffTensor],
    residual_on: bool = True,
    self_term: bool = False,
) -> tuple[DiffTensor, DiffTensor]:
    """
    Cross-type attention (LUs attend to Eves and the other way round) plus
    same-type attention; a lone node of its type gets a zero same-type term.
    """
    lu, eve = inputs
    both = {"lu": lu, "eve": eve}
    cross_lu = att(
        psi_uni(g, "eve", "lu"), ops["eve_to_lu"], both, self_term=self_term
    )["lu"]
    cross_eve = att(
        psi_uni(g, "lu", "eve"), ops["lu_to_eve"], both, self_term=self_term
    )["eve"]
    same_lu = att(
        psi_fc(g, "lu"),
        ops["lu_fc"],
        {"lu": lu},
        isolated="zero",
        self_term=self_term,
    )["lu"]
    same_eve = att(
        psi_fc(g, "eve"),
        ops["eve_fc"],
        {"eve": eve},
        isolated="zero",
        self_term=self_term,
    )["eve"]
    updates = (cross_lu + same_lu, cross_eve + same_eve)
    if not residual_on:
        return updates
    width = updates[0].shape[-1]
    return tuple(
        update + zero_pad(base, width) + zero_pad(prev, width)
        for update, base, prev in zip(updates, bases, inputs)
    )


def _complex_rows(x: DiffTensor, samples: int, n_t: int) -> ComplexPair:
    """First N_T columns are real parts, the last N_T imaginary parts."""
    x = reshape(x, (samples, -1, 2 * n_t))
    return ComplexPair(x[..., :n_t], x[..., n_t:])


def _per_sample(values: DiffTensor, shape) -> DiffTensor:
    """Broadcast a (B,) tensor over shape (B, ...)."""
    lead = (shape[0],) + (1,) * (len(shape) - 1)
    return broadcast_to(reshape(values, lead), shape)


def _total_power(w: ComplexPair, z: ComplexPair) -> DiffTensor:
    def part(v):
        if v.shape[1] == 0:
            return DiffTensor(np.zeros(v.shape[0]))
        return sum(sum(abs2(v), axis=-1), axis=-1)

    return part(w) + part(z)


def project_power(w: ComplexPair, z: ComplexPair, p_max) -> tuple:
    """
    Scale every vector by sqrt(P_max / max(P_max, total power)) so the
    budget holds; designs already inside it are left alone.
    """
    p_max = np.asarray(p_max, dtype=np.float64)
    total = _total_power(w, z)
    factor = sqrt(DiffTensor(p_max) * reciprocal(maximum(total, p_max)))
    return (
        w.scale(_per_sample(factor, w.shape)),
        z.scale(_per_sample(factor, z.shape)),
    )


def beam_direct(
    g: Stage2Graph, lu: DiffTensor, eve: DiffTensor, p: Stage2Params, p_max
) -> tuple[ComplexPair, ComplexPair]:
    samples, _, n_t = g.h_eff.shape
    w = _complex_rows(p.out.lu(lu), samples, n_t)
    z = _complex_rows(p.out.eve(eve), samples, n_t)
    return project_power(w, z, p_max)


def _unit(v: ComplexPair) -> ComplexPair:
    return v.scale(expand_last(reciprocal(cnorm(v)), v.shape[-1]))


def zf_rows(rows: ComplexPair) -> ComplexPair:
    """
    Zero-forcing directions for stacks of channel rows (..., R, N). Row r
    of the result is column r of G^H (G G^H)^-1 where G has rows h_r^H, so
    h_j^H v_r is 1 for j = r and 0 otherwise.
    """
    gram = cgram(rows, rows)
    count = rows.shape[-2]
    values = gram.numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(values.reshape(-1, count, count)).reshape(
            values.shape[:-2]
        )
    loaded = ~np.isfinite(cond) | (cond > CONDITION_LIMIT)
    if np.any(loaded):
        logging.warning(
            f"Regularized {int(np.sum(loaded))} ill-conditioned ZF "
            "Gram matrices"
        )
        trace = np.real(np.trace(values, axis1=-2, axis2=-1))
        eps = np.where(loaded, REGULARIZATION * trace / count, 0.0)
        load = eps[..., None, None] * np.eye(count)
        gram = ComplexPair(gram.re + DiffTensor(load), gram.im)
    inverse = cinv(gram)
    return cmatmul(
        ComplexPair(swap_last(inverse.re), swap_last(inverse.im)), rows
    )


def _mix(
    zf: ComplexPair, mrt: ComplexPair, weight: DiffTensor
) -> ComplexPair:
    """Unit-norm weight * zf_hat + (1 - weight) * mrt_hat."""
    n = zf.shape[-1]
    a = expand_last(weight, n)
    zf_hat, mrt_hat = _unit(zf), _unit(mrt)
    mixed = zf_hat.scale(a) + mrt_hat.scale(1.0 - a)
    norms = cnorm(mixed).values
    degenerate = norms < DEGENERATE_NORM
    if np.any(degenerate):
        logging.warning(
            f"Hybrid ZF/MRT mix cancelled for {int(np.sum(degenerate))} "
            "vectors, using the MRT direction"
        )
        mask = np.broadcast_to(degenerate[..., None], mixed.shape)
        mixed = ComplexPair(
            where(mask, mrt_hat.re, mixed.re),
            where(mask, mrt_hat.im, mixed.im),
        )
    return _unit(mixed)


def hybrid_directions(
    h_eff: ComplexPair,
    f_eff: ComplexPair,
    alpha: DiffTensor,
    beta: DiffTensor,
) -> tuple[ComplexPair, ComplexPair]:
    """
    Unit beamforming directions mixing ZF and MRT by alpha (B, K), and AN
    directions mixing the LU-nulling direction with f_m by beta (B, M).
    """
    samples, k, n_t = h_eff.shape
    m = f_eff.shape[1]
    if k > n_t:
        raise ConfigurationError(
            f"Zero forcing needs K <= N_T, got K={k}, N_T={n_t}"
        )
    if m and k + 1 > n_t:
        raise ConfigurationError(
            f"AN nulling needs K + 1 <= N_T, got K={k}, N_T={n_t}"
        )
    w_bar = _mix(zf_rows(h_eff), h_eff, alpha)
    if m == 0:
        return w_bar, f_eff

    shape = (samples, m, k, n_t)
    stacked = ComplexPair(
        concat(
            [
                broadcast_to(reshape(h_eff.re, (samples, 1, k, n_t)), shape),
                reshape(f_eff.re, (samples, m, 1, n_t)),
            ],
            axis=-2,
        ),
        concat(
            [
                broadcast_to(reshape(h_eff.im, (samples, 1, k, n_t)), shape),
                reshape(f_eff.im, (samples, m, 1, n_t)),
            ],
            axis=-2,
        ),
    )
    nulling = zf_rows(stacked)
    last = (Ellipsis, k, slice(None))
    null_dir = ComplexPair(index(nulling.re, last), index(nulling.im, last))
    return w_bar, _mix(null_dir, f_eff, beta)


def model_based(
    g: Stage2Graph, lu: DiffTensor, eve: DiffTensor, p: Stage2Params, p_max
) -> tuple[ComplexPair, ComplexPair]:
    samples, k, n_t = g.h_eff.shape
    m = g.f_eff.shape[1]
    lu_out = p.out.lu(lu)
    eve_out = p.out.eve(eve)
    alpha = reshape(sigmoid(lu_out[:, 0]), (samples, k))
    beta = reshape(sigmoid(eve_out[:, 0]), (samples, m))
    powers = concat(
        [
            reshape(relu(lu_out[:, 1]), (samples, k)),
            reshape(relu(eve_out[:, 1]), (samples, m)),
        ],
        axis=-1,
    )
    amplitude = sqrt(scale_powers(powers, p_max))
    w_bar, z_bar = hybrid_directions(g.h_eff, g.f_eff, alpha, beta)
    w = w_bar.scale(expand_last(amplitude[:, :k], n_t))
    z = z_bar.scale(expand_last(amplitude[:, k:], n_t))
    return w, z


def scale_powers(powers: DiffTensor, p_max) -> DiffTensor:
    """p_i * P_max / max(P_max, sum p) for (B, K + M) powers."""
    p_max = np.asarray(p_max, dtype=np.float64)
    total = sum(powers, axis=-1)
    factor = DiffTensor(p_max) * reciprocal(maximum(total, p_max))
    return powers * _per_sample(factor, powers.shape)


def run_stage2(
    g: Stage2Graph,
    p: Stage2Params,
    p_max,
    residual_on: bool = True,
    self_term: bool = False,
) -> tuple[ComplexPair, ComplexPair]:
    if p.head not in HEADS:
        raise UsageError(f"Unknown head {p.head}")
    features = feature_init(g, p)
    bases = (g.x_bru, g.x_bre)
    for ops in p.layers:
        features = stage2_gnn_layer(
            g, ops, features, bases, residual_on, self_term
        )
    if p.head == "beam_direct":
        return beam_direct(g, *features, p, p_max)
    return model_based(g, *features, p, p_max)
