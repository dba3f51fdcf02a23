"""
Stage 1: phase shifts from the bipartite BS-RIS / BS-LU / BS-Eve graph.

A shared lift and four attention calls build the initial node features,
a stack of edge-based attention layers with zero-padded residuals refines
them, and a per-element MLP turns each reflecting element's embedding into
its phase shift.
"""

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from rispls.attention import AttentionParams, att, eatt
from rispls.errors import ConfigurationError
from rispls.hetgraph import Stage1Graph, psi_bi, psi_fc, psi_uni
from rispls.numerics import (
    DiffTensor,
    ModelParams,
    concat,
    layer_norm,
    leaky_relu,
    reshape,
    sigmoid,
    zero_pad,
)

if TYPE_CHECKING:
    from rispls.model import ModelConfig

NODE_TYPES = ("ris", "lu", "eve")

# Stage-1 edges carry (Re, Im) of one RIS to receiver coefficient.
EDGE_FEATURES = 2


def dense(
    params: ModelParams,
    path: str,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
) -> DiffTensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return params.uniform(path, (fan_in, fan_out), bound, rng)


@dataclass
class Stage1Params:
    w1: DiffTensor
    fal: dict[str, AttentionParams]
    layers: list[dict[str, AttentionParams]]
    w3: DiffTensor
    w2: DiffTensor
    c1: DiffTensor
    output_width: int = field(default=0)

    @classmethod
    def create(
        cls,
        params: ModelParams,
        n_t: int,
        cfg: "ModelConfig",
        rng: np.random.Generator,
    ) -> "Stage1Params":
        raw = 2 * n_t
        lift = cfg.lift_width
        w1 = dense(params, "stage1.w1", raw, lift, rng)

        def fal_op(name, edges=0):
            return AttentionParams.create(
                params,
                f"stage1.fal.{name}",
                lift,
                cfg.fal_heads,
                cfg.fal_width,
                rng,
                edge_features=edges,
            )

        fal = {
            "ris_lu": fal_op("ris_lu", EDGE_FEATURES),
            "ris_eve": fal_op("ris_eve", EDGE_FEATURES),
            "users": fal_op("users"),
            "per_type": fal_op("per_type"),
        }

        width = 3 * cfg.fal_heads * cfg.fal_width
        layers = []
        for tau, (out, heads) in enumerate(cfg.stage1_layers, start=1):
            layers.append(
                {
                    op: AttentionParams.create(
                        params,
                        f"stage1.layer{tau}.{op}",
                        width,
                        heads,
                        out,
                        rng,
                        edge_features=EDGE_FEATURES,
                    )
                    for op in (
                        "ris_to_lu",
                        "ris_to_eve",
                        "lu_to_ris",
                        "eve_to_ris",
                    )
                }
            )
            width = out * heads

        hidden_a, hidden_b = cfg.phase_hidden
        return cls(
            w1=w1,
            fal=fal,
            layers=layers,
            w3=dense(params, "stage1.w3", width, hidden_a, rng),
            w2=dense(params, "stage1.w2", hidden_a, hidden_b, rng),
            c1=dense(params, "stage1.c1", hidden_b, 1, rng),
            output_width=width,
        )


@dataclass
class Stage1Output:
    phi: DiffTensor  # (B, L)
    ris: DiffTensor
    lu: DiffTensor
    eve: DiffTensor


def feature_augmentation(
    g: Stage1Graph, p: Stage1Params, self_term: bool = False
) -> tuple[DiffTensor, DiffTensor, DiffTensor]:
    """Initial (ris, lu, eve) embeddings, each 3 * heads * width wide."""
    lifted = {
        kind: leaky_relu(g.node_sets[kind].features @ p.w1)
        for kind in NODE_TYPES
    }
    ris_lu = eatt(
        psi_bi(g, "ris", "lu"),
        p.fal["ris_lu"],
        {"ris": lifted["ris"], "lu": lifted["lu"]},
    )
    ris_eve = eatt(
        psi_bi(g, "ris", "eve"),
        p.fal["ris_eve"],
        {"ris": lifted["ris"], "eve": lifted["eve"]},
    )
    users = att(
        psi_fc(g, "lu", "eve"),
        p.fal["users"],
        {"lu": lifted["lu"], "eve": lifted["eve"]},
        self_term=self_term,
    )
    # One complete graph per node type; a lone node of a type gets zeros.
    per_type = att(
        psi_fc(g, *NODE_TYPES, disjoint=True),
        p.fal["per_type"],
        lifted,
        isolated="zero",
        self_term=self_term,
    )
    return (
        concat([ris_lu["ris"], ris_eve["ris"], per_type["ris"]], axis=-1),
        concat([ris_lu["lu"], users["lu"], per_type["lu"]], axis=-1),
        concat([ris_eve["eve"], users["eve"], per_type["eve"]], axis=-1),
    )


def _residual(
    update: DiffTensor,
    raw: DiffTensor,
    previous: DiffTensor,
    residual_on: bool,
) -> DiffTensor:
    if not residual_on:
        return update
    width = update.shape[-1]
    if raw.shape[-1] > width or previous.shape[-1] > width:
        raise ConfigurationError(
            f"Residual inputs of width {raw.shape[-1]} and "
            f"{previous.shape[-1]} do not fit a {width} wide layer"
        )
    return update + zero_pad(raw, width) + zero_pad(previous, width)


def stage1_gnn_layer(
    g: Stage1Graph,
    ops: dict[str, AttentionParams],
    inputs: tuple[DiffTensor, DiffTensor, DiffTensor],
    residual_on: bool = True,
) -> tuple[DiffTensor, DiffTensor, DiffTensor]:
    """
    One layer. Every update reads the previous layer's embeddings; the
    residual adds the zero-padded raw features and previous embeddings.
    """
    ris, lu, eve = inputs
    new_lu = eatt(
        psi_uni(g, "ris", "lu"), ops["ris_to_lu"], {"ris": ris, "lu": lu}
    )["lu"]
    new_eve = eatt(
        psi_uni(g, "ris", "eve"), ops["ris_to_eve"], {"ris": ris, "eve": eve}
    )["eve"]
    new_ris = (
        eatt(
            psi_uni(g, "lu", "ris"), ops["lu_to_ris"], {"lu": lu, "ris": ris}
        )["ris"]
        + eatt(
            psi_uni(g, "eve", "ris"),
            ops["eve_to_ris"],
            {"eve": eve, "ris": ris},
        )["ris"]
    )
    raw = [g.node_sets[kind].features for kind in NODE_TYPES]
    return tuple(
        _residual(update, base, prev, residual_on)
        for update, base, prev in zip(
            (new_ris, new_lu, new_eve), raw, inputs
        )
    )


def phase_output(
    ris: DiffTensor, p: Stage1Params, samples: int
) -> DiffTensor:
    """
    Phase shift of every reflecting element as (B, L): 2 pi sigmoid of a
    shared MLP over the layer-normalized embedding.
    """
    if ris.shape[-1] != p.w3.shape[0]:
        raise ConfigurationError(
            f"Phase head expects {p.w3.shape[0]} features, got {ris.shape}"
        )
    hidden = leaky_relu(leaky_relu(layer_norm(ris) @ p.w3) @ p.w2)
    phi = reshape((2 * math.pi) * sigmoid(hidden @ p.c1), (samples, -1))
    # sigmoid rounds to 1 for large inputs; 2 pi is the same phase as 0.
    wrapped = phi.values >= 2 * math.pi
    if np.any(wrapped):
        phi = phi - DiffTensor(np.where(wrapped, 2 * math.pi, 0.0))
    return phi


def run_stage1(
    g: Stage1Graph,
    p: Stage1Params,
    residual_on: bool = True,
    self_term: bool = False,
) -> Stage1Output:
    features = feature_augmentation(g, p, self_term)
    for ops in p.layers:
        features = stage1_gnn_layer(g, ops, features, residual_on)
    samples = g.node_sets["ris"].samples
    phi = phase_output(features[0], p, samples)
    return Stage1Output(phi, *features)
