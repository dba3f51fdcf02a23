"""
Multi-head graph attention operators.

eatt() is the edge-based operator: edge features enter both the attention
logits and the aggregated messages, and every target keeps a projection of
its own features. att() is the edge-free operator and aggregates neighbor
messages only.

Node types in one view share the feature width and one parameter set.
"""

import math
from dataclasses import dataclass

import numpy as np

from rispls.errors import AttentionError, DimensionError, UsageError
from rispls.hetgraph import GraphView
from rispls.numerics import (
    LEAKY_SLOPE,
    DiffTensor,
    ModelParams,
    broadcast_to,
    concat,
    leaky_relu,
    reshape,
    segment_softmax,
    segment_sum,
    sum,
    take,
)


@dataclass
class AttentionParams:
    heads: int
    width: int
    in_features: int
    edge_features: int
    w_s: DiffTensor  # (in_features, heads * width)
    w_n: DiffTensor
    a: DiffTensor  # (heads, width)
    w_e: DiffTensor | None = None  # (edge_features, heads * width)

    @classmethod
    def create(
        cls,
        params: ModelParams,
        path: str,
        in_features: int,
        heads: int,
        width: int,
        rng: np.random.Generator,
        edge_features: int = 0,
    ) -> "AttentionParams":
        if heads < 1 or width < 1 or in_features < 1:
            raise DimensionError(
                f"{path}: heads, width and input width must be positive"
            )
        out = heads * width
        bound = math.sqrt(6.0 / (in_features + width))
        w_s = params.uniform(f"{path}.w_s", (in_features, out), bound, rng)
        w_n = params.uniform(f"{path}.w_n", (in_features, out), bound, rng)
        a = params.uniform(
            f"{path}.a", (heads, width), math.sqrt(3.0 / width), rng
        )
        w_e = None
        if edge_features:
            w_e = params.uniform(
                f"{path}.w_e",
                (edge_features, out),
                math.sqrt(6.0 / (edge_features + width)),
                rng,
            )
        return cls(heads, width, in_features, edge_features, w_s, w_n, a, w_e)

    @property
    def out_features(self) -> int:
        return self.heads * self.width


@dataclass
class AttentionResult:
    """Updated features per target type and the coefficients used."""

    features: dict[str, DiffTensor]
    coefficients: DiffTensor  # (arcs, heads)
    src: np.ndarray  # global source index per arc
    dst: np.ndarray  # global target index per arc

    def __getitem__(self, kind: str) -> DiffTensor:
        return self.features[kind]


def _stack_nodes(view: GraphView, features: dict[str, DiffTensor], width):
    offsets = {}
    parts = []
    total = 0
    for kind, nodes in view.node_sets.items():
        if kind not in features:
            raise UsageError(f"No features given for node type {kind}")
        x = features[kind]
        if x.shape != (nodes.count, width):
            raise DimensionError(
                f"{kind} features have shape {x.shape}, operator expects "
                f"{(nodes.count, width)}"
            )
        offsets[kind] = total
        total += nodes.count
        parts.append(x)
    return concat(parts, axis=0), offsets, total


def _attend(
    view: GraphView,
    params: AttentionParams,
    features: dict[str, DiffTensor],
    edge_based: bool,
    isolated: str,
    self_term: bool,
) -> AttentionResult:
    if isolated not in ("error", "zero"):
        raise UsageError(f"Unknown isolated-node policy: {isolated}")
    if edge_based and params.w_e is None:
        raise UsageError("Edge-based attention needs edge parameters")

    x, offsets, total = _stack_nodes(view, features, params.in_features)
    src = np.concatenate(
        [offsets[a.src_type] + a.src for a in view.arcs]
    ).astype(np.int64)
    dst = np.concatenate(
        [offsets[a.dst_type] + a.dst for a in view.arcs]
    ).astype(np.int64)
    arcs = src.shape[0]
    heads, width = params.heads, params.width

    indegree = np.bincount(dst, minlength=total)
    for kind in view.targets:
        nodes = view.node_sets[kind]
        lonely = np.flatnonzero(
            indegree[offsets[kind] : offsets[kind] + nodes.count] == 0
        )
        if lonely.size and isolated == "error":
            node = int(lonely[0])
            raise AttentionError(
                f"{kind} node {node % nodes.per_sample} of sample "
                f"{node // nodes.per_sample} has no in-neighbors"
            )

    target = x @ params.w_s
    source = x @ params.w_n
    message = take(source, src)
    if edge_based:
        missing = [a for a in view.arcs if a.features is None]
        if missing:
            raise UsageError(
                f"Arcs {missing[0].src_type}->{missing[0].dst_type} carry "
                "no edge features"
            )
        y = concat([a.features for a in view.arcs], axis=0)
        if y.shape[1] != params.edge_features:
            raise DimensionError(
                f"Edge features are {y.shape[1]} wide, operator expects "
                f"{params.edge_features}"
            )
        message = message + y @ params.w_e

    hidden = leaky_relu(take(target, dst) + message, LEAKY_SLOPE)
    a = broadcast_to(
        reshape(params.a, (1, heads, width)), (arcs, heads, width)
    )
    logits = sum(reshape(hidden, (arcs, heads, width)) * a, axis=-1)
    alpha = segment_softmax(logits, dst, total)

    weights = broadcast_to(
        reshape(alpha, (arcs, heads, 1)), (arcs, heads, width)
    )
    weighted = reshape(
        weights * reshape(message, (arcs, heads, width)),
        (arcs, heads * width),
    )
    out = segment_sum(weighted, dst, total)
    if self_term:
        out = out + target

    result = {}
    for kind in view.targets:
        start = offsets[kind]
        result[kind] = out[start : start + view.node_sets[kind].count]
    return AttentionResult(result, alpha, src, dst)


def eatt(
    view: GraphView,
    params: AttentionParams,
    features: dict[str, DiffTensor],
    isolated: str = "error",
) -> AttentionResult:
    """
    Edge-based attention. Each target's output per head is its own
    projection plus the coefficient weighted sum of neighbor and edge
    projections; heads are concatenated.
    """
    return _attend(view, params, features, True, isolated, True)


def att(
    view: GraphView,
    params: AttentionParams,
    features: dict[str, DiffTensor],
    isolated: str = "error",
    self_term: bool = False,
) -> AttentionResult:
    """
    Edge-free attention. With isolated="zero" a node without in-neighbors
    gets a zero row (plus its own projection when self_term is set).
    """
    return _attend(view, params, features, False, isolated, self_term)
