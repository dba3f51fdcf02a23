"""
Heterogeneous graphs for both stages and the views the operators run on.

A batch of samples is one graph: node sets hold the nodes of every sample
back to back and remember which sample each node belongs to. Views never
connect nodes of different samples.
"""

from dataclasses import dataclass, field

import numpy as np

from rispls.channel import ChannelBatch, as_batch, effective_csi
from rispls.errors import DimensionError, UsageError
from rispls.numerics import ComplexPair, DiffTensor, concat, reshape


@dataclass
class NodeSet:
    per_sample: int
    samples: int
    features: DiffTensor | None = None

    def __post_init__(self):
        if (
            self.features is not None
            and self.features.shape[0] != self.count
        ):
            raise DimensionError(
                f"Node features have {self.features.shape[0]} rows for "
                f"{self.count} nodes"
            )

    @property
    def count(self) -> int:
        return self.per_sample * self.samples

    @property
    def sample(self) -> np.ndarray:
        """Sample membership of every node."""
        return np.repeat(np.arange(self.samples), self.per_sample)


@dataclass
class EdgeSet:
    src_type: str
    dst_type: str
    src: np.ndarray
    dst: np.ndarray
    features: DiffTensor | None = None
    directed: bool = False

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        if self.src.shape != self.dst.shape:
            raise DimensionError("Edge endpoint lists differ in length")
        if (
            self.features is not None
            and self.features.shape[0] != self.count
        ):
            raise DimensionError(
                f"Edge features have {self.features.shape[0]} rows for "
                f"{self.count} edges"
            )

    @property
    def count(self) -> int:
        return self.src.shape[0]

    @property
    def feature_width(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


@dataclass
class HeteroGraph:
    node_sets: dict[str, NodeSet]
    edge_sets: dict[str, EdgeSet] = field(default_factory=dict)

    def __post_init__(self):
        for name, edges in self.edge_sets.items():
            for kind, idx in (
                (edges.src_type, edges.src),
                (edges.dst_type, edges.dst),
            ):
                if kind not in self.node_sets:
                    raise UsageError(
                        f"Edge set {name} refers to unknown node type {kind}"
                    )
                count = self.node_sets[kind].count
                if idx.size and (idx.min() < 0 or idx.max() >= count):
                    raise DimensionError(
                        f"Edge set {name} has an endpoint outside the "
                        f"{count} {kind} nodes"
                    )

    def node_set(self, kind: str) -> NodeSet:
        if kind not in self.node_sets:
            raise UsageError(f"Unknown node type: {kind}")
        return self.node_sets[kind]

    def edges_between(self, a: str, b: str) -> EdgeSet:
        """The edge set joining a and b, in either orientation."""
        self.node_set(a)
        self.node_set(b)
        for edges in self.edge_sets.values():
            if {edges.src_type, edges.dst_type} == {a, b} and (
                a != b or edges.src_type == a
            ):
                return edges
        raise UsageError(f"No edge set joins {a} and {b}")

    def edge_count(self) -> int:
        return int(np.sum([e.count for e in self.edge_sets.values()]))


def _complex_rows(z: np.ndarray) -> np.ndarray:
    """Concat(real, imag) of each row vector, flattened over samples."""
    z = z.reshape(-1, z.shape[-1])
    return np.concatenate([z.real, z.imag], axis=-1)


def _bipartite(samples: int, left: int, right: int):
    """
    Every (left, right) pair of every sample. Row b*left*right + l*right + r
    is the pair (l, r) of sample b.
    """
    b, lft, rgt = np.meshgrid(
        np.arange(samples), np.arange(left), np.arange(right), indexing="ij"
    )
    return (b * left + lft).reshape(-1), (b * right + rgt).reshape(-1)


def _complete_pairs(samples: int, per_sample: int):
    """Unordered pairs i < j inside every sample."""
    i, j = np.triu_indices(per_sample, k=1)
    offsets = np.arange(samples)[:, None] * per_sample
    return (offsets + i).reshape(-1), (offsets + j).reshape(-1)


@dataclass
class Stage1Graph(HeteroGraph):
    """
    Bipartite graph of BS-RIS link nodes ("ris"), BS-LU link nodes ("lu")
    and BS-Eve link nodes ("eve"). Each reflecting element connects to every
    receiver and the edge carries that element's RIS to receiver channel.
    """

    channels: ChannelBatch | None = None


def build_stage1(ch) -> Stage1Graph:
    ch = as_batch(ch)
    n_t, n_l, k, m = ch.dims
    b = len(ch)

    node_sets = {
        "ris": NodeSet(n_l, b, DiffTensor(_complex_rows(ch.H))),
        "lu": NodeSet(k, b, DiffTensor(_complex_rows(ch.h_b))),
        "eve": NodeSet(m, b, DiffTensor(_complex_rows(ch.f_b))),
    }

    def edges(target: str, per_sample: int, refl: np.ndarray) -> EdgeSet:
        src, dst = _bipartite(b, n_l, per_sample)
        # refl is (B, receivers, L); edge rows are ordered (b, l, receiver)
        values = np.swapaxes(refl, 1, 2).reshape(-1)
        return EdgeSet(
            "ris",
            target,
            src,
            dst,
            DiffTensor(np.stack([values.real, values.imag], axis=-1)),
        )

    return Stage1Graph(
        node_sets=node_sets,
        edge_sets={
            "ris-lu": edges("lu", k, ch.h_r),
            "ris-eve": edges("eve", m, ch.f_r),
        },
        channels=ch,
    )


@dataclass
class Stage2Graph(HeteroGraph):
    """
    Fully connected, feature-free graph over BS-RIS-LU ("lu") and
    BS-RIS-Eve ("eve") nodes. Node payloads are the effective CSI under the
    Stage-1 phases plus the augmentation rows Stage 1 hands over.
    """

    h_eff: ComplexPair | None = None
    f_eff: ComplexPair | None = None
    aug_u: DiffTensor | None = None
    aug_e: DiffTensor | None = None

    @property
    def x_bru(self) -> DiffTensor:
        return interleave(self.h_eff)

    @property
    def x_bre(self) -> DiffTensor:
        return interleave(self.f_eff)


def interleave(z: ComplexPair) -> DiffTensor:
    """Rows [re_1, im_1, re_2, im_2, ...] of a (B, rows, N) complex tensor."""
    b, rows, n = z.shape
    stacked = concat(
        [reshape(z.re, (b, rows, n, 1)), reshape(z.im, (b, rows, n, 1))],
        axis=-1,
    )
    return reshape(stacked, (b * rows, 2 * n))


def build_stage2(ch, phi, aug_u, aug_e) -> Stage2Graph:
    ch = as_batch(ch)
    n_t, n_l, k, m = ch.dims
    b = len(ch)
    aug_u = aug_u if isinstance(aug_u, DiffTensor) else DiffTensor(aug_u)
    aug_e = aug_e if isinstance(aug_e, DiffTensor) else DiffTensor(aug_e)
    if aug_u.shape[0] != b * k or aug_e.shape[0] != b * m:
        raise DimensionError(
            f"Augmentation rows {aug_u.shape[0]} and {aug_e.shape[0]} do "
            f"not match {b * k} LU and {b * m} Eve nodes"
        )
    if aug_u.shape[1:] != aug_e.shape[1:]:
        raise DimensionError(
            f"Augmentation widths differ: {aug_u.shape} and {aug_e.shape}"
        )

    h_eff, f_eff = effective_csi(ch, phi)
    lu_src, lu_dst = _complete_pairs(b, k)
    eve_src, eve_dst = _complete_pairs(b, m)
    cross_src, cross_dst = _bipartite(b, k, m)
    return Stage2Graph(
        node_sets={"lu": NodeSet(k, b), "eve": NodeSet(m, b)},
        edge_sets={
            "lu-lu": EdgeSet("lu", "lu", lu_src, lu_dst),
            "lu-eve": EdgeSet("lu", "eve", cross_src, cross_dst),
            "eve-eve": EdgeSet("eve", "eve", eve_src, eve_dst),
        },
        h_eff=h_eff,
        f_eff=f_eff,
        aug_u=aug_u,
        aug_e=aug_e,
    )


@dataclass
class Arcs:
    """Directed arcs into the targets of one operator call."""

    src_type: str
    dst_type: str
    src: np.ndarray
    dst: np.ndarray
    features: DiffTensor | None = None

    @property
    def count(self) -> int:
        return self.src.shape[0]


@dataclass
class GraphView:
    """
    The node sets an operator reads and the arcs it attends over. Node i of
    a view is node i of the parent set.
    """

    node_sets: dict[str, NodeSet]
    arcs: list[Arcs]

    @property
    def targets(self) -> list[str]:
        seen = []
        for a in self.arcs:
            if a.dst_type not in seen:
                seen.append(a.dst_type)
        return seen

    def arc_count(self) -> int:
        return int(np.sum([a.count for a in self.arcs]))


def _oriented(edges: EdgeSet, src: str, dst: str) -> Arcs:
    if edges.src_type == src and edges.dst_type == dst:
        return Arcs(src, dst, edges.src, edges.dst, edges.features)
    return Arcs(src, dst, edges.dst, edges.src, edges.features)


def psi_uni(g: HeteroGraph, src_type: str, dst_type: str) -> GraphView:
    """Directed bipartite view src_type -> dst_type."""
    edges = g.edges_between(src_type, dst_type)
    return GraphView(
        {
            src_type: g.node_set(src_type),
            dst_type: g.node_set(dst_type),
        },
        [_oriented(edges, src_type, dst_type)],
    )


def psi_bi(g: HeteroGraph, a_type: str, b_type: str) -> GraphView:
    """Both orientations of the a_type / b_type edges, features shared."""
    edges = g.edges_between(a_type, b_type)
    return GraphView(
        {a_type: g.node_set(a_type), b_type: g.node_set(b_type)},
        [
            _oriented(edges, a_type, b_type),
            _oriented(edges, b_type, a_type),
        ],
    )


def psi_fc(g: HeteroGraph, *types: str, disjoint: bool = False) -> GraphView:
    """
    Complete, feature-free view. With several types the default is one
    complete graph over their union; disjoint=True builds one complete graph
    per type instead. Pairs never cross samples and no self-loops are added.
    """
    if not types:
        raise UsageError("psi_fc needs at least one node type")
    sets = {t: g.node_set(t) for t in types}
    samples = {s.samples for s in sets.values()}
    if len(samples) != 1:
        raise DimensionError("Node sets of one view span different batches")

    arcs = []
    pairs = (
        [(t, t) for t in types]
        if disjoint
        else [(s, d) for s in types for d in types]
    )
    for src_type, dst_type in pairs:
        src_set, dst_set = sets[src_type], sets[dst_type]
        b, src_local, dst_local = np.meshgrid(
            np.arange(src_set.samples),
            np.arange(src_set.per_sample),
            np.arange(dst_set.per_sample),
            indexing="ij",
        )
        src = (b * src_set.per_sample + src_local).reshape(-1)
        dst = (b * dst_set.per_sample + dst_local).reshape(-1)
        if src_type == dst_type:
            keep = src != dst
            src, dst = src[keep], dst[keep]
        arcs.append(Arcs(src_type, dst_type, src, dst))
    return GraphView(sets, arcs)


def undirected_edge_count(view: GraphView) -> int:
    """Number of undirected pairs a feature-free view represents."""
    return view.arc_count() // 2
