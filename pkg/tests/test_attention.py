"""
Test cases for rispls.attention.
"""

from unittest import TestCase

import numpy as np

from rispls.attention import AttentionParams, att, eatt
from rispls.errors import AttentionError, DimensionError, UsageError
from rispls.hetgraph import (
    EdgeSet,
    HeteroGraph,
    NodeSet,
    psi_bi,
    psi_fc,
    psi_uni,
)
from rispls.numerics import (
    DiffTensor,
    ModelParams,
    check_gradients,
    segment_sum,
    sum,
)

HEADS, WIDTH, FEATURES = 2, 4, 3


def leaky(v):
    return np.where(v > 0, v, 0.01 * v)


def softmax(v):
    e = np.exp(v - np.max(v))
    return e / np.sum(e)


def loop_attention(p, target, neighbors, self_term):
    """One target node: neighbors is a list of (x_j, y_j or None)."""
    ws = target @ p.w_s.values
    out = np.zeros(HEADS * WIDTH)
    for h in range(HEADS):
        cols = slice(h * WIDTH, (h + 1) * WIDTH)
        messages, logits = [], []
        for x, y in neighbors:
            msg = x @ p.w_n.values
            if y is not None:
                msg = msg + y @ p.w_e.values
            messages.append(msg[cols])
            hidden = leaky(ws[cols] + msg[cols])
            logits.append(np.sum(p.a.values[h] * hidden))
        alpha = softmax(np.array(logits))
        out[cols] = np.sum(alpha[:, None] * np.array(messages), axis=0)
        if self_term:
            out[cols] += ws[cols]
    return out


class Operators(TestCase):
    """Both operators against per-node reference loops."""

    def setUp(self):
        rng = np.random.default_rng(17)
        self.rng = rng
        # Two "a" nodes and three "b" nodes, every a-b pair joined.
        src, dst = np.meshgrid(np.arange(2), np.arange(3), indexing="ij")
        self.y = rng.standard_normal((6, 2))
        self.g = HeteroGraph(
            {"a": NodeSet(2, 1), "b": NodeSet(3, 1)},
            {
                "a-b": EdgeSet(
                    "a",
                    "b",
                    src.reshape(-1),
                    dst.reshape(-1),
                    DiffTensor(self.y),
                )
            },
        )
        self.x = {
            "a": DiffTensor(rng.standard_normal((2, FEATURES))),
            "b": DiffTensor(rng.standard_normal((3, FEATURES))),
        }
        self.params = ModelParams()

    def create(self, edge_features=0):
        return AttentionParams.create(
            self.params,
            f"op{len(self.params)}",
            FEATURES,
            HEADS,
            WIDTH,
            self.rng,
            edge_features=edge_features,
        )

    def test_eatt(self):
        """Edge-based attention with its self projection."""
        p = self.create(edge_features=2)
        result = eatt(psi_bi(self.g, "a", "b"), p, self.x)
        xa, xb = self.x["a"].values, self.x["b"].values
        for i in range(2):
            neighbors = [(xb[j], self.y[i * 3 + j]) for j in range(3)]
            np.testing.assert_allclose(
                loop_attention(p, xa[i], neighbors, True),
                result["a"].values[i],
                atol=1e-12,
            )
        for j in range(3):
            neighbors = [(xa[i], self.y[i * 3 + j]) for i in range(2)]
            np.testing.assert_allclose(
                loop_attention(p, xb[j], neighbors, True),
                result["b"].values[j],
                atol=1e-12,
            )

    def test_att(self):
        """Edge-free attention over the complete graph of all five nodes."""
        p = self.create()
        result = att(psi_fc(self.g, "a", "b"), p, self.x)
        nodes = [("a", i) for i in range(2)] + [("b", j) for j in range(3)]
        for kind, i in nodes:
            neighbors = [
                (self.x[other].values[j], None)
                for other, j in nodes
                if (other, j) != (kind, i)
            ]
            np.testing.assert_allclose(
                loop_attention(p, self.x[kind].values[i], neighbors, False),
                result[kind].values[i],
                atol=1e-12,
            )

    def test_coefficients_sum_to_one(self):
        p = self.create(edge_features=2)
        result = eatt(psi_bi(self.g, "a", "b"), p, self.x)
        totals = segment_sum(result.coefficients, result.dst, 5).values
        np.testing.assert_allclose(np.ones((5, HEADS)), totals, atol=1e-12)

    def test_gradient(self):
        """Gradients reach every parameter and the node features."""
        p = self.create(edge_features=2)
        x = {
            kind: DiffTensor(v.values, requires_grad=True)
            for kind, v in self.x.items()
        }
        view = psi_bi(self.g, "a", "b")

        def fn():
            out = eatt(view, p, x)
            return sum(out["a"] * out["a"]) + sum(out["b"])

        tensors = [p.w_s, p.w_n, p.w_e, p.a, x["a"], x["b"]]
        self.assertLess(check_gradients(fn, tensors), 1e-4)

    def test_width_mismatch(self):
        p = self.create()
        x = dict(self.x, a=DiffTensor(np.zeros((2, FEATURES + 1))))
        with self.assertRaises(DimensionError):
            att(psi_fc(self.g, "a", "b"), p, x)

    def test_edge_parameters_required(self):
        with self.assertRaises(UsageError):
            eatt(psi_bi(self.g, "a", "b"), self.create(), self.x)


class IsolatedNodes(TestCase):
    """Targets without in-neighbors."""

    def setUp(self):
        rng = np.random.default_rng(2)
        self.g = HeteroGraph(
            {"a": NodeSet(2, 1), "b": NodeSet(1, 1)},
            {"a-b": EdgeSet("a", "b", [0], [0])},
        )
        self.x = {
            "a": DiffTensor(rng.standard_normal((2, FEATURES))),
            "b": DiffTensor(rng.standard_normal((1, FEATURES))),
        }
        self.p = AttentionParams.create(
            ModelParams(), "op", FEATURES, HEADS, WIDTH, rng
        )

    def test_error(self):
        """The default policy names the lonely node."""
        with self.assertRaisesRegex(AttentionError, "a node 1 of sample 0"):
            att(psi_uni(self.g, "b", "a"), self.p, self.x)

    def test_zero(self):
        result = att(psi_uni(self.g, "b", "a"), self.p, self.x, "zero")
        np.testing.assert_array_equal(
            np.zeros(HEADS * WIDTH), result["a"].values[1]
        )
        self.assertTrue(np.any(result["a"].values[0] != 0))

    def test_zero_with_self_term(self):
        """A lonely node keeps its own projection."""
        result = att(
            psi_uni(self.g, "b", "a"),
            self.p,
            self.x,
            "zero",
            self_term=True,
        )
        np.testing.assert_allclose(
            self.x["a"].values[1] @ self.p.w_s.values, result["a"].values[1]
        )

    def test_bad_policy(self):
        with self.assertRaises(UsageError):
            att(psi_uni(self.g, "b", "a"), self.p, self.x, "drop")
