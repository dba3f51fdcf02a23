"""
Reverse-mode automatic differentiation over numpy arrays.

Every differentiable quantity in the model and in the loss is a DiffTensor.
Complex quantities are carried as a ComplexPair of two real tensors so that
every backward rule is real valued and can be checked with finite
differences.
"""

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from rispls.errors import (
    DimensionError,
    DomainError,
    TrainingError,
    UsageError,
)

# Negative slope of every LeakyReLU in the model.
LEAKY_SLOPE = 0.01
# Relative rounding of a loss value as seen by check_gradients.
GRADIENT_CHECK_ROUNDING = 1e-10

_recording = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build results without recording a computation graph."""
    global _recording
    previous = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = previous


class DiffTensor:
    """A node in a reverse-mode computation graph."""

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        parents: Sequence["DiffTensor"] = (),
        backward: Callable | None = None,
        op: str = "",
    ):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self._backward = backward
        self.op = op
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs one element, not {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def backward(self) -> None:
        backward(self)

    def reshape(self, *shape) -> "DiffTensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return mul(self, reciprocal(as_tensor(other)))

    def __rtruediv__(self, other):
        return mul(other, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def __repr__(self):
        return f"DiffTensor(shape={self.shape}, op={self.op!r})"


def tensor(values, requires_grad: bool = False) -> DiffTensor:
    return DiffTensor(values, requires_grad=requires_grad)


def as_tensor(x) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(x)


def _result(values, parents, rule, op) -> DiffTensor:
    """Attach a backward rule when any parent needs a gradient."""
    if _recording and any(p.requires_grad for p in parents):
        return DiffTensor(values, True, parents, rule, op)
    return DiffTensor(values, op=op)


def _topological_order(root: DiffTensor) -> list[DiffTensor]:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: DiffTensor) -> None:
    """
    Populate .grad of every tensor that root depends on. Gradients add to
    whatever is already stored, so call zero_grad() between passes.
    """
    if root.size != 1:
        raise UsageError(
            f"backward() needs a scalar root, not shape {root.shape}"
        )
    if not root.requires_grad:
        return
    pending = {id(root): np.ones_like(root.values)}
    for node in reversed(_topological_order(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node._grad = np.array(g) if node._grad is None else node._grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg


# Elementwise operations


def _binary_operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return a, b, a.values, b.values, a.shape
    if a.size == 1 and b.size != 1:
        return a, b, a.values.reshape(()), b.values, b.shape
    if b.size == 1 and a.size != 1:
        return a, b, a.values, b.values.reshape(()), a.shape
    if a.size == 1 and b.size == 1:
        out_shape = a.shape if a.ndim >= b.ndim else b.shape
        return a, b, a.values.reshape(()), b.values.reshape(()), out_shape
    raise DimensionError(
        f"{op}: shapes {a.shape} and {b.shape} are not compatible "
        "(only scalar broadcasting is supported)"
    )


def _fit(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(np.sum(g)).reshape(shape)


def add(a, b) -> DiffTensor:
    a, b, av, bv, shape = _binary_operands(a, b, "add")
    out = (av + bv).reshape(shape)
    return _result(
        out, (a, b), lambda g: (_fit(g, a.shape), _fit(g, b.shape)), "add"
    )


def sub(a, b) -> DiffTensor:
    a, b, av, bv, shape = _binary_operands(a, b, "sub")
    out = (av - bv).reshape(shape)
    return _result(
        out, (a, b), lambda g: (_fit(g, a.shape), _fit(-g, b.shape)), "sub"
    )


def mul(a, b) -> DiffTensor:
    a, b, av, bv, shape = _binary_operands(a, b, "mul")
    out = (av * bv).reshape(shape)

    def rule(g):
        return _fit(g * bv, a.shape), _fit(g * av, b.shape)

    return _result(out, (a, b), rule, "mul")


def neg(x) -> DiffTensor:
    x = as_tensor(x)
    return _result(-x.values, (x,), lambda g: (-g,), "neg")


def exp(x) -> DiffTensor:
    x = as_tensor(x)
    out = np.exp(x.values)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def log2(x) -> DiffTensor:
    x = as_tensor(x)
    if np.any(x.values <= 0):
        raise DomainError("log2 of a nonpositive value")
    return _result(
        np.log2(x.values),
        (x,),
        lambda g: (g / (x.values * np.log(2.0)),),
        "log2",
    )


def reciprocal(x) -> DiffTensor:
    x = as_tensor(x)
    if np.any(x.values == 0):
        raise DomainError("reciprocal of zero")
    out = 1.0 / x.values
    return _result(out, (x,), lambda g: (-g * out * out,), "reciprocal")


def sqrt(x) -> DiffTensor:
    """Square root; the subgradient at zero is taken as zero."""
    x = as_tensor(x)
    if np.any(x.values < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(x.values)

    def rule(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _result(out, (x,), rule, "sqrt")


def square(x) -> DiffTensor:
    x = as_tensor(x)
    return _result(
        x.values * x.values, (x,), lambda g: (2.0 * g * x.values,), "square"
    )


def cos(x) -> DiffTensor:
    x = as_tensor(x)
    return _result(
        np.cos(x.values), (x,), lambda g: (-g * np.sin(x.values),), "cos"
    )


def sin(x) -> DiffTensor:
    x = as_tensor(x)
    return _result(
        np.sin(x.values), (x,), lambda g: (g * np.cos(x.values),), "sin"
    )


def relu(x) -> DiffTensor:
    x = as_tensor(x)
    mask = x.values > 0
    return _result(
        np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,), "relu"
    )


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> DiffTensor:
    x = as_tensor(x)
    mask = x.values > 0
    scale = np.where(mask, 1.0, slope)
    return _result(
        x.values * scale, (x,), lambda g: (g * scale,), "leaky_relu"
    )


def sigmoid(x) -> DiffTensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.values))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def maximum(x, floor: float) -> DiffTensor:
    """Elementwise max(x, floor) with a constant floor."""
    x = as_tensor(x)
    mask = x.values > floor
    return _result(
        np.where(mask, x.values, floor), (x,), lambda g: (g * mask,), "max"
    )


def where(mask: np.ndarray, a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    if not (mask.shape == a.shape == b.shape):
        raise DimensionError(
            f"where: mask {mask.shape}, {a.shape} and {b.shape} differ"
        )
    return _result(
        np.where(mask, a.values, b.values),
        (a, b),
        lambda g: (g * mask, g * ~mask),
        "where",
    )


# Reductions


def _check_axis(x: DiffTensor, axis, op: str) -> None:
    axes = range(x.ndim) if axis is None else np.atleast_1d(axis)
    for ax in axes:
        if not -x.ndim <= ax < max(x.ndim, 1):
            raise DimensionError(f"{op}: axis {ax} invalid for {x.shape}")
    if (axis is None and x.size == 0) or (
        axis is not None and any(x.shape[ax] == 0 for ax in axes)
    ):
        raise DomainError(f"{op}: empty reduction axis for shape {x.shape}")


def sum(x, axis: int | None = None, keepdims: bool = False) -> DiffTensor:
    x = as_tensor(x)
    _check_axis(x, axis, "sum")
    out = np.sum(x.values, axis=axis, keepdims=keepdims)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), rule, "sum")


def mean(x, axis: int | None = None) -> DiffTensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return sum(x, axis) * (1.0 / count)


def max_with_argmax(x, axis: int) -> tuple[DiffTensor, np.ndarray]:
    """
    Maximum along an axis. Ties go to the lowest index, and the backward
    pass routes the whole incoming gradient to that element.
    """
    x = as_tensor(x)
    _check_axis(x, axis, "max")
    arg = np.argmax(x.values, axis=axis)
    picked = np.expand_dims(arg, axis)
    out = np.take_along_axis(x.values, picked, axis=axis).squeeze(axis)

    def rule(g):
        full = np.zeros_like(x.values)
        np.put_along_axis(full, picked, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _result(out, (x,), rule, "max"), arg


# Linear algebra and shape manipulation


def matmul(a, b) -> DiffTensor:
    """
    Matrix product. b is either a shared 2-D matrix or has the same batch
    extents as a.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape}")
    if b.ndim == 2:
        def rule(g):
            ga = g @ b.values.T
            lead = list(range(a.ndim - 1))
            gb = np.tensordot(a.values, g, axes=(lead, lead))
            return ga, gb

    elif a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2]:

        def rule(g):
            ga = g @ np.swapaxes(b.values, -1, -2)
            gb = np.swapaxes(a.values, -1, -2) @ g
            return ga, gb

    else:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape}")
    return _result(a.values @ b.values, (a, b), rule, "matmul")


def inv(a) -> DiffTensor:
    """Inverse of a (stack of) square real matrices."""
    a = as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"inv: shape {a.shape} is not square")
    try:
        out = np.linalg.inv(a.values)
    except np.linalg.LinAlgError as e:
        raise DomainError(f"inv: singular matrix ({e})")
    out_t = np.swapaxes(out, -1, -2)
    return _result(out, (a,), lambda g: (-(out_t @ g @ out_t),), "inv")


def concat(parts: Sequence, axis: int = 0) -> DiffTensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise UsageError("concat of nothing")
    ndim = parts[0].ndim
    axis = axis % max(ndim, 1)
    for p in parts[1:]:
        if p.ndim != ndim or any(
            p.shape[i] != parts[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise DimensionError(
                "concat: shapes "
                + ", ".join(str(q.shape) for q in parts)
                + f" disagree off axis {axis}"
            )
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]
    out = np.concatenate([p.values for p in parts], axis=axis)
    return _result(
        out,
        tuple(parts),
        lambda g: tuple(np.split(g, splits, axis=axis)),
        "concat",
    )


def zero_pad(x, width: int) -> DiffTensor:
    """Append zero columns along the last axis up to width."""
    x = as_tensor(x)
    current = x.shape[-1]
    if width < current:
        raise DimensionError(
            f"zero_pad: target width {width} is narrower than {current}"
        )
    if width == current:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, width - current)]
    return _result(
        np.pad(x.values, pad),
        (x,),
        lambda g: (g[..., :current],),
        "zero_pad",
    )


def reshape(x, shape) -> DiffTensor:
    x = as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: {x.shape} to {shape}")
    return _result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes: Sequence[int]) -> DiffTensor:
    x = as_tensor(x)
    inverse = np.argsort(axes)
    return _result(
        np.transpose(x.values, axes),
        (x,),
        lambda g: (np.transpose(g, inverse),),
        "transpose",
    )


def swap_last(x) -> DiffTensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def _is_basic(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(
        p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice))
        for p in parts
    )


def index(x, key) -> DiffTensor:
    x = as_tensor(x)
    out = np.array(x.values[key])
    basic = _is_basic(key)

    def rule(g):
        full = np.zeros_like(x.values)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _result(out, (x,), rule, "index")


def take(x, indices: np.ndarray) -> DiffTensor:
    """Gather rows (axis 0)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)

    def rule(g):
        full = np.zeros_like(x.values)
        np.add.at(full, indices, g)
        return (full,)

    return _result(x.values[indices], (x,), rule, "take")


def segment_sum(x, segments: np.ndarray, count: int) -> DiffTensor:
    """Sum rows of x into count buckets selected by segments."""
    x = as_tensor(x)
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((count,) + x.shape[1:])
    np.add.at(out, segments, x.values)
    return _result(out, (x,), lambda g: (g[segments],), "segment_sum")


def segment_softmax(logits, segments: np.ndarray, count: int) -> DiffTensor:
    """Softmax over the rows that share a segment, column by column."""
    logits = as_tensor(logits)
    segments = np.asarray(segments, dtype=np.int64)
    peak = np.full((count,) + logits.shape[1:], -np.inf)
    np.maximum.at(peak, segments, logits.values)
    shifted = np.exp(logits.values - peak[segments])
    total = np.zeros_like(peak)
    np.add.at(total, segments, shifted)
    out = shifted / total[segments]

    def rule(g):
        weighted = np.zeros_like(peak)
        np.add.at(weighted, segments, g * out)
        return (out * (g - weighted[segments]),)

    return _result(out, (logits,), rule, "segment_softmax")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def broadcast_to(x, shape) -> DiffTensor:
    """Explicit broadcast; the only way tensors of unequal shape combine."""
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.values, shape).copy()
    except ValueError:
        raise DimensionError(f"broadcast_to: {x.shape} to {shape}")
    return _result(
        out, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast"
    )


def expand_last(x, n: int) -> DiffTensor:
    """Repeat x along a new trailing axis of length n."""
    x = as_tensor(x)
    return broadcast_to(reshape(x, x.shape + (1,)), x.shape + (n,))


def layer_norm(x, epsilon: float = 1e-12) -> DiffTensor:
    """Centre each row on its mean and scale it to unit variance."""
    x = as_tensor(x)
    width = x.shape[-1]
    centred = x - expand_last(mean(x, axis=-1), width)
    spread = sqrt(mean(square(centred), axis=-1) + epsilon)
    return centred * expand_last(reciprocal(spread), width)


# Complex arithmetic from real pairs


@dataclass
class ComplexPair:
    """A complex tensor stored as its real and imaginary parts."""

    re: DiffTensor
    im: DiffTensor

    def __post_init__(self):
        self.re = as_tensor(self.re)
        self.im = as_tensor(self.im)
        if self.re.shape != self.im.shape:
            raise DimensionError(
                f"ComplexPair: re {self.re.shape} and im {self.im.shape}"
            )

    @classmethod
    def from_numpy(cls, z, requires_grad: bool = False) -> "ComplexPair":
        z = np.asarray(z, dtype=np.complex128)
        return cls(
            DiffTensor(z.real.copy(), requires_grad),
            DiffTensor(z.imag.copy(), requires_grad),
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.values + 1j * self.im.values

    def conj(self) -> "ComplexPair":
        return ComplexPair(self.re, neg(self.im))

    def reshape(self, *shape) -> "ComplexPair":
        return ComplexPair(self.re.reshape(*shape), self.im.reshape(*shape))

    def __getitem__(self, key) -> "ComplexPair":
        return ComplexPair(index(self.re, key), index(self.im, key))

    def __add__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(self.re - other.re, self.im - other.im)

    def scale(self, factor) -> "ComplexPair":
        """Multiply by a real tensor of the same shape (or a scalar)."""
        return ComplexPair(self.re * factor, self.im * factor)


def _check_complex(a: ComplexPair, b: ComplexPair, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape}")


def cmul(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    _check_complex(a, b, "cmul")
    return ComplexPair(
        a.re * b.re - a.im * b.im,
        a.re * b.im + a.im * b.re,
    )


def cmatmul(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    return ComplexPair(
        a.re @ b.re - a.im @ b.im,
        a.re @ b.im + a.im @ b.re,
    )


def cmatvec(m: ComplexPair, v: ComplexPair) -> ComplexPair:
    """m (..., p, q) times v (..., q)."""
    if v.shape[-1] != m.shape[-1]:
        raise DimensionError(f"cmatvec: shapes {m.shape} and {v.shape}")
    out = cmatmul(m, v.reshape(v.shape + (1,)))
    return out.reshape(out.shape[:-1])


def cgram(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    """
    Pairwise Hermitian products over the last axis: out[..., p, q] equals
    a[..., p, :]^H b[..., q, :].
    """
    if a.shape[-1] != b.shape[-1] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"cgram: shapes {a.shape} and {b.shape}")
    bre, bim = swap_last(b.re), swap_last(b.im)
    return ComplexPair(
        a.re @ bre + a.im @ bim,
        a.re @ bim - a.im @ bre,
    )


def hermitian_dot(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    """sum(conj(a) * b) over the last axis."""
    _check_complex(a, b, "hermitian_dot")
    return ComplexPair(
        sum(a.re * b.re + a.im * b.im, axis=-1),
        sum(a.re * b.im - a.im * b.re, axis=-1),
    )


def abs2(a: ComplexPair) -> DiffTensor:
    return square(a.re) + square(a.im)


def cnorm(a: ComplexPair) -> DiffTensor:
    """Euclidean norm over the last axis."""
    return sqrt(sum(abs2(a), axis=-1))


def cinv(a: ComplexPair) -> ComplexPair:
    """
    Inverse of complex square matrices through the real block form
    [[A_re, -A_im], [A_im, A_re]].
    """
    n = a.shape[-1]
    top = concat([a.re, neg(a.im)], axis=-1)
    bottom = concat([a.im, a.re], axis=-1)
    block = inv(concat([top, bottom], axis=-2))
    return ComplexPair(block[..., :n, :n], block[..., n:, :n])


# Parameters and optimization


class ModelParams:
    """Learnable tensors keyed by a stable path name."""

    def __init__(self):
        self._tensors: dict[str, DiffTensor] = {}

    def add(self, path: str, values) -> DiffTensor:
        if path in self._tensors:
            raise UsageError(f"Duplicate parameter path: {path}")
        t = DiffTensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._tensors[path] = t
        return t

    def uniform(
        self, path: str, shape, bound: float, rng: np.random.Generator
    ) -> DiffTensor:
        return self.add(path, rng.uniform(-bound, bound, size=shape))

    def __getitem__(self, path: str) -> DiffTensor:
        return self._tensors[path]

    def __contains__(self, path: str) -> bool:
        return path in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def count(self) -> int:
        """Total number of learnable scalars."""
        return int(np.sum([t.size for t in self._tensors.values()]))

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.values.copy() for k, t in self._tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) ^ set(state)
        if missing:
            raise DimensionError(
                f"Parameter sets differ: {', '.join(sorted(missing))}"
            )
        for path, t in self._tensors.items():
            values = np.asarray(state[path], dtype=np.float64)
            if values.shape != t.shape:
                raise DimensionError(
                    f"{path}: stored {values.shape}, model {t.shape}"
                )
            t.values[...] = values


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParams, state: AdamState) -> None:
    """One bias-corrected Adam update. Gradients are zeroed afterwards."""
    for path, t in params.items():
        if not np.all(np.isfinite(t.grad)):
            raise TrainingError(f"Non-finite gradient in parameter {path}")

    state.step_count += 1
    correct1 = 1.0 - state.beta1**state.step_count
    correct2 = 1.0 - state.beta2**state.step_count
    for path, t in params.items():
        g = t.grad
        m = state.first_moment.get(path)
        v = state.second_moment.get(path)
        if m is None:
            m = np.zeros_like(t.values)
            v = np.zeros_like(t.values)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[path] = m
        state.second_moment[path] = v
        t.values -= (
            state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.epsilon)
        )
    params.zero_grad()


def _central_difference(fn, flat: np.ndarray, i: int, step: float) -> float:
    saved = flat[i]
    try:
        flat[i] = saved + step
        with no_grad():
            up = fn().item()
        flat[i] = saved - step
        with no_grad():
            down = fn().item()
    finally:
        flat[i] = saved
    return (up - down) / (2 * step)


def check_gradients(
    fn: Callable[[], DiffTensor],
    tensors: Sequence[DiffTensor],
    h: float = 1e-6,
    samples: int | None = None,
    rng: np.random.Generator | None = None,
    refine: int = 1,
) -> float:
    """
    Compare backward() with central finite differences and return the
    worst relative error. With samples set, only that many randomly chosen
    coordinates of each tensor are checked.

    The step is h times the magnitude of the coordinate, never less than h.
    Gradients below what the differences can resolve (about ten digits of
    the loss) are compared against that resolution instead. With refine > 1
    a coordinate that disagrees is differenced again at step / refine and
    the closer estimate counts, so a LeakyReLU or max kink straddled by
    one step does not fail the check.
    """
    for t in tensors:
        t.zero_grad()
    root = fn()
    root.backward()
    analytic = [t.grad.copy() for t in tensors]
    rounding = GRADIENT_CHECK_ROUNDING * max(1.0, abs(root.item()))
    divisors = (1,) if refine <= 1 else (1, refine)

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.values.reshape(-1)
        coords = np.arange(flat.size)
        if samples is not None and flat.size > samples:
            rng = rng if rng is not None else np.random.default_rng(0)
            coords = rng.choice(flat.size, size=samples, replace=False)
        for i in coords:
            exact = grad.reshape(-1)[i]
            error = np.inf
            for divisor in divisors:
                step = h * max(1.0, abs(flat[i])) / divisor
                numeric = _central_difference(fn, flat, i, step)
                scale = max(abs(numeric), abs(exact), 1e-6, rounding / step)
                error = min(error, abs(numeric - exact) / scale)
                if error < 1e-6:
                    break
            worst = max(worst, error)
    if worst > 1e-2:
        logging.info(f"Gradient check worst relative error: {worst:.3e}")
    return worst
