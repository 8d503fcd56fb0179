"""Dense float64 tensors with reverse-mode differentiation.

A Tensor wraps a numpy float64 array. Operations record their inputs and
a backward closure on the output node; `backward()` replays the recorded
graph in reverse topological order and accumulates gradients into every
tensor that was created with requires_grad. The module also provides the
SGD-with-momentum update and a bit-exact parameter checkpoint container.

Everything is 64-bit: desk-scale problem sizes make the precision cheap
and it keeps finite-difference checks tight.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from contextlib import contextmanager
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Tensor", "tensor", "param", "no_grad", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "column_dot",
    "conv2d", "max_pool2d", "relu", "log", "exp", "sigmoid", "softplus",
    "transpose", "reshape", "reduce_sum", "reduce_mean",
    "softmax_rows", "log_softmax_rows", "take_per_row",
    "slice_rows", "concat_rows",
    "forward_primitive",
    "ParamSet", "sgd_momentum_step",
    "save_params", "load_params",
    "ShapeError",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_f64(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A node in the recorded computation graph.

    `data` is always a float64 ndarray. `grad` is populated by backward()
    for nodes with requires_grad. Parent links plus the stored backward
    closure form the tape; construction order is a topological order of it.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self.op = "leaf"

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def param(data) -> Tensor:
    """A trainable leaf."""
    return Tensor(data, requires_grad=True)


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    record = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = record
    out._parents = parents if record else ()
    out._backward_fn = backward_fn if record else None
    out.op = op
    return out


# -- backward driver ---------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(tensor) into .grad for every requires_grad tensor.

    `loss` must be scalar. If `params` is given, any listed tensor the loss
    does not depend on receives an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_topo_order(loss)):
        fn = node._backward_fn
        if fn is None or node.grad is None:
            continue
        grads = fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                # adopt the producer's array; accumulation below never
                # mutates it, so shared views stay intact
                parent.grad = g
            else:
                parent.grad = parent.grad + g
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)


# -- broadcasting helpers -----------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    out = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _node(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = _lift(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, (a, b), bw, "matmul")


def column_dot(a, b) -> Tensor:
    """Pairwise dot products of columns: out[i, j] = <a[:, i], b[:, j]>."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"column_dot: incompatible shapes {a.shape} and {b.shape}")
    return matmul(transpose(a), b)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {a.shape}")
    return _node(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    orig = a.shape
    return _node(out, (a,), lambda g: (g.reshape(orig),), "reshape")


# -- elementwise nonlinearities -----------------------------------------------


def relu(a) -> Tensor:
    a = _lift(a)
    out = np.maximum(a.data, 0.0)
    return _node(out, (a,), lambda g: (g * (out > 0.0),), "relu")


def log(a) -> Tensor:
    a = _lift(a)
    out = np.log(a.data)

    def bw(g):
        return (g / a.data,)

    return _node(out, (a,), bw, "log")


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def sigmoid(a) -> Tensor:
    a = _lift(a)
    z = a.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), bw, "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    a = _lift(a)
    z = a.data
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))

    def bw(g):
        s = np.empty_like(z)
        pos = z >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        s[~pos] = ez / (1.0 + ez)
        return (g * s,)

    return _node(out, (a,), bw, "softplus")


# -- reductions ---------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape).copy() if shape else g.copy()
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        for ax in sorted(ax % len(shape) for ax in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape).copy()


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        return (_expand_reduced(np.asarray(g), shape, axis, keepdims),)

    return _node(np.asarray(out), (a,), bw, "sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.data.size if axis is None else np.prod(
        [shape[ax % len(shape)] for ax in ((axis,) if isinstance(axis, int) else axis)])

    def bw(g):
        return (_expand_reduced(np.asarray(g), shape, axis, keepdims) / count,)

    return _node(np.asarray(out), (a,), bw, "mean")


# -- row-wise softmax ---------------------------------------------------------


def _check_rows(a: Tensor, op: str) -> None:
    if a.data.ndim != 2:
        raise ShapeError(f"{op}: expected a 2-d batch-by-class tensor, got shape {a.shape}")


def softmax_rows(a) -> Tensor:
    a = _lift(a)
    _check_rows(a, "softmax_rows")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    out = ez / ez.sum(axis=1, keepdims=True)

    def bw(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (a,), bw, "softmax_rows")


def log_softmax_rows(a) -> Tensor:
    a = _lift(a)
    _check_rows(a, "log_softmax_rows")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _node(out, (a,), bw, "log_softmax_rows")


def take_per_row(a, index) -> Tensor:
    """out[i] = a[i, index[i]]; `index` is a constant integer vector."""
    a = _lift(a)
    _check_rows(a, "take_per_row")
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"take_per_row: index shape {idx.shape} does not match rows {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise IndexError(f"take_per_row: index out of range for {a.shape[1]} columns")
    rows = np.arange(a.shape[0])
    out = a.data[rows, idx]
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[rows, idx] = g
        return (full,)

    return _node(out, (a,), bw, "take_per_row")


# -- batch plumbing -----------------------------------------------------------


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = _lift(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.shape}")
    out = a.data[start:stop].copy()
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _node(out, (a,), bw, "slice_rows")


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows: empty input")
    tails = {p.shape[1:] for p in parts}
    if len(tails) != 1:
        raise ShapeError(f"concat_rows: mismatched trailing shapes {sorted(tails)}")
    out = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.shape[0] for p in parts]

    def bw(g):
        grads = []
        at = 0
        for n in sizes:
            grads.append(g[at:at + n])
            at += n
        return tuple(grads)

    return _node(out, tuple(parts), bw, "concat_rows")


# -- convolution and pooling --------------------------------------------------


def _im2col_cbl(xp_cb: np.ndarray, kh: int, kw: int, stride: int):
    """(C, B, Hp, Wp) -> column matrix of shape (kh*kw*C, B*ho*wo).

    Offset-major row order: row index = (i*kw + j)*C + c. Built with slice
    copies so the reshape into the gemm operand is free.
    """
    c, b, hp, wp = xp_cb.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((kh, kw, c, b, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[i, j] = xp_cb[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(kh * kw * c, b * ho * wo), ho, wo


def conv2d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation. x: (B, Cin, H, W); w: (Cout, Cin, kh, kw)."""
    x, w = _lift(x), _lift(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {w.shape}")
    b, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {cin_w}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: bad stride/padding ({stride}, {padding})")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd} (pad {padding})")

    hp, wp = h + 2 * padding, wd + 2 * padding
    xp_cb = np.zeros((cin, b, hp, wp))
    xp_cb[:, :, padding:padding + h, padding:padding + wd] = x.data.transpose(1, 0, 2, 3)
    cols, ho, wo = _im2col_cbl(xp_cb, kh, kw, stride)
    # weight matrix in the matching offset-major order
    wmat = w.data.transpose(2, 3, 1, 0).reshape(kh * kw * cin, cout)
    out_flat = (cols.T @ wmat)                        # (B*L, Cout)
    out = out_flat.reshape(b, ho * wo, cout).transpose(0, 2, 1).reshape(b, cout, ho, wo)
    x_needs, w_needs = x.requires_grad, w.requires_grad

    def bw(g):
        gmat = g.reshape(b, cout, ho * wo).transpose(0, 2, 1).reshape(b * ho * wo, cout)
        dw = None
        if w_needs:
            dwmat = cols @ gmat                       # (K, Cout)
            dw = dwmat.reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1)
        if not x_needs:
            return None, dw
        dcols = wmat @ gmat.T                         # (K, B*L)
        dcols = dcols.reshape(kh, kw, cin, b, ho, wo)
        dxp = np.zeros((cin, b, hp, wp))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[i, j]
        dx_cb = dxp[:, :, padding:padding + h, padding:padding + wd] if padding else dxp
        return np.ascontiguousarray(dx_cb.transpose(1, 0, 2, 3)), dw

    return _node(out, (x, w), bw, "conv2d")


def max_pool2d(x, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; spatial dims must be divisible by size.

    Gradient ties go to the first window slot in row-major order, so the
    backward pass is deterministic.
    """
    x = _lift(x)
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2d: expected 4-d input, got shape {x.shape}")
    b, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"max_pool2d: {h}x{w} not divisible by pool size {size}")
    ho, wo = h // size, w // size
    windows = x.data.reshape(b, c, ho, size, wo, size)
    out = windows[:, :, :, 0, :, 0]
    for i in range(size):
        for j in range(size):
            if i or j:
                out = np.maximum(out, windows[:, :, :, i, :, j])

    def bw(g):
        # first window slot (row-major) claims tied maxima, deterministically
        dx = np.zeros((b, c, ho, size, wo, size))
        claimed = np.zeros(out.shape, dtype=bool)
        for i in range(size):
            for j in range(size):
                take = (windows[:, :, :, i, :, j] == out) & ~claimed
                dx[:, :, :, i, :, j] = take * g
                claimed |= take
        return (dx.reshape(b, c, h, w),)

    return _node(out, (x,), bw, "max_pool2d")


# -- spec-surface dispatch ----------------------------------------------------

_PRIMITIVES = {
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "matmul": matmul,
    "conv2d": conv2d,
    "relu": relu,
    "max-pool": max_pool2d,
    "mean": reduce_mean,
    "sum": reduce_sum,
    "log": log,
    "exp": exp,
    "negate": neg,
    "transpose": transpose,
    "reshape": reshape,
    "row-softmax": softmax_rows,
    "dot-product-of-columns": column_dot,
}


def forward_primitive(op_kind: str, *inputs, **params) -> Tensor:
    """Name-based dispatch over the primitive op set."""
    try:
        fn = _PRIMITIVES[op_kind]
    except KeyError:
        raise ValueError(f"unknown primitive op kind: {op_kind!r}") from None
    return fn(*inputs, **params)


# -- optimizer ----------------------------------------------------------------


class ParamSet:
    """Named trainable tensors plus their momentum buffers."""

    def __init__(self):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.velocity: dict[str, np.ndarray] = {}

    def add(self, name: str, p: Tensor) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        self.params[name] = p
        self.velocity[name] = np.zeros_like(p.data)

    def add_group(self, prefix: str, group: Mapping[str, Tensor]) -> None:
        for name, p in group.items():
            self.add(f"{prefix}.{name}", p)

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def gather_grads(self) -> dict[str, np.ndarray]:
        """Current gradients, with zeros for parameters the loss never touched."""
        return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in self.params.items()}

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"checkpoint shape {arr.shape} != {p.data.shape} for {name!r}")
            p.data = arr.copy()
            self.velocity[name] = np.zeros_like(p.data)


def sgd_momentum_step(params: ParamSet, grads: Mapping[str, np.ndarray],
                      lr: float, momentum: float = 0.9) -> None:
    """Classic momentum: v <- momentum*v + g; p <- p - lr*v."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name in params.params:
        if name not in grads:
            raise KeyError(f"missing gradient for parameter {name!r}")
    for name, p in params.params.items():
        v = params.velocity[name]
        v *= momentum
        v += grads[name]
        p.data = p.data - lr * v


# -- checkpoint container -----------------------------------------------------

_CKPT_MAGIC = b"CGCKPT1\n"


def save_params(path, arrays: Mapping[str, np.ndarray]) -> None:
    """Write (name, shape, float64 values) triples; round-trips bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            a = np.asarray(arr, dtype=np.float64)
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", a.ndim))
            for dim in a.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(a.astype("<f8", copy=False).tobytes())


def load_params(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        out: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            out[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        return out
