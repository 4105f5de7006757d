"""Dense tensors with reverse-mode automatic differentiation.

Every op builds a node holding its output value, its parents and a closure
that maps the output gradient to parent gradients.  ``backward`` walks the
graph in reverse topological order and accumulates into leaf ``.grad``.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


class ShapeError(ValueError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf that requires grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# elementwise


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype)
    return _make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    if not train or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / a.dtype.type(1 - p)
    return _make(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# shape ops


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _make(out, tensors, bw, "concat")


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[i] for i in axes]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def masked_mean(a: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Mean over ``axis`` counting only positions where ``mask`` is 1.

    ``mask`` broadcasts against ``a``; the reduced axis is dropped.
    """
    mask = np.asarray(mask, dtype=a.dtype)
    count = np.sum(np.broadcast_to(mask, a.shape), axis=axis, keepdims=True)
    weights = mask / np.maximum(count, 1)
    return sum(mul(a, weights), axis=axis)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _make(out, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``w`` stored as (in_features, out_features)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear expects last dim {w.shape[0]}, got {x.shape}")
    if x.ndim == 1:
        y = reshape(matmul(reshape(x, (1, x.shape[0])), w), (w.shape[1],))
    else:
        y = matmul(x, w)
    return y if b is None else add(y, b)


def conv_out_length(length: int, kernel: int, stride: int = 1, dilation: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv1d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """1-D cross-correlation over the last axis.

    ``x`` is (C_in, L) or (B, C_in, L); ``w`` is (C_out, C_in, k).
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3:
        raise ShapeError(f"conv1d input must be 2-D or 3-D, got {x.shape}")
    c_out, c_in, k = w.shape
    if xd.shape[1] != c_in:
        raise ShapeError(f"conv1d expects {c_in} input channels, got {xd.shape[1]}")
    n_b, _, length = xd.shape
    l_out = conv_out_length(length, k, stride, dilation, padding)
    if l_out < 1:
        raise ShapeError(f"conv1d output would be empty for input length {length}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    span = dilation * (k - 1) + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, span, axis=2)
    win = win[:, :, : stride * (l_out - 1) + 1 : stride, ::dilation]  # (B, C_in, L', k)
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(n_b, l_out, c_in * k)
    wmat = w.data.reshape(c_out, c_in * k)
    out = np.matmul(cols, wmat.T).transpose(0, 2, 1)  # (B, C_out, L')
    if b is not None:
        out = out + b.data[None, :, None]
    out = np.ascontiguousarray(out)
    if squeeze:
        out = out[0]

    def bw(g):
        g3 = g[None] if squeeze else g
        gt = g3.transpose(0, 2, 1)  # (B, L', C_out)
        gw = gx = gb = None
        if w.requires_grad:
            gw = (gt.reshape(-1, c_out).T @ cols.reshape(-1, c_in * k)).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g3.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = np.matmul(gt, wmat).reshape(n_b, l_out, c_in, k)
            gxp = np.zeros_like(xp)
            stop = stride * (l_out - 1) + 1
            for j in range(k):
                off = j * dilation
                gxp[:, :, off : off + stop : stride] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = gxp[:, :, padding : padding + length] if padding else gxp
            if squeeze:
                gx = gx[0]
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bw, "conv1d")


# ---------------------------------------------------------------------------
# normalisation / probability


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-stabilised softmax; entries where ``mask`` is 0 get exactly 0."""
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _make(y.astype(x.dtype), (x,), bw, "softmax")


def softmax_rows(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {x.shape}")
    return softmax(x, axis=-1)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return _make(out, (x,), bw, "log_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim == 1:
        logits = reshape(logits, (1, -1))
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} rows of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c}): {labels.tolist()}")
    z = logits.data - np.max(logits.data, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    picked = z[np.arange(n), labels]
    loss = np.asarray(np.mean(lse - picked), dtype=logits.dtype)
    probs = np.exp(z - lse[:, None])

    def bw(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1
        return (d * (g / n),)

    return _make(loss, (logits,), bw, "cross_entropy")


def layer_norm(x: Tensor, gamma: Tensor | None, beta: Tensor | None, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalise over one axis; ``gamma``/``beta`` are 1-D of that axis' size."""
    ax = axis % x.ndim
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(x.dtype)
    n = x.shape[ax]
    bshape = [1] * x.ndim
    bshape[ax] = n

    def bw(g):
        return (inv * (g - g.mean(axis=ax, keepdims=True) - xhat * (g * xhat).mean(axis=ax, keepdims=True)),)

    out = _make(xhat, (x,), bw, "layer_norm")
    if gamma is not None:
        out = mul(out, reshape(gamma, bshape))
    if beta is not None:
        out = add(out, reshape(beta, bshape))
    return out


def batch_norm_1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Per-channel normalisation of (B, C, T) or (C, T) input.

    In train mode batch statistics are used (restricted to ``mask`` == 1
    positions when given, mask shaped (B, T)) and the running buffers are
    updated in place.  Eval mode is a fixed affine map.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
        if mask is not None:
            mask = np.asarray(mask)[None]
    c = x.shape[1]
    if not train:
        inv = Tensor((1.0 / np.sqrt(running_var + eps)).astype(x.dtype).reshape(1, c, 1))
        g = reshape(gamma, (1, c, 1))
        shift = sub(reshape(beta, (1, c, 1)), mul(g, inv * Tensor(running_mean.astype(x.dtype).reshape(1, c, 1))))
        out = add(mul(x, mul(g, inv)), shift)
        return reshape(out, out.shape[1:]) if squeeze else out

    if mask is None:
        w = np.ones((x.shape[0], 1, x.shape[2]), dtype=x.dtype)
    else:
        w = np.asarray(mask, dtype=x.dtype)[:, None, :]
    n = float(w.sum())
    if n < 1:
        raise ValueError("batch_norm_1d needs at least one valid position")
    mu = (x.data * w).sum(axis=(0, 2), keepdims=True) / n
    xc = x.data - mu
    var = (xc * xc * w).sum(axis=(0, 2), keepdims=True) / n
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(x.dtype)

    def bw(g):
        # every output (padded ones included) depends on the masked statistics
        gm = g.sum(axis=(0, 2), keepdims=True) / n
        gxm = (g * xhat).sum(axis=(0, 2), keepdims=True) / n
        return ((inv * (g - w * gm - w * xhat * gxm)).astype(x.dtype),)

    unbiased = var.reshape(c) * (n / max(n - 1.0, 1.0))
    running_mean *= 1 - momentum
    running_mean += momentum * mu.reshape(c)
    running_var *= 1 - momentum
    running_var += momentum * unbiased

    out = _make(xhat, (x,), bw, "batch_norm_1d")
    out = add(mul(out, reshape(gamma, (1, c, 1))), reshape(beta, (1, c, 1)))
    return reshape(out, out.shape[1:]) if squeeze else out


# ---------------------------------------------------------------------------
# parameters, initialisation, RNG streams


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under one global seed."""
    import zlib

    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def kaiming_uniform(
    rng: np.random.Generator, shape: Sequence[int], fan_in: int, dtype=np.float32, gain: float = 1.0
) -> np.ndarray:
    bound = gain * math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(dtype)


class ModelParameters:
    """Named trainable tensors plus non-trainable buffers (BN running stats).

    Iteration is always in sorted-name order.
    """

    def __init__(self, params: dict[str, Tensor] | None = None, buffers: dict[str, np.ndarray] | None = None):
        self._params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = dict(buffers or {})
        for name, t in (params or {}).items():
            self.add(name, t)

    def add(self, name: str, value) -> Tensor:
        if name in self._params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self._params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.buffers[name] = np.array(value)
        return self.buffers[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def values(self):
        return [self._params[n] for n in self.names()]

    def buffer(self, name: str) -> np.ndarray:
        return self.buffers[name]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def count(self) -> int:
        return int(np.sum([t.data.size for t in self._params.values()]))

    def subset(self, prefix: str) -> "ModelParameters":
        """Parameters and buffers whose names start with ``prefix`` (shared tensors)."""
        sub_ = ModelParameters()
        sub_._params = {n: t for n, t in self._params.items() if n.startswith(prefix)}
        sub_.buffers = {n: b for n, b in self.buffers.items() if n.startswith(prefix)}
        return sub_

    def merge(self, other: "ModelParameters") -> "ModelParameters":
        out = ModelParameters()
        out._params = dict(self._params)
        out.buffers = dict(self.buffers)
        for n, t in other._params.items():
            if n in out._params or n in out.buffers:
                raise KeyError(f"duplicate parameter name {n!r}")
            out._params[n] = t
        for n, b in other.buffers.items():
            if n in out._params or n in out.buffers:
                raise KeyError(f"duplicate parameter name {n!r}")
            out.buffers[n] = b
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping of parameters and buffers."""
        st = {n: t.data for n, t in self._params.items()}
        st.update(self.buffers)
        return dict(sorted(st.items()))

    def astype(self, dtype) -> "ModelParameters":
        out = ModelParameters()
        for n, t in self.items():
            out.add(n, Tensor(t.data.astype(dtype)))
        for n, b in self.buffers.items():
            out.add_buffer(n, b.astype(dtype))
        return out


class MissingGradientError(RuntimeError):
    pass


class AdamState:
    def __init__(self, params: ModelParameters | Iterable[str], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        if isinstance(params, ModelParameters):
            for n, t in params.items():
                self.m[n] = np.zeros_like(t.data)
                self.v[n] = np.zeros_like(t.data)


def adam_step(params: ModelParameters, state: AdamState) -> None:
    """One bias-corrected Adam update of every parameter, then zero the grads."""
    for n, t in params.items():
        if t.grad is None:
            raise MissingGradientError(f"no gradient for parameter {n!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for n, t in params.items():
        g = t.grad
        if n not in state.m:
            state.m[n] = np.zeros_like(t.data)
            state.v[n] = np.zeros_like(t.data)
        m, v = state.m[n], state.v[n]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        upd = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        t.data = (t.data - upd).astype(t.data.dtype)
        t.grad = np.zeros_like(t.data)
