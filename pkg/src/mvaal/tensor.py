"""Reverse-mode autodiff over dense float64 tensors.

Every backward rule is itself expressed with the ops below, so gradients are
graph-connected when requested and second derivatives (needed by the
gradient penalty) come for free.
"""

from __future__ import annotations

import struct
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "UnknownPrimitiveError",
    "GraphError",
    "tensor",
    "zeros",
    "ones",
    "no_grad",
    "backward",
    "apply_primitive",
    "grad_penalty_kernel",
    "finite_difference_check",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "save_tensor",
    "load_tensor",
]


class ShapeError(ValueError):
    pass


class UnknownPrimitiveError(KeyError):
    pass


class GraphError(RuntimeError):
    pass


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def enable_grad():
    prev = _grad_enabled()
    _state.grad_enabled = True
    try:
        yield
    finally:
        _state.grad_enabled = prev


class _Node:
    """One primitive application in the graph."""

    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op, inputs, vjp):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp


class Tensor:
    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, op, inputs, vjp) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = _Node(op, tuple(inputs), vjp)
    return out


def _shape_err(op, *shapes):
    return ShapeError(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


# -- broadcasting helpers ----------------------------------------------------

def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Reduce a gradient back to `shape` after numpy-style broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        g = reshape(g, tuple(shape))
    return g


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise _shape_err("broadcast", a.shape, shape)
    src_shape = a.shape

    def vjp(g):
        return (_unbroadcast(g, src_shape),)

    return _make(np.ascontiguousarray(data), "broadcast", [a], vjp)


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise _shape_err("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(data, "add", [a, b], vjp)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise _shape_err("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(neg(g), sb)

    return _make(data, "sub", [a, b], vjp)


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise _shape_err("mul", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(mul(g, b), sa), _unbroadcast(mul(g, a), sb)

    return _make(data, "mul", [a, b], vjp)


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise _shape_err("div", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = _unbroadcast(div(g, b), sa)
        gb = _unbroadcast(neg(div(mul(g, a), mul(b, b))), sb)
        return ga, gb

    return _make(data, "div", [a, b], vjp)


def neg(a):
    a = _coerce(a)
    return _make(-a.data, "neg", [a], lambda g: (neg(g),))


def exp(a):
    a = _coerce(a)
    out = _make(np.exp(a.data), "exp", [a], None)
    if out.node is not None:
        out.node.vjp = lambda g: (mul(g, out),)
    return out


def log(a):
    a = _coerce(a)
    return _make(np.log(a.data), "log", [a], lambda g: (div(g, a),))


def sqrt(a):
    a = _coerce(a)
    out = _make(np.sqrt(a.data), "sqrt", [a], None)
    if out.node is not None:
        out.node.vjp = lambda g: (div(g, mul(out, 2.0)),)
    return out


def square(a):
    a = _coerce(a)
    return _make(a.data * a.data, "square", [a], lambda g: (mul(g, mul(a, 2.0)),))


def relu(a):
    a = _coerce(a)
    mask = Tensor((a.data > 0).astype(np.float64))
    return _make(a.data * mask.data, "relu", [a], lambda g: (mul(g, mask),))


def leaky_relu(a, slope=0.2):
    a = _coerce(a)
    m = np.where(a.data > 0, 1.0, slope)
    mask = Tensor(m)
    return _make(a.data * m, "leaky_relu", [a], lambda g: (mul(g, mask),))


def sigmoid(a):
    a = _coerce(a)
    # tanh form is overflow-safe for large |x|
    out = _make(0.5 * (np.tanh(0.5 * a.data) + 1.0), "sigmoid", [a], None)
    if out.node is not None:
        out.node.vjp = lambda g: (mul(g, mul(out, sub(1.0, out))),)
    return out


def tanh(a):
    a = _coerce(a)
    out = _make(np.tanh(a.data), "tanh", [a], None)
    if out.node is not None:
        out.node.vjp = lambda g: (mul(g, sub(1.0, mul(out, out))),)
    return out


# -- reductions and shape ops -------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = _coerce(a)
    data = np.sum(a.data, axis=axis, keepdims=keepdims)
    in_shape = a.shape

    if axis is None:
        axes = tuple(range(len(in_shape)))
    elif isinstance(axis, int):
        axes = (axis % len(in_shape),)
    else:
        axes = tuple(ax % len(in_shape) for ax in axis)

    def vjp(g):
        if not keepdims:
            kshape = tuple(1 if i in axes else d for i, d in enumerate(in_shape))
            g = reshape(g, kshape)
        return (broadcast_to(g, in_shape),)

    return _make(data, "sum", [a], vjp)


def mean(a, axis=None, keepdims=False):
    a = _coerce(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = _coerce(a)
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise _shape_err("reshape", a.shape, shape)
    in_shape = a.shape
    return _make(data, "reshape", [a], lambda g: (reshape(g, in_shape),))


def transpose(a, axes=None):
    a = _coerce(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(a.data.transpose(axes)), "transpose", [a],
                 lambda g: (transpose(g, inv),))


def concat(tensors, axis=0):
    tensors = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    nd = tensors[0].ndim
    ax = axis % nd

    def vjp(g):
        outs = []
        for k in range(len(sizes)):
            key = tuple(slice(None) if i != ax else slice(int(offsets[k]), int(offsets[k + 1]))
                        for i in range(nd))
            outs.append(getitem(g, key))
        return tuple(outs)

    return _make(data, "concat", tensors, vjp)


def getitem(a, key):
    a = _coerce(a)
    data = a.data[key]
    if np.isscalar(data):
        data = np.asarray(data)
    in_shape = a.shape
    return _make(np.ascontiguousarray(data), "slice", [a],
                 lambda g: (_scatter(g, key, in_shape),))


def _scatter(g, key, shape):
    """Adjoint of getitem: place g into a zero tensor of `shape` at `key`."""
    g = _coerce(g)
    buf = np.zeros(shape)
    np.add.at(buf, key, g.data)
    return _make(buf, "scatter", [g], lambda gg: (getitem(gg, key),))


# -- matmul and convolutions ---------------------------------------------------

def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_err("matmul", a.shape, b.shape)
    data = a.data @ b.data

    def vjp(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _make(data, "matmul", [a, b], vjp)


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp, kh, kw, s, oh, ow):
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, oh, ow))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
    return cols


def conv2d(x, w, stride=1, padding=0):
    """x: [B,C,H,W], w: [O,C,kh,kw] -> [B,O,OH,OW] (cross-correlation)."""
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise _shape_err("conv2d", x.shape, w.shape)
    _, _, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise _shape_err("conv2d", x.shape, w.shape)
    cols = _im2col(_pad2d(x.data, padding), kh, kw, stride, oh, ow)
    data = np.einsum("bcijhw,ocij->bohw", cols, w.data, optimize=True)
    in_hw = (h, wd)

    def vjp(g):
        gx = conv_transpose2d(g, w, stride=stride, padding=padding, out_hw=in_hw)
        gw = conv2d_wgrad(x, g, stride=stride, padding=padding, ksize=(kh, kw))
        return gx, gw

    return _make(data, "conv2d", [x, w], vjp)


def conv_transpose2d(x, w, stride=1, padding=0, out_hw=None):
    """x: [B,O,h,w], w: [O,C,kh,kw] -> [B,C,OH,OW]; exact adjoint of conv2d."""
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise _shape_err("transposed-conv2d", x.shape, w.shape)
    b, o, h, wd = x.shape
    _, c, kh, kw = w.shape
    if out_hw is None:
        out_hw = ((h - 1) * stride + kh - 2 * padding, (wd - 1) * stride + kw - 2 * padding)
    oh, ow = out_hw
    t = np.einsum("bohw,ocij->bcijhw", x.data, w.data, optimize=True)
    ypad = np.zeros((b, c, oh + 2 * padding, ow + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            ypad[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] += t[:, :, i, j]
    data = ypad[:, :, padding:padding + oh, padding:padding + ow]

    def vjp(g):
        gx = conv2d(g, w, stride=stride, padding=padding)
        gw = conv2d_wgrad(g, x, stride=stride, padding=padding, ksize=(kh, kw))
        return gx, gw

    return _make(np.ascontiguousarray(data), "transposed-conv2d", [x, w], vjp)


def conv2d_wgrad(x, g, stride=1, padding=0, ksize=(1, 1)):
    """Weight gradient of conv2d: x [B,C,H,W], g [B,O,OH,OW] -> [O,C,kh,kw]."""
    x, g = _coerce(x), _coerce(g)
    kh, kw = ksize
    _, _, oh, ow = g.shape
    cols = _im2col(_pad2d(x.data, padding), kh, kw, stride, oh, ow)
    data = np.einsum("bcijhw,bohw->ocij", cols, g.data, optimize=True)
    in_hw = x.shape[2:]

    def vjp(u):
        gx = conv_transpose2d(g, u, stride=stride, padding=padding, out_hw=in_hw)
        gg = conv2d(x, u, stride=stride, padding=padding)
        return gx, gg

    return _make(data, "conv2d-wgrad", [x, g], vjp)


def max_pool2d(x, ksize=2, stride=None):
    """x: [B,C,H,W]; non-padded max pooling."""
    x = _coerce(x)
    if stride is None:
        stride = ksize
    b, c, h, w = x.shape
    oh = (h - ksize) // stride + 1
    ow = (w - ksize) // stride + 1
    if oh < 1 or ow < 1:
        raise _shape_err("max-pool2d", x.shape, (ksize, ksize))
    cols = _im2col(x.data, ksize, ksize, stride, oh, ow)  # [B,C,kh,kw,OH,OW]
    flat = cols.reshape(b, c, ksize * ksize, oh, ow)
    arg = flat.argmax(axis=2)  # [B,C,OH,OW] window-local
    data = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
    # absolute flat index into [H*W] per pooled cell
    ii, jj = np.divmod(arg, ksize)
    ohs = np.arange(oh)[:, None] * stride
    ows = np.arange(ow)[None, :] * stride
    abs_idx = (ii + ohs) * w + (jj + ows)
    in_shape = (b, c, h, w)

    def vjp(g):
        return (_pool_scatter(g, abs_idx, in_shape),)

    return _make(data, "max-pool2d", [x], vjp)


def _pool_scatter(g, abs_idx, in_shape):
    g = _coerce(g)
    b, c, h, w = in_shape
    buf = np.zeros((b * c, h * w))
    flatg = g.data.reshape(b * c, -1)
    flati = abs_idx.reshape(b * c, -1)
    rows = np.arange(b * c)[:, None]
    np.add.at(buf, (rows, flati), flatg)
    out_shape = g.shape

    def vjp(u):
        return (_pool_gather(u, abs_idx, out_shape),)

    return _make(buf.reshape(in_shape), "pool-scatter", [g], vjp)


def _pool_gather(u, abs_idx, out_shape):
    u = _coerce(u)
    b, c = out_shape[:2]
    flat = u.data.reshape(b * c, -1)
    flati = abs_idx.reshape(b * c, -1)
    rows = np.arange(b * c)[:, None]
    data = flat[rows, flati].reshape(out_shape)
    in_shape = u.shape

    def vjp(g):
        return (_pool_scatter(g, abs_idx, in_shape),)

    return _make(data, "pool-gather", [u], vjp)


# -- fused losses and norms -----------------------------------------------------

def softmax_cross_entropy(logits, labels):
    """logits [B,C], labels int array [B] -> per-sample loss [B]."""
    logits = _coerce(logits)
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,) or labels.min() < 0 or labels.max() >= c:
        raise ShapeError(f"softmax-cross-entropy: bad labels for logits {logits.shape}")
    zmax = logits.data.max(axis=1, keepdims=True)
    ez = np.exp(logits.data - zmax)
    lse = np.log(ez.sum(axis=1)) + zmax[:, 0]
    data = lse - logits.data[np.arange(b), labels]
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    onehot_t = Tensor(onehot)
    zmax_t = Tensor(zmax)

    def vjp(g):
        # recompute softmax with graph ops so the vjp is differentiable
        e = exp(sub(logits, zmax_t))
        p = div(e, sum_(e, axis=1, keepdims=True))
        return (mul(sub(p, onehot_t), reshape(g, (b, 1))),)

    return _make(data, "softmax-cross-entropy", [logits], vjp)


def l2_norm(x, axes=None):
    """Euclidean norm over trailing axes (default: all but the first)."""
    x = _coerce(x)
    if axes is None:
        axes = tuple(range(1, x.ndim)) if x.ndim > 1 else (0,)
    return sqrt(sum_(square(x), axis=axes))


# -- primitive dispatch ----------------------------------------------------------

_PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "conv2d": conv2d,
    "transposed-conv2d": conv_transpose2d,
    "max-pool2d": max_pool2d,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "square": square,
    "mean": mean,
    "sum": sum_,
    "relu": relu,
    "leaky-relu": leaky_relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax-cross-entropy": softmax_cross_entropy,
    "reshape": reshape,
    "concat": concat,
    "slice": getitem,
    "broadcast": broadcast_to,
    "l2-norm": l2_norm,
    "transpose": transpose,
}


def apply_primitive(op, inputs, attrs=None):
    """Apply a catalog primitive by id."""
    if op not in _PRIMITIVES:
        raise UnknownPrimitiveError(op)
    attrs = attrs or {}
    if op == "concat":
        return _PRIMITIVES[op](inputs, **attrs)
    return _PRIMITIVES[op](*inputs, **attrs)


# -- backward ---------------------------------------------------------------------

def backward(root: Tensor, targets, create_graph=False):
    """d(root)/d(target) for each target; root must be scalar.

    Non-ancestor targets get zero gradients. With create_graph=True the
    returned gradients participate in the graph and can be differentiated.
    """
    if root.shape != ():
        raise GraphError(f"backward root must be scalar, got shape {root.shape}")

    # topological order over reachable nodes
    topo, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            topo.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for inp in t.node.inputs:
            stack.append((inp, False))

    grads = {id(root): Tensor(1.0)}
    keep = {id(root): root}

    ctx = no_grad() if not create_graph else _nullctx()
    with ctx:
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            keep.pop(id(t), None)
            if g is None:
                continue
            in_grads = t.node.vjp(g)
            for inp, ig in zip(t.node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                cur = grads.get(id(inp))
                grads[id(inp)] = ig if cur is None else add(cur, ig)
                keep[id(inp)] = inp

    out = []
    for tgt in targets:
        g = grads.get(id(tgt))
        if g is None:
            g = zeros(tgt.shape)
        out.append(g)
    return out


@contextmanager
def _nullctx():
    yield


def grad_penalty_kernel(f, x: Tensor, lam: float) -> Tensor:
    """WGAN gradient penalty lam * mean_B (||grad_x f(x)|| - 1)^2.

    f must map x (batch-first) to per-sample scalars; the result is built
    with create_graph=True so it is differentiable w.r.t. f's parameters.
    """
    if not x.requires_grad:
        x = x.detach()
        x.requires_grad = True
    with enable_grad():
        y = f(x)
        b = x.shape[0]
        if y.shape not in ((b,), (b, 1)):
            raise ShapeError(f"grad_penalty_kernel: f must return per-sample scalars, got {y.shape}")
        (gx,) = backward(sum_(y), [x], create_graph=True)
        norms = l2_norm(gx)  # [B]
        return mul(mean(square(sub(norms, 1.0))), float(lam))


def finite_difference_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between backward() and central differences of f."""
    x0 = x.detach()
    x0.requires_grad = True
    (analytic,) = backward(f(x0), [x0])
    analytic = analytic.data
    numeric = np.zeros_like(x0.data)
    flat = x0.data.reshape(-1)
    nflat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(x0).item()
            flat[i] = orig - eps
            fm = f(x0).item()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# -- serialization -----------------------------------------------------------------

_MAGIC = b"MVT1"


def tensor_to_bytes(t: Tensor) -> bytes:
    head = _MAGIC + struct.pack("<I", t.ndim)
    head += struct.pack(f"<{t.ndim}I", *t.shape)
    return head + t.data.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Returns (tensor, next_offset)."""
    if buf[offset:offset + 4] != _MAGIC:
        raise ValueError("bad tensor magic")
    rank = struct.unpack_from("<I", buf, offset + 4)[0]
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    start = offset + 8 + 4 * rank
    n = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=start).reshape(dims)
    return Tensor(data.copy()), start + 8 * n


def save_tensor(t: Tensor, path):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        t, _ = tensor_from_bytes(fh.read())
    return t
