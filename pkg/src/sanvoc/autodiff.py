"""Minimal reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional backward-graph record.
The graph is a DAG built eagerly by the ops below; ``Tensor.backward``
traverses it once in topological order and accumulates gradients
additively into every requires-grad ancestor.  ``stop_gradient`` returns
a value-transparent tensor with no parents, so backward never reaches
through it.

Double precision is the default and is what all gradient checks use;
float32 inputs are kept as float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "stop_gradient",
    "conv1d",
    "conv_transpose1d",
    "avg_pool1d",
    "pad1d",
    "frame",
    "gradient_check",
    "GradCheckReport",
    "zero_grads",
]


class ShapeError(ValueError):
    """Raised on incompatible operand shapes."""


def _as_array(x, dtype=None):
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """n-d array participating in a reverse-mode differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self.op = "leaf"

    # -- basic introspection ------------------------------------------------

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
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return stop_gradient(self)

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward_fn, op):
        t = Tensor.__new__(Tensor)
        t.data = data
        t.grad = None
        t.requires_grad = any(p.requires_grad for p in parents)
        t.op = op
        if t.requires_grad:
            t._parents = tuple(parents)
            t._backward_fn = backward_fn
        else:
            t._parents = ()
            t._backward_fn = None
        return t

    def backward(self):
        """Backpropagate from a scalar loss.

        Repeated calls without zeroing accumulate into ``.grad``.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None or not node.requires_grad:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward_fn is None:
                continue
            for p, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg

    # -- operator sugar -----------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def ensure_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grads(params):
    """Zero .grad on an iterable or dict of tensors."""
    it = params.values() if isinstance(params, dict) else params
    for p in it:
        p.zero_grad()


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast up from ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, bwd, op):
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}") from e

    def backward(g):
        ga, gb = bwd(g, a.data, b.data)
        return (
            _unbroadcast(ga, a.data.shape) if ga is not None else None,
            _unbroadcast(gb, b.data.shape) if gb is not None else None,
        )

    return Tensor._from_op(data, (a, b), backward, op)


def _unary(a, fwd, bwd, op):
    a = ensure_tensor(a)
    data = fwd(a.data)

    def backward(g):
        return (bwd(g, a.data, data),)

    return Tensor._from_op(data, (a,), backward, op)


# -- arithmetic primitives --------------------------------------------------

def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: (g, g), "add")


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: (g, -g), "sub")


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: (g * y, g * x), "mul")


def div(a, b):
    return _binary(a, b, np.divide, lambda g, x, y: (g / y, -g * x / (y * y)), "div")


def neg(a):
    return _unary(a, np.negative, lambda g, x, out: -g, "neg")


def power(a, p):
    if not np.isscalar(p):
        raise TypeError("power expects a scalar exponent")
    p = float(p)
    return _unary(a, lambda x: np.power(x, p), lambda g, x, out: g * p * np.power(x, p - 1.0), "power")


def matmul(a, b):
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}") from e

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return (ga, gb)

    return Tensor._from_op(data, (a, b), backward, "matmul")


def tsum(a, axis=None, keepdims=False):
    a = ensure_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.data.shape).copy(),)

    return Tensor._from_op(data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    a = ensure_tensor(a)
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


# -- elementwise nonlinearities ---------------------------------------------

def square(a):
    return _unary(a, np.square, lambda g, x, out: g * 2.0 * x, "square")


def sqrt(a):
    return _unary(a, np.sqrt, lambda g, x, out: g * 0.5 / out, "sqrt")


def exp(a):
    return _unary(a, np.exp, lambda g, x, out: g * out, "exp")


def log(a):
    return _unary(a, np.log, lambda g, x, out: g / x, "log")


def sin(a):
    return _unary(a, np.sin, lambda g, x, out: g * np.cos(x), "sin")


def tanh(a):
    return _unary(a, np.tanh, lambda g, x, out: g * (1.0 - out * out), "tanh")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    return _unary(a, lambda x: _sigmoid(np.atleast_1d(x)).reshape(np.shape(x)),
                  lambda g, x, out: g * out * (1.0 - out), "sigmoid")


def _softplus(x):
    # stable branch: for large x, softplus(x) = x + log1p(exp(-x))
    x = np.asarray(x)
    out = np.where(x > 30.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 30.0))))
    return out


def softplus(a):
    return _unary(a, _softplus, lambda g, x, out: g * _sigmoid(np.atleast_1d(x)).reshape(np.shape(x)), "softplus")


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda g, x, out: g * (x > 0.0), "relu")


# max(., 0) is relu by another name; kept as an alias for call sites that
# read better with the mathematical spelling.
max0 = relu


def leaky_relu(a, slope=0.1):
    # gradient at 0 is defined as the slope (deterministic subgradient)
    def bwd(g, x, out):
        return g * np.where(x > 0.0, 1.0, slope)

    return _unary(a, lambda x: np.where(x > 0.0, x, slope * x), bwd, "leaky_relu")


def tabs(a):
    return _unary(a, np.abs, lambda g, x, out: g * np.sign(x), "abs")


# -- shape ops ---------------------------------------------------------------

def reshape(a, shape):
    a = ensure_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor._from_op(data, (a,), backward, "reshape")


def broadcast_to(a, shape):
    a = ensure_tensor(a)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError as e:
        raise ShapeError(f"broadcast: cannot broadcast {a.data.shape} to {shape}") from e

    def backward(g):
        return (_unbroadcast(g, a.data.shape),)

    return Tensor._from_op(data, (a,), backward, "broadcast")


def take(a, idx):
    """Basic slicing/indexing with gradient scatter."""
    a = ensure_tensor(a)
    data = a.data[idx]
    if np.isscalar(data):
        data = np.asarray(data)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._from_op(data, (a,), backward, "take")


def concat(tensors, axis=0):
    tensors = [ensure_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(data, tuple(tensors), backward, "concat")


def pad1d(a, left, right, mode="constant"):
    """Pad the last axis. Modes: constant (zeros) or reflect."""
    a = ensure_tensor(a)
    T = a.data.shape[-1]
    width = [(0, 0)] * (a.data.ndim - 1) + [(int(left), int(right))]
    if mode == "constant":
        data = np.pad(a.data, width)

        def backward(g):
            sl = (Ellipsis, slice(left, left + T))
            return (g[sl],)

        return Tensor._from_op(data, (a,), backward, "pad")
    if mode == "reflect":
        if left > T - 1 or right > T - 1:
            raise ShapeError(f"reflect pad ({left},{right}) too large for length {T}")
        data = np.pad(a.data, width, mode="reflect")
        idxmap = np.concatenate([np.arange(left, 0, -1), np.arange(T), np.arange(T - 2, T - 2 - right, -1)])

        def backward(g):
            lead = g.shape[:-1]
            g2 = g.reshape(-1, g.shape[-1])
            out = np.zeros((g2.shape[0], T), dtype=g.dtype)
            np.add.at(out, (slice(None), idxmap), g2)
            return (out.reshape(lead + (T,)),)

        return Tensor._from_op(data, (a,), backward, "pad_reflect")
    raise ValueError(f"unknown pad mode {mode!r}")


def frame(a, length, hop):
    """Slice the last axis into overlapping frames: [..., T] -> [..., n, length]."""
    a = ensure_tensor(a)
    T = a.data.shape[-1]
    if length > T:
        raise ShapeError(f"frame length {length} exceeds signal length {T}")
    if hop < 1:
        raise ShapeError(f"hop must be >= 1, got {hop}")
    n = (T - length) // hop + 1
    idx = hop * np.arange(n)[:, None] + np.arange(length)[None, :]
    data = a.data[..., idx]

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (Ellipsis, idx), g)
        return (out,)

    return Tensor._from_op(data, (a,), backward, "frame")


def avg_pool1d(a, factor):
    """Non-overlapping mean pooling on the last axis (tail trimmed)."""
    a = ensure_tensor(a)
    if factor < 1:
        raise ShapeError(f"pool factor must be >= 1, got {factor}")
    if factor == 1:
        return a
    T = a.data.shape[-1]
    m = (T // factor) * factor
    lead = a.data.shape[:-1]
    data = a.data[..., :m].reshape(lead + (m // factor, factor)).mean(axis=-1)

    def backward(g):
        out = np.zeros_like(a.data)
        out[..., :m] = np.repeat(g / factor, factor, axis=-1)
        return (out,)

    return Tensor._from_op(data, (a,), backward, "avg_pool1d")


# -- convolutions ------------------------------------------------------------

def _sliding_cols(xp, K, stride):
    B, C, Tp = xp.shape
    Tout = (Tp - K) // stride + 1
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(xp, (B, C, K, Tout), (s0, s1, s2, s2 * stride))


def _adjoint_conv(g, w, stride):
    """z[b,i,j] = sum_{o,t,k: t*stride+k=j} g[b,o,t] * w[o,i,k]; len (T-1)*stride+K."""
    B, O, T = g.shape
    _, I, K = w.shape
    prod = np.einsum("bot,oik->bikt", g, w, optimize=True)
    out = np.zeros((B, I, (T - 1) * stride + K), dtype=g.dtype)
    span = (T - 1) * stride + 1
    for k in range(K):
        out[:, :, k : k + span : stride] += prod[:, :, k, :]
    return out


def _check_conv_args(kernel, stride):
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if kernel.size == 0:
        raise ShapeError("empty kernel")


def conv1d(x, kernel, stride=1, padding=0):
    """1-d cross-correlation. x: [C_in, T] or [B, C_in, T]; kernel: [C_out, C_in, K].

    Output length T' = floor((T + 2*padding - K) / stride) + 1.
    """
    x, kernel = ensure_tensor(x), ensure_tensor(kernel)
    kd = kernel.data
    _check_conv_args(kd, stride)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kd.ndim != 3:
        raise ShapeError(f"conv1d expects [B,C,T] input and [O,I,K] kernel, got {x.data.shape} and {kd.shape}")
    B, C, T = xd.shape
    O, I, K = kd.shape
    if I != C:
        raise ShapeError(f"conv1d channel mismatch: input has {C}, kernel expects {I}")
    if K > T + 2 * padding:
        raise ShapeError(f"kernel size {K} exceeds padded length {T + 2 * padding}")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    cols = _sliding_cols(xp, K, stride)
    out = np.einsum("oik,bikt->bot", kd, cols, optimize=True)

    def backward(g):
        g3 = g[None] if squeeze else g
        gk = np.einsum("bot,bikt->oik", g3, cols, optimize=True)
        full = _adjoint_conv(g3, kd, stride)
        gxp = np.zeros_like(xp)
        gxp[:, :, : full.shape[2]] += full
        gx = gxp[:, :, padding : padding + T]
        return (gx[0] if squeeze else gx, gk)

    return Tensor._from_op(out[0] if squeeze else out, (x, kernel), backward, "conv1d")


def conv_transpose1d(x, kernel, stride=1, padding=0):
    """Transposed 1-d convolution (adjoint of conv1d's input gradient).

    x: [C_in, T] or [B, C_in, T]; kernel: [C_in, C_out, K].
    Output length = (T - 1) * stride + K - 2 * padding.
    """
    x, kernel = ensure_tensor(x), ensure_tensor(kernel)
    kd = kernel.data
    _check_conv_args(kd, stride)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kd.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects [B,C,T] input and [I,O,K] kernel, got {x.data.shape} and {kd.shape}")
    B, C, T = xd.shape
    I, O, K = kd.shape
    if I != C:
        raise ShapeError(f"conv_transpose1d channel mismatch: input has {C}, kernel expects {I}")
    out_len = (T - 1) * stride + K - 2 * padding
    if out_len < 1:
        raise ShapeError(f"conv_transpose1d output length {out_len} < 1")
    full = _adjoint_conv(xd, kd, stride)
    out = full[:, :, padding : padding + out_len]

    def backward(g):
        g3 = g[None] if squeeze else g
        gp = np.pad(g3, ((0, 0), (0, 0), (padding, padding)))
        cols = _sliding_cols(gp, K, stride)
        gx = np.einsum("iok,bokt->bit", kd, cols, optimize=True)
        gk = np.einsum("bit,bokt->iok", xd, cols, optimize=True)
        return (gx[0] if squeeze else gx, gk)

    return Tensor._from_op(out[0] if squeeze else out, (x, kernel), backward, "conv_transpose1d")


# -- stop-gradient -----------------------------------------------------------

def stop_gradient(a):
    """Value-transparent detach: equal data, no parents, never backpropagated."""
    a = ensure_tensor(a)
    t = Tensor.__new__(Tensor)
    t.data = a.data
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._backward_fn = None
    t.op = "stop_gradient"
    return t


# -- gradient checking -------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of comparing analytic and central-difference gradients."""

    max_rel_err: dict = field(default_factory=dict)
    kinks: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    passed: bool = True

    def worst(self):
        return max(self.max_rel_err.values(), default=0.0)


def gradient_check(f, params, eps=1e-5, tol=1e-4):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` is a deterministic scalar-valued closure over ``params`` (a dict
    name -> Tensor, double precision).  Elements where left/right one-sided
    differences disagree are reported as non-differentiable points and
    excluded from pass/fail.  NaNs in ``f`` are reported as failures.
    """
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    zero_grads(params)
    loss = f()
    if not np.isfinite(loss.data).all():
        return GradCheckReport(failures=["non-finite loss"], passed=False)
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}
    f0 = float(loss.data)

    report = GradCheckReport()
    for name, p in params.items():
        flat = p.data.reshape(-1)
        an = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                report.failures.append(f"{name}[{i}]: non-finite perturbation value")
                report.passed = False
                continue
            right = (fp - f0) / eps
            left = (f0 - fm) / eps
            scale = max(abs(left), abs(right), 1.0)
            if abs(right - left) > 0.1 * scale:
                report.kinks.append(f"{name}[{i}]")
                continue
            num = (fp - fm) / (2.0 * eps)
            # the denominator floor keeps finite-difference noise on
            # near-zero gradients from registering as relative error
            rel = abs(an[i] - num) / max(abs(an[i]) + abs(num), 1e-3)
            worst = max(worst, rel)
        report.max_rel_err[name] = worst
        if worst > tol:
            report.failures.append(f"{name}: max rel err {worst:.3e} > tol {tol:.1e}")
            report.passed = False
    return report
