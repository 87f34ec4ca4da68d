"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations the two QA models need are provided. Every operation
that has at least one input with ``requires_grad`` records a node on the
result; :func:`backward` walks those nodes in reverse topological order.

    >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> loss = (x * x).sum()
    >>> backward(loss)
    >>> x.grad
    array([2., 4., 6.])
"""
import threading
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError

_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op, parents, backward_fn):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            or data.dtype != np.float64 else data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn, op):
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(op, parents, backward_fn)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- graph -----------------------------------------------------------------

class Graph:
    """Recorded operations reachable from a result, operands before results."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if t.node is None:
                continue
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t.node.parents:
                if p.node is not None and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def ops(self):
        return [t.node.op for t in self.nodes]


def backward(loss, graph=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf tensor."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if graph is None:
        graph = Graph.trace(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for t in reversed(graph.nodes):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t.node
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node is None:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            else:
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg


# -- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb
    return _result(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb
    return _result(out, (a, b), bw, "div")


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a):
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# -- reductions and shape ----------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def tsum(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _result(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    return tsum(a, axis, keepdims) * (1.0 / max(count, 1))


def reshape(a, shape):
    out = a.data.reshape(shape)
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes):
    inv = np.argsort(axes)
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def tmax(a, axis=-1, mask=None):
    """Max over ``axis`` (int or tuple), ignoring entries where ``mask`` is false.

    Slices with no valid entry yield 0. The gradient is split evenly across
    tied maxima, which is what a central difference measures at a tie.
    """
    axes = _norm_axes(axis, a.ndim)
    valid = np.ones(a.shape, dtype=bool) if mask is None else np.broadcast_to(mask, a.shape)
    masked = np.where(valid, a.data, -np.inf)
    m = masked.max(axis=axes, keepdims=True)
    empty = ~np.isfinite(m)
    m = np.where(empty, 0.0, m)
    out = np.squeeze(m, axis=axes)

    def bw(g):
        hit = valid & (masked == m)
        count = hit.sum(axis=axes, keepdims=True)
        share = np.where(count > 0, 1.0 / np.maximum(count, 1), 0.0)
        return (hit * share * np.expand_dims(g, axes),)
    return _result(out, (a,), bw, "max")


# -- linear algebra ------------------------------------------------------------

def matmul(a, b):
    """Matrix product of ``m×k`` and ``k×n`` (leading batch axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb
    return _result(out, (a, b), bw, "matmul")


def einsum(spec, a, b):
    """Two-operand einsum with explicit output, no ellipsis and no repeated letters.

    Every index of an operand must also occur in the other operand or in the
    output; that is what lets each gradient be written as another einsum.
    """
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_idx = spec.replace(" ", "").split("->")
    ia, ib = lhs.split(",")
    for idx, other in ((ia, ib), (ib, ia)):
        if len(set(idx)) != len(idx):
            raise ConfigError(f"einsum {spec!r}: repeated index in {idx!r}")
        if any(c not in other and c not in out_idx for c in idx):
            raise ConfigError(f"einsum {spec!r}: index summed within a single operand")
    try:
        out = np.einsum(spec, a.data, b.data, optimize=False)
    except ValueError as exc:
        raise DimensionError(f"einsum {spec!r} shape mismatch: {a.shape}, {b.shape}") from exc

    def bw(g):
        ga = np.einsum(f"{out_idx},{ib}->{ia}", g, b.data) if a.requires_grad else None
        gb = np.einsum(f"{ia},{out_idx}->{ib}", a.data, g) if b.requires_grad else None
        return ga, gb
    return _result(out, (a, b), bw, "einsum")


# -- normalisations -------------------------------------------------------------

def _valid(mask, shape):
    return None if mask is None else np.broadcast_to(np.asarray(mask, dtype=bool), shape)


def softmax(x, axis=-1, mask=None):
    """Max-subtracted softmax; masked entries get probability 0.

    A slice whose entries are all masked comes out as all zeros.
    """
    x = as_tensor(x)
    if x.data.size == 0 or x.shape[axis] == 0:
        raise DomainError("softmax of an empty vector")
    valid = _valid(mask, x.shape)
    z = x.data if valid is None else np.where(valid, x.data, -np.inf)
    m = z.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(z - m)
    s = e.sum(axis=axis, keepdims=True)
    out = e / np.where(s > 0, s, 1.0)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return _result(out, (x,), bw, "softmax")


def log_softmax(x, axis=-1, mask=None):
    """Log-probabilities; masked entries are reported as 0 and get no gradient."""
    x = as_tensor(x)
    valid = _valid(mask, x.shape)
    z = x.data if valid is None else np.where(valid, x.data, -np.inf)
    m = z.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(z - m)
    s = e.sum(axis=axis, keepdims=True)
    lse = m + np.log(np.where(s > 0, s, 1.0))
    out = x.data - lse
    p = e / np.where(s > 0, s, 1.0)
    if valid is not None:
        out = np.where(valid, out, 0.0)

    def bw(g):
        if valid is not None:
            g = np.where(valid, g, 0.0)
        return (g - p * g.sum(axis=axis, keepdims=True),)
    return _result(out, (x,), bw, "log_softmax")


def l2_normalize(x, axis=-1, eps=1e-12):
    """Scale slices to unit norm; slices with norm below ``eps`` map to 0."""
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    ok = n > eps
    safe = np.where(ok, n, 1.0)
    out = np.where(ok, x.data / safe, 0.0)

    def bw(g):
        gx = (g - out * (g * out).sum(axis=axis, keepdims=True)) / safe
        return (np.where(ok, gx, 0.0),)
    return _result(out, (x,), bw, "l2_normalize")


# -- indexing ---------------------------------------------------------------

def embed_lookup(table, ids):
    """Rows of ``table`` (|V|×d) at integer ``ids`` of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size:
        bad = ids[(ids < 0) | (ids >= table.shape[0])]
        if bad.size:
            raise IndexError(f"token id {int(bad.flat[0])} out of range for vocabulary of {table.shape[0]}")
    out = table.data[ids] if ids.size else np.zeros(ids.shape + (table.shape[1],))

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)
    return _result(out, (table,), bw, "embed_lookup")


def pick(x, index):
    """``x[..., index[...]]`` along the last axis."""
    index = np.asarray(index, dtype=np.int64)
    out = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, index[..., None], g[..., None], axis=-1)
        return (gx,)
    return _result(out, (x,), bw, "pick")


# -- convolution ---------------------------------------------------------------

def conv1d_affine(seq, filters, bias=None):
    """Same-padded 1-D convolution over axis -2 of ``seq`` (..., L, d_in).

    ``filters`` is width×d_in×d_out with odd width; positions past either end
    read zeros.
    """
    w, d_in, d_out = filters.shape
    if w % 2 == 0:
        raise ConfigError(f"conv1d window width must be odd, got {w}")
    if seq.shape[-1] != d_in:
        raise DimensionError(f"conv1d input {seq.shape} does not match filters {filters.shape}")
    length = seq.shape[-2]
    pad = w // 2
    widths = [(0, 0)] * (seq.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(seq.data, widths)
    windows = np.stack([xp[..., j:j + length, :] for j in range(w)], axis=-2)
    flat_w = filters.data.reshape(w * d_in, d_out)
    cols = windows.reshape(windows.shape[:-2] + (w * d_in,))
    out = cols @ flat_w
    parents = (seq, filters)
    if bias is not None:
        out = out + bias.data
        parents = parents + (bias,)

    def bw(g):
        gseq = gw = gb = None
        if seq.requires_grad:
            gcols = (g @ flat_w.T).reshape(windows.shape)
            gxp = np.zeros_like(xp)
            for j in range(w):
                gxp[..., j:j + length, :] += gcols[..., j, :]
            gseq = gxp[..., pad:pad + length, :]
        if filters.requires_grad:
            gw = np.tensordot(cols, g, axes=(list(range(cols.ndim - 1)), list(range(g.ndim - 1))))
            gw = gw.reshape(filters.shape)
        if bias is not None and bias.requires_grad:
            gb = g.reshape(-1, d_out).sum(axis=0)
        return (gseq, gw) if bias is None else (gseq, gw, gb)
    return _result(out, parents, bw, "conv1d")


def conv1d(seq, filters, bias=None, activation="relu"):
    out = conv1d_affine(seq, filters, bias)
    if activation == "relu":
        return relu(out)
    if activation in (None, "linear"):
        return out
    raise ConfigError(f"unknown conv1d activation {activation!r}")


# -- losses -------------------------------------------------------------------

def cross_entropy(logits, targets, mask=None):
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    logp = log_softmax(logits, axis=-1, mask=mask)
    return -mean(pick(logp, targets))
