"""Reverse-mode automatic differentiation over dense float64 arrays.

Every vector-Jacobian product is itself written with :class:`Tensor`
operations, so gradients can be differentiated again when
``create_graph=True``. That is what lets the generator objective
differentiate through a one-step unrolled classifier update.
"""

from __future__ import annotations

import itertools
import math
import threading
from contextlib import contextmanager
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import EmptyInputError, InvalidLabelError, NumericError, ShapeError

_ids = itertools.count()
_state = threading.local()


def _recording():
    return getattr(_state, "record", True)


@contextmanager
def no_grad():
    """Build no graph edges inside the block."""
    prev = _recording()
    _state.record = False
    try:
        yield
    finally:
        _state.record = prev


class Tensor:
    """A node of the computation graph.

    Holds the forward value, the parent nodes, an op tag and the
    vector-Jacobian product closure. Adjoints are never stored on the node;
    :func:`grad` keeps them in a local table so a graph can be
    differentiated several times and from several threads.
    """

    __slots__ = ("value", "requires_grad", "parents", "vjp", "op", "uid", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad=False, parents=(), vjp=None, op="leaf", name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.uid = next(_ids)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.value)

    def detach(self):
        return Tensor(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: mul(self, reciprocal(as_tensor(o)))
    __rtruediv__ = lambda self, o: mul(o, reciprocal(self))
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, o: matmul(self, o)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, vjp, op):
    parents = tuple(parents)
    if _recording() and any(p.requires_grad for p in parents):
        return Tensor(value, True, parents, vjp, op)
    return Tensor(value, op=op)


# ---------------------------------------------------------------- broadcasting

def sum_to(x, shape):
    """Sum ``x`` down to ``shape`` (the inverse of numpy broadcasting)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    v = x.value
    lead = v.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and v.shape[i + lead] != 1
    )
    out = v.sum(axis=axes, keepdims=True).reshape(shape)
    src = x.shape
    return _node(out, (x,), lambda g: (broadcast_to(g, src),), "sum_to")


def broadcast_to(x, shape):
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    out = np.broadcast_to(x.value, shape).copy()
    return _node(out, (x,), lambda g: (sum_to(g, src),), "broadcast")


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.value - b.value, (a, b), lambda g: (sum_to(g, sa), neg(sum_to(g, sb))), "sub")


def neg(a):
    a = as_tensor(a)
    return _node(-a.value, (a,), lambda g: (neg(g),), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value * b.value, (a, b),
        lambda g: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)),
        "mul",
    )


def reciprocal(a):
    a = as_tensor(a)
    out = _node(1.0 / a.value, (a,), None, "reciprocal")
    if out.requires_grad:
        out.vjp = lambda g: (neg(mul(g, mul(out, out))),)
    return out


def relu(a):
    a = as_tensor(a)
    mask = (a.value > 0).astype(np.float64)
    return _node(a.value * mask, (a,), lambda g: (mul(g, Tensor(mask)),), "relu")


def tanh(a):
    a = as_tensor(a)
    out = _node(np.tanh(a.value), (a,), None, "tanh")
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, sub(1.0, mul(out, out))),)
    return out


def floor_at(a, lower):
    """``max(a, lower)`` elementwise; gradient passes only where ``a > lower``."""
    a = as_tensor(a)
    mask = (a.value > lower).astype(np.float64)
    return _node(np.maximum(a.value, lower), (a,), lambda g: (mul(g, Tensor(mask)),), "floor")


# ---------------------------------------------------------------- linear algebra

def transpose(a):
    a = as_tensor(a)
    return _node(a.value.T.copy(), (a,), lambda g: (transpose(g),), "transpose")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    return _node(
        a.value @ b.value, (a, b),
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        "matmul",
    )


def affine(x, w, b):
    return add(matmul(x, w), b)


# ---------------------------------------------------------------- reductions

def sum(a, axis=None):
    a = as_tensor(a)
    src = a.shape
    if axis is None:
        return _node(np.asarray(a.value.sum()), (a,), lambda g: (broadcast_to(g, src),), "sum")
    out = a.value.sum(axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (broadcast_to(g, src),), "sum")


def mean(a):
    a = as_tensor(a)
    return mul(sum(a), 1.0 / a.size)


def concat(parts, axis=0):
    if axis != 0:
        raise NotImplementedError("concat supports axis 0 only")
    parts = [as_tensor(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])
    out = np.concatenate([p.value for p in parts], axis=0)

    def vjp(g):
        return tuple(row_slice(g, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _node(out, parts, vjp, "concat")


def row_slice(a, lo, hi):
    a = as_tensor(a)
    n = a.shape[0]
    return _node(a.value[lo:hi].copy(), (a,), lambda g: (pad_rows(g, lo, n),), "slice")


def pad_rows(a, lo, n):
    a = as_tensor(a)
    hi = lo + a.shape[0]
    out = np.zeros((n,) + a.shape[1:])
    out[lo:hi] = a.value
    return _node(out, (a,), lambda g: (row_slice(g, lo, hi),), "pad")


# ---------------------------------------------------------------- softmax / loss

def softmax(logits):
    """Row-wise softmax of a 2-D tensor."""
    logits = as_tensor(logits)
    out = _node(kernels.softmax_rows(logits.value), (logits,), None, "softmax")
    if out.requires_grad:
        def vjp(g):
            gs = mul(g, out)
            return (sub(gs, mul(out, sum(gs, axis=1))),)
        out.vjp = vjp
    return out


def _check_labels(labels, n, k):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise EmptyInputError("cross-entropy over an empty batch")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InvalidLabelError("labels must be integer class indices")
    labels = labels.astype(np.int_)
    if labels.min() < 0 or labels.max() >= k:
        raise InvalidLabelError(f"labels must lie in [0, {k})")
    return labels


def cross_entropy_loss(logits, labels):
    """Mean softmax cross-entropy of ``logits`` (batch x K) against ``labels``."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {logits.shape}")
    n, k = logits.shape
    labels = _check_labels(labels, n, k)
    rows = kernels.xent_rows(logits.value, labels)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0

    def vjp(g):
        return (mul(sub(softmax(logits), Tensor(onehot)), mul(g, 1.0 / n)),)

    return _node(np.asarray(rows.mean()), (logits,), vjp, "xent")


# ---------------------------------------------------------------- differentiation

def _reachable(output):
    seen = {}
    stack = [output]
    while stack:
        node = stack.pop()
        if node.uid in seen or not node.requires_grad:
            continue
        seen[node.uid] = node
        stack.extend(node.parents)
    return seen


def grad(output, inputs: Sequence[Tensor], create_graph=False, grad_output=None):
    """Gradients of ``output`` with respect to each of ``inputs``.

    Returns a list of tensors shaped like the inputs; inputs that do not
    influence ``output`` get zeros. With ``create_graph`` the returned
    tensors are themselves differentiable.
    """
    if grad_output is None and output.size != 1:
        raise ShapeError(f"grad needs a scalar output, got shape {output.shape}")
    seed = Tensor(np.ones(output.shape)) if grad_output is None else as_tensor(grad_output)
    adjoint = {}
    if output.requires_grad:
        adjoint[output.uid] = seed
        nodes = _reachable(output)
        ctx = _nullctx() if create_graph else no_grad()
        with ctx:
            # uids grow with creation time, so descending uid is a reverse topological order
            for uid in sorted(nodes, reverse=True):
                node = nodes[uid]
                g = adjoint.get(uid)
                if g is None or node.vjp is None:
                    continue
                for parent, pg in zip(node.parents, node.vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = adjoint.get(parent.uid)
                    adjoint[parent.uid] = pg if prev is None else add(prev, pg)
    out = []
    for x in inputs:
        if x is output:
            out.append(seed)
        else:
            out.append(adjoint.get(x.uid, Tensor(np.zeros(x.shape))))
    return out


@contextmanager
def _nullctx():
    yield


def backward(loss, params: Mapping[str, Tensor]):
    """Gradient map ``name -> ndarray`` of a scalar ``loss`` for every parameter."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    names = list(params)
    grads = grad(loss, [params[k] for k in names])
    return {k: g.value.copy() for k, g in zip(names, grads)}


def finite_diff_grad(objective: Callable[[dict], float], params: Mapping[str, np.ndarray], epsilon=1e-5):
    """Central-difference gradient of ``objective`` at ``params``."""
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(objective(work))
            flat[i] = orig - epsilon
            lo = float(objective(work))
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError(f"objective is not finite near {name}[{i}]")
            gflat[i] = (hi - lo) / (2.0 * epsilon)
        out[name] = g
    return out


def leaves(arrays: Mapping[str, np.ndarray], requires_grad=True):
    """Wrap a parameter map as differentiable leaf tensors."""
    return {k: Tensor(np.array(v, dtype=np.float64), requires_grad, name=k) for k, v in arrays.items()}
