"""
A small reverse-mode autodiff engine over dense float64 numpy arrays.

Every operation records its inputs and a backward closure on the result.
:meth:`Tensor.backward` orders the recorded graph topologically and runs
the closures in reverse. Operations on tensors that do not require
gradients record nothing, so inference carries no tape overhead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


def _scatter_matrix(idx: np.ndarray, n: int) -> sparse.csr_matrix:
    """Sparse (n, len(idx)) matrix S with S[idx[j], j] = 1, so S @ X sums rows by index."""
    m = idx.size
    return sparse.csr_matrix((np.ones(m), (idx, np.arange(m))), shape=(n, m))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        # out-of-place so that gradient arrays shared between nodes stay untouched
        self.grad = g if self.grad is None else self.grad + g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {self.shape}")
        order, seen = [], set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

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


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))
    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * c, (a,), lambda g: a._accumulate(g * c))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.data ** 2, (a,), lambda g: a._accumulate(2.0 * a.data * g))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: a._accumulate(g * mask))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(y, (a,), lambda g: a._accumulate(g * y * (1.0 - y)))


# -- linear algebra and reshaping -----------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    return _result(a.data @ b.data, (a, b), backward)


def bmm(a, b) -> Tensor:
    """Batched matrix product of (B, n, k) and (B, k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError(f"bmm: incompatible shapes {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.transpose(0, 2, 1))
        if b.requires_grad:
            b._accumulate(a.data.transpose(0, 2, 1) @ g)
    return _result(a.data @ b.data, (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: a._accumulate(np.swapaxes(g, -1, -2)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def concat_rows(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = {p.shape[1:] for p in parts}
    if len(widths) != 1:
        raise ValueError(f"concat_rows: column shapes differ {widths}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])
    return _result(np.concatenate([p.data for p in parts], axis=0), parts, backward)


def concat_cols(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if len({p.shape[0] for p in parts}) != 1:
        raise ValueError("concat_cols: row counts differ")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])
    return _result(np.concatenate([p.data for p in parts], axis=1), parts, backward)


# -- reductions ------------------------------------------------------------

def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.array(a.data.sum()), (a,), lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    return _result(np.array(a.data.mean()), (a,),
                   lambda g: a._accumulate(np.broadcast_to(g / n, a.shape)))


def sum_axis(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.sum(axis=axis), (a,),
                   lambda g: a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape)))


def mean_rows(a) -> Tensor:
    """Average over rows: (N, d) -> (1, d)."""
    a = as_tensor(a)
    n = a.shape[0]
    return _result(a.data.mean(axis=0, keepdims=True), (a,),
                   lambda g: a._accumulate(np.broadcast_to(g / n, a.shape)))


# -- softmax family --------------------------------------------------------

def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))
    return _result(y, (a,), backward)


def masked_row_softmax(a, mask) -> Tensor:
    """Row softmax over entries where ``mask`` is true; masked entries get 0.

    A row with no unmasked entry is all zeros.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValueError(f"mask shape {mask.shape} != input shape {a.shape}")
    z = np.where(mask, a.data, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    zmax[~np.isfinite(zmax)] = 0.0
    e = np.exp(z - zmax)
    den = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, den, out=np.zeros_like(e), where=den > 0)

    def backward(g):
        a._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))
    return _result(y, (a,), backward)


def layer_norm(a, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalise each row to zero mean and unit (population) variance, then ``* gain + bias``."""
    a = as_tensor(a)
    d = a.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        a._accumulate(inv / d * (d * g - g.sum(-1, keepdims=True)
                                 - xhat * (g * xhat).sum(-1, keepdims=True)))
    out = _result(xhat, (a,), backward)
    if gain is not None:
        out = mul(out, gain)
    if bias is not None:
        out = add(out, bias)
    return out


# -- graph gathers and segment reductions -----------------------------------

def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=int)

    def backward(g):
        if a.data.ndim == 1:
            a._accumulate(np.bincount(idx, weights=g, minlength=a.shape[0]))
        else:
            a._accumulate(_scatter_matrix(idx, a.shape[0]) @ g)
    return _result(a.data[idx], (a,), backward)


def segment_sum(a, seg, n_segments: int) -> Tensor:
    """Sum rows of ``a`` sharing a segment id: (M, ...) -> (n_segments, ...)."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=int)
    if a.data.ndim == 1:
        out = np.bincount(seg, weights=a.data, minlength=n_segments)
    else:
        out = _scatter_matrix(seg, n_segments) @ a.data
    return _result(out, (a,), lambda g: a._accumulate(g[seg]))


def pad_segments(a, seg, n_segments: int, slot=None, width: int | None = None) -> Tensor:
    """Scatter rows of ``a`` (N, d) into a zero-padded block (n_segments, width, d).

    Row ``i`` lands at ``[seg[i], slot[i]]``; ``slot`` defaults to the row's
    rank within its segment in input order.
    """
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=int)
    if slot is None:
        slot = segment_slots(seg, n_segments)
    if width is None:
        width = int(slot.max()) + 1 if slot.size else 0
    out = np.zeros((n_segments, width) + a.shape[1:])
    out[seg, slot] = a.data
    return _result(out, (a,), lambda g: a._accumulate(g[seg, slot]))


def segment_slots(seg, n_segments: int) -> np.ndarray:
    seg = np.asarray(seg, dtype=int)
    slot = np.empty(seg.size, dtype=int)
    fill = np.zeros(n_segments, dtype=int)
    for i, s in enumerate(seg):
        slot[i] = fill[s]
        fill[s] += 1
    return slot


def segment_mean(a, seg, n_segments: int) -> Tensor:
    seg = np.asarray(seg, dtype=int)
    counts = np.bincount(seg, minlength=n_segments).astype(float)
    counts[counts == 0] = 1.0
    return mul(segment_sum(a, seg, n_segments), (1.0 / counts).reshape((-1,) + (1,) * (as_tensor(a).data.ndim - 1)))


def segment_softmax(a, seg, n_segments: int) -> Tensor:
    """Softmax of a score vector within each segment (e.g. a node's incoming edges)."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=int)
    smax = np.full(n_segments, -np.inf)
    np.maximum.at(smax, seg, a.data)
    e = np.exp(a.data - smax[seg])
    den = np.bincount(seg, weights=e, minlength=n_segments)
    y = e / den[seg]

    def backward(g):
        dot = np.bincount(seg, weights=g * y, minlength=n_segments)
        a._accumulate(y * (g - dot[seg]))
    return _result(y, (a,), backward)


# -- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState) -> None:
    """In-place Adam update with bias correction on a list of arrays."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr, betas[0], betas[1], eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)
