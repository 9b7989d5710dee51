"""Reverse-mode autodiff over numpy arrays.

A tape-free graph: each Tensor keeps its parents and a backward closure.
Ops are written for batched use ((B, L, D) activations, (B, H, L, L)
attention maps) and skip gradient work for constant leaves, so a frozen
backbone costs no parameter-gradient GEMMs. All math runs in the dtype of
the inputs; float64 is used by the finite-difference checks.
"""

from __future__ import annotations

import math

import numpy as np

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
GELU_C = 0.044715


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False, parents=(), bwd=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._bwd = bwd

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.needs_grad():
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and linear algebra
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bwd(g):
        if a.needs_grad():
            _acc(a, _unbroadcast(g, a.shape))
        if b.needs_grad():
            _acc(b, _unbroadcast(g, b.shape))

    out._bwd = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bwd(g):
        if a.needs_grad():
            _acc(a, _unbroadcast(g * b.data, a.shape))
        if b.needs_grad():
            _acc(b, _unbroadcast(g * a.data, b.shape))

    out._bwd = bwd
    return out


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * s, parents=(a,))

    def bwd(g):
        _acc(a, g * s)

    out._bwd = bwd
    return out


def matmul(a, b) -> Tensor:
    """Batched matrix product with broadcasting over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bwd(g):
        if a.needs_grad():
            ga = g @ np.swapaxes(b.data, -1, -2)
            _acc(a, _unbroadcast(ga, a.shape))
        if b.needs_grad():
            gb = np.swapaxes(a.data, -1, -2) @ g
            _acc(b, _unbroadcast(gb, b.shape))

    out._bwd = bwd
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (..., din) @ w (din, dout) + b, folding leading dims into one GEMM."""
    lead = x.data.shape[:-1]
    din = x.data.shape[-1]
    x2 = x.data.reshape(-1, din)
    y2 = x2 @ w.data
    if b is not None:
        y2 = y2 + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y2.reshape(*lead, w.data.shape[1]), parents=parents)

    def bwd(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.needs_grad():
            _acc(x, (g2 @ w.data.T).reshape(x.shape))
        if w.needs_grad():
            _acc(w, x2.T @ g2)
        if b is not None and b.needs_grad():
            _acc(b, g2.sum(axis=0))

    out._bwd = bwd
    return out


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    u = SQRT_2_OVER_PI * (xd + GELU_C * xd ** 3)
    t = np.tanh(u)
    out = Tensor(0.5 * xd * (1.0 + t), parents=(x,))

    def bwd(g):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * xd ** 2)
        _acc(x, g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t ** 2) * du))

    out._bwd = bwd
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t, parents=(x,))

    def bwd(g):
        _acc(x, g * (1.0 - t ** 2))

    out._bwd = bwd
    return out


def rms_norm(x: Tensor, w: Tensor, eps: float = 1e-6) -> Tensor:
    """Root-mean-square normalization over the last axis, learned gain, no bias."""
    xd = x.data
    d = xd.shape[-1]
    m = np.mean(xd * xd, axis=-1, keepdims=True)
    r = 1.0 / np.sqrt(m + eps)
    xn = xd * r
    out = Tensor(xn * w.data, parents=(x, w))

    def bwd(g):
        gw_side = g * w.data
        if x.needs_grad():
            inner = np.sum(gw_side * xd, axis=-1, keepdims=True)
            _acc(x, gw_side * r - xd * (inner * r ** 3 / d))
        if w.needs_grad():
            _acc(w, np.sum(g * xn, axis=tuple(range(g.ndim - 1))))

    out._bwd = bwd
    return out


def softmax_last(x: Tensor) -> Tensor:
    xd = x.data
    z = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, parents=(x,))

    def bwd(g):
        _acc(x, y * (g - np.sum(g * y, axis=-1, keepdims=True)))

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------------
# Shape plumbing
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape
    out = Tensor(x.data.reshape(shape), parents=(x,))

    def bwd(g):
        _acc(x, g.reshape(orig))

    out._bwd = bwd
    return out


def permute(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    out = Tensor(np.transpose(x.data, axes), parents=(x,))

    def bwd(g):
        _acc(x, np.transpose(g, inv))

    out._bwd = bwd
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))

    def bwd(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            if t.needs_grad():
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + s)
                _acc(t, g[tuple(sl)])
            offset += s

    out._bwd = bwd
    return out


def pad_stack(rows: list, length: int) -> Tensor:
    """Stack variable-length (L_i, D) tensors into (B, length, D), zero padded."""
    rows = [as_tensor(r) for r in rows]
    d = rows[0].data.shape[-1]
    batch = np.zeros((len(rows), length, d), dtype=rows[0].data.dtype)
    for i, r in enumerate(rows):
        batch[i, : r.data.shape[0]] = r.data
    out = Tensor(batch, parents=tuple(rows))

    def bwd(g):
        for i, r in enumerate(rows):
            if r.needs_grad():
                _acc(r, g[i, : r.data.shape[0]])

    out._bwd = bwd
    return out


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...]]."""
    ids = np.asarray(ids)
    out = Tensor(table.data[ids], parents=(table,))

    def bwd(g):
        if table.needs_grad():
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            _acc(table, gt)

    out._bwd = bwd
    return out


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Per-sample row gather: out[b, m] = x[b, idx[b, m]] for x (B, L, D)."""
    idx = np.asarray(idx)
    b_ar = np.arange(x.data.shape[0])[:, None]
    out = Tensor(x.data[b_ar, idx], parents=(x,))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (b_ar, idx), g)
        _acc(x, gx)

    out._bwd = bwd
    return out


def select_positions(x: Tensor, b_idx: np.ndarray, p_idx: np.ndarray) -> Tensor:
    """Gather rows (b_idx[i], p_idx[i]) from x (B, L, D) into (N, D)."""
    out = Tensor(x.data[b_idx, p_idx], parents=(x,))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (b_idx, p_idx), g)
        _acc(x, gx)

    out._bwd = bwd
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice along the second-to-last axis."""
    sl = (Ellipsis, slice(start, stop), slice(None))
    out = Tensor(x.data[sl], parents=(x,))

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        _acc(x, gx)

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------------
# Reductions and losses
# ---------------------------------------------------------------------------

def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean()), parents=(x,))

    def bwd(g):
        _acc(x, np.full_like(x.data, float(g) / n))

    out._bwd = bwd
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum()), parents=(x,))

    def bwd(g):
        _acc(x, np.full_like(x.data, float(g)))

    out._bwd = bwd
    return out


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean token-level cross entropy for logits (N, V) and int targets (N,)."""
    ld = logits.data
    n = ld.shape[0]
    m = ld.max(axis=-1, keepdims=True)
    z = ld - m
    lse = m[:, 0] + np.log(np.exp(z).sum(axis=-1))
    nll = lse - ld[np.arange(n), targets]
    out = Tensor(np.asarray(nll.mean()), parents=(logits,))

    def bwd(g):
        p = np.exp(ld - lse[:, None])
        p[np.arange(n), targets] -= 1.0
        _acc(logits, p * (float(g) / n))

    out._bwd = bwd
    return out
