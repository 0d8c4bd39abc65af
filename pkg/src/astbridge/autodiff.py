"""Minimal dense-tensor engine with reverse-mode gradients and Adam.

Values are float32 by default (tests may build float64 graphs for
finite-difference comparisons). Broadcasting is limited to row-wise bias
addition so every backward rule stays auditable. Each operation records its
inputs on the output tensor; ``backward`` replays the tape in reverse
topological order and then releases it.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch

DEFAULT_DTYPE = np.float32

_CHECK_FINITE = True
_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def param(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def _ensure_finite(data: np.ndarray, op: str) -> None:
    if _CHECK_FINITE and not np.isfinite(data).all():
        raise NonFiniteValue(f"{op} produced NaN or Inf")


def _make(data: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    _ensure_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if _GRAD_ENABLED and out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _need(t: Tensor) -> bool:
    return t.requires_grad


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        return (
            g @ b.data.T if _need(a) else None,
            a.data.T @ g if _need(b) else None,
        )

    return _make(out, "matmul", (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {a.data.shape}")
    return _make(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise addition; b may also be a bias row for a matrix a."""
    if a.data.shape == b.data.shape:
        def vjp(g):
            return (g if _need(a) else None, g if _need(b) else None)

        return _make(a.data + b.data, "add", (a, b), vjp)
    if a.data.ndim == 2 and b.data.ndim in (1, 2) and b.data.reshape(-1).shape[0] == a.data.shape[1]:
        bias = b.data.reshape(1, -1)

        def vjp_bias(g):
            return (
                g if _need(a) else None,
                g.sum(axis=0).reshape(b.data.shape) if _need(b) else None,
            )

        return _make(a.data + bias, "add", (a, b), vjp_bias)
    raise ShapeMismatch(f"add {a.data.shape} + {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul {a.data.shape} * {b.data.shape}")

    def vjp(g):
        return (g * b.data if _need(a) else None, g * a.data if _need(b) else None)

    return _make(a.data * b.data, "mul", (a, b), vjp)


def affine(a: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * a + shift with python-scalar coefficients."""
    return _make(a.data * scale + shift, "affine", (a,), lambda g: (g * scale,))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    if axis not in (0, 1):
        raise ShapeMismatch(f"concat axis must be 0 or 1, got {axis}")
    if not tensors:
        raise ShapeMismatch("concat of nothing")
    mats = [t.data for t in tensors]
    if any(m.ndim != 2 for m in mats):
        raise ShapeMismatch("concat expects matrices")
    sizes = [m.shape[axis] for m in mats]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        slices = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if not _need(t):
                slices.append(None)
            elif axis == 0:
                slices.append(g[lo:hi, :])
            else:
                slices.append(g[:, lo:hi])
        return tuple(slices)

    return _make(np.concatenate(mats, axis=axis), "concat", tuple(tensors), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """Column means as a single row: (n, m) -> (1, m)."""
    if a.data.ndim != 2 or a.data.shape[0] == 0:
        raise ShapeMismatch(f"mean_rows expects a non-empty matrix, got {a.data.shape}")
    n = a.data.shape[0]
    out = a.data.mean(axis=0, keepdims=True)
    return _make(out, "mean_rows", (a,), lambda g: (np.repeat(g, n, axis=0) / n,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return _make(a.data * factor, "leaky_relu", (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects a matrix, got {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    out = expd / expd.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, "softmax_rows", (a,), vjp)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise standardization (no affine parameters)."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"layer_norm expects a matrix, got {a.data.shape}")
    m = a.data.shape[1]
    mean = a.data.mean(axis=1, keepdims=True)
    var = a.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mean) * inv_std

    def vjp(g):
        dot = (g * xhat).sum(axis=1, keepdims=True)
        total = g.sum(axis=1, keepdims=True)
        return ((inv_std / m) * (m * g - total - xhat * dot),)

    return _make(xhat, "layer_norm", (a,), vjp)


def dropout(a: Tensor, p: float, train: bool, seed: int = 0) -> Tensor:
    """Seeded inverted dropout; identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ShapeMismatch(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return _make(a.data * keep, "dropout", (a,), lambda g: (g * keep,))


def cosine_sim(u: Tensor, v: Tensor) -> Tensor:
    """Cosine of two vectors (any shape, flattened); scalar output."""
    uf = u.data.reshape(-1)
    vf = v.data.reshape(-1)
    if uf.shape != vf.shape:
        raise ShapeMismatch(f"cosine_sim {u.data.shape} vs {v.data.shape}")
    nu = float(np.linalg.norm(uf))
    nv = float(np.linalg.norm(vf))
    if nu == 0.0 or nv == 0.0:
        raise NonFiniteValue("cosine_sim of a zero vector")
    cos = float(np.dot(uf, vf) / (nu * nv))

    def vjp(g):
        gs = float(np.asarray(g).reshape(()))
        du = gs * (vf / (nu * nv) - cos * uf / (nu * nu))
        dv = gs * (uf / (nu * nv) - cos * vf / (nv * nv))
        return (
            du.reshape(u.data.shape).astype(u.data.dtype) if _need(u) else None,
            dv.reshape(v.data.shape).astype(v.data.dtype) if _need(v) else None,
        )

    return _make(np.asarray(cos, dtype=u.data.dtype), "cosine_sim", (u, v), vjp)


def rows(a: Tensor, indices) -> Tensor:
    """Gather rows of a matrix (embedding lookup); backward scatter-adds."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"rows expects a matrix, got {a.data.shape}")
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeMismatch(f"rows index out of range for {a.data.shape}")
    out = a.data[idx] if idx.size else np.zeros((0, a.data.shape[1]), dtype=a.data.dtype)

    def vjp(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _make(out, "rows", (a,), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != a.data.size:
        raise ShapeMismatch(f"reshape {a.data.shape} -> {shape}")
    return _make(a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(a.data.shape),))


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)
    return _make(out, "sum_all", (a,), lambda g: (np.full_like(a.data, float(np.asarray(g).reshape(()))),))


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    return _make(out, "log", (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, "sqrt", (a,), lambda g: (g * 0.5 / out,))


# ------------------------------------------------------------------ backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad for every requires_grad tensor reachable from loss,
    accumulating into existing gradients, then release the tape.

    Parameters the loss does not depend on are left untouched (their
    gradient is zero by convention, see ``gradients``).
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order = _topo_order(loss)
    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in flowing:
                flowing[key] = flowing[key] + pg
            else:
                flowing[key] = pg
    for node in order:
        node._parents = ()
        node._vjp = None


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """backward() plus zero-filling for parameters the loss never touched."""
    backward(loss)
    out = {}
    for name, p in params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad
    return out


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step {name}: grad {g.shape} vs param {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        _ensure_finite(p.data, f"adam_step[{name}]")
    return state
