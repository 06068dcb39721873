"""Dense arrays with reverse-mode automatic differentiation.

Values are numpy arrays; every differentiable op records a node holding its
parents and whatever it needs for the backward pass.  Backward rules live in
``BACKWARD_RULES`` keyed by op name, so a rule can be swapped (or broken on
purpose in tests) without touching the forward code.

The ReLU subgradient at exactly 0 is taken to be 0.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_DTYPE = np.float32
_DEBUG = False

BACKWARD_RULES: dict[str, Callable] = {}


def set_precision(name: str) -> None:
    """Select the float width used for new tensors: ``"float32"`` or ``"float64"``."""
    global _DTYPE
    if name not in ("float32", "float64"):
        raise ValueError(f"unknown precision {name!r}")
    _DTYPE = np.dtype(name).type


def get_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(name: str):
    old = np.dtype(_DTYPE).name
    set_precision(name)
    try:
        yield
    finally:
        set_precision(old)


def set_debug(flag: bool) -> None:
    """Enable NaN/Inf checks after every forward op."""
    global _DEBUG
    _DEBUG = bool(flag)


@contextlib.contextmanager
def debug_mode():
    old = _DEBUG
    set_debug(True)
    try:
        yield
    finally:
        set_debug(old)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "op", "ctx", "name")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32, np.float64):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple = ()
        self.op = "leaf"
        self.ctx = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

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

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def backward(self, grad_output=None):
        backward(self, grad_output)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=_DTYPE), requires_grad=True, name=name)


def _node(op: str, value: np.ndarray, parents: Sequence[Tensor], ctx=None) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value produced by op {op!r}")
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.op = op
        out.ctx = ctx
    return out


def _rule(name: str):
    def register(fn):
        BACKWARD_RULES[name] = fn
        return fn
    return register


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(op: str, fn, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return fn(a, b)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node("add", _binary("add", np.add, a.data, b.data), (a, b))


@_rule("add")
def _add_bw(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node("sub", _binary("sub", np.subtract, a.data, b.data), (a, b))


@_rule("sub")
def _sub_bw(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node("mul", _binary("mul", np.multiply, a.data, b.data), (a, b))


@_rule("mul")
def _mul_bw(node, g):
    a, b = node.parents
    return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _node("scale", a.data * a.data.dtype.type(c), (a,), ctx=c)


@_rule("scale")
def _scale_bw(node, g):
    return (g * g.dtype.type(node.ctx),)


def relu(a) -> Tensor:
    a = as_tensor(a)
    return _node("relu", np.maximum(a.data, 0), (a,))


@_rule("relu")
def _relu_bw(node, g):
    (a,) = node.parents
    return (g * (a.data > 0),)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    try:
        value = a.data @ b.data
    except ValueError:
        raise ValueError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None
    return _node("matmul", value, (a, b))


@_rule("matmul")
def _matmul_bw(node, g):
    a, b = node.parents
    ga = g @ np.swapaxes(b.data, -1, -2)
    gb = np.swapaxes(a.data, -1, -2) @ g
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum.  Every index of an operand must appear in the other
    operand or in the output (no operand-local reductions)."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if len(sa) != a.ndim or len(sb) != b.ndim:
        raise ValueError(f"einsum {spec!r}: operand shapes {a.shape}, {b.shape} do not match subscripts")
    for own, other in ((sa, sb), (sb, sa)):
        if len(set(own)) != len(own) or any(c not in other and c not in out for c in own):
            raise ValueError(f"einsum {spec!r}: unsupported subscripts")
    try:
        value = np.einsum(f"{sa},{sb}->{out}", a.data, b.data)
    except ValueError as exc:
        raise ValueError(f"einsum {spec!r}: shapes {a.shape}, {b.shape}: {exc}") from None
    return _node("einsum", value, (a, b), ctx=(sa, sb, out))


@_rule("einsum")
def _einsum_bw(node, g):
    a, b = node.parents
    sa, sb, out = node.ctx
    ga = np.einsum(f"{out},{sb}->{sa}", g, b.data)
    gb = np.einsum(f"{out},{sa}->{sb}", g, a.data)
    return ga, gb


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        value = a.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from None
    return _node("reshape", value, (a,))


@_rule("reshape")
def _reshape_bw(node, g):
    return (g.reshape(node.parents[0].shape),)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    return _node("transpose", np.transpose(a.data, axes), (a,), ctx=tuple(axes))


@_rule("transpose")
def _transpose_bw(node, g):
    return (np.transpose(g, np.argsort(node.ctx)),)


def take(a, index) -> Tensor:
    """Basic/advanced indexing; backward scatters (accumulating) into zeros."""
    a = as_tensor(a)
    return _node("take", a.data[index], (a,), ctx=index)


@_rule("take")
def _take_bw(node, g):
    (a,) = node.parents
    out = np.zeros(a.shape, dtype=g.dtype)
    np.add.at(out, node.ctx, g)
    return (out,)


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: no inputs")
    try:
        value = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ValueError(f"concat: shapes {[t.shape for t in ts]} do not align on axis {axis}") from None
    ax = axis % ts[0].ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _node("concat", value, ts, ctx=(ax, bounds))


@_rule("concat")
def _concat_bw(node, g):
    ax, bounds = node.ctx
    return tuple(np.split(g, bounds, axis=ax))


def gather(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array ``ids`` of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ValueError(f"gather: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"gather: id out of range for table with {table.shape[0]} rows")
    return _node("gather", table.data[ids], (table,), ctx=ids)


@_rule("gather")
def _gather_bw(node, g):
    (table,) = node.parents
    out = np.zeros(table.shape, dtype=g.dtype)
    np.add.at(out, node.ctx, g)
    return (out,)


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    return _node("sum", np.asarray(a.data.sum(axis=axis)), (a,), ctx=axis)


@_rule("sum")
def _sum_bw(node, g):
    (a,) = node.parents
    axis = node.ctx
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum_(a, axis), 1.0 / count)


# ---------------------------------------------------------------- nn ops

def masked_softmax(x, mask) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is False get exactly 0.

    A row with every entry masked is a bug upstream and raises.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ValueError(f"masked_softmax: mask shape {mask.shape} != logits shape {x.shape}")
    if not np.all(mask.any(axis=-1)):
        raise ValueError("masked_softmax: a row is fully masked")
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0).astype(x.dtype)
    y = e / e.sum(axis=-1, keepdims=True)
    return _node("masked_softmax", y, (x,), ctx=y)


@_rule("masked_softmax")
def _softmax_bw(node, g):
    y = node.ctx
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ValueError(f"layer_norm: gain/bias shapes {gamma.shape}, {beta.shape} vs features {x.shape[-1]}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = (xc * inv).astype(x.dtype)
    return _node("layer_norm", xhat * gamma.data + beta.data, (x, gamma, beta), ctx=(xhat, inv))


@_rule("layer_norm")
def _layer_norm_bw(node, g):
    x, gamma, beta = node.parents
    xhat, inv = node.ctx
    lead = tuple(range(g.ndim - 1))
    ggamma = (g * xhat).sum(axis=lead)
    gbeta = g.sum(axis=lead)
    gx_hat = g * gamma.data
    gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
    return gx, ggamma, gbeta


def dropout(x, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-p) at train time only."""
    x = as_tensor(x)
    if not train or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return _node("dropout", x.data * keep, (x,), ctx=keep)


@_rule("dropout")
def _dropout_bw(node, g):
    return (g * node.ctx,)


def custom(op: str, value: np.ndarray, parents: Sequence[Tensor], ctx=None) -> Tensor:
    """Record a node for an op whose backward rule is registered elsewhere."""
    if op not in BACKWARD_RULES:
        raise KeyError(f"no backward rule registered for {op!r}")
    return _node(op, value, [as_tensor(p) for p in parents], ctx)


register_backward = _rule


# ---------------------------------------------------------------- backward

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad_output: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

    ``grad_output`` seeds a non-scalar output (vector-Jacobian product); without
    it the output must be a scalar.
    """
    if grad_output is None:
        if loss.ndim != 0:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        grad_output = np.ones((), dtype=loss.dtype)
    elif np.shape(grad_output) != loss.shape:
        raise ValueError(f"grad_output shape {np.shape(grad_output)} != output shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.asarray(grad_output, dtype=loss.dtype)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = BACKWARD_RULES[node.op](node, g)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            if pg.shape != p.shape:
                raise RuntimeError(f"backward of {node.op!r} produced grad {pg.shape} for input {p.shape}")
            key = id(p)
            grads[key] = pg if key not in grads else grads[key] + pg
