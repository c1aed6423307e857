"""Reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D numpy array; scalars are 1x1. The graph is rebuilt on
every forward pass (define-by-run), which keeps alternating GAN updates
simple: whatever was computed is exactly what gets differentiated.

Primitives are registered by name so tests can fuzz the whole set through
``apply_primitive``. Each primitive validates shapes up front and checks its
output for NaN/Inf, so non-finite values cannot leak past a public op.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_grad_enabled = True


class no_grad:
    """Context manager that records no graph edges (plain numeric forward)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"values must be 2-D matrices, got shape {arr.shape}")
    return arr


class Tensor:
    """A node in the differentiation graph: a matrix plus how it was made."""

    __slots__ = ("value", "grad", "op", "requires_grad", "_parents", "_vjp")

    def __init__(self, value, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), vjp: Callable | None = None):
        self.value = _as_matrix(value)
        if not np.isfinite(self.value).all():
            raise NumericError(f"{op}: non-finite values in tensor")
        self.grad: np.ndarray | None = None
        self.op = op
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.value.shape})"

    # operator sugar; scalars route to scale/add_scalar so loss weighting reads naturally
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, -float(other))
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item: tensor has shape {self.value.shape}, not (1, 1)")
        return float(self.value[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())


def parameter(value) -> Tensor:
    """A leaf tensor that participates in gradient computation."""
    return Tensor(np.array(value, dtype=np.float64, copy=True), requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_PRIMITIVES: dict[str, Callable] = {}


def _primitive(name):
    def register(fn):
        _PRIMITIVES[name] = fn
        return fn
    return register


def primitive_names() -> tuple[str, ...]:
    return tuple(sorted(_PRIMITIVES))


def apply_primitive(kind: str, inputs: Iterable, **attrs) -> Tensor:
    """Dispatch a registered primitive by name (used by fuzzers and tests)."""
    if kind not in _PRIMITIVES:
        raise ContractError(f"unknown primitive {kind!r}; known: {primitive_names()}")
    return _PRIMITIVES[kind](*inputs, **attrs)


def _node(value: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(value, op=op)
    return Tensor(value, requires_grad=True, op=op, parents=parents, vjp=vjp)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


@_primitive("matmul")
def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.value.shape} and {b.value.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _node(av @ bv, "matmul", (a, b), vjp)


@_primitive("transpose")
def transpose(a) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (g.T,)

    return _node(a.value.T.copy(), "transpose", (a,), vjp)


@_primitive("add")
def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_same_shape("add", a, b)

    def vjp(g):
        return g, g

    return _node(a.value + b.value, "add", (a, b), vjp)


@_primitive("sub")
def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_same_shape("sub", a, b)

    def vjp(g):
        return g, -g

    return _node(a.value - b.value, "sub", (a, b), vjp)


@_primitive("mul")
def mul(a, b) -> Tensor:
    """Hadamard (entrywise) product."""
    a, b = _coerce(a), _coerce(b)
    _check_same_shape("mul", a, b)
    av, bv = a.value, b.value

    def vjp(g):
        return g * bv, g * av

    return _node(av * bv, "mul", (a, b), vjp)


@_primitive("divide")
def divide(a, b) -> Tensor:
    """Entrywise division; the divisor may also be a 1x1 scalar."""
    a, b = _coerce(a), _coerce(b)
    if b.value.shape != (1, 1):
        _check_same_shape("divide", a, b)
    if np.any(b.value == 0.0):
        raise NumericError("divide: zero divisor")
    av, bv = a.value, b.value

    def vjp(g):
        ga = g / bv
        gb = -g * av / (bv * bv)
        if bv.shape == (1, 1) and av.shape != (1, 1):
            gb = np.array([[gb.sum()]])
        return ga, gb

    return _node(av / bv, "divide", (a, b), vjp)


@_primitive("scale")
def scale(a, factor: float) -> Tensor:
    a = _coerce(a)
    c = float(factor)

    def vjp(g):
        return (c * g,)

    return _node(c * a.value, "scale", (a,), vjp)


@_primitive("add_scalar")
def add_scalar(a, offset: float) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (g,)

    return _node(a.value + float(offset), "add_scalar", (a,), vjp)


@_primitive("leaky_relu")
def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = _coerce(a)
    s = float(slope)
    mask = np.where(a.value > 0.0, 1.0, s)

    def vjp(g):
        return (g * mask,)

    return _node(np.where(a.value > 0.0, a.value, s * a.value), "leaky_relu", (a,), vjp)


@_primitive("sigmoid")
def sigmoid(a) -> Tensor:
    a = _coerce(a)
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # keep strictly inside (0, 1) so downstream logs stay finite
    out = np.clip(out, 1e-300, 1.0 - 1e-16)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node(out, "sigmoid", (a,), vjp)


@_primitive("tanh")
def tanh(a) -> Tensor:
    a = _coerce(a)
    out = np.tanh(a.value)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _node(out, "tanh", (a,), vjp)


@_primitive("exp")
def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.value)
    if not np.isfinite(out).all():
        raise NumericError("exp: overflow to non-finite values")

    def vjp(g):
        return (g * out,)

    return _node(out, "exp", (a,), vjp)


@_primitive("log")
def log(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.value <= 0.0):
        raise NumericError("log: non-positive input")
    av = a.value

    def vjp(g):
        return (g / av,)

    return _node(np.log(av), "log", (a,), vjp)


@_primitive("sqrt")
def sqrt(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.value <= 0.0):
        raise NumericError("sqrt: input must be strictly positive")
    out = np.sqrt(a.value)

    def vjp(g):
        return (g * (0.5 / out),)

    return _node(out, "sqrt", (a,), vjp)


@_primitive("clip")
def clip(a, lo: float, hi: float) -> Tensor:
    a = _coerce(a)
    inside = (a.value > lo) & (a.value < hi)

    def vjp(g):
        return (g * inside,)

    return _node(np.clip(a.value, lo, hi), "clip", (a,), vjp)


@_primitive("sum")
def total(a) -> Tensor:
    a = _coerce(a)
    shp = a.value.shape

    def vjp(g):
        return (np.full(shp, g[0, 0]),)

    return _node(np.array([[a.value.sum()]]), "sum", (a,), vjp)


@_primitive("mean")
def mean(a) -> Tensor:
    a = _coerce(a)
    shp = a.value.shape
    size = a.value.size

    def vjp(g):
        return (np.full(shp, g[0, 0] / size),)

    return _node(np.array([[a.value.mean()]]), "mean", (a,), vjp)


@_primitive("abs")
def absolute(a) -> Tensor:
    a = _coerce(a)
    sign = np.sign(a.value)

    def vjp(g):
        return (g * sign,)

    return _node(np.abs(a.value), "abs", (a,), vjp)


@_primitive("amax")
def amax(a) -> Tensor:
    """Maximum entry as a 1x1 tensor; subgradient routes to the first argmax."""
    a = _coerce(a)
    flat_idx = int(np.argmax(a.value))
    shp = a.value.shape

    def vjp(g):
        out = np.zeros(shp)
        out.flat[flat_idx] = g[0, 0]
        return (out,)

    return _node(np.array([[a.value.max()]]), "amax", (a,), vjp)


@_primitive("concat_rows")
def concat_rows(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.value.shape[1] != b.value.shape[1]:
        raise ShapeError(f"concat_rows: column counts differ for {a.value.shape} and {b.value.shape}")
    na = a.value.shape[0]

    def vjp(g):
        return g[:na], g[na:]

    return _node(np.vstack([a.value, b.value]), "concat_rows", (a, b), vjp)


@_primitive("reshape")
def reshape(a, rows: int, cols: int) -> Tensor:
    a = _coerce(a)
    if rows * cols != a.value.size:
        raise ShapeError(f"reshape: cannot view {a.value.shape} as ({rows}, {cols})")
    shp = a.value.shape

    def vjp(g):
        return (g.reshape(shp),)

    return _node(a.value.reshape(rows, cols).copy(), "reshape", (a,), vjp)


@_primitive("gather_rows")
def gather_rows(a, index) -> Tensor:
    a = _coerce(a)
    idx = np.asarray(index, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {a.value.shape[0]} rows")
    shp = a.value.shape

    def vjp(g):
        out = np.zeros(shp)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.value[idx], "gather_rows", (a,), vjp)


@_primitive("scatter_add_rows")
def scatter_add_rows(a, index, n_rows: int) -> Tensor:
    a = _coerce(a)
    idx = np.asarray(index, dtype=np.intp).ravel()
    if idx.size != a.value.shape[0]:
        raise ShapeError(f"scatter_add_rows: {idx.size} indices for {a.value.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise ShapeError(f"scatter_add_rows: index out of range for {n_rows} rows")
    out = np.zeros((n_rows, a.value.shape[1]))
    np.add.at(out, idx, a.value)

    def vjp(g):
        return (g[idx],)

    return _node(out, "scatter_add_rows", (a,), vjp)


@_primitive("edge_matvec")
def edge_matvec(filters, features, d_out: int) -> Tensor:
    """Per-row matrix-vector product: row e of `filters` is a flattened
    (d_out, d_in) matrix applied to row e of `features`."""
    filters, features = _coerce(filters), _coerce(features)
    n_e, d_in = features.value.shape
    if filters.value.shape != (n_e, d_out * d_in):
        raise ShapeError(
            f"edge_matvec: filters {filters.value.shape} incompatible with "
            f"features {features.value.shape} at d_out={d_out}")
    f3 = filters.value.reshape(n_e, d_out, d_in)
    fv = features.value

    def vjp(g):
        g_f = np.einsum("eo,ei->eoi", g, fv).reshape(n_e, d_out * d_in)
        g_x = np.einsum("eoi,eo->ei", f3, g)
        return g_f, g_x

    return _node(np.einsum("eoi,ei->eo", f3, fv), "edge_matvec", (filters, features), vjp)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Masking with inverse-rate rescale; the drawn mask is a graph constant,
    so backward replays it exactly."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.value.shape) >= rate).astype(np.float64)
    return scale(mul(a, Tensor(keep)), 1.0 / (1.0 - rate))


def broadcast_rows(row: Tensor, n_rows: int) -> Tensor:
    """Repeat a 1xD row n times (ones-column matmul, so gradients sum over rows)."""
    if row.value.shape[0] != 1:
        raise ShapeError(f"broadcast_rows: expected a single row, got {row.value.shape}")
    return matmul(Tensor(np.ones((n_rows, 1))), row)


def broadcast_cols(col: Tensor, n_cols: int) -> Tensor:
    if col.value.shape[1] != 1:
        raise ShapeError(f"broadcast_cols: expected a single column, got {col.value.shape}")
    return matmul(col, Tensor(np.ones((1, n_cols))))


def _toposort(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backpropagate(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(node) for every grad-requiring node reachable
    from `loss`. Parameters passed explicitly but unreachable map to zeros.
    """
    if loss.value.shape != (1, 1):
        raise ContractError(f"backpropagate: loss must be 1x1, got {loss.value.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    order = _toposort(loss)
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg.copy() if acc is None else acc + pg
    result: dict[Tensor, np.ndarray] = {}
    for node in order:
        if node.requires_grad and id(node) in grads:
            node.grad = grads[id(node)]
            result[node] = node.grad
    if params is not None:
        for p in params:
            if p not in result:
                p.grad = np.zeros_like(p.value)
                result[p] = p.grad
    return result


def grad_check(build_loss: Callable[[], Tensor], params: Mapping[str, Tensor],
               eps: float = 1e-5) -> float:
    """Max relative discrepancy between backprop and central finite differences.

    `build_loss` must be deterministic (fresh, identical forward every call);
    its parameters are the long-lived leaves in `params`, perturbed in place.
    """
    if not 1e-7 < eps < 1e-3:
        raise ContractError(f"grad_check: eps must lie in (1e-7, 1e-3), got {eps}")
    first = build_loss()
    second = build_loss()
    if first.value.shape != (1, 1):
        raise ContractError(f"grad_check: loss must be scalar, got {first.value.shape}")
    if not np.array_equal(first.value, second.value):
        raise ContractError("grad_check: builder is not deterministic")
    grads = backpropagate(first, params.values())
    worst = 0.0
    for p in params.values():
        analytic = grads[p]
        flat = p.value.ravel()
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + eps
            f_plus = build_loss().item()
            flat[k] = saved - eps
            f_minus = build_loss().item()
            flat[k] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            an = analytic.ravel()[k]
            disc = abs(an - numeric) / max(1.0, abs(an), abs(numeric))
            if disc > worst:
                worst = disc
    return worst
