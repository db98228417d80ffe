"""Dense float64 tensors with reverse-mode automatic differentiation.

Every forward op records its parents and a backward closure; ``backward()``
replays the graph once in reverse topological order. All math is 64-bit so
finite-difference checks resolve gradients to ~1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", parents=()):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- graph plumbing -----------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar output; visits each node once."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self) -> float:
        return self.data.item()

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _make(self.data + other.data, (self, other), "add")
        if out._parents:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(g, b.shape))
            out._backward = back
        return out

    def __sub__(self, other):
        other = as_tensor(other)
        out = _make(self.data - other.data, (self, other), "sub")
        if out._parents:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(-g, b.shape))
            out._backward = back
        return out

    def __mul__(self, other):
        other = as_tensor(other)
        out = _make(self.data * other.data, (self, other), "mul")
        if out._parents:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g * b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(g * a.data, b.shape))
            out._backward = back
        return out

    def __truediv__(self, other):
        other = as_tensor(other)
        out = _make(self.data / other.data, (self, other), "div")
        if out._parents:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g / b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
            out._backward = back
        return out

    def __neg__(self):
        out = _make(-self.data, (self,), "neg")
        if out._parents:
            def back(g, a=self):
                a._accumulate(-g)
            out._backward = back
        return out

    def __radd__(self, other):
        return as_tensor(other) + self

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __rmul__(self, other):
        return as_tensor(other) * self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = _make(self.data ** p, (self,), f"pow{p}")
        if out._parents:
            def back(g, a=self, p=p):
                a._accumulate(g * p * a.data ** (p - 1))
            out._backward = back
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ShapeError("matmul operands must have at least 2 dimensions")
        if self.shape[-1] != other.shape[-2]:
            raise ShapeError(f"matmul inner extents differ: {self.shape} @ {other.shape}")
        out = _make(np.matmul(self.data, other.data), (self, other), "matmul")
        if out._parents:
            def back(g, a=self, b=other):
                if a.requires_grad:
                    ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                    a._accumulate(_unbroadcast(ga, a.shape))
                if b.requires_grad:
                    gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                    b._accumulate(_unbroadcast(gb, b.shape))
            out._backward = back
        return out

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self):
        y = np.exp(self.data)
        out = _make(y, (self,), "exp")
        if out._parents:
            def back(g, a=self, y=y):
                a._accumulate(g * y)
            out._backward = back
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = _make(y, (self,), "tanh")
        if out._parents:
            def back(g, a=self, y=y):
                a._accumulate(g * (1.0 - y * y))
            out._backward = back
        return out

    def sigmoid(self):
        x = self.data
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = _make(y, (self,), "sigmoid")
        if out._parents:
            def back(g, a=self, y=y):
                a._accumulate(g * y * (1.0 - y))
            out._backward = back
        return out

    def abs(self):
        out = _make(np.abs(self.data), (self,), "abs")
        if out._parents:
            def back(g, a=self):
                a._accumulate(g * np.sign(a.data))
            out._backward = back
        return out

    # -- reductions -------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out._parents:
            def back(g, a=self, axis=axis, keepdims=keepdims):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            out._backward = back
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else _axis_size(self.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation ------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,), "reshape")
        if out._parents:
            def back(g, a=self):
                a._accumulate(g.reshape(a.shape))
            out._backward = back
        return out

    def transpose(self, axes):
        out = _make(np.ascontiguousarray(self.data.transpose(axes)), (self,), "transpose")
        if out._parents:
            inv = tuple(np.argsort(axes))
            def back(g, a=self, inv=inv):
                a._accumulate(g.transpose(inv))
            out._backward = back
        return out

    def __getitem__(self, key):
        out = _make(self.data[key], (self,), "slice")
        if out._parents:
            def back(g, a=self, key=key):
                full = np.zeros_like(a.data)
                full[key] += g
                a._accumulate(full)
            out._backward = back
        return out

    def broadcast_to(self, shape):
        out = _make(np.broadcast_to(self.data, shape).copy(), (self,), "broadcast")
        if out._parents:
            def back(g, a=self):
                a._accumulate(_unbroadcast(g, a.shape))
            out._backward = back
        return out


def _make(data: np.ndarray, parents: tuple, op: str) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, op=op, parents=parents)
    else:
        out = Tensor(data, op=op)
    return out


def _axis_size(shape, axis) -> int:
    if isinstance(axis, int):
        return shape[axis]
    n = 1
    for a in axis:
        n *= shape[a]
    return n


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- free functions on tensors ----------------------------------------------


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = _make(np.concatenate([t.data for t in tensors], axis=axis),
                tuple(tensors), "concat")
    if out._parents:
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def back(g, ts=tensors, offsets=offsets, axis=axis):
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t._accumulate(g[tuple(idx)])
        out._backward = back
    return out


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), "stack")
    if out._parents:
        def back(g, ts=tensors, axis=axis):
            for i, t in enumerate(ts):
                if t.requires_grad:
                    t._accumulate(np.take(g, i, axis=axis))
        out._backward = back
    return out


def gather_rows(t: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds into the source."""
    if t.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-D tensor")
    out = _make(t.data[idx], (t,), "gather_rows")
    if out._parents:
        def back(g, a=t, idx=idx):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)
        out._backward = back
    return out


def scatter_rows(t: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Place rows of `t` at positions `idx` of an (n_rows, w) zero tensor."""
    if t.data.ndim != 2:
        raise ShapeError("scatter_rows expects a 2-D tensor")
    data = np.zeros((n_rows, t.shape[1]), dtype=np.float64)
    np.add.at(data, idx, t.data)
    out = _make(data, (t,), "scatter_rows")
    if out._parents:
        def back(g, a=t, idx=idx):
            a._accumulate(g[idx])
        out._backward = back
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax (max subtraction) along `axis`."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (x,), "softmax")
    if out._parents:
        def back(g, a=x, y=y, axis=axis):
            inner = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate(y * (g - inner))
        out._backward = back
    return out


def topk_mask(scores: Tensor, k: int):
    """Keep the top-k entries of each row, zero the rest.

    Ties break toward the lowest index. Gradients flow only through the
    retained entries. Returns (gate, indices) where indices is an (N, k)
    int array of the retained columns, ascending per row.
    """
    if scores.data.ndim != 2:
        raise ShapeError("topk_mask expects a 2-D score tensor")
    n, e = scores.shape
    if not 1 <= k <= e:
        raise ValueError(f"k={k} out of range [1, {e}]")
    order = np.argsort(-scores.data, axis=1, kind="stable")
    top = np.sort(order[:, :k], axis=1)
    mask = np.zeros((n, e), dtype=np.float64)
    np.put_along_axis(mask, top, 1.0, axis=1)
    out = _make(scores.data * mask, (scores,), "topk_mask")
    if out._parents:
        def back(g, a=scores, mask=mask):
            a._accumulate(g * mask)
        out._backward = back
    return out, top


def first_nonfinite(root: Tensor) -> Tensor | None:
    """First tensor (forward topological order) holding NaN/Inf, if any."""
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    for t in topo:
        if not np.all(np.isfinite(t.data)):
            return t
    return None


# -- parameter registry --------------------------------------------------------


class Parameters:
    """Named registry of trainable tensors; names are unique."""

    def __init__(self):
        self._store: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._store:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=True, op="param")
        self._store[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name]

    def __contains__(self, name: str) -> bool:
        return name in self._store

    def __len__(self) -> int:
        return len(self._store)

    def names(self):
        return list(self._store)

    def items(self):
        return self._store.items()

    def tensors(self):
        return list(self._store.values())

    def zero_grad(self):
        for t in self._store.values():
            t.zero_grad()

    def n_entries(self) -> int:
        return sum(t.size for t in self._store.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._store.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._store) - set(state)
        extra = set(state) - set(self._store)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._store.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise ShapeError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
            t.data = np.ascontiguousarray(arr)


# -- finite-difference gradient checking ---------------------------------------


@dataclass
class GradCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    max_rel_err: float = 0.0
    worst: str = ""

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def check_gradients(fn, params: Parameters, eps: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of the scalar `fn()` against central differences.

    `fn` must rebuild its graph from the current parameter values on every
    call. The error denominator is floored at 1e-4 so entries whose true
    gradient is (near) zero are judged on absolute error; central-difference
    truncation noise (~1e-11 at eps=1e-5 for O(1) outputs) would otherwise
    read as large relative error on exactly-zero gradients.
    """
    out = fn()
    if out.data.size != 1:
        raise ValueError("check_gradients requires a scalar-valued function")
    params.zero_grad()
    out.backward()
    analytic = {}
    for name, t in params.items():
        analytic[name] = np.zeros_like(t.data) if t.grad is None else t.grad.copy()

    report = GradCheckReport()
    for name, t in params.items():
        flat = t.data.reshape(-1)
        ana = analytic[name].reshape(-1)
        worst_here = 0.0
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                f_plus = fn().data.item()
                flat[i] = orig - eps
                f_minus = fn().data.item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(ana[i]) + abs(numeric), 1e-4)
            worst_here = max(worst_here, abs(ana[i] - numeric) / denom)
        report.per_param[name] = worst_here
        if worst_here >= report.max_rel_err:
            report.max_rel_err = worst_here
            report.worst = name
    return report
