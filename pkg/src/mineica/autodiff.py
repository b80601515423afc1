"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

The graph is dynamic: every operation links its output tensor back to its
inputs, and ``backward`` walks the implicit DAG exactly once in reverse
topological order. Gradients accumulate into ``Tensor.grad``; callers are
responsible for zeroing parameter gradients between backward passes
(``zero_grads`` / the optimizer's ``zero_grad``). Accumulation across
repeated backward calls without an intervening reset is not supported.

relu'(0) is defined as 0.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block (forward values only)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """Dense rows x cols float64 array participating in the autodiff graph.

    ``values`` is row-major and owned by the tensor. ``grad`` holds the
    accumulated gradient (same shape) once a backward pass has reached the
    tensor; it is ``None`` before that.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"tensor must be 2-D and non-empty, got shape {arr.shape}")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() requires a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        """Reset the gradient buffer to zeros (allocating it if needed)."""
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        else:
            self.grad.fill(0.0)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # Operator sugar; all graph logic lives in the module-level functions.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


def _make(values: np.ndarray, parents: tuple[Tensor, ...], op: str,
          backward_fn: Callable[[np.ndarray], None] | None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out._parents = ()
    out._backward = None
    out.op = op
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(tensor: Tensor, grad: np.ndarray, own: bool = False) -> None:
    """Add a gradient contribution; ``own=True`` promises the array is fresh
    (not aliased by the caller or any other tensor) so it can be adopted
    without a defensive copy."""
    if tensor.grad is None:
        tensor.grad = grad if own else grad.copy()
    else:
        tensor.grad += grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b with the standard transpose backward rules."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g @ b.values.T, own=True)
        if b.requires_grad:
            _accumulate(b, a.values.T @ g, own=True)

    return _make(a.values @ b.values, (a, b), "matmul", backward_fn)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> bool:
    """Validate shapes for add/sub; returns True when b row-broadcasts."""
    if a.shape == b.shape:
        return False
    if b.rows == 1 and b.cols == a.cols:
        return True
    raise ShapeError(f"{op} needs equal shapes or a 1x{a.cols} second operand, "
                     f"got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a + b; b may be 1xC and is then broadcast over rows."""
    broadcast = _binary_shapes(a, b, "add")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            if broadcast:
                _accumulate(b, g.sum(axis=0, keepdims=True), own=True)
            else:
                _accumulate(b, g)

    return _make(a.values + b.values, (a, b), "add", backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a - b; b may be 1xC and is then broadcast over rows."""
    broadcast = _binary_shapes(a, b, "sub")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -(g.sum(axis=0, keepdims=True) if broadcast else g),
                        own=True)

    return _make(a.values - b.values, (a, b), "sub", backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; operands must have identical shapes."""
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * b.values, own=True)
        if b.requires_grad:
            _accumulate(b, g * a.values, own=True)

    return _make(a.values * b.values, (a, b), "mul", backward_fn)


def neg(a: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, -g, own=True)

    return _make(-a.values, (a,), "neg", backward_fn)


def _relu_grad_mask(values: np.ndarray) -> np.ndarray:
    # Strict > 0: the subgradient at exactly 0 is 0 by convention.
    return values > 0.0


def relu(a: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * _relu_grad_mask(a.values), own=True)

    return _make(np.maximum(a.values, 0.0), (a,), "relu", backward_fn)


def exp(a: Tensor) -> Tensor:
    out_values = np.exp(a.values)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * out_values, own=True)

    return _make(out_values, (a,), "exp", backward_fn)


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0.0):
        raise DomainError("log requires strictly positive input")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g / a.values, own=True)

    return _make(np.log(a.values), (a,), "log", backward_fn)


def reduce_mean(a: Tensor, axis: str = "all") -> Tensor:
    """Arithmetic mean, either over everything ("all" -> 1x1) or down the
    rows ("rows" -> 1xC)."""
    if axis == "all":
        out_values = np.array([[a.values.mean()]])
        scale = a.values.size
    elif axis == "rows":
        out_values = a.values.mean(axis=0, keepdims=True)
        scale = a.rows
    else:
        raise ContractError(f"reduce_mean axis must be 'all' or 'rows', got {axis!r}")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g / scale, a.shape))

    return _make(out_values, (a,), "reduce_mean", backward_fn)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Column concatenation [a | b]; row counts must match."""
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols needs equal row counts, got {a.shape} and {b.shape}")
    boundary = a.cols

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g[:, :boundary])
        if b.requires_grad:
            _accumulate(b, g[:, boundary:])

    return _make(np.hstack((a.values, b.values)), (a, b), "concat_cols", backward_fn)


def split_cols(a: Tensor, cols_left: int) -> tuple[Tensor, Tensor]:
    """Inverse of concat_cols: (a[:, :cols_left], a[:, cols_left:])."""
    if not 0 < cols_left < a.cols:
        raise ContractError(f"split point must lie strictly inside 1..{a.cols - 1}, "
                            f"got {cols_left}")

    def backward_left(g: np.ndarray) -> None:
        if a.requires_grad:
            padded = np.zeros(a.shape)
            padded[:, :cols_left] = g
            _accumulate(a, padded, own=True)

    def backward_right(g: np.ndarray) -> None:
        if a.requires_grad:
            padded = np.zeros(a.shape)
            padded[:, cols_left:] = g
            _accumulate(a, padded, own=True)

    left = _make(a.values[:, :cols_left].copy(), (a,), "split_cols", backward_left)
    right = _make(a.values[:, cols_left:].copy(), (a,), "split_cols", backward_right)
    return left, right


def gather_rows(a: Tensor, indices: Sequence[int] | np.ndarray) -> Tensor:
    """Select rows a[indices]; backward scatter-adds gradient rows back.

    With a permutation this reorders rows; repeated indices are allowed and
    their gradients accumulate.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ContractError("indices must be a non-empty 1-D integer sequence")
    if idx.min() < 0 or idx.max() >= a.rows:
        raise ContractError(f"row indices out of range 0..{a.rows - 1}")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            scattered = np.zeros(a.shape)
            np.add.at(scattered, idx, g)
            _accumulate(a, scattered, own=True)

    return _make(a.values[idx].copy(), (a,), "gather_rows", backward_fn)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Row concatenation; column counts must match. The inverse of
    split_rows; batching several inputs through one network pass."""
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise ShapeError("concat_rows needs equal column counts, got "
                         f"{[p.shape for p in parts]}")
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward_fn(g: np.ndarray) -> None:
        for part, start, stop in zip(parts, offsets, offsets[1:]):
            if part.requires_grad:
                _accumulate(part, g[start:stop])

    return _make(np.vstack([p.values for p in parts]), tuple(parts),
                 "concat_rows", backward_fn)


def split_rows(a: Tensor, row_counts: Sequence[int]) -> list[Tensor]:
    """Partition into consecutive row blocks of the given sizes."""
    counts = list(row_counts)
    if any(c < 1 for c in counts) or sum(counts) != a.rows:
        raise ContractError(f"row counts {counts} must be positive and sum "
                            f"to {a.rows}")
    offsets = np.cumsum([0] + counts)
    out = []
    for start, stop in zip(offsets, offsets[1:]):
        def backward_fn(g: np.ndarray, start=int(start), stop=int(stop)) -> None:
            if a.requires_grad:
                padded = np.zeros(a.shape)
                padded[start:stop] = g
                _accumulate(a, padded, own=True)

        out.append(_make(a.values[start:stop].copy(), (a,), "split_rows",
                         backward_fn))
    return out


def backward(root: Tensor) -> None:
    """Backpropagate from a scalar root, visiting each node exactly once.

    Every reachable tensor with ``requires_grad`` ends up holding
    d(root)/d(tensor) added into its ``grad`` buffer.
    """
    if root.shape != (1, 1):
        raise ContractError(f"backward root must be 1x1, got {root.shape}")
    if not root.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    _accumulate(root, np.ones((1, 1)), own=True)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def set_requires_grad(tensors: Iterable[Tensor], flag: bool) -> None:
    """Toggle gradient tracking, e.g. to freeze one network while the other
    trains. Takes effect for graphs built afterwards."""
    for t in tensors:
        t.requires_grad = flag
