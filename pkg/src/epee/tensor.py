"""Minimal dense autodiff core over 2-D float64 matrices.

Every value in the computation graph is a ``Tensor``: a 2-D numpy array
plus an optional gradient of the same shape, links to parent nodes, and
the local backward rule of the operation that produced it.  Graphs are
built by the free functions below (``matmul``, ``softmax_rows``, ...),
and ``backward`` propagates from a 1x1 scalar root in reverse
topological order.

The core is deliberately small: just enough operations to express a
transformer encoder with per-layer classification heads and its
weighted cross-entropy training objective.  ``grad_check`` provides the
central-finite-difference validation used throughout the test suite.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Floor applied to probabilities before taking logs, so degenerate
# distributions never produce -inf losses.
LOG_FLOOR = 1e-12

# Variance guard for layer normalization.
LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


class Tensor:
    """A node in the reverse-mode differentiation graph.

    Attributes:
        value: 2-D float64 array holding the node's result.
        grad: gradient of the scalar root w.r.t. ``value``; same shape.
            Allocated lazily; for parameters it persists and accumulates
            across backward passes until ``zero_grad`` is called.
        parents: input nodes this node was computed from.
        op: tag naming the backward rule ("matmul", "relu", ...).
    """

    __slots__ = ("value", "grad", "parents", "op", "_backward", "is_param")

    def __init__(self, data, parents: tuple["Tensor", ...] = (), op: str = "leaf",
                 is_param: bool = False):
        self.value = _as_matrix(data)
        if not np.isfinite(self.value).all():
            raise FloatingPointError(f"non-finite values in '{op}' result")
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.op = op
        self._backward: Callable[[], None] | None = None
        self.is_param = is_param

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.value.shape}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, op={self.op!r})"


def parameter(data, rng: np.random.Generator | None = None,
              shape: tuple[int, int] | None = None, scale: float = 0.05) -> Tensor:
    """Create a trainable leaf tensor.

    Either wraps explicit ``data`` or, when ``data`` is None, draws a
    ``shape`` matrix uniformly from [-scale, scale] using ``rng``.
    """
    if data is None:
        if rng is None or shape is None:
            raise ValueError("random parameter needs both rng and shape")
        data = rng.uniform(-scale, scale, size=shape)
    t = Tensor(data, op="param", is_param=True)
    t.zero_grad()
    return t


def backward(root: Tensor) -> None:
    """Propagate gradients from a 1x1 scalar root through the graph.

    Interior nodes get fresh zero gradients each pass; parameter leaves
    accumulate, which is what lets one optimizer step sum gradient
    contributions from several per-sample graphs.
    """
    if root.value.shape != (1, 1):
        raise ShapeError(f"backward root must be 1x1, got {root.value.shape}")

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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in order:
        if not node.is_param:
            node.grad = np.zeros_like(node.value)
    root.grad = np.ones((1, 1))

    for node in reversed(order):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.value @ b.value, (a, b), "matmul")

    def _bw():
        a._accumulate(out.grad @ b.value.T)
        b._accumulate(a.value.T @ out.grad)

    out._backward = _bw
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.value + b.value, (a, b), "add")

    def _bw():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.value * b.value, (a, b), "mul")

    def _bw():
        a._accumulate(out.grad * b.value)
        b._accumulate(out.grad * a.value)

    out._backward = _bw
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of x."""
    if bias.rows != 1 or bias.cols != x.cols:
        raise ShapeError(f"bias shape {bias.shape} does not broadcast over {x.shape}")
    out = Tensor(x.value + bias.value, (x, bias), "add_bias")

    def _bw():
        x._accumulate(out.grad)
        bias._accumulate(out.grad.sum(axis=0, keepdims=True))

    out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    """Rectified linear unit, the feed-forward nonlinearity.

    The derivative at exactly 0 is taken as 0; gradient checks sample
    points away from the kink.
    """
    out = Tensor(np.maximum(x.value, 0.0), (x,), "relu")

    def _bw():
        x._accumulate(out.grad * (x.value > 0.0))

    out._backward = _bw
    return out


def transpose(x: Tensor) -> Tensor:
    out = Tensor(x.value.T, (x,), "transpose")

    def _bw():
        x._accumulate(out.grad.T)

    out._backward = _bw
    return out


def scale(x: Tensor, s: float) -> Tensor:
    """Multiply every entry by the constant s."""
    out = Tensor(x.value * s, (x,), "scale")

    def _bw():
        x._accumulate(out.grad * s)

    out._backward = _bw
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    out = Tensor([[x.value.sum()]], (x,), "sum_all")

    def _bw():
        x._accumulate(np.full_like(x.value, out.grad[0, 0]))

    out._backward = _bw
    return out


def layer_norm_rows(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift.

    ``gain`` and ``bias`` are 1 x cols and broadcast over rows.
    """
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise ShapeError(
            f"layer norm gain/bias must be 1x{x.cols}, got {gain.shape}/{bias.shape}")
    mean = x.value.mean(axis=1, keepdims=True)
    var = x.value.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x.value - mean) * inv
    out = Tensor(xhat * gain.value + bias.value, (x, gain, bias), "layer_norm")

    def _bw():
        g = out.grad * gain.value
        # d/dx of (x - mean) * inv, with mean and inv both functions of x.
        gx = inv * (g - g.mean(axis=1, keepdims=True)
                    - xhat * (g * xhat).mean(axis=1, keepdims=True))
        x._accumulate(gx)
        gain._accumulate((out.grad * xhat).sum(axis=0, keepdims=True))
        bias._accumulate(out.grad.sum(axis=0, keepdims=True))

    out._backward = _bw
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    if x.value.size == 0:
        raise ShapeError("softmax_rows needs a nonempty matrix")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p, (x,), "softmax_rows")

    def _bw():
        g = out.grad
        dot = (g * p).sum(axis=1, keepdims=True)
        x._accumulate(p * (g - dot))

    out._backward = _bw
    return out


def cross_entropy(p: Tensor, label: int) -> Tensor:
    """Negative log probability of ``label`` under the 1 x K row ``p``.

    Probabilities at or below LOG_FLOOR are clamped (with a warning) so
    the loss stays finite; the clamped branch contributes no gradient.
    """
    if p.rows != 1:
        raise ShapeError(f"cross_entropy expects a single probability row, got {p.shape}")
    if not 0 <= label < p.cols:
        raise ValueError(f"label {label} out of range for {p.cols} classes")
    pl = p.value[0, label]
    clamped = pl <= LOG_FLOOR
    if clamped:
        log.warning("cross_entropy clamped probability %.3e to %.0e", pl, LOG_FLOOR)
        pl = LOG_FLOOR
    out = Tensor([[-np.log(pl)]], (p,), "cross_entropy")

    def _bw():
        if not clamped:
            g = np.zeros_like(p.value)
            g[0, label] = -out.grad[0, 0] / pl
            p._accumulate(g)

    out._backward = _bw
    return out


def embed(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of an embedding table; grads scatter-add back."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("embed needs a nonempty 1-D index sequence")
    if idx.min() < 0 or idx.max() >= table.rows:
        raise ValueError(
            f"embedding index out of range [0, {table.rows}): {idx.min()}..{idx.max()}")
    out = Tensor(table.value[idx], (table,), "embed")

    def _bw():
        g = np.zeros_like(table.value)
        np.add.at(g, idx, out.grad)
        table._accumulate(g)

    out._backward = _bw
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.rows):
        raise ShapeError(f"row slice [{start}:{stop}] invalid for {x.shape}")
    out = Tensor(x.value[start:stop], (x,), "slice_rows")

    def _bw():
        g = np.zeros_like(x.value)
        g[start:stop] = out.grad
        x._accumulate(g)

    out._backward = _bw
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.cols):
        raise ShapeError(f"column slice [{start}:{stop}] invalid for {x.shape}")
    out = Tensor(x.value[:, start:stop], (x,), "slice_cols")

    def _bw():
        g = np.zeros_like(x.value)
        g[:, start:stop] = out.grad
        x._accumulate(g)

    out._backward = _bw
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols requires equal row counts")
    out = Tensor(np.concatenate([p.value for p in parts], axis=1),
                 tuple(parts), "concat_cols")
    widths = [p.cols for p in parts]

    def _bw():
        offset = 0
        for p, w in zip(parts, widths):
            p._accumulate(out.grad[:, offset:offset + w])
            offset += w

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], params: np.ndarray,
               epsilon: float = 1e-5) -> float:
    """Compare analytic and central-difference gradients of a scalar function.

    ``f`` maps a parameter tensor to a 1x1 loss tensor.  Returns the
    maximum over parameter entries of

        |analytic - central| / max(1, |central|)

    where central = (f(p + eps) - f(p - eps)) / (2 eps) per entry.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    base = np.array(params, dtype=np.float64)
    p = Tensor(base.copy(), op="param", is_param=True)
    p.zero_grad()
    loss = f(p)
    if loss.value.shape != (1, 1) or not np.isfinite(loss.value).all():
        raise ValueError("grad_check requires a finite scalar loss")
    backward(loss)
    analytic = p.grad.copy()

    worst = 0.0
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = f(Tensor(base.copy())).item()
        flat[i] = orig - epsilon
        lo = f(Tensor(base.copy())).item()
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError("non-finite loss during finite differencing")
        central = (hi - lo) / (2.0 * epsilon)
        err = abs(analytic.reshape(-1)[i] - central) / max(1.0, abs(central))
        worst = max(worst, err)
    return worst
