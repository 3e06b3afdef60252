"""Dense float64 tensors (1 to 3 axes) with record-and-replay reverse-mode autodiff.

Forward-only evaluation needs no tape.  To differentiate, wrap the computation
in ``with Tape() as tape:`` and call ``tape.backward(loss)``; gradients
accumulate on every ``requires_grad`` tensor that participated.  A tape records
one evaluation and is replayed exactly once, in reverse execution order.
"""

from __future__ import annotations

import math

import numpy as np

EPS_NORM = 1e-12  # norm clamp for cosine denominators


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """A non-shape precondition was violated."""


class Tensor:
    """Immutable dense float64 array with 1 to 3 axes.

    Scalars are represented as shape-(1,) tensors.  ``data`` is read-only
    after construction; ``grad`` is filled in by ``Tape.backward``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 3:
            raise ShapeError(f"tensor rank must be 1..3, got {arr.ndim}")
        if arr.size == 0:
            raise ShapeError("tensor extents must be positive")
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor values must be finite")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar for the common elementwise cases
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def leaf(data) -> Tensor:
    return Tensor(data, requires_grad=True)


# ---------------------------------------------------------------------------
# tape

_TAPE_STACK: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of one evaluation; inputs always precede their consumers."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) on every recorded requires_grad tensor.

        ``loss`` must be a scalar produced on this tape.  The record list is
        replayed once, in reverse, so each node's incoming gradient is complete
        before its own rule fires.
        """
        if self._spent:
            raise ContractError("tape already replayed; build a fresh tape per run")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        produced = any(out is loss for out, _, _ in self._records)
        if not produced and self._records:
            raise ContractError("loss was not produced on this tape")
        self._spent = True
        for out, inputs, _ in self._records:
            out.grad = None
            for t in inputs:
                t.grad = None
        loss.grad = np.ones_like(loss.data)
        for out, inputs, vjp in reversed(self._records):
            if out.grad is None:
                continue
            grads = vjp(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(g, dtype=np.float64)
                else:
                    t.grad = t.grad + g


def _emit(out_data, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._records.append((out, inputs, vjp))
    return out


# ---------------------------------------------------------------------------
# elementwise and scalar ops

def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def smul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def sadd(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data + c, (a,), lambda g: (g,))


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Multiply by a learnable scalar (shape-(1,) tensor)."""
    if s.data.size != 1:
        raise ShapeError("scale: multiplier must be a scalar tensor")
    ad, sd = a.data, s.data.reshape(-1)[0]
    return _emit(ad * sd, (a, s), lambda g: (g * sd, np.array([np.sum(g * ad)])))


def shift(a: Tensor, s: Tensor) -> Tensor:
    """Add a learnable scalar (shape-(1,) tensor)."""
    if s.data.size != 1:
        raise ShapeError("shift: offset must be a scalar tensor")
    return _emit(a.data + s.data.reshape(-1)[0], (a, s),
                 lambda g: (g, np.array([np.sum(g)])))


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul: both operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ ({a.shape} x {b.shape})")
    ad, bd = a.data, b.data
    return _emit(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose: operand must be 2-D")
    return _emit(a.data.T, (a,), lambda g: (g.T,))


def concat_last(parts: list[Tensor]) -> Tensor:
    """Concatenate along the last axis (1-D or 2-D operands of equal rank)."""
    if not parts:
        raise ShapeError("concat_last: need at least one operand")
    ndim = parts[0].data.ndim
    if any(p.data.ndim != ndim for p in parts) or ndim > 2:
        raise ShapeError("concat_last: operands must share rank 1 or 2")
    if ndim == 2 and any(p.shape[0] != parts[0].shape[0] for p in parts):
        raise ShapeError("concat_last: 2-D operands must share row count")
    widths = [p.shape[-1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[..., offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), vjp)


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a 2-D matrix, one per row."""
    if not rows:
        raise ShapeError("stack_rows: need at least one row")
    if any(r.data.ndim != 1 or r.shape != rows[0].shape for r in rows):
        raise ShapeError("stack_rows: rows must be 1-D with equal length")

    def vjp(g):
        return tuple(g[i] for i in range(len(rows)))

    return _emit(np.stack([r.data for r in rows]), tuple(rows), vjp)


def row_matrix(v: Tensor) -> Tensor:
    """View a 1-D tensor as a 1xN matrix."""
    if v.data.ndim != 1:
        raise ShapeError("row_matrix: operand must be 1-D")
    return _emit(v.data[None, :], (v,), lambda g: (g[0],))


def flatten_row(m: Tensor) -> Tensor:
    """View a 1xN matrix as a 1-D tensor."""
    if m.data.ndim != 2 or m.shape[0] != 1:
        raise ShapeError("flatten_row: operand must be 1xN")
    return _emit(m.data[0], (m,), lambda g: (g[None, :],))


def broadcast_row(v: Tensor, m: int) -> Tensor:
    """Tile a 1-D tensor as m identical rows."""
    if v.data.ndim != 1:
        raise ShapeError("broadcast_row: operand must be 1-D")
    return _emit(np.tile(v.data, (m, 1)), (v,), lambda g: (g.sum(axis=0),))


def broadcast_col(v: Tensor, n: int) -> Tensor:
    """Tile a 1-D tensor as n identical columns."""
    if v.data.ndim != 1:
        raise ShapeError("broadcast_col: operand must be 1-D")
    return _emit(np.tile(v.data[:, None], (1, n)), (v,), lambda g: (g.sum(axis=1),))


def gather_column(a: Tensor, j: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("gather_column: operand must be 2-D")
    if not 0 <= j < a.shape[1]:
        raise ShapeError(f"gather_column: column {j} out of range for {a.shape}")
    rows, cols = a.shape

    def vjp(g):
        z = np.zeros((rows, cols))
        z[:, j] = g
        return (z,)

    return _emit(a.data[:, j].copy(), (a,), vjp)


def take_rows(a: Tensor, m: int) -> Tensor:
    """Keep the first m rows of a 2-D tensor."""
    if a.data.ndim != 2:
        raise ShapeError("take_rows: operand must be 2-D")
    if not 1 <= m <= a.shape[0]:
        raise ShapeError(f"take_rows: cannot keep {m} of {a.shape[0]} rows")
    rows, cols = a.shape

    def vjp(g):
        z = np.zeros((rows, cols))
        z[:m] = g
        return (z,)

    return _emit(a.data[:m].copy(), (a,), vjp)


def take_diag(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("take_diag: operand must be square")
    n = a.shape[0]

    def vjp(g):
        z = np.zeros((n, n))
        np.fill_diagonal(z, g)
        return (z,)

    return _emit(np.diagonal(a.data).copy(), (a,), vjp)


def index_first(t: Tensor, i: int) -> Tensor:
    """Slice a 3-D tensor along its first axis, yielding a 2-D tensor."""
    if t.data.ndim != 3:
        raise ShapeError("index_first: operand must be 3-D")
    if not 0 <= i < t.shape[0]:
        raise ShapeError(f"index_first: index {i} out of range for {t.shape}")
    shape = t.shape

    def vjp(g):
        z = np.zeros(shape)
        z[i] = g
        return (z,)

    return _emit(t.data[i].copy(), (t,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ContractError("log: operand must be strictly positive")
    ad = a.data
    return _emit(np.log(ad), (a,), lambda g: (g / ad,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through inside the closed interval."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _emit(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# reductions and softmax

def _expand_valid(valid, shape, axis):
    v = np.asarray(valid, dtype=np.float64).reshape(-1)
    if v.shape[0] != shape[axis]:
        raise ShapeError(f"valid mask length {v.shape[0]} does not match axis {axis} of {shape}")
    if len(shape) == 1:
        return v
    return v[None, :] if axis == 1 else v[:, None]


def softmax(a: Tensor, axis: int = -1, valid=None) -> Tensor:
    """Max-shifted softmax along ``axis``.

    ``valid`` is an optional 0/1 vector indexing positions along the softmax
    axis; invalid positions get weight exactly 0 and every slice must keep at
    least one valid entry.  The mask is data, not a differentiable input.
    """
    x = a.data
    if x.ndim > 2:
        raise ShapeError("softmax: operand must be 1-D or 2-D")
    if axis < 0:
        axis += x.ndim
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    if valid is None:
        vmask = np.ones_like(x)
    else:
        vmask = np.broadcast_to(_expand_valid(valid, x.shape, axis), x.shape).copy()
        if np.any(vmask.sum(axis=axis) < 1):
            raise ContractError("softmax: every slice needs at least one valid entry")
    shifted = np.where(vmask > 0, x, -np.inf)
    m = shifted.max(axis=axis, keepdims=True)
    e = np.exp(np.where(vmask > 0, x - m, -np.inf)) * vmask
    denom = e.sum(axis=axis, keepdims=True)
    out = e / denom

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _emit(out, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array([a.data.sum()]), (a,),
                 lambda g: (np.full(shape, g[0]),))


def sum_axis(a: Tensor, axis: int, valid=None) -> Tensor:
    """Sum a 2-D tensor along ``axis``; ``valid`` masks the reduced axis."""
    if a.data.ndim != 2:
        raise ShapeError("sum_axis: operand must be 2-D")
    if axis not in (0, 1):
        raise ShapeError(f"sum_axis: axis {axis} invalid")
    vmask = np.ones(a.shape) if valid is None else \
        np.broadcast_to(_expand_valid(valid, a.shape, axis), a.shape)
    out = (a.data * vmask).sum(axis=axis)

    def vjp(g):
        ge = g[None, :] if axis == 0 else g[:, None]
        return (np.broadcast_to(ge, vmask.shape) * vmask,)

    return _emit(out, (a,), vjp)


def mean_axis(a: Tensor, axis: int, valid=None) -> Tensor:
    """Mean of a 2-D tensor along ``axis`` over valid positions only."""
    if a.data.ndim != 2:
        raise ShapeError("mean_axis: operand must be 2-D")
    if axis not in (0, 1):
        raise ShapeError(f"mean_axis: axis {axis} invalid")
    vmask = np.ones(a.shape) if valid is None else \
        np.broadcast_to(_expand_valid(valid, a.shape, axis), a.shape)
    counts = vmask.sum(axis=axis)
    if np.any(counts < 1):
        raise ContractError("mean_axis: every slice needs at least one valid entry")
    out = (a.data * vmask).sum(axis=axis) / counts

    def vjp(g):
        gn = g / counts
        ge = gn[None, :] if axis == 0 else gn[:, None]
        return (np.broadcast_to(ge, vmask.shape) * vmask,)

    return _emit(out, (a,), vjp)


def gap(a: Tensor, valid=None) -> Tensor:
    """Global average pooling: mean over rows (optionally only valid rows)."""
    return mean_axis(a, axis=0, valid=valid)


# ---------------------------------------------------------------------------
# cosine similarity family

def _clamped_norms(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    raw = np.sqrt((x * x).sum(axis=-1))
    clamped = np.maximum(raw, EPS_NORM)
    return clamped, (raw > EPS_NORM).astype(np.float64)


def cosine_matrix(x: Tensor, y: Tensor) -> Tensor:
    """All-pairs cosine similarity between rows of x (m,d) and rows of y (n,d).

    Denominator norms are clamped at EPS_NORM so zero rows yield 0, not NaN;
    outputs are clipped to [-1, 1] (overshoot is rounding-level only).
    """
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"cosine_matrix: incompatible shapes {x.shape}, {y.shape}")
    xd, yd = x.data, y.data
    nx, live_x = _clamped_norms(xd)
    ny, live_y = _clamped_norms(yd)
    raw = (xd @ yd.T) / (nx[:, None] * ny[None, :])

    def vjp(g):
        gc = g * raw
        gx = (g / ny[None, :]) @ yd / nx[:, None] \
            - (gc.sum(axis=1) / nx ** 2 * live_x)[:, None] * xd
        gy = (g.T / nx[None, :]) @ xd / ny[:, None] \
            - (gc.sum(axis=0) / ny ** 2 * live_y)[:, None] * yd
        return (gx, gy)

    return _emit(np.clip(raw, -1.0, 1.0), (x, y), vjp)


def cosine_sim(x: Tensor, y: Tensor) -> Tensor:
    """Cosine similarity of each row of x (m,d) against a vector y (d,)."""
    if x.data.ndim != 2 or y.data.ndim != 1 or x.shape[1] != y.shape[0]:
        raise ShapeError(f"cosine_sim: incompatible shapes {x.shape}, {y.shape}")
    xd, yd = x.data, y.data
    nx, live_x = _clamped_norms(xd)
    ny, live_y = _clamped_norms(yd[None, :])
    ny, live_y = ny[0], live_y[0]
    raw = (xd @ yd) / (nx * ny)

    def vjp(g):
        gc = g * raw
        gx = (g / (nx * ny))[:, None] * yd - (gc / nx ** 2 * live_x)[:, None] * xd
        gy = (g / (nx * ny)) @ xd - gc.sum() / ny ** 2 * live_y * yd
        return (gx, gy)

    return _emit(np.clip(raw, -1.0, 1.0), (x, y), vjp)


def cosine_rows(x: Tensor, y: Tensor) -> Tensor:
    """Row-paired cosine similarity between two (m,d) tensors."""
    if x.data.ndim != 2 or x.shape != y.shape:
        raise ShapeError(f"cosine_rows: shapes {x.shape}, {y.shape} must match")
    xd, yd = x.data, y.data
    nx, live_x = _clamped_norms(xd)
    ny, live_y = _clamped_norms(yd)
    raw = (xd * yd).sum(axis=1) / (nx * ny)

    def vjp(g):
        gc = g * raw
        gx = (g / (nx * ny))[:, None] * yd - (gc / nx ** 2 * live_x)[:, None] * xd
        gy = (g / (nx * ny))[:, None] * xd - (gc / ny ** 2 * live_y)[:, None] * yd
        return (gx, gy)

    return _emit(np.clip(raw, -1.0, 1.0), (x, y), vjp)


# ---------------------------------------------------------------------------
# affine maps

def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Linear projection: x (m,d_in) @ weight (d_in,d_out) + bias (d_out,)."""
    return add(matmul(x, weight), broadcast_row(bias, x.shape[0]))


def pointwise_conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Kernel-size-1 convolution over the row axis: a per-row channel mix.

    x is (length, c_in), kernel (c_in, c_out), bias (c_out,); no temporal
    mixing happens, so this is exactly an affine map applied row by row.
    """
    return affine(x, kernel, bias)


# ---------------------------------------------------------------------------
# parameter initialization

def uniform_init(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(d_in)
    return rng.uniform(-bound, bound, size=(d_in, d_out))


def identity_init(d_in: int, d_out: int) -> np.ndarray:
    """Identity for square maps; stacked identity blocks when d_in = k*d_out."""
    if d_in == d_out:
        return np.eye(d_in)
    if d_in % d_out == 0:
        return np.vstack([np.eye(d_out)] * (d_in // d_out))
    raise ShapeError(f"identity_init: {d_in} not a multiple of {d_out}")
