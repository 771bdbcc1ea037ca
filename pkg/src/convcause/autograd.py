"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every numeric value in the model (activations, attention matrices, weight
matrices, embeddings) is carried by :class:`Tensor`. Operations record their
backward rule on the active :class:`Tape`; one :func:`backward` sweep
populates ``grad`` for every ``requires_grad`` tensor that participated.

Only the operations the model actually needs are provided. There is no
general broadcasting, no views into shared gradient state, and no dtype
other than float64.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class NonFiniteError(ArithmeticError):
    """A forward operation produced NaN or Inf from finite inputs."""


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    ``data`` is a row-major numpy array (scalars have shape ``()``),
    ``grad`` is ``None`` until a backward sweep fills it. Tensors are
    treated as immutable while a tape referencing them is alive; the
    optimizer mutates ``data`` in place only between steps.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor initialized with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        # internal fast path: data already validated by the op that made it
        t = object.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


_Record = tuple[Tensor, tuple[Tensor, ...], Callable[[np.ndarray], tuple]]

_tls = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations; execution order is topological order."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self._records)


def _emit(name: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"non-finite values produced by {name}")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires)
    tape = active_tape()
    if tape is not None and requires:
        tape._records.append((out, inputs, vjp))
    return out


def _as_2d(name: str, t: Tensor) -> None:
    if t.ndim != 2:
        raise ValueError(f"{name} expects a 2-D tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    _as_2d("matmul", a)
    _as_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", out, (a, b), vjp)


def matvec(a: Tensor, v: Tensor) -> Tensor:
    """Matrix-vector product: (m, n) @ (n,) -> (m,)."""
    _as_2d("matvec", a)
    if v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise ValueError(f"matvec: shapes disagree: {a.shape} @ {v.shape}")
    out = a.data @ v.data

    def vjp(g):
        return np.outer(g, v.data), a.data.T @ g

    return _emit("matvec", out, (a, v), vjp)


def transpose(x: Tensor) -> Tensor:
    _as_2d("transpose", x)

    def vjp(g):
        return (g.T,)

    return _emit("transpose", x.data.T, (x,), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"add: shapes disagree: {a.shape} vs {b.shape}")

    def vjp(g):
        return g, g

    return _emit("add", a.data + b.data, (a, b), vjp)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an (m, n) tensor."""
    _as_2d("add_bias", x)
    if b.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ValueError(f"add_bias: shapes disagree: {x.shape} + {b.shape}")

    def vjp(g):
        return g, g.sum(axis=0)

    return _emit("add_bias", x.data + b.data, (x, b), vjp)


def add_scalar(x: Tensor, s: Tensor) -> Tensor:
    """Add a scalar tensor to every element of x."""
    if s.shape != ():
        raise ValueError(f"add_scalar: scalar operand has shape {s.shape}")

    def vjp(g):
        return g, np.asarray(g.sum())

    return _emit("add_scalar", x.data + s.data, (x, s), vjp)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _emit("scale", x.data * c, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""

    def vjp(g):
        return (np.full(x.shape, float(g)),)

    return _emit("sum_all", np.asarray(x.data.sum()), (x,), vjp)


def sum_squares(x: Tensor) -> Tensor:
    """Sum of squared elements, as a scalar tensor."""

    def vjp(g):
        return (2.0 * float(g) * x.data,)

    return _emit("sum_squares", np.asarray((x.data ** 2).sum()), (x,), vjp)


def group_sum_squares(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of squared elements over a whole group of tensors (one scalar)."""
    if not tensors:
        raise ValueError("group_sum_squares: need at least one tensor")
    total = 0.0
    for t in tensors:
        total += float((t.data ** 2).sum())

    def vjp(g):
        return tuple(2.0 * float(g) * t.data for t in tensors)

    return _emit("group_sum_squares", np.asarray(total), tuple(tensors), vjp)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by max subtraction."""
    _as_2d("softmax_rows", x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - inner),)

    return _emit("softmax_rows", y, (x,), vjp)


def masked_softmax_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax restricted to ``mask``; fully masked rows become zero.

    ``mask`` is a constant boolean array of the same shape; masked-out
    positions get probability 0 and receive no gradient.
    """
    _as_2d("masked_softmax_rows", x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ValueError(
            f"masked_softmax_rows: mask shape {mask.shape} != input {x.shape}"
        )
    neg = np.where(mask, x.data, -np.inf)
    m = neg.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(neg - m)  # exp(-inf) = 0 on masked entries
    s = e.sum(axis=1, keepdims=True)
    y = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def vjp(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - inner),)

    return _emit("masked_softmax_rows", y, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    def vjp(g):
        return (g * (x.data > 0),)

    return _emit("relu", np.maximum(x.data, 0.0), (x,), vjp)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    slope = float(slope)
    factor = np.where(x.data >= 0, 1.0, slope)

    def vjp(g):
        return (g * factor,)

    return _emit("leaky_relu", x.data * factor, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function; output lies strictly in (0, 1)."""
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", out, (x,), vjp)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity in eval mode and at rate 0 (the input tensor is returned
    unchanged, so no randomness is consumed).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    factor = keep / (1.0 - rate)

    def vjp(g):
        return (g * factor,)

    return _emit("dropout", x.data * factor, (x,), vjp)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors with equal row counts along columns."""
    if not parts:
        raise ValueError("concat_cols: need at least one tensor")
    rows = parts[0].shape[0]
    for p in parts:
        _as_2d("concat_cols", p)
        if p.shape[0] != rows:
            raise ValueError(
                f"concat_cols: row counts disagree: {[p.shape for p in parts]}"
            )
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(widths)))

    return _emit("concat_cols", np.hstack([p.data for p in parts]), tuple(parts), vjp)


def take_rows(x: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds into the source."""
    _as_2d("take_rows", x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"take_rows: indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ValueError(
            f"take_rows: index out of range for {x.shape[0]} rows: "
            f"min={idx.min()}, max={idx.max()}"
        )

    def vjp(g):
        acc = np.zeros_like(x.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _emit("take_rows", x.data[idx], (x,), vjp)


def segment_mean(x: Tensor, segments, num_segments: int) -> Tensor:
    """Mean of the rows of x within each segment; every segment must be nonempty."""
    _as_2d("segment_mean", x)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (x.shape[0],):
        raise ValueError(
            f"segment_mean: got {seg.shape[0] if seg.ndim == 1 else seg.shape} "
            f"segment ids for {x.shape[0]} rows"
        )
    counts = np.bincount(seg, minlength=num_segments)
    if counts.size > num_segments or np.any(counts == 0):
        raise ValueError("segment_mean: every segment in range must be nonempty")
    sums = np.zeros((num_segments, x.shape[1]))
    np.add.at(sums, seg, x.data)
    out = sums / counts[:, None]

    def vjp(g):
        return (g[seg] / counts[seg, None],)

    return _emit("segment_mean", out, (x,), vjp)


def add_outer(u: Tensor, v: Tensor) -> Tensor:
    """Outer sum of two vectors: out[i, j] = u[i] + v[j]."""
    if u.ndim != 1 or v.ndim != 1:
        raise ValueError(f"add_outer: expects vectors, got {u.shape}, {v.shape}")

    def vjp(g):
        return g.sum(axis=1), g.sum(axis=0)

    return _emit("add_outer", u.data[:, None] + v.data[None, :], (u, v), vjp)


def slice_vec(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    if x.ndim != 1:
        raise ValueError(f"slice_vec: expects a vector, got shape {x.shape}")
    if not 0 <= start <= stop <= x.shape[0]:
        raise ValueError(f"slice_vec: range [{start}, {stop}) outside length {x.shape[0]}")

    def vjp(g):
        acc = np.zeros_like(x.data)
        acc[start:stop] = g
        return (acc,)

    return _emit("slice_vec", x.data[start:stop].copy(), (x,), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return _emit("reshape", out, (x,), vjp)


PROB_CLAMP = 1e-12


def binary_cross_entropy_mean(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 targets.

    Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before the
    logs; clamped positions get zero gradient.
    """
    if probs.ndim != 1:
        raise ValueError(f"binary_cross_entropy_mean: expects a vector, got {probs.shape}")
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != probs.shape:
        raise ValueError(
            f"binary_cross_entropy_mean: {probs.shape[0]} probabilities vs "
            f"{y.shape} targets"
        )
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    p = np.clip(probs.data, lo, hi)
    n = p.shape[0]
    val = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean()
    in_range = (probs.data > lo) & (probs.data < hi)

    def vjp(g):
        return (float(g) * in_range * (p - y) / (p * (1.0 - p) * n),)

    return _emit("binary_cross_entropy_mean", np.asarray(val), (probs,), vjp)


# ---------------------------------------------------------------------------
# backward sweep


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` for every requires_grad tensor recorded on the tape.

    Gradients are reset to zero first, so repeated sweeps over the same tape
    are bitwise identical. Tensors on the tape that the loss does not reach
    keep their zero gradient.
    """
    if loss.shape != ():
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    records = tape._records
    for out, inputs, _ in records:
        if out.requires_grad:
            out.grad = np.zeros_like(out.data)
        for t in inputs:
            if t.requires_grad:
                t.grad = np.zeros_like(t.data)
    if not loss.requires_grad:
        return
    if not any(out is loss for out, _, _ in records):
        raise ValueError("backward: loss was not produced on this tape")
    loss.grad = np.ones(())
    for out, inputs, vjp in reversed(records):
        g = out.grad
        if g is None or not g.any():
            continue
        for t, gi in zip(inputs, vjp(g)):
            if t.requires_grad:
                t.grad = t.grad + gi


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckResult:
    """Per-input comparison of analytic gradients against central differences."""

    passed: bool
    max_rel_error: float
    per_input: list[float]
    h: float
    tol: float


def _rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    diff = np.abs(a - n) / denom
    return float(diff.max()) if diff.size else 0.0


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckResult:
    """Compare analytic gradients of ``f`` with central finite differences.

    ``f`` must be pure and deterministic and return a scalar tensor; it is
    re-evaluated with each input element perturbed by +/-h in place. The
    relative error is |g_a - g_n| / max(1, |g_a|, |g_n|).
    """
    if h <= 0:
        raise ValueError(f"grad_check: h must be positive, got {h}")
    inputs = list(inputs)
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            raise ValueError(f"grad_check: input {i} does not require gradients")

    first = f(*inputs)
    second = f(*inputs)
    if not np.array_equal(first.data, second.data):
        raise ValueError("grad_check: f is not deterministic across evaluations")
    if first.shape != ():
        raise ValueError(f"grad_check: f must return a scalar, got shape {first.shape}")

    for t in inputs:
        t.grad = None  # stale gradients from earlier sweeps must not leak in
    with Tape() as tape:
        loss = f(*inputs)
    if loss.requires_grad:
        backward(loss, tape)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    per_input = []
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gn = np.zeros_like(flat)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + h
            fp = f(*inputs).item()
            flat[k] = saved - h
            fm = f(*inputs).item()
            flat[k] = saved
            gn[k] = (fp - fm) / (2.0 * h)
        per_input.append(_rel_error(ga.reshape(-1), gn))
    max_err = max(per_input) if per_input else 0.0
    return GradCheckResult(
        passed=max_err < tol, max_rel_error=max_err, per_input=per_input, h=h, tol=tol
    )


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Moment accumulators and step counter for the Adam update."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState
) -> None:
    """One Adam update with bias correction, applied to params in place."""
    if len(params) != len(grads):
        raise ValueError(
            f"adam_step: {len(params)} params but {len(grads)} gradients"
        )
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError(
            f"adam_step: state tracks {len(state.m)} params, got {len(params)}"
        )
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} != parameter shape {p.data.shape}"
            )
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.data = p.data - update


def sqrt_dim(d: int) -> float:
    """Attention scaling constant for dimension d."""
    return math.sqrt(float(d))
