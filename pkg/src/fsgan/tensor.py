"""Dense float64 tensors with a reverse-mode differentiation tape.

The computation graph doubles as the tape: every operation whose inputs
include a tensor with ``requires_grad`` records its parents and a backward
closure on the output tensor.  ``Tensor.backward()`` walks the graph in
reverse topological order and accumulates gradients into ``.grad`` fields.

All math is double precision.  Tensors produced under ``no_grad()`` carry no
tape and are plain immutable values.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform; the message names the op and shapes."""

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class TapeError(RuntimeError):
    """Backward was requested on a tensor that is not attached to a tape."""


class SecondOrderUnsupportedError(RuntimeError):
    """A layer kind has no registered rule for building input gradients."""


def _mismatch(op: str, *shapes) -> ShapeError:
    rendered = " vs ".join(str(tuple(s)) for s in shapes)
    return ShapeError(op, f"incompatible shapes {rendered}")


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    # ---- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self._op!r}{flag})"

    # ---- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, _ensure_tensor(other))

    def __radd__(self, other):
        return add(_ensure_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _ensure_tensor(other))

    def __rsub__(self, other):
        return sub(_ensure_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _ensure_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise TypeError("tensor/tensor division is not a registered op")

    def __matmul__(self, other):
        return matmul(self, _ensure_tensor(other))

    def __getitem__(self, key):
        return slice_(self, key)

    # ---- reductions / reshapes as methods --------------------------------
    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # ---- backward --------------------------------------------------------
    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss, filling ``.grad`` fields."""
        if self.data.size != 1:
            raise ShapeError("backward", f"loss must be scalar, got shape {self.data.shape}")
        if self._backward_fn is None and not self._parents:
            raise TapeError("backward: tensor has no tape (detached or never recorded)")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def _ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward
        out._op = op
    else:
        out._op = op
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def gradients(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Backward from ``loss`` and collect per-parameter gradients.

    Parameters that the loss never touched get an explicit zero gradient.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# ---------------------------------------------------------------------------
# elementwise and broadcast arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise _mismatch("add", a.shape, b.shape) from None

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise _mismatch("sub", a.shape, b.shape) from None

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise _mismatch("mul", a.shape, b.shape) from None

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        _accumulate(a, g * s)

    return _node(a.data * s, (a,), backward, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError("matmul", f"only 1-D/2-D operands supported, got {a.shape} @ {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise _mismatch("matmul", a.shape, b.shape)
    data = a.data @ b.data

    def backward(g):
        if a.ndim == 2 and b.ndim == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        elif a.ndim == 2 and b.ndim == 1:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        elif a.ndim == 1 and b.ndim == 2:
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        else:  # both 1-D, scalar output
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

    return _node(data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("transpose", f"expected 2-D tensor, got shape {a.shape}")

    def backward(g):
        _accumulate(a, g.T)

    return _node(a.data.T, (a,), backward, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} into {tuple(shape)}") from None

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(data, (a,), backward, "reshape")


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_ensure_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise _mismatch("concatenate", *[t.shape for t in tensors]) from None
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _node(data, tuple(tensors), backward, "concatenate")


def slice_(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            _accumulate(a, full)

    return _node(data, (a,), backward, "slice")


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows of a 2-D tensor by integer index, with repeats allowed."""
    idx = np.asarray(indices, dtype=np.intp)
    if a.ndim != 2:
        raise ShapeError("gather_rows", f"expected 2-D tensor, got shape {a.shape}")
    data = a.data[idx]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accumulate(a, full)

    return _node(data, (a,), backward, "gather_rows")


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def leaky_relu(a: Tensor, slope: float) -> Tensor:
    # Derivative convention at 0: the negative-slope branch.
    positive = a.data > 0
    data = np.where(positive, a.data, slope * a.data)

    def backward(g):
        _accumulate(a, g * np.where(positive, 1.0, slope))

    return _node(data, (a,), backward, "leaky_relu")


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    data = a.data * positive

    def backward(g):
        _accumulate(a, g * positive)

    return _node(data, (a,), backward, "relu")


def square(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g * 2.0 * a.data)

    return _node(a.data * a.data, (a,), backward, "square")


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / np.maximum(data, 1e-150))

    return _node(data, (a,), backward, "sqrt")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * data)

    return _node(data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return _node(data, (a,), backward, "log")


def softplus(a: Tensor) -> Tensor:
    data = np.logaddexp(0.0, a.data)

    def backward(g):
        # sigmoid(x), evaluated without overflowing exp for large |x|
        x = a.data
        e = np.exp(-np.abs(x))
        sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        _accumulate(a, g * sig)

    return _node(data, (a,), backward, "softplus")


# ---------------------------------------------------------------------------
# reductions and norms
# ---------------------------------------------------------------------------

def _restore_axes(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))

    def backward(g):
        _accumulate(a, _restore_axes(g, a.data.shape, axis, keepdims) / count)

    return _node(data, (a,), backward, "reduce_mean")


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        _accumulate(a, _restore_axes(g, a.data.shape, axis, keepdims).copy())

    return _node(data, (a,), backward, "reduce_sum")


def euclidean_norm(a: Tensor, axis: int | None = 1) -> Tensor:
    """L2 norm along ``axis`` (or of the flattened tensor when ``axis=None``)."""
    data = np.sqrt((a.data * a.data).sum(axis=axis))

    def backward(g):
        safe = np.maximum(data, 1e-300)
        if axis is None:
            _accumulate(a, g * a.data / safe)
        else:
            _accumulate(a, np.expand_dims(g / safe, axis) * a.data)

    return _node(data, (a,), backward, "euclidean_norm")


def l2_normalize(a: Tensor, axis: int = 1, eps: float = 1e-24) -> Tensor:
    sq = (a.data * a.data).sum(axis=axis, keepdims=True)
    n = np.sqrt(sq + eps)
    data = a.data / n

    def backward(g):
        dot = (g * a.data).sum(axis=axis, keepdims=True)
        _accumulate(a, g / n - a.data * dot / (n ** 3))

    return _node(data, (a,), backward, "l2_normalize")


# ---------------------------------------------------------------------------
# structured network ops
# ---------------------------------------------------------------------------

def dropout(a: Tensor, rate: float, mask: np.ndarray) -> Tensor:
    """Inverted dropout with an explicitly supplied binary mask."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.data.shape:
        raise _mismatch("dropout", a.shape, mask.shape)
    keep = mask / (1.0 - rate)
    data = a.data * keep

    def backward(g):
        _accumulate(a, g * keep)

    return _node(data, (a,), backward, "dropout")


def batch_norm(
    a: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    train: bool,
    momentum: float = 0.99,
    eps: float = 1e-5,
    update_stats: bool | None = None,
) -> Tensor:
    """Batch normalization over all axes but the last.

    ``running_mean``/``running_var`` are plain arrays mutated in place when
    ``update_stats`` (defaults to ``train``).  Inference uses the running
    statistics.
    """
    feat = a.data.shape[-1]
    if gamma.data.shape != (feat,) or beta.data.shape != (feat,):
        raise _mismatch("batch_norm", a.shape, gamma.shape, beta.shape)
    axes = tuple(range(a.data.ndim - 1))
    if update_stats is None:
        update_stats = train

    if train:
        m = a.data.mean(axis=axes)
        v = a.data.var(axis=axes)
        if update_stats:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * m
            running_var *= momentum
            running_var += (1.0 - momentum) * v
        inv = 1.0 / np.sqrt(v + eps)
        xhat = (a.data - m) * inv
        data = gamma.data * xhat + beta.data
        n = int(np.prod([a.data.shape[ax] for ax in axes])) if axes else 1

        def backward(g):
            _accumulate(gamma, (g * xhat).sum(axis=axes))
            _accumulate(beta, g.sum(axis=axes))
            if a.requires_grad:
                dxhat = g * gamma.data
                term = dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).mean(axis=axes)
                _accumulate(a, inv * term)

        return _node(data, (a, gamma, beta), backward, "batch_norm")

    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (a.data - running_mean) * inv
    data = gamma.data * xhat + beta.data

    def backward(g):
        _accumulate(gamma, (g * xhat).sum(axis=axes))
        _accumulate(beta, g.sum(axis=axes))
        if a.requires_grad:
            _accumulate(a, g * gamma.data * inv)

    return _node(data, (a, gamma, beta), backward, "batch_norm")


def _conv_geometry(length: int, kernel: int, stride: int, padding) -> tuple[int, int, int]:
    """Return (pad_left, pad_right, out_length)."""
    if isinstance(padding, str):
        if padding == "valid":
            pad_l = pad_r = 0
        elif padding == "same":
            out = -(-length // stride)  # ceil
            total = max((out - 1) * stride + kernel - length, 0)
            pad_l = total // 2
            pad_r = total - pad_l
        else:
            raise ValueError(f"conv1d: unknown padding {padding!r}")
    else:
        pad_l = pad_r = int(padding)
    padded = length + pad_l + pad_r
    if padded < kernel:
        raise ShapeError("conv1d", f"input length {length} with padding {padding!r} shorter than kernel {kernel}")
    out = (padded - kernel) // stride + 1
    return pad_l, pad_r, out


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding="valid") -> Tensor:
    """1-D convolution; ``x`` is (batch, length, in_ch), ``w`` is (kernel, in_ch, out_ch)."""
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("conv1d", f"expected (B,L,Cin) and (K,Cin,Cout), got {x.shape} and {w.shape}")
    batch, length, cin = x.data.shape
    kernel, w_cin, cout = w.data.shape
    if cin != w_cin:
        raise _mismatch("conv1d", x.shape, w.shape)
    if b is not None and b.data.shape != (cout,):
        raise _mismatch("conv1d", (cout,), b.shape)
    if stride < 1:
        raise ValueError(f"conv1d: stride must be >= 1, got {stride}")

    pad_l, pad_r, out_len = _conv_geometry(length, kernel, stride, padding)
    xp = np.pad(x.data, ((0, 0), (pad_l, pad_r), (0, 0))) if (pad_l or pad_r) else x.data
    span = (out_len - 1) * stride + 1
    # (B, out_len, K, Cin) patch tensor; kernel sizes stay small so the copy is cheap
    cols = np.stack([xp[:, k : k + span : stride, :] for k in range(kernel)], axis=2)
    wmat = w.data.reshape(kernel * cin, cout)
    out = cols.reshape(batch * out_len, kernel * cin) @ wmat
    out = out.reshape(batch, out_len, cout)
    if b is not None:
        out = out + b.data

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gmat = g.reshape(batch * out_len, cout)
        if w.requires_grad:
            gw = cols.reshape(batch * out_len, kernel * cin).T @ gmat
            _accumulate(w, gw.reshape(kernel, cin, cout))
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 1)))
        if x.requires_grad:
            gcols = (gmat @ wmat.T).reshape(batch, out_len, kernel, cin)
            gxp = np.zeros((batch, length + pad_l + pad_r, cin))
            for k in range(kernel):
                gxp[:, k : k + span : stride, :] += gcols[:, :, k, :]
            _accumulate(x, gxp[:, pad_l : pad_l + length, :])

    return _node(out, parents, backward, "conv1d")


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy between (B, C) logits and integer labels."""
    y = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or y.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy_logits", f"logits {logits.shape} vs labels {y.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    batch = y.shape[0]
    data = -logp[np.arange(batch), y].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(batch), y] -= 1.0
        _accumulate(logits, g * p / batch)

    return _node(data, (logits,), backward, "cross_entropy_logits")


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of (B, C) logits."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=1, keepdims=True)
        _accumulate(logits, data * (g - dot))

    return _node(data, (logits,), backward, "softmax")


#: Every differentiable op exposed by the engine; gradient-check suites
#: iterate this list so a newly registered op cannot dodge coverage.
REGISTERED_OPS = (
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "concatenate",
    "slice",
    "gather_rows",
    "leaky_relu",
    "relu",
    "square",
    "sqrt",
    "exp",
    "log",
    "softplus",
    "reduce_mean",
    "reduce_sum",
    "euclidean_norm",
    "l2_normalize",
    "dropout",
    "batch_norm",
    "conv1d",
    "cross_entropy_logits",
    "softmax",
)
