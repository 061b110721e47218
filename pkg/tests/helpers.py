"""Independent oracles and shared fixtures for the test suite.

Everything here recomputes expected values from first principles (explicit
loops, textbook recurrences) so the library code under test never checks
itself.
"""

from __future__ import annotations

import numpy as np

from fsgan import tensor as T
from fsgan.tensor import Tensor

FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_difference(fn, arrays, h=FD_STEP):
    """Central-difference gradients of a scalar fn of numpy arrays."""
    grads = []
    for k, base in enumerate(arrays):
        grad = np.zeros_like(base, dtype=np.float64)
        flat = grad.reshape(-1)
        for i in range(base.size):
            bumped = [a.copy() for a in arrays]
            bumped[k].reshape(-1)[i] += h
            hi = fn(*bumped)
            bumped[k].reshape(-1)[i] -= 2 * h
            lo = fn(*bumped)
            flat[i] = (hi - lo) / (2 * h)
        grads.append(grad)
    return grads


def relative_error(analytic, numeric):
    """Max elementwise |a - n| / max(1, |a|, |n|) over paired arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(make_loss, arrays, h=FD_STEP):
    """Backward pass vs central differences; returns the max relative error.

    make_loss must rebuild the graph from plain arrays on every call and be
    deterministic (fixed masks, fixed interpolation points).
    """
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = make_loss(*leaves)
    analytic = T.gradients(loss, leaves)

    def value(*arrs):
        with T.no_grad():
            return float(make_loss(*(Tensor(a) for a in arrs)).data)

    numeric = central_difference(value, [a.copy() for a in arrays], h=h)
    return relative_error(analytic, numeric)


# ---------------------------------------------------------------------------
# random op compositions
# ---------------------------------------------------------------------------

_KINK_MARGIN = 1e-3
_VALUE_CAP = 1e4


class _Rejected(Exception):
    pass


def _build_plan(rng, force_op):
    """One composition: leaf shapes plus a list of (op, params) steps."""
    rows = int(rng.integers(2, 7))
    cols = int(rng.integers(2, 9))
    ops = ["add", "sub", "mul", "scale", "matmul", "transpose", "reshape",
           "concatenate", "slice", "gather_rows", "leaky_relu", "relu",
           "square", "sqrt", "exp", "log", "softplus", "euclidean_norm",
           "l2_normalize", "dropout", "batch_norm", "conv1d", "softmax",
           "reduce_mean", "reduce_sum"]
    depth = int(rng.integers(1, 4))
    chosen = [force_op] if force_op else []
    while len(chosen) < depth:
        chosen.append(ops[int(rng.integers(len(ops)))])
    scalarizer = ["mean_square", "weighted_sum", "cross_entropy"][int(rng.integers(3))]
    return rows, cols, chosen, scalarizer


def random_composition(seed, force_op=None):
    """Random scalar graph over the registered ops, depth <= 3, dims <= 16.

    Returns (fn, arrays, op_names). fn(*tensors) rebuilds the same graph;
    compositions whose values sit within 1e-3 of an activation kink (or blow
    past 1e4) are rejected and resampled so central differences stay on a
    single smooth piece.
    """
    for attempt in range(64):
        rng = np.random.default_rng([seed, attempt, 91])
        rows, cols, chosen, scalarizer = _build_plan(rng, force_op)
        screening = {"on": True}

        def _margin(values):
            if screening["on"] and values.size and float(np.min(np.abs(values))) < _KINK_MARGIN:
                raise _Rejected

        def _cap(x):
            if screening["on"] and (not np.all(np.isfinite(x.data)) or np.max(np.abs(x.data)) > _VALUE_CAP):
                raise _Rejected
            return x

        arrays = [rng.uniform(0.5, 1.5, size=(rows, cols)) * rng.choice([-1.0, 1.0], size=(rows, cols))]
        steps = []
        used = []
        shape = (rows, cols)

        def leaf(shp, low=0.5, high=1.5, signed=True):
            a = rng.uniform(low, high, size=shp)
            if signed:
                a = a * rng.choice([-1.0, 1.0], size=shp)
            arrays.append(a)
            return len(arrays) - 1

        try:
            for op in chosen:
                steps_before = len(steps)
                if op in ("add", "sub", "mul"):
                    wide = rng.random() < 0.5 and len(shape) == 2
                    j = leaf(shape[-1:] if wide else shape)
                    steps.append((op, j))
                elif op == "scale":
                    steps.append(("scale", float(rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0]))))
                elif op == "matmul" and len(shape) == 2:
                    c2 = int(rng.integers(2, 9))
                    j = leaf((shape[1], c2))
                    steps.append(("matmul", j))
                    shape = (shape[0], c2)
                elif op == "transpose" and len(shape) == 2:
                    steps.append(("transpose",))
                    shape = shape[::-1]
                elif op == "reshape":
                    steps.append(("reshape", (-1,)))
                    shape = (int(np.prod(shape)),)
                elif op == "concatenate":
                    j = leaf(shape)
                    steps.append(("concatenate", j))
                    shape = (2 * shape[0],) + shape[1:]
                elif op == "slice" and shape[0] >= 2:
                    k = int(rng.integers(1, shape[0]))
                    steps.append(("slice", k))
                    shape = (k,) + shape[1:]
                elif op == "gather_rows" and shape[0] >= 2:
                    idx = rng.integers(0, shape[0], size=shape[0] + 2)
                    steps.append(("gather_rows", idx))
                    shape = (len(idx),) + shape[1:]
                elif op in ("leaky_relu", "relu"):
                    steps.append((op, 0.2))
                elif op == "square":
                    steps.append(("square",))
                elif op == "sqrt":
                    steps.append(("sqrt",))
                elif op == "exp":
                    steps.append(("exp",))
                elif op == "log":
                    steps.append(("log",))
                elif op == "softplus":
                    steps.append(("softplus",))
                elif op == "euclidean_norm" and len(shape) == 2:
                    steps.append(("euclidean_norm",))
                    shape = (shape[0],)
                elif op == "l2_normalize" and len(shape) == 2:
                    steps.append(("l2_normalize",))
                elif op == "dropout":
                    mask = (rng.random(shape) >= 0.3).astype(np.float64)
                    steps.append(("dropout", 0.3, mask))
                elif op == "batch_norm" and len(shape) == 2 and shape[0] >= 2:
                    g = leaf((shape[1],), signed=False)
                    b = leaf((shape[1],))
                    steps.append(("batch_norm", g, b))
                elif op == "conv1d" and len(shape) == 2 and shape[1] >= 3:
                    w = leaf((3, 1, 2))
                    b = leaf((2,))
                    steps.append(("conv1d", w, b))
                    shape = (shape[0], 2 * shape[1])
                elif op == "softmax" and len(shape) == 2:
                    steps.append(("softmax",))
                else:
                    continue
                if len(steps) > steps_before:
                    used.append(op)

            if scalarizer == "cross_entropy" and len(shape) == 2 and shape[1] >= 2:
                labels = rng.integers(0, shape[1], size=shape[0])
                steps.append(("cross_entropy", labels))
                used.append("cross_entropy_logits")
            elif scalarizer == "weighted_sum":
                j = leaf(shape)
                steps.append(("finish_weighted", j))
                used.extend(["mul", "reduce_sum"])
            else:
                steps.append(("finish_mean_square",))
                used.extend(["square", "reduce_mean"])

            def fn(*tensors, _steps=tuple(steps)):
                x = tensors[0]
                for step in _steps:
                    kind = step[0]
                    if kind == "add":
                        x = _cap(x + tensors[step[1]])
                    elif kind == "sub":
                        x = _cap(x - tensors[step[1]])
                    elif kind == "mul":
                        x = _cap(x * tensors[step[1]])
                    elif kind == "scale":
                        x = _cap(T.scale(x, step[1]))
                    elif kind == "matmul":
                        x = _cap(x @ tensors[step[1]])
                    elif kind == "transpose":
                        x = T.transpose(x)
                    elif kind == "reshape":
                        x = T.reshape(x, step[1])
                    elif kind == "concatenate":
                        x = T.concatenate([x, tensors[step[1]]], axis=0)
                    elif kind == "slice":
                        x = T.slice_(x, slice(0, step[1]))
                    elif kind == "gather_rows":
                        x = T.gather_rows(x, step[1])
                    elif kind in ("leaky_relu", "relu"):
                        _margin(x.data)
                        x = T.leaky_relu(x, step[1]) if kind == "leaky_relu" else T.relu(x)
                    elif kind == "square":
                        x = _cap(T.square(x))
                    elif kind == "sqrt":
                        x = T.sqrt(T.square(x) + Tensor(np.ones_like(x.data)))
                    elif kind == "exp":
                        x = _cap(T.exp(T.scale(x, 0.25)))
                    elif kind == "log":
                        x = T.log(T.square(x) + Tensor(np.ones_like(x.data)))
                    elif kind == "softplus":
                        x = T.softplus(x)
                    elif kind == "euclidean_norm":
                        _margin(np.linalg.norm(x.data, axis=1))
                        x = T.euclidean_norm(x, axis=1)
                    elif kind == "l2_normalize":
                        _margin(np.linalg.norm(x.data, axis=1))
                        x = T.l2_normalize(x, axis=1)
                    elif kind == "dropout":
                        x = T.dropout(x, step[1], step[2])
                    elif kind == "batch_norm":
                        _margin(np.std(x.data, axis=0))
                        x = T.batch_norm(
                            x, tensors[step[1]], tensors[step[2]],
                            np.zeros(x.data.shape[1]), np.ones(x.data.shape[1]),
                            train=True, update_stats=False)
                    elif kind == "conv1d":
                        r, c = x.data.shape
                        x = T.reshape(x, (r, c, 1))
                        x = T.conv1d(x, tensors[step[1]], tensors[step[2]], stride=1, padding="same")
                        x = T.reshape(x, (r, 2 * c))
                    elif kind == "softmax":
                        x = T.softmax(x)
                    elif kind == "cross_entropy":
                        x = T.cross_entropy_logits(x, step[1])
                    elif kind == "finish_weighted":
                        x = T.reduce_sum(x * tensors[step[1]])
                    elif kind == "finish_mean_square":
                        x = T.reduce_mean(T.square(x))
                return _cap(x)

            with T.no_grad():
                fn(*(Tensor(a) for a in arrays))
            screening["on"] = False
            return fn, arrays, used
        except _Rejected:
            continue
    raise RuntimeError(f"could not build a stable composition for seed {seed}")


# ---------------------------------------------------------------------------
# signal-processing oracles
# ---------------------------------------------------------------------------

def naive_dft_magnitude(window):
    """O(n^2) DFT magnitudes for bins 1..n/2, from the trigonometric sums."""
    w = np.asarray(window, dtype=np.float64)
    n = w.size
    ks = np.arange(1, n // 2 + 1)
    angles = 2.0 * np.pi * np.outer(ks, np.arange(n)) / n
    real = (np.cos(angles) * w).sum(axis=1)
    imag = -(np.sin(angles) * w).sum(axis=1)
    return np.sqrt(real * real + imag * imag)


def naive_conv1d(x, w, b=None, stride=1, padding="valid"):
    """Sliding-window convolution with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    batch, length, cin = x.shape
    kernel, _, cout = w.shape
    if padding == "valid":
        pad_lo = pad_hi = 0
    elif padding == "same":
        out_len = -(-length // stride)
        total = max((out_len - 1) * stride + kernel - length, 0)
        pad_lo, pad_hi = total // 2, total - total // 2
    else:
        pad_lo = pad_hi = int(padding)
    xp = np.pad(x, ((0, 0), (pad_lo, pad_hi), (0, 0)))
    out_len = (xp.shape[1] - kernel) // stride + 1
    out = np.zeros((batch, out_len, cout))
    for n in range(batch):
        for t in range(out_len):
            for f in range(cout):
                acc = 0.0
                for k in range(kernel):
                    for c in range(cin):
                        acc += xp[n, t * stride + k, c] * w[k, c, f]
                out[n, t, f] = acc + (b[f] if b is not None else 0.0)
    return out


# ---------------------------------------------------------------------------
# triplet-mining oracle
# ---------------------------------------------------------------------------

def exhaustive_semi_hard(embeddings, labels, alpha):
    """Enumerate every (a, p) pair and pick the negative by the stated rule.

    Band (d2ap, d2ap + alpha) exclusive -> nearest negative in the band;
    otherwise the nearest negative with d2an < d2ap + alpha; otherwise skip.
    Ties go to the lowest pool index. Returns (triplets, mean hinge loss).
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    triplets = []
    if np.unique(labels).size >= 2:
        for a in range(n):
            for p in range(n):
                if p == a or labels[p] != labels[a]:
                    continue
                d2ap = float(((emb[a] - emb[p]) ** 2).sum())
                band_best, loose_best = None, None
                for neg in range(n):
                    if labels[neg] == labels[a]:
                        continue
                    d2an = float(((emb[a] - emb[neg]) ** 2).sum())
                    if d2ap < d2an < d2ap + alpha:
                        if band_best is None or d2an < band_best[0]:
                            band_best = (d2an, neg)
                    if d2an < d2ap + alpha:
                        if loose_best is None or d2an < loose_best[0]:
                            loose_best = (d2an, neg)
                pick = band_best or loose_best
                if pick is not None:
                    triplets.append((a, p, pick[1]))
    if not triplets:
        return [], 0.0
    total = 0.0
    for a, p, neg in triplets:
        d2ap = float(((emb[a] - emb[p]) ** 2).sum())
        d2an = float(((emb[a] - emb[neg]) ** 2).sum())
        total += max(d2ap - d2an + alpha, 0.0)
    return triplets, total / len(triplets)


# ---------------------------------------------------------------------------
# optimizer oracle
# ---------------------------------------------------------------------------

def adam_reference(x0, grads, lr, beta1, beta2, eps):
    """Textbook Adam recurrence replayed step by step."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history = []
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
        history.append(x.copy())
    return history
