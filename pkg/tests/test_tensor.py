"""Autodiff engine tests: every op against central finite differences plus
the graph/tape error contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from fsgan import tensor as T
from fsgan.tensor import ShapeError, TapeError, Tensor

RNG = np.random.default_rng(2024)
TOL = 1e-6


def check(make_loss, arrays, tol=TOL):
    err = helpers.check_gradients(make_loss, arrays)
    assert err < tol, f"gradient mismatch: rel err {err:.3e}"


# ---------------------------------------------------------------------------
# elementwise and broadcasting ops
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("shapes", [((4, 3), (4, 3)), ((4, 3), (3,)), ((4, 3), (1, 3)), ((2, 1), (1, 5))])
@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_binary_broadcast_gradients(op, shapes):
    a = RNG.normal(size=shapes[0]) + 2.0
    b = RNG.normal(size=shapes[1]) + 2.0
    fn = {"add": lambda x, y: x + y, "sub": lambda x, y: x - y, "mul": lambda x, y: x * y}[op]
    check(lambda x, y: T.reduce_mean(T.square(fn(x, y))), [a, b])


def test_scale_and_negate():
    a = RNG.normal(size=(3, 4))
    check(lambda x: T.reduce_sum(T.scale(x, -2.5)), [a])
    out = -Tensor(a)
    assert np.array_equal(out.data, -a)


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 2)), ((4,), (4, 2)), ((3, 4), (4,)), ((4,), (4,))])
def test_matmul_gradients(sa, sb):
    a = RNG.normal(size=sa)
    b = RNG.normal(size=sb)
    check(lambda x, y: T.reduce_sum(T.square(x @ y)), [a, b])


def test_matmul_shape_error():
    with pytest.raises(ShapeError) as exc:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))
    assert exc.value.op == "matmul"
    assert "(2, 3)" in str(exc.value)


@pytest.mark.parametrize("op,fn,offset", [
    ("square", T.square, 0.0),
    ("sqrt", T.sqrt, 3.0),
    ("exp", T.exp, 0.0),
    ("log", T.log, 3.0),
    ("softplus", T.softplus, 0.0),
])
def test_unary_gradients(op, fn, offset):
    a = RNG.normal(size=(4, 5)) + offset
    check(lambda x: T.reduce_mean(fn(x)), [a])


def test_softplus_extreme_inputs_stable():
    x = Tensor(np.array([-800.0, -30.0, 0.0, 30.0, 800.0]), requires_grad=True)
    y = T.reduce_sum(T.softplus(x))
    y.backward()
    assert np.all(np.isfinite(x.grad))
    assert np.allclose(T.softplus(Tensor(np.array([800.0]))).data, 800.0)
    assert T.softplus(Tensor(np.array([-800.0]))).data[0] == 0.0


@pytest.mark.parametrize("slope", [0.0, 0.1, 0.001])
def test_leaky_relu_gradients(slope):
    a = RNG.normal(size=(5, 4))
    a[np.abs(a) < 0.2] = 0.5
    check(lambda x: T.reduce_mean(T.square(T.leaky_relu(x, slope))), [a])


def test_relu_matches_leaky_zero_slope():
    a = RNG.normal(size=(6, 3))
    assert np.array_equal(T.relu(Tensor(a)).data, T.leaky_relu(Tensor(a), 0.0).data)


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def test_transpose_reshape_roundtrip_gradients():
    a = RNG.normal(size=(3, 5))
    check(lambda x: T.reduce_sum(T.square(T.reshape(T.transpose(x), (5, 3)))), [a])


def test_concatenate_gradients_and_axis1():
    a = RNG.normal(size=(2, 3))
    b = RNG.normal(size=(4, 3))
    check(lambda x, y: T.reduce_sum(T.square(T.concatenate([x, y], axis=0))), [a, b])
    c = RNG.normal(size=(2, 5))
    check(lambda x, y: T.reduce_sum(T.square(T.concatenate([x, y], axis=1))), [a, c])


def test_slice_gradients():
    a = RNG.normal(size=(6, 4))
    check(lambda x: T.reduce_sum(T.square(T.slice_(x, (slice(1, 5), slice(0, 2))))), [a])


def test_gather_rows_accumulates_repeats():
    a = RNG.normal(size=(4, 3))
    idx = [0, 2, 0, 0, 3]
    check(lambda x: T.reduce_sum(T.square(T.gather_rows(x, idx))), [a])
    t = Tensor(a, requires_grad=True)
    loss = T.reduce_sum(T.gather_rows(t, idx))
    loss.backward()
    counts = np.bincount(idx, minlength=4).astype(float)[:, None]
    assert np.array_equal(t.grad, np.broadcast_to(counts, a.shape))


@pytest.mark.parametrize("axis,keepdims", [(None, False), (0, False), (1, True), ((0, 1), False)])
@pytest.mark.parametrize("red", [T.reduce_mean, T.reduce_sum])
def test_reductions(red, axis, keepdims):
    a = RNG.normal(size=(4, 5))
    ref = (np.mean if red is T.reduce_mean else np.sum)(a, axis=axis, keepdims=keepdims)
    out = red(Tensor(a), axis=axis, keepdims=keepdims)
    assert out.data.shape == np.shape(ref)
    assert np.allclose(out.data, ref)
    check(lambda x: T.reduce_sum(T.square(red(x, axis=axis, keepdims=keepdims))), [a])


# ---------------------------------------------------------------------------
# norms, dropout, batch norm
# ---------------------------------------------------------------------------

def test_euclidean_norm_gradients():
    a = RNG.normal(size=(5, 4)) + 1.0
    check(lambda x: T.reduce_mean(T.euclidean_norm(x, axis=1)), [a])


def test_l2_normalize_rows_unit_and_gradients():
    a = RNG.normal(size=(5, 4)) + 0.5
    out = T.l2_normalize(Tensor(a), axis=1)
    assert np.allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-12)
    w = RNG.normal(size=(4, 2))
    check(lambda x: T.reduce_sum(T.square(T.l2_normalize(x, axis=1) @ Tensor(w))), [a])


def test_dropout_mask_semantics():
    a = RNG.normal(size=(4, 6))
    mask = (RNG.random((4, 6)) >= 0.5).astype(float)
    out = T.dropout(Tensor(a), 0.5, mask)
    assert np.allclose(out.data, a * mask / 0.5)
    check(lambda x: T.reduce_sum(T.square(T.dropout(x, 0.5, mask))), [a])
    with pytest.raises(ValueError):
        T.dropout(Tensor(a), 1.0, mask)


def test_batch_norm_train_statistics_and_gradients():
    a = RNG.normal(size=(8, 3)) * 2.0 + 1.0
    gamma = np.array([1.0, 2.0, 0.5])
    beta = np.array([0.1, -0.2, 0.0])
    rm, rv = np.zeros(3), np.ones(3)
    out = T.batch_norm(Tensor(a), Tensor(gamma), Tensor(beta), rm, rv, train=True, update_stats=False)
    expect = gamma * (a - a.mean(0)) / np.sqrt(a.var(0) + 1e-5) + beta
    assert np.allclose(out.data, expect, atol=1e-12)
    assert np.all(rm == 0) and np.all(rv == 1)
    check(lambda x, g, b: T.reduce_sum(T.square(
        T.batch_norm(x, g, b, np.zeros(3), np.ones(3), train=True, update_stats=False))),
        [a, gamma, beta])


def test_batch_norm_running_stats_update_and_infer():
    a = RNG.normal(size=(16, 3)) + 5.0
    rm, rv = np.zeros(3), np.ones(3)
    T.batch_norm(Tensor(a), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, train=True, momentum=0.9)
    assert np.allclose(rm, 0.1 * a.mean(0))
    assert np.allclose(rv, 0.9 + 0.1 * a.var(0))
    out = T.batch_norm(Tensor(a), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm.copy(), rv.copy(), train=False)
    assert np.allclose(out.data, (a - rm) / np.sqrt(rv + 1e-5))


# ---------------------------------------------------------------------------
# convolution against the loop oracle
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("stride,padding", [(1, "valid"), (1, "same"), (2, "same"), (2, "valid"), (1, 2)])
def test_conv1d_forward_matches_naive(stride, padding):
    x = RNG.normal(size=(2, 11, 3))
    w = RNG.normal(size=(4, 3, 2))
    b = RNG.normal(size=(2,))
    out = T.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
    ref = helpers.naive_conv1d(x, w, b, stride=stride, padding=padding)
    assert out.data.shape == ref.shape
    assert np.allclose(out.data, ref, atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "valid")])
def test_conv1d_gradients(stride, padding):
    x = RNG.normal(size=(2, 9, 2))
    w = RNG.normal(size=(3, 2, 2))
    b = RNG.normal(size=(2,))
    check(lambda xx, ww, bb: T.reduce_mean(T.square(
        T.conv1d(xx, ww, bb, stride=stride, padding=padding))), [x, w, b])


def test_conv1d_no_bias():
    x = RNG.normal(size=(1, 7, 1))
    w = RNG.normal(size=(3, 1, 2))
    out = T.conv1d(Tensor(x), Tensor(w), None, stride=1, padding="same")
    ref = helpers.naive_conv1d(x, w, None, stride=1, padding="same")
    assert np.allclose(out.data, ref, atol=1e-12)


# ---------------------------------------------------------------------------
# classification heads
# ---------------------------------------------------------------------------

def test_cross_entropy_matches_log_softmax():
    logits = RNG.normal(size=(6, 4)) * 3
    labels = RNG.integers(0, 4, size=6)
    out = T.cross_entropy_logits(Tensor(logits), labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    expect = -logp[np.arange(6), labels].mean()
    assert abs(float(out.data) - expect) < 1e-12
    check(lambda x: T.cross_entropy_logits(x, labels), [logits])


def test_softmax_rows_and_gradients():
    logits = RNG.normal(size=(5, 3))
    out = T.softmax(Tensor(logits))
    assert np.allclose(out.data.sum(axis=1), 1.0)
    w = RNG.normal(size=(5, 3))
    check(lambda x: T.reduce_sum(T.softmax(x) * Tensor(w)), [logits])


# ---------------------------------------------------------------------------
# graph mechanics
# ---------------------------------------------------------------------------

def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        (t + t).backward()


def test_backward_requires_tape():
    with pytest.raises(TapeError):
        Tensor(np.array(3.0)).backward()
    with T.no_grad():
        out = T.reduce_sum(T.square(Tensor(np.ones(3), requires_grad=True)))
    with pytest.raises(TapeError):
        out.backward()


def test_no_grad_suppresses_graph():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    with T.no_grad():
        out = T.square(a)
    assert out._parents == () and not out.requires_grad


def test_gradients_zero_fills_untouched_leaves():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    loss = T.reduce_sum(T.square(a))
    ga, gb = T.gradients(loss, [a, b])
    assert np.allclose(ga, 2.0)
    assert np.array_equal(gb, np.zeros(3))


def test_grad_accumulates_over_reuse():
    a = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    loss = T.reduce_sum(a * a + a)
    loss.backward()
    assert np.allclose(a.grad, 2 * a.data + 1)


def test_diamond_graph_single_visit():
    a = Tensor(np.array([1.5]), requires_grad=True)
    b = T.square(a)
    loss = T.reduce_sum(b + b)
    loss.backward()
    assert np.allclose(a.grad, 2 * 2 * a.data)


def test_detach_blocks_gradient():
    a = Tensor(np.ones(4), requires_grad=True)
    loss = T.reduce_sum(T.square(a).detach() * a)
    loss.backward()
    assert np.allclose(a.grad, 1.0)


# ---------------------------------------------------------------------------
# random compositions (small-scale rehearsal of the full gate)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(0, 30, 3))
def test_random_composition_gradients(seed):
    fn, arrays, _ = helpers.random_composition(seed)
    err = helpers.check_gradients(fn, arrays)
    assert err < 1e-4, f"seed {seed}: rel err {err:.3e}"


def test_compositions_cover_registered_ops():
    cover = set()
    for seed in range(60):
        _, _, used = helpers.random_composition(seed)
        cover.update(used)
    assert set(T.REGISTERED_OPS) <= cover


# ---------------------------------------------------------------------------
# property tests
# ---------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(1, 5), cols=st.integers(1, 5),
    seed=st.integers(0, 10_000),
)
def test_broadcast_gradient_counts(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(rows, cols)), requires_grad=True)
    b = Tensor(rng.normal(size=(cols,)), requires_grad=True)
    T.reduce_sum(a + b).backward()
    assert np.array_equal(a.grad, np.ones((rows, cols)))
    assert np.array_equal(b.grad, np.full(cols, float(rows)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), slope=st.floats(0.0, 1.0))
def test_leaky_relu_identity_region(seed, slope):
    rng = np.random.default_rng(seed)
    x = np.abs(rng.normal(size=8)) + 0.1
    out = T.leaky_relu(Tensor(x), slope)
    assert np.array_equal(out.data, x)
    neg = T.leaky_relu(Tensor(-x), slope)
    assert np.allclose(neg.data, -slope * x)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_sum_linearity(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3))
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    T.reduce_sum(ta + tb).backward()
    assert np.array_equal(ta.grad, np.ones((3, 3)))
    assert np.array_equal(tb.grad, np.ones((3, 3)))
