import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from iecsi.tensor import (
    AdamState,
    GradientTape,
    NonFiniteError,
    Tensor,
    UsageError,
    adam_step,
    backward,
    batch_norm,
    concatenate,
    conv2d,
    debug_mode,
    deconv2d,
    dropout,
    gelu,
    grad,
    gradcheck,
    layer_norm,
    leaky_relu,
    matmul,
    mean,
    reshape,
    sigmoid,
    softmax,
    split,
    stack,
    sum_,
    tanh,
    var,
)
from iecsi.tensor.functional import conv2d_weight_grad
from oracles import conv2d_ref, gelu_ref


def T(a, requires_grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=requires_grad, dtype=np.float64)


# -- GELU ------------------------------------------------------------------
@pytest.mark.parametrize("x, expected, tol", [(0.0, 0.0, 1e-12), (10.0, 10.0, 1e-6), (1.0, 0.841345, 1e-6)])
def test_gelu_examples(x, expected, tol):
    assert abs(gelu(T([x])).data[0] - expected) < tol


@given(st.floats(-6, 6))
def test_gelu_matches_erf_oracle(x):
    assert gelu(T([x])).data[0] == pytest.approx(gelu_ref(x), abs=1e-12)


# -- layer norm ------------------------------------------------------------
def test_layer_norm_examples():
    y = layer_norm(T([[1.0, 2.0, 3.0]]), T(1.0), T(0.0)).data
    np.testing.assert_allclose(y, [[-1.22474, 0.0, 1.22474]], atol=1e-4)
    assert np.allclose(layer_norm(T([[5.0, 5.0, 5.0]]), T(1.0), T(0.0)).data, 0.0)
    np.testing.assert_allclose(layer_norm(T([[0.0, 1.0]]), T(2.0), T(1.0)).data, [[-1.0, 3.0]], atol=1e-4)


@given(hnp.arrays(np.float64, (3, 6), elements=st.floats(-2, 2)))
def test_layer_norm_standardizes_rows(x):
    spread = x.max(axis=1) - x.min(axis=1)
    y = layer_norm(T(x), eps=1e-12).data
    ok = spread > 1e-3
    assert np.all(np.abs(y[ok].mean(axis=1)) < 1e-6)
    assert np.all(np.abs(y[ok].var(axis=1) - 1) < 1e-4)


# -- conv / deconv ---------------------------------------------------------
def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 5, 7))
    y = conv2d(T(x), T(np.ones((1, 1, 1, 1))), 1, 0).data
    np.testing.assert_allclose(y, x)


def test_conv_direct_sum():
    y = conv2d(T([[[1.0, 2.0], [3.0, 4.0]]]), T(np.ones((1, 1, 2, 2))), 1, 0).data
    np.testing.assert_allclose(y, [[[10.0]]])


def test_conv_critic_downsampling_shape(rng):
    y = conv2d(T(rng.standard_normal((2, 32, 64))), T(rng.standard_normal((4, 2, 4, 4))), 2, 1)
    assert y.shape == (4, 16, 32)


@pytest.mark.parametrize("stride, pad", [(1, 0), (2, 1), (1, 2), (3, 1)])
def test_conv_matches_loop_oracle(rng, stride, pad):
    x = rng.standard_normal((3, 7, 6))
    k = rng.standard_normal((2, 3, 3, 3))
    np.testing.assert_allclose(conv2d(T(x), T(k), stride, pad).data, conv2d_ref(x, k, stride, pad), atol=1e-10)


def test_conv_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"input \(1, 1, 2, 2\), kernel \(1, 3, 5, 5\)"):
        conv2d(T(np.zeros((1, 2, 2))), T(np.zeros((1, 3, 5, 5))), 1, 0)


def test_deconv_doubles_extent(rng):
    y = deconv2d(T(rng.standard_normal((3, 5, 6))), T(rng.standard_normal((3, 2, 4, 4))), 2, 1)
    assert y.shape == (2, 10, 12)


def test_deconv_preconv_shape():
    y = deconv2d(T(np.ones((1, 1, 1))), T(np.ones((1, 1, 1, 2))), 1, 0)
    assert y.shape == (1, 1, 2)


@given(st.integers(0, 2**31), st.sampled_from([(4, 2, 1), (3, 1, 1), (1, 1, 0), (2, 2, 0)]))
def test_conv_deconv_adjoint(seed, hp):
    k, s, p = hp
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, 3, 8, 8))
    w = r.standard_normal((4, 3, k, k))
    y = conv2d(T(x), T(w), s, p).data
    g = r.standard_normal(y.shape)
    back = deconv2d(T(g), T(w), s, p, out_hw=x.shape[-2:]).data
    assert abs(np.sum(y * g) - np.sum(x * back)) < 1e-5 * max(1.0, abs(np.sum(y * g)))


# -- backward ---------------------------------------------------------------
def test_backward_square():
    x = T(3.0)
    backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_backward_requires_scalar():
    with pytest.raises(UsageError):
        backward(T([1.0, 2.0]) * 2)


def test_parameter_off_tape_gets_zero_gradient():
    x, y = T([1.0, 2.0]), T([3.0])
    gx, gy = grad(sum_(x * x), [x, y])
    np.testing.assert_allclose(gy.data, 0.0)
    np.testing.assert_allclose(gx.data, [2.0, 4.0])


def test_sum_of_product_gradient(f64, rng):
    A, B = T(rng.standard_normal((3, 4))), T(rng.standard_normal((3, 4)))
    gradcheck(lambda: sum_(A * B), [A, B], eps=1e-5)
    gA, gB = grad(sum_(A * B), [A, B])
    np.testing.assert_allclose(gA.data, B.data)


def test_tape_reverse_topological_order():
    x = T([1.0, 2.0])
    y = x * 2
    z = tanh(y)
    loss = sum_(z * y)
    tape = GradientTape(loss)
    seqs = [t._node.seq for t in tape.records]
    assert seqs == sorted(seqs, reverse=True)
    assert tape.ops()[0] == "sum"


def test_gradient_accumulates_once_per_backward():
    x = T([1.0, -1.0])
    loss = sum_(x * x) + sum_(x * 3)
    backward(loss)
    np.testing.assert_allclose(x.grad, [5.0, 1.0])


def test_debug_mode_detects_nonfinite():
    with debug_mode():
        with pytest.raises(NonFiniteError):
            T([1.0]) / T([0.0])


_UNARY = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "gelu": gelu,
    "leaky_relu": lambda x: leaky_relu(x, 0.2),
    "softmax": lambda x: softmax(x, -1),
    "exp": lambda x: x.exp(),
    "square": lambda x: x ** 2,
    "sqrt": lambda x: (x * x + 1.0).sqrt(),
    "log": lambda x: (x * x + 1.0).log(),
    "reshape": lambda x: reshape(x, (4, 3)),
    "transpose": lambda x: x.T,
    "mean": lambda x: mean(x, 0),
    "var": lambda x: var(x, -1, keepdims=True),
    "layer_norm": lambda x: layer_norm(x),
    "split": lambda x: split(x, 2, 1)[1] * 3.0,
    "getitem": lambda x: x[1:, ::2],
}


@pytest.mark.parametrize("name", sorted(_UNARY))
def test_unary_gradients(f64, name):
    r = np.random.default_rng(abs(hash(name)) % 2**31)
    x = T(r.uniform(-2, 2, (3, 4)))
    w = r.standard_normal(_UNARY[name](x).shape)
    gradcheck(lambda: sum_(_UNARY[name](x) * Tensor._wrap(w)), [x], eps=1e-6)


_BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (b * b + 1.0),
    "matmul": lambda a, b: matmul(a, b.T),
    "concatenate": lambda a, b: concatenate([a, b], 0),
    "stack": lambda a, b: stack([a, b], 1),
    "broadcast": lambda a, b: a + b[0:1, :],
}


@pytest.mark.parametrize("name", sorted(_BINARY))
def test_binary_gradients(f64, name):
    r = np.random.default_rng(abs(hash(name)) % 2**31)
    a, b = T(r.uniform(-2, 2, (3, 4))), T(r.uniform(-2, 2, (3, 4)))
    w = r.standard_normal(_BINARY[name](a, b).shape)
    gradcheck(lambda: sum_(_BINARY[name](a, b) * Tensor._wrap(w)), [a, b])


def test_batch_norm_gradient(f64, rng):
    x = T(rng.uniform(-2, 2, (3, 2, 3, 3)))
    gamma, beta = T(rng.uniform(0.5, 1.5, 2)), T(rng.uniform(-1, 1, 2))
    w = rng.standard_normal(x.shape)

    def fn():
        return sum_(batch_norm(x, gamma, beta, np.zeros(2), np.ones(2), True) * Tensor._wrap(w))
    gradcheck(fn, [x, gamma, beta])


@pytest.mark.parametrize("op", ["conv2d", "deconv2d", "wgrad"])
def test_conv_family_gradients(f64, rng, op):
    x = T(rng.uniform(-2, 2, (2, 2, 5, 5)))
    if op == "conv2d":
        k = T(rng.uniform(-1, 1, (3, 2, 3, 3)))
        f = lambda: conv2d(x, k, 2, 1)  # noqa: E731
    elif op == "deconv2d":
        k = T(rng.uniform(-1, 1, (2, 3, 4, 4)))
        f = lambda: deconv2d(x, k, 2, 1)  # noqa: E731
    else:
        k = T(rng.uniform(-1, 1, (2, 3, 5, 5)))  # output gradient of a 3x3 conv
        f = lambda: conv2d_weight_grad(x, k, (3, 3), 1, 1)  # noqa: E731
    w = rng.standard_normal(f().shape)
    gradcheck(lambda: sum_(f() * Tensor._wrap(w)), [x, k])


def test_second_order_gradient(f64):
    x = T([0.3, -0.7])
    (g,) = grad(sum_(tanh(x) ** 3), [x], create_graph=True)
    gradcheck(lambda: sum_(grad(sum_(tanh(x) ** 3), [x], create_graph=True)[0] ** 2), [x])
    assert g.requires_grad


# -- dropout ---------------------------------------------------------------
def test_dropout_eval_identity_and_seeded():
    x = T(np.ones((4, 5)))
    assert dropout(x, 0.5, None, training=False) is x
    a = dropout(x, 0.5, np.random.default_rng(3), True).data
    b = dropout(x, 0.5, np.random.default_rng(3), True).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}


def test_dropout_needs_rng_in_training():
    with pytest.raises(UsageError):
        dropout(T([1.0]), 0.5, None, True)


# -- Adam -----------------------------------------------------------------
def test_adam_zero_gradient_keeps_parameter():
    p = T([1.0, -2.0])
    adam_step(AdamState(), p, np.zeros(2))
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = T([1.0])
    adam_step(AdamState(lr=1e-3, eps=1e-8), p, np.ones(1))
    assert p.data[0] == pytest.approx(1.0 - 1e-3, abs=1e-9)


def test_adam_two_steps_monotone():
    p, s = T([0.5]), AdamState()
    values = [p.data[0]]
    for _ in range(2):
        adam_step(s, p, np.full(1, 0.3))
        values.append(p.data[0])
    assert s.t == 2
    assert values[0] > values[1] > values[2]


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState(), T([1.0, 2.0]), np.ones(3))


@given(hnp.arrays(np.float64, 5, elements=st.floats(-3, 3)), st.integers(1, 5))
def test_adam_moments_track_parameter_shape(g, steps):
    p, s = T(np.zeros(5)), AdamState()
    for _ in range(steps):
        adam_step(s, p, g)
    assert s.m.shape == s.v.shape == p.shape and s.t == steps


# -- determinism ------------------------------------------------------------
def test_ops_are_deterministic(rng):
    x = rng.standard_normal((2, 3, 6, 6))
    k = rng.standard_normal((4, 3, 3, 3))
    a = gelu(conv2d(Tensor(x), Tensor(k), 1, 1)).data
    b = gelu(conv2d(Tensor(x), Tensor(k), 1, 1)).data
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.float32


def test_softmax_rows_sum_to_one(rng):
    s = softmax(Tensor(rng.standard_normal((5, 7)) * 10), -1).data
    np.testing.assert_allclose(s.sum(-1), 1.0, atol=1e-6)
    assert math.isfinite(float(s.sum()))
