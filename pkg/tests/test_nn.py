import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogclear.errors import InvalidArgument
from fogclear.nn import (
    AdamState,
    ConvParams,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    grad_check,
    maxpool2,
    maxpool2_backward,
    mse_loss,
    relu,
    relu_grad,
    softmax_ce_loss,
    tconv2d_backward,
    tconv2d_forward,
    xavier_bound,
    xavier_init,
)

from oracles import brute_maxpool, central_diff, max_rel_err, naive_conv2d


def rand_conv(rng, co, ci, stride, dtype=np.float64, scale=0.3):
    k = rng.uniform(-scale, scale, (co, ci, 3, 3)).astype(dtype)
    b = rng.uniform(-scale, scale, co).astype(dtype)
    return ConvParams(k, b, stride)


# --- conv2d_forward ---------------------------------------------------------

def test_conv_zero_input_zero_bias():
    rng = np.random.default_rng(0)
    p = rand_conv(rng, 4, 3, 1, np.float32)
    p.bias[:] = 0
    out = conv2d_forward(np.zeros((2, 3, 6, 6), np.float32), p)
    assert out.shape == (2, 4, 6, 6)
    assert not out.any()


def test_conv_identity_kernel():
    k = np.zeros((1, 1, 3, 3), np.float32)
    k[0, 0, 1, 1] = 1
    x = np.random.default_rng(1).random((2, 1, 7, 5), dtype=np.float32)
    out = conv2d_forward(x, ConvParams(k, np.zeros(1, np.float32), 1))
    np.testing.assert_array_equal(out, x)


def test_conv_stride2_matches_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (1, 2, 5, 5)).astype(np.float32)
    p = rand_conv(rng, 3, 2, 2, np.float32)
    out = conv2d_forward(x, p)
    assert out.shape == (1, 3, 3, 3)
    assert np.max(np.abs(out - naive_conv2d(x, p.kernel, p.bias, 2))) <= 1e-6


@pytest.mark.parametrize("size,stride,expected", [(32, 2, 16), (16, 2, 8), (8, 2, 4), (32, 1, 32), (7, 2, 4)])
def test_conv_output_shape(size, stride, expected):
    p = ConvParams(np.zeros((1, 1, 3, 3)), np.zeros(1), stride)
    assert conv2d_forward(np.zeros((1, 1, size, size)), p).shape[2:] == (expected, expected)


def test_conv_shape_mismatch_names_both_shapes():
    p = ConvParams(np.zeros((4, 3, 3, 3)), np.zeros(4), 1)
    with pytest.raises(InvalidArgument, match=r"\(1, 2, 5, 5\).*\(4, 3, 3, 3\)"):
        conv2d_forward(np.zeros((1, 2, 5, 5)), p)


def test_conv_params_reject_bad_kernel_and_stride():
    with pytest.raises(InvalidArgument):
        ConvParams(np.zeros((1, 1, 5, 5)), np.zeros(1), 1)
    with pytest.raises(InvalidArgument):
        ConvParams(np.zeros((1, 1, 3, 3)), np.zeros(1), 3)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 2), ci=st.integers(1, 4), co=st.integers(1, 4),
       h=st.integers(1, 8), w=st.integers(1, 8), stride=st.sampled_from([1, 2]),
       seed=st.integers(0, 2**32 - 1))
def test_conv_matches_loop_oracle_property(n, ci, co, h, w, stride, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, ci, h, w)).astype(np.float32)
    p = rand_conv(rng, co, ci, stride, np.float32)
    assert np.max(np.abs(conv2d_forward(x, p) - naive_conv2d(x, p.kernel, p.bias, stride))) <= 1e-6


# --- conv2d_backward / tconv ------------------------------------------------

def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 6, 6))
    p = rand_conv(rng, 4, 3, 2)
    gx, gk, gb = conv2d_backward(x, p, np.zeros((2, 4, 3, 3)))
    assert not gx.any() and not gk.any() and not gb.any()


def test_conv_backward_bias_is_channel_sum():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 6, 6))
    p = rand_conv(rng, 4, 3, 1)
    up = rng.normal(size=(2, 4, 6, 6))
    _, _, gb = conv2d_backward(x, p, up)
    np.testing.assert_allclose(gb, up.sum(axis=(0, 2, 3)))


def test_conv_backward_rejects_bad_upstream():
    p = ConvParams(np.zeros((4, 3, 3, 3)), np.zeros(4), 2)
    with pytest.raises(InvalidArgument):
        conv2d_backward(np.zeros((1, 3, 6, 6)), p, np.zeros((1, 4, 6, 6)))


SHAPES = [(n, ci, co, h, w, s)
          for n, ci, co, h, w, s in [
              (1, 1, 1, 3, 3, 1), (1, 2, 3, 5, 5, 2), (2, 3, 2, 4, 6, 1), (1, 4, 4, 6, 6, 2),
              (2, 1, 3, 7, 5, 2), (1, 3, 1, 8, 8, 2), (2, 2, 2, 3, 7, 1), (1, 5, 2, 4, 4, 2),
              (1, 2, 5, 6, 3, 1), (2, 3, 3, 5, 4, 2), (1, 1, 4, 2, 2, 1), (1, 4, 1, 8, 6, 1),
              (2, 2, 3, 6, 6, 2), (1, 3, 3, 1, 5, 1), (1, 6, 2, 4, 8, 2), (2, 1, 1, 5, 5, 1),
              (1, 2, 2, 9, 9, 2), (1, 3, 4, 3, 3, 2), (2, 4, 2, 4, 4, 1), (1, 2, 6, 6, 4, 2),
          ]]


@pytest.mark.parametrize("n,ci,co,h,w,s", SHAPES)
def test_conv_backward_finite_differences(n, ci, co, h, w, s):
    rng = np.random.default_rng(hash((n, ci, co, h, w, s)) % 2**32)
    x = rng.normal(size=(n, ci, h, w))
    p = rand_conv(rng, co, ci, s)
    out = conv2d_forward(x, p)
    weights = rng.normal(size=out.shape)

    def f():
        return float(np.sum(conv2d_forward(x, p) * weights))

    gx, gk, gb = conv2d_backward(x, p, weights)
    assert max_rel_err(gx, central_diff(f, x)) < 1e-4
    assert max_rel_err(gk, central_diff(f, p.kernel)) < 1e-4
    assert max_rel_err(gb, central_diff(f, p.bias)) < 1e-4


@pytest.mark.parametrize("n,ci,co,h,w,s", [sh for sh in SHAPES if sh[5] == 1 or (sh[3] % 2 == 0 and sh[4] % 2 == 0)])
def test_tconv_backward_finite_differences(n, ci, co, h, w, s):
    rng = np.random.default_rng(hash((co, ci, n, w, h, s)) % 2**32)
    p = rand_conv(rng, co, ci, s)
    x = rng.normal(size=(n, co, (h - 1) // s + 1, (w - 1) // s + 1))
    dec_bias = rng.normal(size=ci)
    out = tconv2d_forward(x, p, dec_bias)
    assert out.shape == (n, ci, h, w)
    weights = rng.normal(size=out.shape)

    def f():
        return float(np.sum(tconv2d_forward(x, p, dec_bias) * weights))

    gx, gk, gb = tconv2d_backward(x, p, weights)
    assert max_rel_err(gx, central_diff(f, x)) < 1e-4
    assert max_rel_err(gk, central_diff(f, p.kernel)) < 1e-4
    assert max_rel_err(gb, central_diff(f, dec_bias)) < 1e-4


def test_tconv_output_shape_inverts_stride2():
    p = ConvParams(np.zeros((8, 4, 3, 3), np.float32), np.zeros(8, np.float32), 2)
    assert tconv2d_forward(np.zeros((1, 8, 16, 16), np.float32), p).shape == (1, 4, 32, 32)


def test_tconv_zero_input_zero_bias():
    rng = np.random.default_rng(5)
    p = rand_conv(rng, 3, 2, 2)
    out = tconv2d_forward(np.zeros((1, 3, 4, 4)), p, np.zeros(2))
    assert out.shape == (1, 2, 8, 8) and not out.any()


@pytest.mark.parametrize("seed", range(10))
def test_tconv_equals_conv_input_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    s = 1 + seed % 2
    ci, co, h = rng.integers(1, 6), rng.integers(1, 6), 2 * rng.integers(1, 6)
    p = rand_conv(rng, co, ci, s, np.float32)
    x_in = rng.normal(size=(2, ci, h, h)).astype(np.float32)
    up = rng.normal(size=conv2d_forward(x_in, p).shape).astype(np.float32)
    gx, _, _ = conv2d_backward(x_in, p, up)
    t = tconv2d_forward(up, p, np.zeros(ci, np.float32))
    assert t.shape == gx.shape
    assert np.max(np.abs(t - gx)) <= 1e-6


def test_tconv_rejects_wrong_channels():
    p = ConvParams(np.zeros((4, 3, 3, 3)), np.zeros(4), 1)
    with pytest.raises(InvalidArgument):
        tconv2d_forward(np.zeros((1, 3, 4, 4)), p)


# --- relu / pool -------------------------------------------------------------

def test_relu_values():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    x = np.abs(np.random.default_rng(6).normal(size=(2, 3, 4, 4)))
    np.testing.assert_array_equal(relu(x), x)


def test_relu_grad_zero_at_kink():
    np.testing.assert_array_equal(relu_grad(np.array([-1.0, 0.0, 2.0]), np.ones(3)), [0, 0, 1])


def test_relu_grad_finite_differences():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 3, 5, 5))
    x[np.abs(x) < 1e-3] = 0.5
    w = rng.normal(size=x.shape)
    num = central_diff(lambda: float(np.sum(relu(x) * w)), x)
    assert max_rel_err(relu_grad(x, w), num) < 1e-4


def test_maxpool_window():
    out, idx = maxpool2(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert out[0, 0, 0, 0] == 4 and idx[0, 0, 0, 0] == 3


def test_maxpool_constant_routes_to_first_element():
    x = np.full((1, 2, 4, 4), 7.0)
    out, idx = maxpool2(x)
    np.testing.assert_array_equal(out, 7.0)
    g = maxpool2_backward(np.ones_like(out), idx, x.shape)
    expected = np.zeros_like(x)
    expected[:, :, ::2, ::2] = 1
    np.testing.assert_array_equal(g, expected)


def test_maxpool_matches_brute_force():
    x = np.random.default_rng(8).normal(size=(1, 1, 4, 4))
    np.testing.assert_array_equal(maxpool2(x)[0], brute_maxpool(x))


def test_maxpool_rejects_odd():
    with pytest.raises(InvalidArgument):
        maxpool2(np.zeros((1, 1, 3, 4)))


@pytest.mark.parametrize("seed", range(5))
def test_maxpool_backward_finite_differences(seed):
    rng = np.random.default_rng(200 + seed)
    x = rng.normal(size=(2, 3, 6, 4))
    out, idx = maxpool2(x)
    w = rng.normal(size=out.shape)
    num = central_diff(lambda: float(np.sum(maxpool2(x)[0] * w)), x)
    assert max_rel_err(maxpool2_backward(w, idx, x.shape), num) < 1e-4


# --- losses ------------------------------------------------------------------

def test_mse_zero_when_equal():
    x = np.random.default_rng(9).normal(size=(2, 3, 4, 4))
    loss, g = mse_loss(x, x.copy())
    assert loss == 0 and not g.any()


def test_mse_constant_offset():
    t = np.random.default_rng(10).normal(size=(2, 3, 4, 4))
    loss, _ = mse_loss(t + 0.5, t)
    assert loss == pytest.approx(0.25, rel=1e-12)


def test_mse_gradient_finite_differences():
    rng = np.random.default_rng(11)
    p, t = rng.normal(size=(2, 2, 3, 3)), rng.normal(size=(2, 2, 3, 3))
    _, g = mse_loss(p, t)
    assert max_rel_err(g, central_diff(lambda: mse_loss(p, t)[0], p)) < 1e-4


def test_mse_shape_mismatch():
    with pytest.raises(InvalidArgument):
        mse_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


def test_softmax_ce_uniform_and_saturated():
    loss, _ = softmax_ce_loss(np.zeros((1, 2)), np.array([1]))
    assert loss == pytest.approx(math.log(2))
    loss, _ = softmax_ce_loss(np.array([[20.0, -20.0]]), np.array([0]))
    assert loss < 1e-8


def test_softmax_ce_gradient_finite_differences():
    rng = np.random.default_rng(12)
    logits = rng.normal(scale=2, size=(6, 2))
    labels = rng.integers(0, 2, 6)
    _, g = softmax_ce_loss(logits, labels)
    assert max_rel_err(g, central_diff(lambda: softmax_ce_loss(logits, labels)[0], logits)) < 1e-4


def test_softmax_ce_rejects_bad_label():
    with pytest.raises(InvalidArgument):
        softmax_ce_loss(np.zeros((1, 2)), np.array([2]))


# --- adam / xavier -----------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    before = p["w"].copy()
    adam_step(p, {"w": np.zeros(3)}, AdamState(), lr=1e-3)
    np.testing.assert_array_equal(p["w"], before)


def test_adam_first_step_hand_value():
    p = {"theta": np.array([1.0])}
    state = AdamState()
    adam_step(p, {"theta": np.array([0.5])}, state, lr=0.001)
    # m_hat = g, v_hat = g^2 at t=1
    assert p["theta"][0] == pytest.approx(1.0 - 0.001 * 0.5 / (0.5 + 1e-8), abs=1e-15)
    assert p["theta"][0] == pytest.approx(0.99900000002, abs=1e-12)
    assert state.t == 1


def test_adam_two_identical_steps_bounded():
    p = {"theta": np.array([1.0, -4.0])}
    state = AdamState()
    g = {"theta": np.array([0.5, -3.0])}
    adam_step(p, g, state, lr=0.001)
    prev = p["theta"].copy()
    adam_step(p, g, state, lr=0.001)
    assert np.all(np.abs(p["theta"] - prev) <= 0.001 * (1 + 1e-12))
    assert state.t == 2


def test_adam_rejects_nonfinite_gradient_by_name():
    with pytest.raises(InvalidArgument, match="enc0.kernel"):
        adam_step({"enc0.kernel": np.zeros(2)}, {"enc0.kernel": np.array([np.nan, 0])}, AdamState())


def test_adam_updates_in_place():
    w = np.ones(3)
    p = {"w": w}
    adam_step(p, {"w": np.ones(3)}, AdamState())
    assert p["w"] is w and np.all(w < 1)


def test_xavier_determinism_and_bound():
    a = xavier_init((64, 32, 3, 3), seed=123)
    b = xavier_init((64, 32, 3, 3), seed=123)
    np.testing.assert_array_equal(a, b)
    bound = xavier_bound((64, 32, 3, 3))
    assert bound == pytest.approx(math.sqrt(6 / 864), rel=1e-12)
    assert bound == pytest.approx(0.08333, abs=1e-5)
    assert np.all(np.abs(a) <= np.float32(bound))
    assert not np.array_equal(a, xavier_init((64, 32, 3, 3), seed=124))


def test_xavier_bias_zero():
    assert not xavier_init((16,), seed=1).any()


# --- grad_check --------------------------------------------------------------

def _conv_relu_mse(rng, fault=1.0):
    # loss is summed (not averaged) so gradients are O(1) and a doubling shows up
    # through the max(1, |a|+|n|) denominator
    x = rng.normal(size=(1, 2, 6, 6))
    target = rng.normal(size=(1, 3, 3, 3))
    p = rand_conv(rng, 3, 2, 2)
    params = {"k": p.kernel, "b": p.bias}
    k = target.size

    def loss_and_grads():
        z = conv2d_forward(x, p)
        loss, g = mse_loss(relu(z), target)
        _, gk, gb = conv2d_backward(x, p, relu_grad(z, g * k), need_input_grad=False)
        return loss * k, {"k": fault * gk, "b": fault * gb}

    return params, loss_and_grads


def test_grad_check_chain_passes():
    params, fn = _conv_relu_mse(np.random.default_rng(13))
    assert grad_check(fn, params) < 1e-4


def test_grad_check_detects_doubled_gradient():
    params, fn = _conv_relu_mse(np.random.default_rng(13), fault=2.0)
    assert grad_check(fn, params) > 0.3


def test_grad_check_no_params():
    assert grad_check(lambda: (1.0, {}), {}) == 0.0
