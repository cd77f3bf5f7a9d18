import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agagan.autograd import ConfigurationError, ParamStore, Tensor, UsageError, adam_step, gradcheck, no_grad, precision
from agagan.autograd import functional as F


def rand(rng, *shape, grad=False):
    return Tensor(rng.standard_normal(shape).astype(np.float32), requires_grad=grad)


def loop_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(n):
        for oc in range(o):
            for y in range(ho):
                for xx in range(wo):
                    acc = b[oc]
                    for ic in range(c):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += xp[i, ic, y * stride + dy, xx * stride + dx] * w[oc, ic, dy, dx]
                    out[i, oc, y, xx] = acc
    return out


# -- conv2d ----------------------------------------------------------------


def test_conv_sum_of_ones():
    out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), 1, 0)
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == 9.0


def test_conv_scalar_scale_shift():
    x = Tensor(np.array([[[[1, 2], [3, 4]]]], np.float32))
    out = F.conv2d(x, Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.array([0.5])), 1, 0)
    np.testing.assert_array_equal(out.data[0, 0], [[2.5, 4.5], [6.5, 8.5]])


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0), (2, 0)])
def test_conv_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x, w, b = rand(rng, 2, 3, 8, 8), rand(rng, 4, 3, 3, 3), rand(rng, 4)
    out = F.conv2d(x, w, b, stride, pad)
    np.testing.assert_allclose(out.data, loop_conv(x.data, w.data, b.data, stride, pad), atol=1e-5, rtol=1e-6)


def test_conv_shape_errors_name_dimensions():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError, match="channel"):
        F.conv2d(rand(rng, 1, 3, 4, 4), rand(rng, 2, 2, 3, 3), rand(rng, 2), 1, 1)
    with pytest.raises(ConfigurationError):
        F.conv2d(rand(rng, 1, 1, 2, 2), rand(rng, 1, 1, 5, 5), rand(rng, 1), 1, 0)


# -- dense -----------------------------------------------------------------


def test_dense_identity_and_hand_case():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    np.testing.assert_array_equal(F.dense(x, Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x.data)
    out = F.dense(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]]), Tensor([1.0]))
    assert out.data.tolist() == [[12.0]]


def test_dense_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x, w, b = rand(rng, 5, 38), rand(rng, 7, 38), rand(rng, 7)
    ref = np.zeros((5, 7))
    for i in range(5):
        for g in range(7):
            ref[i, g] = b.data[g] + sum(float(x.data[i, f]) * float(w.data[g, f]) for f in range(38))
    np.testing.assert_allclose(F.dense(x, w, b).data, ref, atol=1e-5, rtol=1e-6)


def test_dense_rejects_feature_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError):
        F.dense(rand(rng, 2, 4), rand(rng, 3, 5), rand(rng, 3))


# -- activations -------------------------------------------------------------


def test_activation_values():
    assert F.activation(Tensor([0.0]), "sigmoid").data[0] == 0.5
    assert F.activation(Tensor([-1.0]), "leaky_relu").data[0] == pytest.approx(-0.2)
    assert F.activation(Tensor([-1.0, 2.0]), "relu").data.tolist() == [0.0, 2.0]
    with pytest.raises(ConfigurationError):
        F.activation(Tensor([0.0]), "swish")


def test_saturated_activations_stay_in_open_intervals():
    x = Tensor(np.array([-200.0, -40.0, 40.0, 200.0], np.float32))
    s = F.sigmoid(x).data
    t = F.tanh(x).data
    assert np.all((s > 0) & (s < 1))
    assert np.all((t > -1) & (t < 1))


def test_tanh_gradient_finite_difference():
    rng = np.random.default_rng(5)
    x = rand(rng, 3, 4, grad=True)
    assert gradcheck(lambda x: F.sum_(F.tanh(x)), [x], eps=1e-2)["0"] < 1e-3


# -- rearrangements and pooling ---------------------------------------------


def test_pixel_shuffle_layout():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
    np.testing.assert_array_equal(F.pixel_shuffle(x, 2).data[0, 0], [[1, 2], [3, 4]])


def test_pixel_shuffle_index_oracle_and_inverse():
    rng = np.random.default_rng(8)
    x = rand(rng, 2, 8, 3, 3)
    out = F.pixel_shuffle(x, 2).data
    for n in range(2):
        for c in range(2):
            for h in range(6):
                for w in range(6):
                    src = x.data[n, c * 4 + (h % 2) * 2 + (w % 2), h // 2, w // 2]
                    assert out[n, c, h, w] == src
    np.testing.assert_array_equal(F.pixel_unshuffle(F.pixel_shuffle(x, 2), 2).data, x.data)
    with pytest.raises(ConfigurationError):
        F.pixel_shuffle(rand(rng, 1, 6, 2, 2), 2)


def test_max_pool_cases():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert F.max_pool2(x).data.item() == 4.0
    c = F.max_pool2(Tensor(np.full((1, 2, 4, 6), 3.0)))
    assert c.shape == (1, 2, 2, 3) and np.all(c.data == 3.0)
    rng = np.random.default_rng(9)
    r = rand(rng, 1, 2, 8, 8)
    ref = np.array([[[[r.data[0, ch, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max() for j in range(4)] for i in range(4)] for ch in range(2)]])
    np.testing.assert_array_equal(F.max_pool2(r).data, ref)
    with pytest.raises(ConfigurationError):
        F.max_pool2(rand(rng, 1, 1, 3, 4))


def test_max_pool_ties_route_to_first_index():
    x = Tensor(np.full((1, 1, 2, 2), 1.0), requires_grad=True)
    F.sum_(F.max_pool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


def test_global_avg_pool():
    assert F.global_avg_pool(Tensor(np.full((1, 1, 3, 3), 2.5))).data.item() == 2.5
    assert F.global_avg_pool(Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))).data.item() == 4.0
    rng = np.random.default_rng(10)
    r = rand(rng, 2, 3, 5, 4)
    np.testing.assert_allclose(F.global_avg_pool(r).data[..., 0, 0], r.data.astype(np.float64).mean(axis=(2, 3)), atol=1e-6)


def test_concat_and_slice_round_trip():
    rng = np.random.default_rng(11)
    a, b = rand(rng, 1, 3, 4, 4), rand(rng, 1, 5, 4, 4)
    cat = F.concat_channels(a, b)
    assert cat.shape == (1, 8, 4, 4)
    np.testing.assert_array_equal(F.slice_channels(cat, 0, 3).data, a.data)
    np.testing.assert_array_equal(F.slice_channels(cat, 3, 8).data, b.data)
    empty = Tensor(np.zeros((1, 0, 4, 4), np.float32))
    np.testing.assert_array_equal(F.concat_channels(a, empty).data, a.data)


def test_elementwise_identities_and_broadcast():
    rng = np.random.default_rng(12)
    a = rand(rng, 2, 3, 4, 4)
    np.testing.assert_array_equal(F.elementwise(a, Tensor(np.ones(a.shape)), "hadamard").data, a.data)
    np.testing.assert_array_equal(F.elementwise(a, Tensor(np.zeros(a.shape)), "add").data, a.data)
    s = rand(rng, 1, 3, 1, 1)
    out = F.hadamard(a, s).data
    for n in range(2):
        for c in range(3):
            np.testing.assert_array_equal(out[n, c], a.data[n, c] * s.data[0, c, 0, 0])
    with pytest.raises(ConfigurationError):
        F.add(a, rand(rng, 2, 2, 4, 4))


# -- dropout -------------------------------------------------------------------


def test_dropout_identities():
    rng = np.random.default_rng(13)
    x = rand(rng, 2, 3, 4, 4)
    np.testing.assert_array_equal(F.dropout(x, 0.0, "train", rng).data, x.data)
    np.testing.assert_array_equal(F.dropout(x, 0.5, "eval", rng).data, x.data)


def test_dropout_keep_rate_within_three_sigma():
    p, n = 0.2, 1_000_000
    out = F.dropout(Tensor(np.ones(n, np.float32)), p, "train", np.random.default_rng(14)).data
    kept = np.count_nonzero(out) / n
    assert abs(kept - (1 - p)) <= 3 * np.sqrt(p * (1 - p) / n)
    np.testing.assert_allclose(out[out != 0], 1 / (1 - p), rtol=1e-6)


# -- backward --------------------------------------------------------------------


def test_linear_backward_gives_input():
    rng = np.random.default_rng(15)
    x, w = rand(rng, 3, 4), rand(rng, 3, 4, grad=True)
    F.sum_(F.hadamard(w, x)).backward()
    np.testing.assert_array_equal(w.grad, x.data)


def test_two_backward_calls_double_gradients():
    rng = np.random.default_rng(16)
    x, w = rand(rng, 1, 2, 5, 5), rand(rng, 3, 2, 3, 3, grad=True)
    loss = F.mean(F.tanh(F.conv2d(x, w, Tensor(np.zeros(3)), 1, 1)))
    loss.backward()
    first = w.grad.copy()
    loss.backward()
    np.testing.assert_array_equal(w.grad, 2 * first)


def test_mean_tanh_conv_gradcheck():
    rng = np.random.default_rng(17)
    x, w = rand(rng, 1, 2, 5, 5, grad=True), rand(rng, 3, 2, 3, 3, grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    report = gradcheck(lambda x, w, b: F.mean(F.tanh(F.conv2d(x, w, b, 1, 1))), [x, w, b], eps=1e-2)
    assert max(report.values()) < 1e-3


def test_backward_needs_scalar_with_grad():
    with pytest.raises(UsageError):
        Tensor(np.ones(3), requires_grad=True).backward()
    with pytest.raises(UsageError):
        Tensor(np.ones(1)).backward()


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = F.sum_(w)
    assert not out.requires_grad


# -- gradcheck ---------------------------------------------------------------------


def test_gradcheck_linear_map_is_tight():
    rng = np.random.default_rng(18)
    x = rand(rng, 4, 3, grad=True)
    w = Tensor(rng.standard_normal((4, 3)))
    with precision(np.float64):
        x64 = Tensor(x.data, requires_grad=True)
        w64 = Tensor(w.data)
        assert gradcheck(lambda x: F.sum_(F.hadamard(x, w64)), [x64], eps=1e-6)["0"] < 1e-7


def test_gradcheck_sigmoid_chain():
    rng = np.random.default_rng(19)
    x = rand(rng, 6, grad=True)
    report = gradcheck(lambda x: F.sum_(F.sigmoid(F.scale(F.sigmoid(F.scale(x, 2.0)), 3.0))), [x], eps=1e-2)
    assert report["0"] < 1e-4


def test_gradcheck_catches_a_wrong_gradient():
    from agagan.autograd.tensor import make_result

    def broken_square(x):
        return make_result(x.data**2, (x,), lambda g: (g * x.data,))

    x = Tensor(np.array([1.0, 2.0, -1.5], np.float32), requires_grad=True)
    assert gradcheck(lambda x: F.sum_(broken_square(x)), [x])["0"] > 0.4


def test_precision_context_restores_float32():
    with precision(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32
    with pytest.raises(ConfigurationError):
        with precision(np.int32):
            pass


# -- adam ----------------------------------------------------------------------------


def test_adam_zero_gradient_is_a_no_op():
    store = ParamStore()
    p = store.add("w", np.array([1.0, -2.0]))
    p.grad = np.zeros(2, np.float32)
    adam_step(store, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    store = ParamStore()
    p = store.add("theta", np.array([0.5]))
    p.grad = np.ones(1, np.float32)
    adam_step(store, lr=1e-3)
    assert p.data[0] == pytest.approx(0.5 - 1e-3, abs=1e-7)


def _scalar_adam_oracle(theta, grad_fn, lr, steps):
    m = v = 0.0
    for k in range(1, steps + 1):
        g = grad_fn(theta)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= lr * (m / (1 - 0.9**k)) / (math.sqrt(v / (1 - 0.999**k)) + 1e-8)
    return theta


def test_adam_converges_on_quadratic():
    store = ParamStore()
    p = store.add("theta", np.array([2.0]))
    for _ in range(100):
        loss = F.sum_(F.square(F.add_scalar(p, -3.0)))
        loss.backward()
        adam_step(store, lr=0.1)
        store.zero_grad()
    assert abs(p.data[0] - 3.0) < 1e-2


@pytest.mark.parametrize("start", [0.0, 1.0, 2.0, 5.0])
def test_adam_matches_scalar_oracle(start):
    store = ParamStore()
    p = store.add("theta", np.array([start]))
    for _ in range(100):
        F.sum_(F.square(F.add_scalar(p, -3.0))).backward()
        adam_step(store, lr=0.1)
        store.zero_grad()
    assert p.data[0] == pytest.approx(_scalar_adam_oracle(start, lambda t: 2 * (t - 3), 0.1, 100), abs=1e-5)


def test_adam_rejects_missing_gradient():
    store = ParamStore()
    store.add("w", np.zeros(2))
    with pytest.raises(UsageError):
        adam_step(store, lr=0.1)


def test_param_store_invariants():
    store = ParamStore()
    store.add("a", np.zeros((2, 3)))
    with pytest.raises(ConfigurationError):
        store.add("a", np.zeros(1))
    assert store.m["a"].shape == store.v["a"].shape == (2, 3)
    assert store.count() == 6


# -- properties -------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(3, 7), w=st.integers(3, 7),
    o=st.integers(1, 3), k=st.sampled_from([1, 3]), stride=st.integers(1, 2), seed=st.integers(0, 10_000),
)
def test_conv_output_shape_and_finiteness(n, c, h, w, o, k, stride, seed):
    rng = np.random.default_rng(seed)
    pad = k // 2
    out = F.conv2d(rand(rng, n, c, h, w), rand(rng, o, c, k, k), rand(rng, o), stride, pad)
    assert out.shape == (n, o, (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1)
    assert np.all(np.isfinite(out.data))


@settings(max_examples=30, deadline=None)
@given(r=st.integers(1, 3), c=st.integers(1, 3), h=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_pixel_shuffle_is_a_bijection(r, c, h, seed):
    x = rand(np.random.default_rng(seed), 1, c * r * r, h, h)
    y = F.pixel_shuffle(x, r)
    assert y.shape == (1, c, h * r, h * r)
    np.testing.assert_array_equal(np.sort(y.data.ravel()), np.sort(x.data.ravel()))
    np.testing.assert_array_equal(F.pixel_unshuffle(y, r).data, x.data)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False, width=32), min_size=1, max_size=20))
def test_activations_finite_and_bounded(values):
    x = Tensor(np.array(values, np.float32))
    s, t = F.sigmoid(x).data, F.tanh(x).data
    assert np.all((s > 0) & (s < 1)) and np.all((t > -1) & (t < 1))
    assert np.all(np.isfinite(F.leaky_relu(x).data))
