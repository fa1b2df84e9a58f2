import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advtransfer.engine import AdamState, Tensor, adam_step, get_dtype, ops, precision
from advtransfer.errors import ShapeError, UpdateError

from gradcheck import central_difference, relative_error


def _check_op(build, inputs, h, tol, seed=0):
    """Compare autodiff against central differences for every input of ``build``.

    The difference quotients are always evaluated in float64 on the same input
    values, so at float32 the check measures the autodiff result rather than
    float32 rounding in the oracle.
    """
    gen = np.random.default_rng(seed)
    tensors = [Tensor(a.copy(), requires_grad=True) for a in inputs]
    out = build(*tensors)
    w = gen.standard_normal(out.shape).astype(out.data.dtype)
    (out * Tensor(w)).sum().backward()
    for k, t in enumerate(tensors):
        arrays = [a.copy() for a in inputs]

        def f(a, k=k):
            with precision(np.float64):
                args = [Tensor(x.astype(np.float64)) for x in arrays[:k]] + [Tensor(a)]
                args += [Tensor(x.astype(np.float64)) for x in arrays[k + 1 :]]
                return float(np.sum(build(*args).data * w))

        coords = gen.choice(arrays[k].size, size=min(20, arrays[k].size), replace=False)
        numeric = central_difference(f, arrays[k].astype(np.float64), coords, h)
        # tiny components are judged against the tensor's gradient scale
        floor = max(1e-3, 0.1 * float(np.sqrt(np.mean(t.grad.astype(np.float64) ** 2))))
        err = relative_error(t.grad.reshape(-1)[coords], numeric, floor=floor)
        assert err.max() < tol, f"input {k}: max rel err {err.max():.3g}"


OP_CASES = {
    "add": (lambda a, b: ops.add(a, b), [(3, 4), (4,)]),
    "mul": (lambda a, b: ops.mul(a, b), [(3, 4), (3, 4)]),
    "matmul": (lambda a, b: ops.matmul(a, b), [(3, 5), (5, 2)]),
    "dense": (lambda x, w, b: ops.dense(x, w, b), [(4, 6), (6, 3), (3,)]),
    "relu": (lambda a: ops.relu(a), [(5, 7)]),
    "conv_same": (lambda x, k, b: ops.conv2d(x, k, b, "same"), [(2, 2, 6, 5), (3, 2, 3, 3), (3,)]),
    "conv_valid": (lambda x, k, b: ops.conv2d(x, k, b, "valid"), [(2, 2, 6, 5), (3, 2, 3, 3), (3,)]),
    "maxpool2": (lambda x: ops.maxpool2d(x, 2), [(2, 3, 6, 6)]),
    "maxpool1": (lambda x: ops.maxpool2d(x, 1), [(2, 3, 5, 5)]),
    "lstm": (lambda x, a, b, c: ops.lstm(x, a, b, c), [(2, 5, 4), (4, 12), (3, 12), (12,)]),
    "transpose": (lambda a: ops.transpose(a, (1, 0, 2)), [(2, 3, 4)]),
    "flatten": (lambda a: ops.flatten(a), [(2, 3, 4)]),
}


def _inputs(shapes, dtype, seed):
    gen = np.random.default_rng(seed)
    out = []
    for s in shapes:
        a = gen.standard_normal(s)
        if len(shapes) == 1 and s[-1] >= 5:
            # keep relu/maxpool inputs away from kinks and ties relative to h
            a = np.round(a, 1) + gen.uniform(-0.02, 0.02, s)
        out.append(a.astype(dtype))
    return out


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_float32(name):
    build, shapes = OP_CASES[name]
    _check_op(build, _inputs(shapes, np.float32, 1), h=1e-3, tol=1e-2)


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_float64(name):
    build, shapes = OP_CASES[name]
    with precision(np.float64):
        _check_op(build, _inputs(shapes, np.float64, 2), h=1e-6, tol=1e-5)


def test_softmax_crossentropy_gradient_matches_fd_float32():
    gen = np.random.default_rng(3)
    logits = gen.standard_normal((4, 2)).astype(np.float32)
    labels = np.array([0, 1, 1, 0])
    t = Tensor(logits.copy(), requires_grad=True)
    ops.softmax_crossentropy(t, labels).backward()
    with precision(np.float64):
        numeric = central_difference(lambda a: ops.softmax_crossentropy(Tensor(a), labels).item(), logits.astype(np.float64), range(8), 1e-3)
    assert relative_error(t.grad.reshape(-1), numeric).max() < 1e-3
    p = ops.softmax(logits.astype(np.float64))
    onehot = np.eye(2)[labels]
    np.testing.assert_allclose(t.grad, (p - onehot) / 4, rtol=1e-5, atol=1e-7)


def test_crossentropy_reference_values():
    loss = ops.softmax_crossentropy(Tensor(np.zeros((1, 2), np.float32)), [0]).item()
    assert abs(loss - math.log(2)) < 1e-6
    big = ops.softmax_crossentropy(Tensor(np.array([[1000.0, -1000.0]], np.float32)), [0])
    assert big.item() == pytest.approx(0.0, abs=1e-6) and np.isfinite(big.item())
    with pytest.raises(ValueError):
        ops.softmax_crossentropy(Tensor(np.zeros((1, 2), np.float32)), [2])


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.integers(0, 1))
def test_softmax_rows_sum_to_one_and_loss_nonnegative(row, label):
    logits = np.array([row], dtype=np.float32)
    assert abs(ops.softmax(logits).sum() - 1) < 1e-6
    assert ops.softmax_crossentropy(Tensor(logits), [label]).item() >= 0


def test_backward_basics():
    x = Tensor(np.ones((2, 3), np.float32), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))
    y = Tensor(np.array([1.0, 2.0, 3.0], np.float32), requires_grad=True)
    (y * y).sum().backward()
    np.testing.assert_array_equal(y.grad, [2, 4, 6])
    (y * y).sum().backward()
    np.testing.assert_array_equal(y.grad, [4, 8, 12])  # accumulates
    with pytest.raises(ValueError):
        (y * y).backward()


def test_shared_subexpression_visited_once():
    x = Tensor(np.array([2.0], np.float32), requires_grad=True)
    a = x * x
    (a + a).sum().backward()
    np.testing.assert_array_equal(x.grad, [8.0])


def test_conv_shapes_and_zero_kernel():
    x = Tensor(np.random.default_rng(0).uniform(size=(1, 1, 64, 64)).astype(np.float32))
    k = Tensor(np.zeros((8, 1, 3, 3), np.float32))
    same = ops.conv2d(x, k, None, "same")
    assert same.shape == (1, 8, 64, 64) and not same.data.any()
    assert ops.conv2d(x, Tensor(np.ones((5, 1, 3, 3), np.float32)), None, "valid").shape == (1, 5, 62, 62)
    with pytest.raises(ShapeError):
        ops.conv2d(x, Tensor(np.zeros((2, 3, 3, 3), np.float32)))


def test_conv_against_direct_loop():
    gen = np.random.default_rng(4)
    x = gen.standard_normal((2, 3, 5, 6))
    k = gen.standard_normal((4, 3, 3, 3))
    b = gen.standard_normal(4)
    with precision(np.float64):
        out = ops.conv2d(Tensor(x), Tensor(k), Tensor(b), "same").data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 5, 6))
    for n in range(2):
        for o in range(4):
            for i in range(5):
                for j in range(6):
                    ref[n, o, i, j] = np.sum(xp[n, :, i : i + 3, j : j + 3] * k[o]) + b[o]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_conv_is_linear_in_input(a, b, seed):
    gen = np.random.default_rng(seed)
    x1, x2 = gen.uniform(size=(2, 1, 2, 8, 8)).astype(np.float32)
    k = Tensor(gen.standard_normal((3, 2, 3, 3)).astype(np.float32))
    lhs = ops.conv2d(Tensor((a * x1 + b * x2).astype(np.float32)), k).data
    rhs = a * ops.conv2d(Tensor(x1), k).data + b * ops.conv2d(Tensor(x2), k).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-4)


def test_maxpool_values_and_tie_rule():
    x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(ops.maxpool2d(Tensor(x)).data[0, 0], [[5, 7], [13, 15]])
    c = Tensor(np.ones((1, 1, 4, 4), np.float32), requires_grad=True)
    out = ops.maxpool2d(c)
    np.testing.assert_array_equal(out.data, np.ones((1, 1, 2, 2)))
    out.sum().backward()
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1
    np.testing.assert_array_equal(c.grad[0, 0], expected)
    assert ops.maxpool2d(Tensor(np.zeros((1, 1, 64, 64), np.float32))).shape == (1, 1, 32, 32)
    assert ops.maxpool2d(Tensor(np.zeros((1, 1, 5, 5), np.float32)), 1).shape == (1, 1, 4, 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2]))
def test_maxpool_routes_gradient_to_argmax_only(seed, stride):
    gen = np.random.default_rng(seed)
    x = Tensor(gen.integers(0, 4, (2, 2, 6, 6)).astype(np.float32), requires_grad=True)
    out = ops.maxpool2d(x, stride)
    g = gen.standard_normal(out.shape).astype(np.float32)
    out.backward(g)
    assert abs(x.grad.sum() - g.sum()) < 1e-4
    # routed cells hold the window maximum
    nz = x.grad != 0
    assert np.all(np.isin(x.data[nz], out.data)) if nz.any() else True


def test_dense_reference_values():
    eye = Tensor(np.eye(3, dtype=np.float32))
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    np.testing.assert_array_equal(ops.dense(x, eye, Tensor(np.zeros(3, np.float32))).data, x.data)
    b = Tensor(np.array([1.0, -2.0, 0.5], np.float32))
    np.testing.assert_array_equal(ops.dense(x, Tensor(np.zeros((3, 3), np.float32)), b).data, np.tile(b.data, (2, 1)))
    one = ops.dense(Tensor(np.array([[1.0, 2.0]], np.float32)), Tensor(np.ones((2, 1), np.float32)), Tensor(np.zeros(1, np.float32)))
    assert one.data.tolist() == [[3.0]]
    with pytest.raises(ShapeError):
        ops.dense(x, Tensor(np.zeros((4, 1), np.float32)), Tensor(np.zeros(1, np.float32)))


def test_adam_single_step_hand_computation():
    p = {"w": Tensor(np.array([1.0], np.float32), requires_grad=True)}
    state = AdamState(learning_rate=1e-4, beta1=0.99, beta2=0.999, epsilon=1e-8)
    adam_step(p, {"w": np.array([1.0], np.float32)}, state)
    m_hat = (1 - 0.99) * 1.0 / (1 - 0.99)
    v_hat = (1 - 0.999) * 1.0 / (1 - 0.999)
    expected = 1.0 - 1e-4 * m_hat / (math.sqrt(v_hat) + 1e-8)
    assert abs(float(p["w"].data[0]) - expected) < 1e-7  # float32 storage: one ulp at 1.0 is 1.2e-7
    with precision(np.float64):
        q = {"w": Tensor(np.array([1.0]), requires_grad=True)}
        adam_step(q, {"w": np.array([1.0])}, AdamState())
        assert abs(float(q["w"].data[0]) - expected) < 1e-9
    assert state.step_count == 1


def test_adam_zero_gradient_and_descent():
    p = {"w": Tensor(np.array([0.5, -0.5], np.float32), requires_grad=True)}
    state = AdamState()
    adam_step(p, {"w": np.zeros(2, np.float32)}, state)
    np.testing.assert_array_equal(p["w"].data, [0.5, -0.5])
    prev = p["w"].data.copy()
    for _ in range(2):
        adam_step(p, {"w": np.array([1.0, -1.0], np.float32)}, state)
        assert p["w"].data[0] < prev[0] and p["w"].data[1] > prev[1]
        prev = p["w"].data.copy()
    assert state.step_count == 3


def test_adam_rejects_non_finite_gradient_naming_parameter():
    p = {"conv1.weight": Tensor(np.zeros(2, np.float32), requires_grad=True)}
    state = AdamState()
    with pytest.raises(UpdateError, match="conv1.weight"):
        adam_step(p, {"conv1.weight": np.array([np.nan, 0.0], np.float32)}, state)
    assert state.step_count == 0 and not p["conv1.weight"].data.any()


def test_precision_context_restores_dtype():
    assert get_dtype() == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert get_dtype() == np.float32


def test_engine_is_deterministic():
    gen = np.random.default_rng(5)
    x = gen.uniform(size=(2, 1, 8, 8)).astype(np.float32)
    k = gen.standard_normal((3, 1, 3, 3)).astype(np.float32)
    a = ops.maxpool2d(ops.relu(ops.conv2d(Tensor(x), Tensor(k)))).data
    b = ops.maxpool2d(ops.relu(ops.conv2d(Tensor(x), Tensor(k)))).data
    assert a.tobytes() == b.tobytes()
