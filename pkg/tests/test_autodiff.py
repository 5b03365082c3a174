import numpy as np
import pytest

from gridshed import autodiff as ad
from gridshed.autodiff import Tensor

from gradcheck import max_rel_error


def param(shape, seed=0, scale=1.0):
    return Tensor(np.random.default_rng(seed).normal(scale=scale, size=shape), requires_grad=True)


def test_forward_examples():
    np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 2.0])).data, [0, 2])
    np.testing.assert_allclose(ad.row_softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    np.testing.assert_allclose(ad.layer_norm(Tensor([[1.0, 3.0]]), eps=0.0).data, [[-1, 1]])
    np.testing.assert_allclose(ad.layer_norm(Tensor([[1.0, 3.0]])).data, [[-1, 1]], atol=1e-5)
    np.testing.assert_allclose(ad.sigmoid(Tensor([0.0, 800.0, -800.0])).data, [0.5, 1.0, 0.0])


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_mean_rows_gradient():
    x = param((5, 3))
    ad.sum_all(ad.mean_rows(x)).backward()
    np.testing.assert_allclose(x.grad, 1 / 5)


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        (param((2, 2)) * 2.0).backward()


def test_shape_errors():
    with pytest.raises(ValueError):
        ad.add(param((2, 3)), param((3, 2)))
    with pytest.raises(ValueError):
        ad.matmul(param((2, 3)), param((2, 3)))
    with pytest.raises(ValueError):
        ad.masked_row_softmax(param((2, 3)), np.ones((3, 2), bool))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    y = ad.row_softmax(Tensor(rng.normal(scale=30, size=(50, 17)))).data
    assert np.all(np.abs(y.sum(1) - 1) < 1e-12) and np.all(y >= 0)
    mask = rng.random((50, 17)) < 0.5
    mask[:, 0] = True
    ym = ad.masked_row_softmax(Tensor(rng.normal(size=(50, 17))), mask).data
    assert np.all(ym[~mask] == 0)
    assert np.all(np.abs(ym.sum(1) - 1) < 1e-12)


def test_fully_masked_row_is_zero():
    y = ad.masked_row_softmax(Tensor(np.ones((2, 3))), np.array([[True, False, True], [False] * 3]))
    np.testing.assert_allclose(y.data, [[0.5, 0, 0.5], [0, 0, 0]])


def test_layer_norm_mean_zero():
    y = ad.layer_norm(Tensor(np.random.default_rng(2).normal(5, 3, size=(40, 64)))).data
    assert np.all(np.abs(y.mean(1)) < 1e-9)


def test_masked_entries_get_zero_gradient():
    x = param((4, 5))
    mask = np.random.default_rng(3).random((4, 5)) < 0.6
    mask[:, 0] = True
    w = np.random.default_rng(4).normal(size=(4, 5))
    ad.sum_all(ad.mul(ad.masked_row_softmax(x, mask), w)).backward()
    assert np.all(x.grad[~mask] == 0)


W = np.random.default_rng(9).normal(size=(4, 5))
CASES = {
    "add_broadcast": lambda a, b: ad.add(a, ad.sum_axis(b, 0)),
    "sub": lambda a, b: ad.sub(a, b),
    "mul": lambda a, b: ad.mul(a, b),
    "scale": lambda a, b: ad.scale(a, -2.5),
    "square": lambda a, b: ad.square(a),
    "relu": lambda a, b: ad.relu(a),
    "sigmoid": lambda a, b: ad.sigmoid(a),
    "matmul": lambda a, b: ad.matmul(a, ad.transpose(b)),
    "row_softmax": lambda a, b: ad.row_softmax(a),
    "masked_softmax": lambda a, b: ad.masked_row_softmax(a, W > -0.5),
    "layer_norm": lambda a, b: ad.layer_norm(a, ad.sum_axis(b, 0), ad.mean_rows(b)),
    "concat_rows": lambda a, b: ad.concat_rows([a, b]),
    "concat_cols": lambda a, b: ad.concat_cols([a, b]),
    "mean_rows": lambda a, b: ad.mean_rows(a),
    "mean_all": lambda a, b: ad.mean_all(a),
    "reshape": lambda a, b: ad.reshape(a, (5, 4)),
    "gather_rows": lambda a, b: ad.gather_rows(a, [0, 2, 2, 3, 1, 0]),
    "segment_sum": lambda a, b: ad.segment_sum(a, [0, 1, 0, 2], 3),
    "segment_mean": lambda a, b: ad.segment_mean(a, [1, 1, 0, 2], 3),
    "segment_softmax": lambda a, b: ad.segment_softmax(ad.sum_axis(a, 1), [0, 0, 1, 1], 2),
    "pad_segments": lambda a, b: ad.pad_segments(a, [0, 1, 0, 1], 2),
    "bmm": lambda a, b: ad.bmm(ad.reshape(a, (2, 2, 5)), ad.transpose(ad.reshape(b, (2, 2, 5)))),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients(name):
    a, b = param((4, 5), 1), param((4, 5), 2)
    op = CASES[name]
    loss = lambda: ad.sum_all(ad.mul(op(a, b), np.random.default_rng(5).normal(size=op(a, b).shape)))
    assert max_rel_error(loss, [a, b]) < 1e-6


def test_shared_subexpression_accumulates():
    x = param((3, 3))
    y = ad.relu(x)
    loss = lambda: ad.sum_all(ad.mul(ad.relu(x), ad.sigmoid(ad.relu(x))))
    assert max_rel_error(loss, [x]) < 1e-6
    x.grad = None
    ad.sum_all(y + y).backward()
    np.testing.assert_allclose(x.grad, 2.0 * (x.data > 0))


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    state = ad.AdamState()
    for _ in range(5):
        ad.adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert state.step == 5


def test_adam_first_step_is_lr_sign():
    p = np.zeros(3)
    g = np.array([0.3, -7.0, 1e-3])
    ad.adam_step([p], [g], ad.AdamState(lr=1e-4))
    np.testing.assert_allclose(p, -1e-4 * np.sign(g), rtol=1e-4)


def test_adam_constant_gradient():
    p = np.zeros(2)
    state = ad.AdamState(lr=1e-3)
    g = np.array([2.0, -0.5])
    prev = p.copy()
    for _ in range(2000):
        prev = p.copy()
        ad.adam_step([p], [g], state)
    np.testing.assert_allclose(p - prev, -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        ad.adam_step([np.zeros(2)], [np.zeros(3)], ad.AdamState())


def test_adam_minimises_quadratic():
    x = Tensor(np.array([3.0, -4.0]), requires_grad=True)
    opt = ad.Adam([x], lr=0.05)
    for _ in range(1000):
        opt.zero_grad()
        ad.sum_all(ad.square(x)).backward()
        opt.step()
    assert np.all(np.abs(x.data) < 1e-2)
