import math

import numpy as np
import pytest

from dqgen import autodiff as ad
from dqgen.autodiff import Tensor
from dqgen.errors import ContractError


def test_matmul_hand_arithmetic():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    out = ad.matmul(a, b)
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    eye = Tensor(np.eye(2))
    assert np.array_equal(ad.matmul(eye, x).data, x.data)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ValueError) as exc:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(exc.value)


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    a0 = rng.normal(size=(3, 4))
    b = Tensor(rng.normal(size=(4, 2)))
    err = ad.grad_check(lambda a: ad.tsum(ad.matmul(a, b)), Tensor(a0), eps=1e-6)
    assert err < 1e-6


def test_elementwise_analytic_points():
    assert ad.sigmoid(Tensor([0.0])).data[0] == 0.5
    assert ad.tanh(Tensor([0.0])).data[0] == 0.0
    assert ad.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data.tolist() == [4.0, 6.0]


def test_elementwise_shape_error():
    with pytest.raises(ValueError):
        ad.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))


def test_scalar_broadcast_and_gradient():
    s = Tensor([2.0], requires_grad=True)
    v = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    out = ad.tsum(ad.mul(s, v))
    out.backward()
    assert np.allclose(s.grad, [6.0])
    assert np.allclose(v.grad, [2.0, 2.0, 2.0])


def test_concat_shapes_and_identity():
    a = Tensor(np.zeros(300))
    b = Tensor(np.zeros(50))
    assert ad.concat([a, b]).shape == (350,)
    x = Tensor([1.0, 2.0])
    assert np.array_equal(ad.concat([x]).data, x.data)


def test_concat_mismatch_error():
    with pytest.raises(ValueError):
        ad.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4)))], axis=0)


def test_concat_gradient_slices_back():
    rng = np.random.default_rng(1)
    a0 = rng.normal(size=4)
    b = Tensor(rng.normal(size=3))
    err = ad.grad_check(lambda a: ad.tsum(ad.mul(ad.concat([a, b]), ad.concat([a, b]))),
                        Tensor(a0), eps=1e-6)
    assert err < 1e-6
    # each input receives exactly its slice of the output gradient
    at = Tensor(a0, requires_grad=True)
    bt = Tensor(b.data.copy(), requires_grad=True)
    out = ad.concat([at, bt])
    seed = np.arange(7.0)
    out.backward(seed)
    assert np.array_equal(at.grad, seed[:4])
    assert np.array_equal(bt.grad, seed[4:])


def test_softmax_symmetry_and_stability():
    assert np.allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    assert np.allclose(ad.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])


def test_softmax_hand_analytic():
    out = ad.softmax(Tensor([0.0, math.log(3.0)]))
    assert np.allclose(out.data, [0.25, 0.75], atol=1e-12)


def test_softmax_sums_to_one_property():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(scale=50.0, size=rng.integers(1, 9))
        out = ad.softmax(Tensor(x)).data
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) < 1e-9


def test_embedding_lookup_gather_and_empty():
    table = Tensor(np.eye(4))
    out = ad.embedding_lookup(table, [0])
    assert np.array_equal(out.data, [[1.0, 0.0, 0.0, 0.0]])
    empty = ad.embedding_lookup(table, [])
    assert empty.shape == (0, 4)


def test_embedding_lookup_out_of_range_names_id():
    with pytest.raises(IndexError) as exc:
        ad.embedding_lookup(Tensor(np.eye(3)), [7])
    assert "7" in str(exc.value)


def test_embedding_repeated_id_accumulates():
    table = Tensor(np.random.default_rng(3).normal(size=(4, 3)), requires_grad=True)
    out = ad.embedding_lookup(table, [2, 2])
    seed = np.array([[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]])
    out.backward(seed)
    assert np.allclose(table.grad[2], [11.0, 22.0, 33.0])
    err = ad.grad_check(lambda t: ad.tsum(ad.mul(ad.embedding_lookup(t, [2, 2]),
                                                 ad.embedding_lookup(t, [2, 2]))),
                        Tensor(table.data.copy()), eps=1e-6)
    assert err < 1e-6


def test_nll_loss_cases():
    one_hot = Tensor([0.0, 1.0, 0.0])
    assert abs(ad.nll_loss(one_hot, 1).item()) < 1e-9
    uniform = Tensor([0.25] * 4)
    assert abs(ad.nll_loss(uniform, 2).item() - math.log(4.0)) < 1e-9
    dist = Tensor([0.25, 0.75])
    assert abs(ad.nll_loss(dist, 1).item() - (-math.log(0.75))) < 1e-9


def test_nll_loss_target_out_of_range():
    with pytest.raises(IndexError):
        ad.nll_loss(Tensor([0.5, 0.5]), 2)


def test_nll_loss_rejects_non_distribution():
    with pytest.raises(ValueError):
        ad.nll_loss(Tensor([0.5, 0.2]), 0)


def test_grad_check_quadratic():
    err = ad.grad_check(lambda x: ad.tsum(ad.mul(x, x)), Tensor([3.0]), eps=1e-6)
    assert err < 1e-6


def test_grad_check_constant_function():
    err = ad.grad_check(lambda x: ad.constant(5.0), Tensor([1.0, 2.0]), eps=1e-4)
    assert err == 0.0


def test_grad_check_rejects_non_scalar():
    with pytest.raises(ContractError):
        ad.grad_check(lambda x: x, Tensor([1.0, 2.0]), eps=1e-4)


def test_fanout_gradient_accumulates_per_consumer():
    x = Tensor([1.5], requires_grad=True)
    terms = [ad.mul(x, ad.constant([float(k)])) for k in range(1, 6)]
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    ad.tsum(total).backward()
    assert np.allclose(x.grad, [15.0])  # 1+2+3+4+5


@pytest.mark.parametrize("op", ["row", "slice1d", "transpose", "reshape", "scatter_sum", "sigmoid", "tanh", "softmax", "sub"])
def test_per_op_gradcheck(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    x0 = rng.normal(size=(3, 4)) if op in ("row", "transpose", "reshape") else rng.normal(size=6)
    other = Tensor(rng.normal(size=x0.shape))

    def fn(x):
        if op == "row":
            y = ad.row(x, 1)
        elif op == "slice1d":
            y = ad.slice1d(x, 1, 4)
        elif op == "transpose":
            y = ad.transpose(x)
        elif op == "reshape":
            y = ad.reshape(x, (4, 3))
        elif op == "scatter_sum":
            y = ad.scatter_sum(x, [0, 1, 1, 2, 0, 3], 5)
        elif op == "sigmoid":
            y = ad.sigmoid(x)
        elif op == "tanh":
            y = ad.tanh(x)
        elif op == "softmax":
            y = ad.softmax(x)
        else:
            y = ad.sub(x, other)
        return ad.tsum(ad.mul(y, y))

    assert ad.grad_check(fn, Tensor(x0), eps=1e-6) < 1e-6


def test_non_finite_raises():
    with pytest.raises(ValueError):
        Tensor([np.inf])
    big = Tensor([1e308])
    with np.errstate(over="ignore"), pytest.raises(ValueError):
        ad.mul(big, big)


def test_operations_deterministic():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(5, 5))
    b = rng.normal(size=(5, 5))
    r1 = ad.matmul(Tensor(a), Tensor(b)).data
    r2 = ad.matmul(Tensor(a.copy()), Tensor(b.copy())).data
    assert np.array_equal(r1, r2)


def test_no_grad_disables_recording():
    x = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        out = ad.mul(x, x)
    assert not out.requires_grad
    assert out.parents == ()
