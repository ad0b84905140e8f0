import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from helpers import KERNELS, TOL32, TOL64, kernel_errors
from pier.exceptions import DegenerateVectorError, EmptyLossError, InvalidInputError
from pier.numerics import Adam, Tensor, backward, check_gradients, get_tape, no_grad
from pier.numerics import kernels as K


def _softmax_decimal(xs):
    getcontext().prec = 50
    es = [Decimal(x).exp() for x in xs]
    total = sum(es)
    return [float(e / total) for e in es]


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_array_equal(K.softmax(np.array([0.0, 0.0])).data, [0.5, 0.5])

    def test_singleton(self):
        assert K.softmax(np.array([7.3])).data.tolist() == [1.0]

    def test_high_precision_oracle(self):
        got = K.softmax(np.array([1.0, 2.0, 3.0], dtype=np.float64)).data
        np.testing.assert_allclose(got, _softmax_decimal([1, 2, 3]), rtol=0, atol=1e-15)
        np.testing.assert_allclose(got, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_sums_to_one_on_wide_inputs(self, rng):
        x = rng.uniform(-50, 50, size=(200, 7)).astype(np.float32)
        p = K.softmax(x).data
        assert np.all(np.abs(p.sum(axis=-1) - 1.0) < 1e-6)
        assert np.all(p >= 0) and np.all(p <= 1)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidInputError):
            K.softmax(np.array([]))
        with pytest.raises(InvalidInputError):
            K.softmax(np.array([0.0, np.nan]))
        with pytest.raises(InvalidInputError):
            K.softmax(np.array([np.inf, 0.0]))


class TestCosine:
    def test_examples(self, rng):
        v = rng.normal(size=6)
        assert K.cosine_similarity(v, v).item() == pytest.approx(1.0, abs=1e-12)
        e1, e2 = np.eye(3)[0], np.eye(3)[1]
        assert K.cosine_similarity(e1, e2).item() == 0.0
        assert K.cosine_similarity(v, -v).item() == pytest.approx(-1.0, abs=1e-12)

    def test_symmetric_and_scale_invariant(self, rng):
        for _ in range(20):
            u, v = rng.normal(size=5), rng.normal(size=5)
            a, b = rng.uniform(0.1, 10, size=2)
            c = K.cosine_similarity(u, v).item()
            assert K.cosine_similarity(v, u).item() == pytest.approx(c, abs=1e-12)
            assert K.cosine_similarity(a * u, b * v).item() == pytest.approx(c, abs=1e-6)

    def test_degenerate_norm_raises(self):
        with pytest.raises(DegenerateVectorError):
            K.cosine_similarity(np.zeros(3), np.ones(3))
        with pytest.raises(DegenerateVectorError):
            K.cosine_similarity(np.ones(3), np.full(3, 1e-10))


class TestCrossEntropy:
    def test_point_mass_is_near_zero(self):
        logits = np.full((3, 4), -30.0)
        targets = np.array([0, 2, 3])
        logits[np.arange(3), targets] = 30.0
        assert K.cross_entropy(logits, targets).item() < 1e-20

    def test_uniform_is_log_vocab(self):
        assert K.cross_entropy(np.zeros((5, 4)), np.arange(5) % 4).item() == pytest.approx(math.log(4), abs=1e-7)

    def test_explicit_oracle(self, rng):
        logits = rng.normal(size=(2, 3))
        targets = np.array([2, 0])
        want = 0.0
        for row, t in zip(logits.tolist(), targets):
            want -= math.log(math.exp(row[t]) / sum(math.exp(z) for z in row))
        want /= 2
        assert K.cross_entropy(logits, targets).item() == pytest.approx(want, abs=1e-12)

    def test_mask_excludes_positions(self, rng):
        logits = rng.normal(size=(4, 5))
        targets = np.array([1, 2, 3, 4])
        mask = np.array([True, False, True, False])
        full = K.cross_entropy(logits[[0, 2]], targets[[0, 2]]).item()
        assert K.cross_entropy(logits, targets, mask).item() == pytest.approx(full, abs=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyLossError):
            K.cross_entropy(np.zeros((2, 3)), np.array([0, 1]), np.zeros(2, dtype=bool))
        with pytest.raises(InvalidInputError):
            K.cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


class TestMeanPool:
    def test_examples(self, rng):
        v = rng.normal(size=4)
        np.testing.assert_array_equal(K.mean_pool([v]).data, v)
        np.testing.assert_array_equal(K.mean_pool([v, -v]).data, np.zeros(4))
        np.testing.assert_array_equal(K.mean_pool([np.array([1.0, 3.0]), np.array([3.0, 5.0])]).data, [2.0, 4.0])

    def test_permutation_invariant(self, rng):
        vs = [rng.normal(size=3) for _ in range(5)]
        a = K.mean_pool(vs).data
        b = K.mean_pool([vs[i] for i in rng.permutation(5)]).data
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            K.mean_pool([])
        with pytest.raises(InvalidInputError):
            K.mean_pool([np.ones(2), np.ones(3)])


class TestBackward:
    def test_sum_gives_ones(self):
        v = Tensor(np.arange(5.0), requires_grad=True, dtype=np.float64)
        backward(K.sum(v))
        np.testing.assert_array_equal(v.grad, np.ones(5))

    def test_cosine_gradient_at_orthogonal_unit_vectors(self):
        u = np.array([1.0, 0.0, 0.0])
        c = np.array([0.0, 1.0, 0.0])
        t = Tensor(u, requires_grad=True, dtype=np.float64)
        backward(K.cosine_similarity(t, c))
        np.testing.assert_allclose(t.grad, c, atol=1e-12)
        assert check_gradients(lambda a: K.cosine_similarity(a, c), [u]) < TOL64

    def test_cross_entropy_gradient(self, rng):
        targets = np.array([1, 0, 2])
        assert check_gradients(lambda z: K.cross_entropy(z, targets), [rng.normal(size=(3, 4))]) < TOL64

    def test_non_scalar_loss_rejected(self):
        v = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidInputError):
            backward(K.mul(v, 2.0))

    def test_tape_cleared_after_backward(self):
        v = Tensor(np.ones(3), requires_grad=True)
        backward(K.sum(K.mul(v, v)))
        assert len(get_tape()) == 0

    def test_no_grad_records_nothing(self):
        v = Tensor(np.ones(3), requires_grad=True)
        get_tape().clear()
        with no_grad():
            K.sum(K.mul(v, v))
        assert len(get_tape()) == 0

    def test_frozen_inputs_get_no_gradient(self, rng):
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)))
        backward(K.sum(K.linear(x, w)))
        assert x.grad is not None and w.grad is None

    def test_gradients_stay_finite(self, rng):
        x = Tensor(rng.normal(size=(4, 6)) * 30, requires_grad=True)
        backward(K.cross_entropy(x, np.array([0, 1, 2, 3])))
        assert np.isfinite(x.grad).all()


class TestTensor:
    def test_dtype_defaults(self):
        # non-float data falls back to 32-bit; float arrays keep their precision
        assert Tensor(np.arange(3)).dtype == np.float32
        assert Tensor(np.ones(3, dtype=np.float64)).dtype == np.float64
        assert Tensor(np.arange(3), dtype=np.float64).dtype == np.float64

    def test_grad_shape_matches(self, rng):
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        backward(K.sum(K.tanh(x)))
        assert x.grad.shape == x.shape


@pytest.mark.parametrize("name", KERNELS)
def test_kernel_matches_finite_differences(name):
    err64, err32 = kernel_errors(name)
    assert err64 <= TOL64, f"{name}: 64-bit error {err64:.2e}"
    assert err32 <= TOL32, f"{name}: 32-bit error {err32:.2e}"


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([3.0, -0.5])
    opt.step()
    # bias-corrected first step is lr * sign(grad)
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-7)
