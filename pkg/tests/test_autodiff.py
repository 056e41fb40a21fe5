import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crowdner import autodiff as ad


def scalarize(node, weights):
    """Weighted sum of all entries as a graph scalar via random weights,
    which exposes backward bugs a plain sum would hide."""
    w = ad.tensor(weights)
    prod = ad.pointwise_mul(node, w)
    ones_left = ad.tensor(np.ones((1, prod.shape[0])))
    ones_right = ad.tensor(np.ones((prod.shape[1], 1)))
    return ad.matmul(ones_left, ad.matmul(prod, ones_right))


def fd_check(build, leaves, h=1e-5, tol=1e-6):
    """Central finite differences on every coordinate of every leaf."""
    ad.backward(build())
    for leaf in leaves:
        analytic = leaf.grad.copy()
        for idx in np.ndindex(*leaf.value.shape):
            orig = leaf.value[idx]
            leaf.value[idx] = orig + h
            up = build().value[0, 0]
            leaf.value[idx] = orig - h
            down = build().value[0, 0]
            leaf.value[idx] = orig
            numeric = (up - down) / (2 * h)
            a = analytic[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
            assert rel <= tol, f"{idx}: analytic {a} vs numeric {numeric}"


RNG = np.random.default_rng(42)


def leaf(shape):
    return ad.tensor(RNG.uniform(-1.5, 1.5, size=shape))


class TestForwardExamples:
    def test_tanh_zero(self):
        assert np.array_equal(ad.tanh(ad.tensor(np.zeros((3, 1)))).value, np.zeros((3, 1)))

    def test_matmul_identity(self):
        v = leaf((2, 1))
        out = ad.matmul(ad.tensor(np.eye(2)), v)
        assert np.allclose(out.value, v.value)

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 1\)"):
            ad.matmul(leaf((2, 1)), leaf((2, 1)))

    def test_concat_rows_shape(self):
        assert ad.concat_rows(leaf((2, 1)), leaf((3, 1))).shape == (5, 1)

    def test_logsumexp_pair_of_zeros(self):
        out = ad.logsumexp_rows(ad.tensor(np.zeros((2, 1))))
        assert out.value[0, 0] == pytest.approx(math.log(2.0), abs=1e-12)

    def test_logsumexp_single_is_exact(self):
        x = ad.tensor([[1.2345678901234567]])
        assert ad.logsumexp_rows(x).value[0, 0] == x.value[0, 0]

    def test_logsumexp_no_overflow(self):
        out = ad.logsumexp_rows(ad.tensor([[1000.0], [1000.0]]))
        assert out.value[0, 0] == pytest.approx(1000.0 + math.log(2.0))

    def test_max_pool_matrix(self):
        out = ad.max_pool_time(ad.tensor([[1.0, 5.0], [3.0, 2.0]]))
        assert out.value.tolist() == [[3.0, 5.0]]

    def test_max_pool_list_single(self):
        v = leaf((3, 1))
        out = ad.max_pool_time([v])
        assert np.array_equal(out.value, v.value)

    def test_max_pool_empty_errors(self):
        with pytest.raises(ValueError):
            ad.max_pool_time([])

    def test_tensor_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ad.tensor([[np.nan]])
        with pytest.raises(ValueError):
            ad.tensor([[np.inf]])


class TestGradReverse:
    def test_forward_bitwise_identity(self):
        v = leaf((4, 3))
        out = ad.grad_reverse(v)
        assert out.value is v.value

    def test_backward_negates(self):
        # f(x) = sum(3 * reverse(x)): df/dx should be -3
        x = leaf((2, 1))
        out = ad.pointwise_mul(ad.grad_reverse(x), ad.tensor([[3.0], [3.0]]))
        ad.backward(ad.matmul(ad.tensor(np.ones((1, 2))), out))
        assert np.allclose(x.grad, -3.0)

    def test_double_reversal_is_identity_gradient(self):
        x = leaf((2, 1))
        out = ad.grad_reverse(ad.grad_reverse(x))
        ad.backward(ad.matmul(ad.tensor(np.ones((1, 2))), out))
        assert np.allclose(x.grad, 1.0)


class TestDropout:
    def test_p_zero_identity(self):
        x = leaf((4, 4))
        out = ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0))
        assert np.array_equal(out.value, x.value)

    def test_inference_identity(self):
        x = leaf((4, 4))
        out = ad.dropout(x, 0.9, training=False)
        assert np.array_equal(out.value, x.value)

    def test_zero_fraction_concentrates(self):
        x = ad.tensor(np.ones((1000, 100)))
        out = ad.dropout(x, 0.2, training=True, rng=np.random.default_rng(31))
        frac = float(np.mean(out.value == 0.0))
        assert abs(frac - 0.2) < 0.01
        survivors = out.value[out.value != 0.0]
        assert np.allclose(survivors, 1.0 / 0.8)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            ad.dropout(leaf((2, 2)), 1.0, training=True, rng=np.random.default_rng(0))

    def test_training_requires_rng(self):
        with pytest.raises(ValueError):
            ad.dropout(leaf((2, 2)), 0.5, training=True)


class TestBackwardMechanics:
    def test_product_rule(self):
        x = ad.tensor([[2.0]])
        y = ad.tensor([[3.0]])
        ad.backward(ad.pointwise_mul(x, y))
        assert x.grad[0, 0] == 3.0
        assert y.grad[0, 0] == 2.0

    def test_logsumexp_grad_is_softmax(self):
        a = ad.tensor([[0.3], [1.1]])
        ad.backward(ad.logsumexp_rows(a))
        e = np.exp(a.value - a.value.max())
        assert np.allclose(a.grad, e / e.sum())

    def test_shared_node_counted_once(self):
        # loss = x*x + x*x with shared subexpression: d/dx = 4x
        x = ad.tensor([[1.5]])
        sq = ad.pointwise_mul(x, x)
        ad.backward(ad.add(sq, sq))
        assert x.grad[0, 0] == pytest.approx(4 * 1.5)

    def test_diamond_graph_matches_manual_chain_rule(self):
        # y = tanh(x); loss = y * (y + x): dl/dx = (2y + x) * (1 - y^2) + y
        x = ad.tensor([[0.7]])
        y = ad.tanh(x)
        ad.backward(ad.pointwise_mul(y, ad.add(y, x)))
        yv = math.tanh(0.7)
        expected = (2 * yv + 0.7) * (1 - yv**2) + yv
        assert x.grad[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_repeated_backward_accumulates(self):
        x = ad.tensor([[2.0]])
        loss = ad.pointwise_mul(x, x)
        ad.backward(loss)
        g1 = x.grad.copy()
        loss2 = ad.pointwise_mul(x, x)
        ad.backward(loss2)
        assert np.allclose(x.grad, 2 * g1)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError):
            ad.backward(leaf((2, 2)))

    def test_max_pool_tie_goes_to_first(self):
        a = ad.tensor(np.ones((3, 2)))
        ad.backward(scalarize(ad.max_pool_time(a), np.ones((1, 2))))
        assert np.array_equal(a.grad, [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])


class TestFiniteDifferences:
    """Central-difference oracle for every primitive's backward rule."""

    def test_add(self):
        a, b = leaf((3, 2)), leaf((3, 2))
        w = RNG.normal(size=(3, 2))
        fd_check(lambda: scalarize(ad.add(a, b), w), [a, b])

    def test_sub(self):
        a, b = leaf((3, 2)), leaf((3, 2))
        w = RNG.normal(size=(3, 2))
        fd_check(lambda: scalarize(ad.sub(a, b), w), [a, b])

    def test_add_colvec(self):
        a, v = leaf((3, 4)), leaf((3, 1))
        w = RNG.normal(size=(3, 4))
        fd_check(lambda: scalarize(ad.add_colvec(a, v), w), [a, v])

    def test_matmul(self):
        a, b = leaf((3, 4)), leaf((4, 2))
        w = RNG.normal(size=(3, 2))
        fd_check(lambda: scalarize(ad.matmul(a, b), w), [a, b])

    def test_pointwise_mul(self):
        a, b = leaf((3, 3)), leaf((3, 3))
        w = RNG.normal(size=(3, 3))
        fd_check(lambda: scalarize(ad.pointwise_mul(a, b), w), [a, b])

    def test_tanh(self):
        a = leaf((4, 2))
        w = RNG.normal(size=(4, 2))
        fd_check(lambda: scalarize(ad.tanh(a), w), [a])

    def test_sigmoid(self):
        a = leaf((4, 2))
        w = RNG.normal(size=(4, 2))
        fd_check(lambda: scalarize(ad.sigmoid(a), w), [a])

    def test_concat_rows(self):
        a, b = leaf((2, 3)), leaf((4, 3))
        w = RNG.normal(size=(6, 3))
        fd_check(lambda: scalarize(ad.concat_rows(a, b), w), [a, b])

    def test_concat_cols(self):
        a, b = leaf((3, 2)), leaf((3, 4))
        w = RNG.normal(size=(3, 6))
        fd_check(lambda: scalarize(ad.concat_cols(a, b), w), [a, b])

    def test_transpose(self):
        a = leaf((3, 5))
        w = RNG.normal(size=(5, 3))
        fd_check(lambda: scalarize(ad.transpose(a), w), [a])

    def test_row(self):
        a = leaf((4, 3))
        w = RNG.normal(size=(1, 3))
        fd_check(lambda: scalarize(ad.row(a, 2), w), [a])

    def test_block(self):
        a = leaf((5, 5))
        w = RNG.normal(size=(2, 3))
        fd_check(lambda: scalarize(ad.block(a, 1, 3, 2, 5), w), [a])

    def test_pick(self):
        a = leaf((4, 4))
        fd_check(lambda: ad.pick(a, 1, 3), [a])

    def test_logsumexp_rows(self):
        a = leaf((5, 3))
        w = RNG.normal(size=(1, 3))
        fd_check(lambda: scalarize(ad.logsumexp_rows(a), w), [a])

    def test_max_pool_matrix(self):
        a = leaf((5, 3))
        w = RNG.normal(size=(1, 3))
        fd_check(lambda: scalarize(ad.max_pool_time(a), w), [a])

    def test_max_pool_list(self):
        xs = [leaf((3, 1)) for _ in range(4)]
        w = RNG.normal(size=(3, 1))
        fd_check(lambda: scalarize(ad.max_pool_time(xs), w), xs)

    def test_grad_reverse(self):
        # FD of f(reverse(x)) sees the true gradient; analytic is its negation
        a = leaf((3, 2))
        w = RNG.normal(size=(3, 2))
        ad.backward(scalarize(ad.grad_reverse(a), w))
        assert np.allclose(a.grad, -w)

    def test_take_rows(self):
        a = leaf((5, 3))
        ids = np.array([0, 2, 2, 4])
        w = RNG.normal(size=(4, 3))
        fd_check(lambda: scalarize(ad.take_rows(a, ids), w), [a])

    def test_window_stack(self):
        a = leaf((5, 2))
        w = RNG.normal(size=(5, 10))
        fd_check(lambda: scalarize(ad.window_stack(a, 2), w), [a])

    def test_linear_with_bias(self):
        x, wgt, b = leaf((4, 3)), leaf((2, 3)), leaf((2, 1))
        w = RNG.normal(size=(4, 2))
        fd_check(lambda: scalarize(ad.linear(x, wgt, b), w), [x, wgt, b])

    def test_linear_no_bias(self):
        x, wgt = leaf((4, 3)), leaf((2, 3))
        w = RNG.normal(size=(4, 2))
        fd_check(lambda: scalarize(ad.linear(x, wgt), w), [x, wgt])

    def test_composite_graph(self):
        a, b = leaf((3, 3)), leaf((3, 1))
        w = RNG.normal(size=(1, 1))
        def build():
            h = ad.tanh(ad.matmul(a, b))
            s = ad.sigmoid(ad.add(h, b))
            return scalarize(ad.logsumexp_rows(ad.pointwise_mul(h, s)), w)
        fd_check(build, [a, b])


@settings(max_examples=150, deadline=None)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(1, 6), st.integers(1, 4)),
        elements=st.floats(-100, 100),
    )
)
def test_logsumexp_bounds(x):
    out = ad.logsumexp_rows(ad.tensor(x)).value[0]
    mx = x.max(axis=0)
    n = x.shape[0]
    assert np.all(out >= mx - 1e-12)
    assert np.all(out <= mx + math.log(n) + 1e-12)


def test_take_rows_repeated_id_grad_sums():
    a = leaf((4, 2))
    out = ad.take_rows(a, np.array([1, 1]))
    ad.backward(scalarize(out, np.ones((2, 2))))
    assert np.allclose(a.grad[1], 2.0)
    assert np.allclose(a.grad[0], 0.0)


def test_take_rows_empty():
    a = leaf((4, 2))
    assert ad.take_rows(a, np.array([], dtype=int)).shape == (0, 2)


def test_take_rows_out_of_range():
    with pytest.raises(ValueError):
        ad.take_rows(leaf((4, 2)), np.array([4]))
