"""Reverse-mode gradients of every primitive against finite differences."""

import math

import numpy as np
import pytest

from stcvae import autodiff as ad
from stcvae.autodiff import Tensor


def numeric_grad(fn, arrays, step=1e-6):
    """Central-difference gradients of scalar fn(list of ndarrays)."""
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(arrays)
            flat[i] = orig - step
            down = fn(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def check_op(build, shapes, seed=0, tol=1e-6):
    """Compare reverse-mode and numeric gradients of build(tensors).sum()."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]

    def scalar(arrs):
        ts = [Tensor(a) for a in arrs]
        out = build(*ts)
        return float(out.sum().data) if out.data.ndim else float(out.data)

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    (out.sum() if out.data.ndim else out).backward()
    numeric = numeric_grad(scalar, arrays)
    for t, num in zip(tensors, numeric):
        np.testing.assert_allclose(t.grad, num, rtol=tol, atol=tol)


class TestElementwiseOps:
    def test_add_broadcast(self):
        check_op(lambda a, b: a + b, [(3, 4), (4,)])

    def test_mul_broadcast(self):
        check_op(lambda a, b: a * b, [(3, 4), (3, 1)])

    def test_sub_and_div(self):
        check_op(lambda a, b: (a - b) / 2.0 + 3.0 / (b * b + 5.0), [(4,), (4,)])

    def test_power(self):
        check_op(lambda a: (a * a + 1.5) ** 0.5, [(5,)])

    def test_exp_log(self):
        check_op(lambda a: ad.log(ad.exp(a) + 1.0), [(6,)])

    def test_tanh(self):
        check_op(ad.tanh, [(7,)])

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal(50)
        a[np.abs(a) < 1e-3] += 0.1  # keep finite differences two-sided
        t = Tensor(a, requires_grad=True)
        ad.relu(t).sum().backward()
        np.testing.assert_array_equal(t.grad, (a > 0).astype(float))

    def test_leaky_relu(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal(50)
        a[np.abs(a) < 1e-3] += 0.1
        t = Tensor(a, requires_grad=True)
        ad.leaky_relu(t, 0.2).sum().backward()
        np.testing.assert_allclose(t.grad, np.where(a > 0, 1.0, 0.2))

    def test_softplus(self):
        check_op(ad.softplus, [(6,)])

    def test_softplus_no_overflow(self):
        t = Tensor(np.array([1000.0, -1000.0]))
        out = ad.softplus(t).data
        assert np.allclose(out, [1000.0, 0.0])
        assert np.all(np.isfinite(out))


class TestStructuralOps:
    def test_matmul(self):
        check_op(lambda a, b: a @ b, [(3, 4), (4, 2)])

    def test_sum_axis(self):
        check_op(lambda a: a.sum(axis=0) * 2.0, [(3, 4)])

    def test_mean(self):
        check_op(lambda a: a.mean(axis=1), [(3, 4)])
        check_op(lambda a: a.mean(), [(3, 4)])

    def test_reshape(self):
        check_op(lambda a: a.reshape(2, 6) @ np.ones((6, 1)), [(3, 4)])

    def test_getitem_slices_and_lists(self):
        check_op(lambda a: a[:, 1:3] * 2.0, [(3, 4)])
        check_op(lambda a: a[:, :, [0, 2]], [(2, 3, 4)])

    def test_getitem_duplicate_indices_accumulate(self):
        t = Tensor(np.arange(3.0), requires_grad=True)
        out = t[[0, 0, 2]].sum()
        out.backward()
        np.testing.assert_array_equal(t.grad, [2.0, 0.0, 1.0])

    def test_logsumexp_matches_numpy(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((4, 6))
        out = ad.logsumexp(Tensor(a), axis=1).data
        expect = np.log(np.exp(a).sum(axis=1))
        np.testing.assert_allclose(out, expect, rtol=1e-12)

    def test_logsumexp_grad(self):
        check_op(lambda a: ad.logsumexp(a, axis=1), [(4, 6)])

    def test_logsumexp_extreme_values_stable(self):
        a = np.array([[1000.0, 999.0], [-1000.0, -1001.0]])
        out = ad.logsumexp(Tensor(a), axis=1).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1000.0 + math.log(1 + math.exp(-1.0)))


class TestFusedPrimitives:
    def test_pairwise_density_examples(self):
        m, n = 3, 2
        mu = np.zeros((m, n))
        lv = np.zeros((m, n))
        z = np.zeros((m, n))
        out = ad.pairwise_gaussian_log_density(mu, lv, z).data
        # standard normal at its mean, per dimension
        np.testing.assert_allclose(out, -0.5 * math.log(2 * math.pi))

    def test_pairwise_density_sigma_shift(self):
        mu = np.zeros((1, 1))
        lv = np.zeros((1, 1))
        base = ad.pairwise_gaussian_log_density(mu, lv, np.zeros((1, 1))).data
        for k in (1.0, 2.0, 3.0):
            shifted = ad.pairwise_gaussian_log_density(
                mu, lv, np.full((1, 1), k)
            ).data
            assert shifted[0, 0, 0] - base[0, 0, 0] == pytest.approx(-k * k / 2)

    def test_pairwise_density_single_posterior(self):
        rng = np.random.default_rng(6)
        mu, lv, z = (rng.standard_normal((1, 4)) for _ in range(3))
        out = ad.pairwise_gaussian_log_density(mu, lv, z).data
        assert out.shape == (1, 1, 4)
        expect = -0.5 * (
            math.log(2 * math.pi) + lv + (z - mu) ** 2 * np.exp(-lv)
        )
        np.testing.assert_allclose(out[0, 0], expect[0])

    def test_pairwise_density_grad(self):
        check_op(
            lambda mu, lv, z: ad.pairwise_gaussian_log_density(mu, lv, z),
            [(4, 3), (4, 3), (4, 3)],
            tol=1e-5,
        )

    def test_pairwise_density_rejects_nonfinite(self):
        bad = np.array([[np.nan]])
        ok = np.zeros((1, 1))
        with pytest.raises(ValueError, match="non-finite"):
            ad.pairwise_gaussian_log_density(bad, ok, ok)

    def test_bernoulli_loglik_value(self):
        logits = np.zeros((2, 5))
        targets = np.random.default_rng(7).uniform(size=(2, 5))
        out = ad.bernoulli_log_likelihood(Tensor(logits), Tensor(targets))
        # logits 0 -> log(1/2) per pixel regardless of target
        assert float(out.data) == pytest.approx(5 * math.log(0.5))

    def test_bernoulli_loglik_grad(self):
        rng = np.random.default_rng(8)
        targets = rng.uniform(size=(3, 4))
        check_op(
            lambda l: ad.bernoulli_log_likelihood(l, Tensor(targets)),
            [(3, 4)],
        )


class TestConvolutions:
    def test_conv2d_shape_chain(self):
        x = Tensor(np.zeros((2, 64, 64, 1)))
        w1 = Tensor(np.zeros((4, 4, 1, 16)))
        h = ad.conv2d(x, w1, Tensor(np.zeros(16)))
        assert h.shape == (2, 32, 32, 16)
        h = ad.conv2d(h, Tensor(np.zeros((4, 4, 16, 32))), Tensor(np.zeros(32)))
        assert h.shape == (2, 16, 16, 32)
        h = ad.conv2d(h, Tensor(np.zeros((4, 4, 32, 64))), Tensor(np.zeros(64)))
        assert h.shape == (2, 8, 8, 64)

    def test_conv2d_transpose_shape_chain(self):
        x = Tensor(np.zeros((2, 8, 8, 64)))
        h = ad.conv2d_transpose(x, Tensor(np.zeros((4, 4, 32, 64))), Tensor(np.zeros(32)))
        assert h.shape == (2, 16, 16, 32)
        h = ad.conv2d_transpose(h, Tensor(np.zeros((4, 4, 16, 32))), Tensor(np.zeros(16)))
        assert h.shape == (2, 32, 32, 16)
        h = ad.conv2d_transpose(h, Tensor(np.zeros((4, 4, 1, 16))), Tensor(np.zeros(1)))
        assert h.shape == (2, 64, 64, 1)

    def test_conv2d_grad(self):
        check_op(
            lambda x, w, b: ad.conv2d(x, w, b, stride=2, pad=1),
            [(2, 6, 6, 2), (4, 4, 2, 3), (3,)],
            tol=1e-5,
        )

    def test_conv2d_transpose_grad(self):
        check_op(
            lambda x, w, b: ad.conv2d_transpose(x, w, b, stride=2, pad=1),
            [(2, 3, 3, 2), (4, 4, 3, 2), (3,)],
            tol=1e-5,
        )

    def test_conv_adjointness(self):
        # <conv(x), y> == <x, convT(y)> with matching kernels
        rng = np.random.default_rng(9)
        x = rng.standard_normal((1, 6, 6, 2))
        w = rng.standard_normal((4, 4, 2, 3))
        y = rng.standard_normal((1, 3, 3, 3))
        conv = ad.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3))).data
        # conv kernel (kh, kw, cin, cout) reads as convT (kh, kw, cout, cin)
        convt = ad.conv2d_transpose(Tensor(y), Tensor(w), Tensor(np.zeros(2))).data
        assert float((conv * y).sum()) == pytest.approx(
            float((x * convt).sum()), rel=1e-10
        )


class TestGraphMechanics:
    def test_constants_record_nothing(self):
        out = Tensor(np.ones(3)) + Tensor(np.ones(3))
        assert not out.requires_grad
        assert out._backward is None

    def test_backward_requires_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (t * 2.0).backward()

    def test_diamond_graph_accumulates(self):
        t = Tensor(np.array(2.0), requires_grad=True)
        y = t * t + t * 3.0
        y.backward()
        assert float(t.grad) == pytest.approx(2 * 2.0 + 3.0)

    def test_grad_reset_between_backwards(self):
        t = Tensor(np.array(1.5), requires_grad=True)
        (t * 2.0).backward()
        first = float(t.grad)
        (t * 2.0).backward()
        assert float(t.grad) == first
