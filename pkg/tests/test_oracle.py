"""Closed-form Gaussian and brute-force discrete oracles."""

import math

import numpy as np
import pytest

from stcvae.grouping import make_layout, pairing_levels, valid_grouping_factors
from stcvae.oracle import (
    GaussianSpec,
    OracleDomainError,
    brute_force_tc,
    gaussian_entropy,
    gaussian_group_mi,
    gaussian_grouped_tc,
    gaussian_mu_level,
    gaussian_residual_mi,
    gaussian_tc,
    mixture_tc_quadrature_2d,
    random_pd_spec,
)


def equicorr_spec(n: int, rho: float) -> GaussianSpec:
    cov = np.full((n, n), rho) + (1.0 - rho) * np.eye(n)
    return GaussianSpec(mean=np.zeros(n), cov=cov)


class TestGaussianSpec:
    def test_rejects_non_pd(self):
        with pytest.raises(OracleDomainError, match="positive definite"):
            GaussianSpec(mean=np.zeros(2), cov=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_asymmetric(self):
        with pytest.raises(OracleDomainError, match="symmetric"):
            GaussianSpec(mean=np.zeros(2), cov=np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(OracleDomainError):
            GaussianSpec(mean=np.zeros(3), cov=np.eye(2))


class TestGaussianEntropy:
    def test_standard_one_dim(self):
        spec = GaussianSpec(mean=np.zeros(1), cov=np.eye(1))
        assert gaussian_entropy(spec) == pytest.approx(1.41894, abs=1e-5)

    def test_additivity_for_independent_dims(self):
        spec = GaussianSpec(mean=np.zeros(2), cov=np.eye(2))
        assert gaussian_entropy(spec) == pytest.approx(2 * 1.41894, abs=1e-4)

    def test_zero_entropy_variance(self):
        var = 1.0 / (2.0 * math.pi * math.e)
        spec = GaussianSpec(mean=np.zeros(1), cov=np.array([[var]]))
        assert gaussian_entropy(spec) == pytest.approx(0.0, abs=1e-12)


class TestGaussianTc:
    def test_diagonal_is_zero(self):
        spec = GaussianSpec(mean=np.zeros(3), cov=np.diag([0.5, 2.0, 7.0]))
        assert gaussian_tc(spec) == pytest.approx(0.0, abs=1e-12)

    def test_two_dim_correlated(self):
        spec = equicorr_spec(2, 0.6)
        # -0.5 * ln(1 - 0.6^2)
        assert gaussian_tc(spec) == pytest.approx(0.22314, abs=1e-5)

    def test_four_dim_equicorrelation(self):
        spec = equicorr_spec(4, 0.5)
        # det = (1 - rho)^3 (1 + 3 rho) = 0.3125
        assert gaussian_tc(spec) == pytest.approx(0.58158, abs=1e-5)

    def test_nonnegative_on_random_specs(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            spec = random_pd_spec(int(rng.integers(2, 10)), rng)
            assert gaussian_tc(spec) >= -1e-12


class TestGaussianGroupedTc:
    def test_singleton_groups_equal_full_tc(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            spec = random_pd_spec(n, rng)
            grouped = gaussian_grouped_tc(spec, make_layout(n, 1))
            assert grouped == pytest.approx(gaussian_tc(spec), abs=1e-12)

    def test_four_dim_equicorrelation_pairs(self):
        spec = equicorr_spec(4, 0.5)
        layout = make_layout(4, 2)
        # 0.5 * (2 ln 0.75 - ln 0.3125)
        assert gaussian_grouped_tc(spec, layout) == pytest.approx(0.29389, abs=1e-5)

    def test_diagonal_two_blocks_zero(self):
        spec = GaussianSpec(mean=np.zeros(4), cov=np.diag([1.0, 2.0, 3.0, 4.0]))
        assert gaussian_grouped_tc(spec, make_layout(4, 2)) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(OracleDomainError):
            gaussian_grouped_tc(equicorr_spec(4, 0.3), make_layout(6, 2))


class TestGaussianMuLevel:
    def test_diagonal_all_levels_zero(self):
        spec = GaussianSpec(mean=np.zeros(8), cov=np.diag(np.arange(1.0, 9.0)))
        levels = pairing_levels(8)
        for b in range(1, levels.depth + 1):
            assert gaussian_mu_level(spec, levels, b) == pytest.approx(0.0, abs=1e-12)

    def test_four_dim_level_one(self):
        spec = equicorr_spec(4, 0.5)
        levels = pairing_levels(4)
        # two pairs, each MI = -0.5 ln(1 - 0.25)
        assert gaussian_mu_level(spec, levels, 1) == pytest.approx(0.28768, abs=1e-5)

    def test_two_dim_residual_is_tc(self):
        spec = equicorr_spec(2, 0.6)
        levels = pairing_levels(2)
        assert levels.depth == 0
        assert gaussian_residual_mi(spec, levels) == pytest.approx(
            gaussian_tc(spec), abs=1e-12
        )
        assert gaussian_residual_mi(spec, levels) == pytest.approx(0.22314, abs=1e-5)

    def test_level_out_of_range(self):
        with pytest.raises(OracleDomainError):
            gaussian_mu_level(equicorr_spec(4, 0.2), pairing_levels(4), 2)

    def test_overlapping_groups_rejected(self):
        with pytest.raises(OracleDomainError, match="overlap"):
            gaussian_group_mi(equicorr_spec(4, 0.2), (0, 1), (1, 2))


class TestDecompositionIdentity:
    def test_identity_on_random_specs(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(2, 17))
            spec = random_pd_spec(n, rng)
            levels = pairing_levels(n)
            total = sum(
                gaussian_mu_level(spec, levels, b)
                for b in range(1, levels.depth + 1)
            )
            residual = gaussian_residual_mi(spec, levels)
            assert abs(gaussian_tc(spec) - total - residual) <= 1e-9

    def test_inference_one_on_random_specs(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 17))
            spec = random_pd_spec(n, rng)
            tc = gaussian_tc(spec)
            for b_hat in valid_grouping_factors(n):
                grouped = gaussian_grouped_tc(spec, make_layout(n, b_hat))
                assert grouped <= tc + 1e-12
                assert grouped >= -1e-12

    def test_per_level_telescoping(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(2, 13))
            spec = random_pd_spec(n, rng)
            levels = pairing_levels(n)

            def grouped_tc_at(level):
                groups = levels.groups_at(level)
                logdet = lambda m: 2.0 * float(
                    np.sum(np.log(np.diag(np.linalg.cholesky(m))))
                )
                return 0.5 * (
                    sum(logdet(spec.cov[np.ix_(g, g)]) for g in groups)
                    - logdet(spec.cov)
                )

            for b in range(1, levels.depth + 1):
                lhs = grouped_tc_at(b)
                rhs = grouped_tc_at(b - 1) - gaussian_mu_level(spec, levels, b)
                assert abs(lhs - rhs) <= 1e-9


class TestBruteForceTc:
    def test_product_distribution_zero(self):
        p = np.outer([0.3, 0.7], [0.2, 0.8])
        assert brute_force_tc(p, make_layout(2, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_perfectly_correlated_bits(self):
        joint = np.array([[0.5, 0.0], [0.0, 0.5]])
        got = brute_force_tc(joint, make_layout(2, 1))
        assert got == pytest.approx(math.log(2.0), abs=1e-12)

    def test_block_absorbs_correlation(self):
        # 4 bits: dims 0,1 perfectly correlated, dims 2,3 independent fair
        pair = np.array([[0.5, 0.0], [0.0, 0.5]])
        joint = (
            pair[:, :, None, None]
            * np.full((2, 2), 0.25)[None, None, :, :]
        )
        grouped = brute_force_tc(joint, make_layout(4, 2))
        assert grouped == pytest.approx(0.0, abs=1e-12)
        full = brute_force_tc(joint, make_layout(4, 1))
        assert full == pytest.approx(math.log(2.0), abs=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(OracleDomainError, match="sum to 1"):
            brute_force_tc(np.full((2, 2), 0.3), make_layout(2, 1))

    def test_rejects_large_tables(self):
        with pytest.raises(OracleDomainError, match="too large"):
            brute_force_tc(np.full((9, 9), 1.0 / 81), make_layout(2, 1))

    def test_matches_gaussian_free_discretization(self):
        # independent coin pair inside one block plus a dependent third
        rng = np.random.default_rng(5)
        p = rng.random((3, 3, 2))
        p /= p.sum()
        full = brute_force_tc(p, make_layout(3, 1))
        assert full >= -1e-12


class TestMixtureQuadrature:
    def test_single_component_zero(self):
        tc = mixture_tc_quadrature_2d(np.zeros((1, 2)), 0.7, np.ones(1))
        assert tc == pytest.approx(0.0, abs=1e-9)

    def test_diagonal_clusters_positive(self):
        means = np.array([[-1.0, -1.0], [1.0, 1.0]])
        tc = mixture_tc_quadrature_2d(means, 0.5, np.array([0.5, 0.5]))
        assert tc > 0.1

    def test_rejects_bad_weights(self):
        with pytest.raises(OracleDomainError):
            mixture_tc_quadrature_2d(np.zeros((2, 2)), 0.5, np.array([0.7, 0.7]))
