"""Closed-form and brute-force ground truth for information quantities.

Multivariate Gaussians admit exact entropy, total correlation, grouped
total correlation, and group mutual information, all in nats.  Tiny
discrete joints can be enumerated exactly.  Both serve as independent
references for the minibatch estimators.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .grouping import Group, LatentLayout, PairingLevels

LOG_2PI = math.log(2.0 * math.pi)


class OracleDomainError(ValueError):
    """Raised for inputs outside an oracle's exact-computation domain."""


@dataclass(frozen=True)
class GaussianSpec:
    """A multivariate Gaussian given by mean vector and covariance matrix.

    The covariance must be symmetric positive definite (checked via
    Cholesky at construction).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise OracleDomainError(
                f"mean must be length-n and cov n-by-n, got {mean.shape} "
                f"and {cov.shape}"
            )
        if mean.size < 1:
            raise OracleDomainError("need at least one dimension")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise OracleDomainError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        _log_det(cov)  # fails fast on non-PD input

    @property
    def n(self) -> int:
        return self.mean.size


def _log_det(cov: np.ndarray) -> float:
    """log det of a symmetric PD matrix via Cholesky."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise OracleDomainError(
            "covariance is not positive definite"
        ) from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def random_pd_spec(n: int, rng: np.random.Generator) -> GaussianSpec:
    """A well-conditioned random PD spec for property tests.

    Uses A^T A + n*1e-3*I with standard-normal A, which keeps Cholesky
    comfortably away from failure.
    """
    a = rng.standard_normal((n, n))
    cov = a.T @ a + n * 1e-3 * np.eye(n)
    return GaussianSpec(mean=rng.standard_normal(n), cov=cov)


def gaussian_entropy(spec: GaussianSpec) -> float:
    """Differential entropy 0.5*log((2*pi*e)^n * det cov), in nats."""
    return 0.5 * (spec.n * (LOG_2PI + 1.0) + _log_det(spec.cov))


def gaussian_tc(spec: GaussianSpec) -> float:
    """Total correlation: KL from the joint to the product of marginals.

    For a Gaussian this is 0.5*(sum_d log cov[d,d] - log det cov), which
    is zero exactly when the covariance is diagonal.
    """
    return 0.5 * (
        float(np.sum(np.log(np.diag(spec.cov)))) - _log_det(spec.cov)
    )


def gaussian_grouped_tc(spec: GaussianSpec, layout: LatentLayout) -> float:
    """Grouped total correlation: KL to the product of block marginals.

    Only between-block dependence contributes; correlation inside a block
    is absorbed by that block's joint marginal.
    """
    if layout.n != spec.n:
        raise OracleDomainError(
            f"layout is for n={layout.n} but spec has n={spec.n}"
        )
    block_sum = sum(
        _log_det(spec.cov[np.ix_(block, block)]) for block in layout.groups
    )
    return 0.5 * (block_sum - _log_det(spec.cov))


def gaussian_group_mi(
    spec: GaussianSpec, left: Group, right: Group
) -> float:
    """Mutual information between two disjoint groups of dimensions."""
    if set(left) & set(right):
        raise OracleDomainError(f"groups overlap: {left} and {right}")
    both = tuple(left) + tuple(right)
    return 0.5 * (
        _log_det(spec.cov[np.ix_(left, left)])
        + _log_det(spec.cov[np.ix_(right, right)])
        - _log_det(spec.cov[np.ix_(both, both)])
    )


def gaussian_mu_level(
    spec: GaussianSpec, levels: PairingLevels, b: int
) -> float:
    """Mutual-information summation at decomposition level ``b`` (1-based).

    Sums the pairwise group MI over every pair merged at that level.
    Valid for 1 <= b <= levels.depth; the final level's single pair is the
    decomposition residual, exposed via ``gaussian_residual_mi``.
    """
    if not 1 <= b <= levels.depth:
        raise OracleDomainError(
            f"level index must be in 1..{levels.depth}, got {b}"
        )
    level = levels.levels[b - 1]
    return sum(gaussian_group_mi(spec, l, r) for l, r in level.pairs)


def gaussian_residual_mi(spec: GaussianSpec, levels: PairingLevels) -> float:
    """MI between the two groups left at the end of the decomposition."""
    left, right = levels.final_pair
    return gaussian_group_mi(spec, left, right)


def mixture_tc_quadrature_2d(
    means: np.ndarray,
    sigma: float,
    weights: np.ndarray,
    grid_points: int = 400,
    span: float = 8.0,
) -> float:
    """Total correlation of a 2-D isotropic Gaussian mixture by trapezoid
    quadrature on a ``grid_points`` x ``grid_points`` grid.

    The grid covers [min(mean) - span*sigma, max(mean) + span*sigma] per
    axis, wide enough that the truncated tail mass is negligible.
    """
    means = np.asarray(means, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if means.ndim != 2 or means.shape[1] != 2:
        raise OracleDomainError(f"means must be C x 2, got {means.shape}")
    if abs(float(weights.sum()) - 1.0) > 1e-9 or np.any(weights < 0):
        raise OracleDomainError("weights must be a probability vector")
    if sigma <= 0:
        raise OracleDomainError(f"sigma must be > 0, got {sigma}")
    lo = float(means.min()) - span * sigma
    hi = float(means.max()) + span * sigma
    x = np.linspace(lo, hi, grid_points)
    norm = sigma * math.sqrt(2.0 * math.pi)
    comp0 = np.exp(-0.5 * ((x[:, None] - means[None, :, 0]) / sigma) ** 2) / norm
    comp1 = np.exp(-0.5 * ((x[:, None] - means[None, :, 1]) / sigma) ** 2) / norm
    joint = (comp0[:, None, :] * comp1[None, :, :]) @ weights
    marg0 = comp0 @ weights
    marg1 = comp1 @ weights
    tiny = 1e-300
    integrand = np.where(
        joint > 0,
        joint * np.log(np.maximum(joint, tiny) / (np.outer(marg0, marg1) + tiny)),
        0.0,
    )
    return float(np.trapezoid(np.trapezoid(integrand, x, axis=1), x, axis=0))


def brute_force_tc(joint: np.ndarray, layout: LatentLayout) -> float:
    """Exact grouped total correlation of a small discrete joint table.

    ``joint`` is an n-dimensional probability table (axis k = variable k).
    Enumerates every outcome; intended for n <= 4 with alphabets <= 8.
    With singleton groups this is the plain total correlation.
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != layout.n:
        raise OracleDomainError(
            f"table has {joint.ndim} axes but layout expects {layout.n}"
        )
    if joint.ndim > 4 or max(joint.shape) > 8:
        raise OracleDomainError(
            f"table too large for enumeration: shape {joint.shape}"
        )
    if np.any(joint < 0) or abs(float(joint.sum()) - 1.0) > 1e-12:
        raise OracleDomainError(
            "table entries must be non-negative and sum to 1 within 1e-12"
        )
    marginals = [
        joint.sum(axis=tuple(ax for ax in range(joint.ndim) if ax not in block))
        for block in layout.groups
    ]
    total = 0.0
    for idx in itertools.product(*(range(s) for s in joint.shape)):
        p = joint[idx]
        if p == 0.0:
            continue
        log_prod = sum(
            math.log(marg[tuple(idx[ax] for ax in block)])
            for block, marg in zip(layout.groups, marginals)
        )
        total += p * (math.log(p) - log_prod)
    return total
