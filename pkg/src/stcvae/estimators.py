"""Minibatch estimators of aggregate-posterior information quantities.

All estimates start from one M x M x n tensor of per-dimension Gaussian
log densities: sample i's latent evaluated under sample j's posterior.
The log marginal of any dimension subset S is then

    log q_hat(z_S of sample i)
        = logsumexp_j( sum_{d in S} density[i, j, d] ) - log M

i.e. the exact log density of the minibatch mixture (the M posteriors
with uniform weight), which for chunks drawn from a larger dataset is
the minibatch-weighted estimate of the aggregate posterior.  The
normalization is the calibrated one: a dataset-size-dependent constant
here would shift every derived quantity (by (n-1)*log N for the total
correlation) without changing any gradient.  Full and grouped
total correlation, per-level mutual-information sums, the index-code MI
and the dimension-wise KL are all differences of such terms, so each
subset is evaluated once and shared: telescoping identities between the
derived quantities then hold to float rounding rather than statistically.

Everything here runs on plain ndarrays (returning floats) or on autodiff
tensors (returning scalar tensors the training loss can backpropagate
through).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .grouping import Group, LatentLayout, PairingLevels

LOG_2PI = math.log(2.0 * math.pi)


class EstimatorDomainError(ValueError):
    """Raised for batches or arguments outside the estimator contracts."""


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


@dataclass
class PosteriorBatch:
    """Posterior parameters and reparameterized samples for one batch.

    ``mu``, ``log_var`` and ``z`` are M x n and may be ndarrays or
    autodiff tensors; ``dataset_size`` records the size N >= M of the
    dataset the batch was drawn from (provenance of the aggregate being
    estimated; the calibrated estimates themselves normalize by M).
    """

    mu: object
    log_var: object
    z: object
    dataset_size: int

    def __post_init__(self):
        mu, lv, z = _data(self.mu), _data(self.log_var), _data(self.z)
        if not (mu.shape == lv.shape == z.shape) or mu.ndim != 2 or mu.shape[0] < 1:
            raise EstimatorDomainError(
                f"mu/log_var/z must share an M x n shape with M >= 1, got "
                f"{mu.shape}, {lv.shape}, {z.shape}"
            )
        for name, arr in (("mu", mu), ("log_var", lv), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise EstimatorDomainError(f"non-finite values in {name}")
        if self.dataset_size < mu.shape[0]:
            raise EstimatorDomainError(
                f"dataset_size={self.dataset_size} smaller than batch M={mu.shape[0]}"
            )

    @property
    def m(self) -> int:
        return _data(self.mu).shape[0]

    @property
    def n(self) -> int:
        return _data(self.mu).shape[1]

    def rows(self, idx) -> "PosteriorBatch":
        """Sub-batch of the given rows, keeping the dataset size."""
        return PosteriorBatch(
            mu=_data(self.mu)[idx],
            log_var=_data(self.log_var)[idx],
            z=_data(self.z)[idx],
            dataset_size=self.dataset_size,
        )


@dataclass
class InfoEstimate:
    """Batch-mean information terms (nats); floats, or scalar tensors
    when estimated from a live autodiff graph."""

    recon: object
    index_code_mi: object
    tc_full: object
    tc_grouped: object
    mu_levels: tuple
    dimwise_kl: object


@dataclass
class DecompositionReport:
    """Total correlation split into per-level MI sums plus the residual
    MI of the two final merged groups.  ``tc_full = sum(mu_levels) +
    residual`` exactly, because every term shares the same subset
    evaluations."""

    tc_full: float
    mu_levels: tuple
    residual: float


class _MarginalTable:
    """Shared per-subset log-marginal evaluations for one batch."""

    def __init__(self, batch: PosteriorBatch):
        self.density = ad.pairwise_gaussian_log_density(
            batch.mu, batch.log_var, batch.z
        )
        m = batch.m
        self.log_m = math.log(float(m))
        # One vectorized pass gives every singleton marginal at once.
        singles = ad.logsumexp(self.density, axis=1) - self.log_m  # [M, n]
        self._cache: dict[Group, Tensor] = {
            (d,): singles[:, d] for d in range(batch.n)
        }
        self.batch = batch

    def marginal(self, dims: Group) -> Tensor:
        """log q_hat(z_dims) per sample, cached per subset."""
        key = tuple(dims)
        hit = self._cache.get(key)
        if hit is None:
            joint = self.density[:, :, list(key)].sum(axis=2)
            hit = ad.logsumexp(joint, axis=1) - self.log_m
            self._cache[key] = hit
        return hit

    def log_posterior(self) -> Tensor:
        """log q(z_i | x_i): the diagonal of the density matrix, summed."""
        m = self.batch.m
        idx = np.arange(m)
        return self.density[idx, idx, :].sum(axis=1)


def log_density_matrix(batch: PosteriorBatch):
    """The M x M x n per-dimension log-density tensor itself.

    Returns an ndarray for ndarray inputs, a Tensor for tensor inputs.
    """
    out = ad.pairwise_gaussian_log_density(batch.mu, batch.log_var, batch.z)
    return out if isinstance(batch.mu, Tensor) else out.data


def mws_log_marginal(batch: PosteriorBatch, dims) -> np.ndarray:
    """Minibatch-weighted log marginal of the given dimension subset.

    Entry i estimates log q_hat(z_{dims} of sample i) under the aggregate
    posterior.  Standalone evaluation; ``estimate_info`` shares these
    internally instead of recomputing.
    """
    dims = tuple(dims)
    if len(dims) == 0:
        raise EstimatorDomainError("dims must be a nonempty index set")
    if any(not 0 <= d < batch.n for d in dims):
        raise EstimatorDomainError(f"dims {dims} out of range for n={batch.n}")
    table = _MarginalTable(batch)
    out = table.marginal(dims)
    return out if isinstance(batch.mu, Tensor) else out.data


def _prior_log_density(z) -> Tensor:
    """Standard-normal log density summed over dimensions, per sample."""
    z = ad.as_tensor(z)
    return (-0.5 * LOG_2PI - 0.5 * z * z).sum(axis=1)


def estimate_info(
    batch: PosteriorBatch,
    layout: LatentLayout,
    levels: PairingLevels | None = None,
    recon_loglik=0.0,
) -> InfoEstimate:
    """Estimate every information term of the objective on one batch.

    ``levels`` is optional: when given, the per-level mutual-information
    sums of the iterative decomposition are included (training does not
    need them).  ``recon_loglik`` is passed through into the estimate.
    Results are floats for ndarray batches and scalar tensors otherwise.
    """
    if layout.n != batch.n:
        raise EstimatorDomainError(
            f"layout is for n={layout.n} but batch has n={batch.n}"
        )
    if levels is not None and levels.n != batch.n:
        raise EstimatorDomainError(
            f"pairing levels are for n={levels.n} but batch has n={batch.n}"
        )
    table = _MarginalTable(batch)
    marg_all = table.marginal(tuple(range(batch.n)))
    singles = [table.marginal((d,)) for d in range(batch.n)]
    sum_singles = singles[0]
    for s in singles[1:]:
        sum_singles = sum_singles + s
    sum_blocks = None
    for block in layout.groups:
        m = table.marginal(block)
        sum_blocks = m if sum_blocks is None else sum_blocks + m

    index_code_mi = (table.log_posterior() - marg_all).mean()
    tc_full = (marg_all - sum_singles).mean()
    tc_grouped = (marg_all - sum_blocks).mean()
    dimwise_kl = (sum_singles - _prior_log_density(batch.z)).mean()

    mu_levels = ()
    if levels is not None:
        mu_levels = tuple(
            _level_mu(table, levels, b) for b in range(1, levels.depth + 1)
        )

    live = isinstance(batch.mu, Tensor) or isinstance(recon_loglik, Tensor)
    if live:
        return InfoEstimate(
            recon=ad.as_tensor(recon_loglik),
            index_code_mi=index_code_mi,
            tc_full=tc_full,
            tc_grouped=tc_grouped,
            mu_levels=mu_levels,
            dimwise_kl=dimwise_kl,
        )
    return InfoEstimate(
        recon=float(_data(recon_loglik)),
        index_code_mi=float(index_code_mi.data),
        tc_full=float(tc_full.data),
        tc_grouped=float(tc_grouped.data),
        mu_levels=tuple(float(t.data) for t in mu_levels),
        dimwise_kl=float(dimwise_kl.data),
    )


def _level_mu(table: _MarginalTable, levels: PairingLevels, b: int) -> Tensor:
    level = levels.levels[b - 1]
    total = None
    for left, right in level.pairs:
        term = (
            table.marginal(left + right)
            - table.marginal(left)
            - table.marginal(right)
        ).mean()
        total = term if total is None else total + term
    return total


def decomposition_report(
    batch: PosteriorBatch, levels: PairingLevels
) -> DecompositionReport:
    """Full-decomposition view: per-level MI sums and the final residual.

    All terms reuse the same subset evaluations, so
    ``tc_full - sum(mu_levels) - residual`` vanishes to float rounding
    for every n, including odd ones where remainder groups are carried.
    """
    if levels.n != batch.n:
        raise EstimatorDomainError(
            f"pairing levels are for n={levels.n} but batch has n={batch.n}"
        )
    table = _MarginalTable(batch)
    marg_all = table.marginal(tuple(range(batch.n)))
    sum_singles = None
    for d in range(batch.n):
        s = table.marginal((d,))
        sum_singles = s if sum_singles is None else sum_singles + s
    tc_full = (marg_all - sum_singles).mean()
    mu_levels = tuple(
        float(_level_mu(table, levels, b).data) for b in range(1, levels.depth + 1)
    )
    left, right = levels.final_pair
    residual = (
        table.marginal(left + right)
        - table.marginal(left)
        - table.marginal(right)
    ).mean()
    return DecompositionReport(
        tc_full=float(tc_full.data),
        mu_levels=mu_levels,
        residual=float(residual.data),
    )


def estimated_entropy(batch: PosteriorBatch, dim: int) -> float:
    """Estimated marginal entropy of one latent dimension (nats):
    the batch mean of -log q_hat(z_dim)."""
    return float(-_data(mws_log_marginal(batch, (dim,))).mean())
