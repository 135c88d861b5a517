"""Disentanglement metrics and the collapsed-latent detector.

MIG and SAP score encoded latent means against ground-truth factors; the
FactorVAE score runs its fix-one-factor voting protocol against a live
encoder.  ``omniscient_flags`` detects latent dimensions whose estimated
marginal entropy stays below a threshold across evaluation batches --
the signature of a dimension that memorizes sample identity instead of
coding a factor.
"""

from dataclasses import dataclass

import numpy as np

from .data import FactorDataset
from .estimators import PosteriorBatch, mws_log_marginal

MIG_BINS = 20


class MetricError(ValueError):
    """Raised when a metric's protocol cannot run on the given inputs."""


@dataclass
class MetricScores:
    """One model's metric panel; scores clamped to their stated ranges."""

    mig: float
    factor_score: float
    sap: float
    per_dim_entropy: np.ndarray
    omniscient_flags: np.ndarray

    @property
    def omniscient_count(self) -> int:
        return int(self.omniscient_flags.sum())


def _discretize(column: np.ndarray, bins: int) -> np.ndarray:
    """Equal-occupancy binning; constant columns collapse to one bin."""
    edges = np.quantile(column, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, column, side="right")


def _discrete_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information of two integer-coded columns, nats."""
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((ua.size, ub.size))
    np.add.at(counts, (ia, ib), 1.0)
    joint = counts / counts.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log(joint[mask] / (pa @ pb)[mask])))


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def mig(latent_means: np.ndarray, factors: np.ndarray, factor_sizes) -> float:
    """Mutual information gap, averaged over factors.

    Latents are discretized into equal-occupancy bins; per factor the gap
    between the two most informative dimensions is normalized by the
    factor's entropy.  Constant latent dimensions simply contribute zero
    mutual information.
    """
    latent_means = np.asarray(latent_means, dtype=np.float64)
    factors = np.asarray(factors)
    s, n = latent_means.shape
    k = factors.shape[1]
    binned = np.stack(
        [_discretize(latent_means[:, d], MIG_BINS) for d in range(n)], axis=1
    )
    gaps = []
    for j in range(k):
        h = _entropy(factors[:, j])
        if h <= 0:
            continue
        mi = sorted(
            (_discrete_mi(binned[:, d], factors[:, j]) for d in range(n)),
            reverse=True,
        )
        second = mi[1] if n > 1 else 0.0
        gaps.append((mi[0] - second) / h)
    if not gaps:
        raise MetricError("no factor with more than one observed value")
    return float(np.clip(np.mean(gaps), 0.0, 1.0))


def sap(latent_means: np.ndarray, factors: np.ndarray) -> float:
    """Separated attribute predictability from linear R^2 scores.

    Per (dimension, factor) the score is the squared correlation of a 1-D
    linear fit; SAP averages, over factors, the gap between the best and
    second-best dimension.  Zero-variance dimensions score zero.
    """
    z = np.asarray(latent_means, dtype=np.float64)
    v = np.asarray(factors, dtype=np.float64)
    s, n = z.shape
    k = v.shape[1]
    zc = z - z.mean(axis=0)
    vc = v - v.mean(axis=0)
    z_var = (zc * zc).mean(axis=0)
    v_var = (vc * vc).mean(axis=0)
    cov = (zc[:, :, None] * vc[:, None, :]).mean(axis=0)  # [n, k]
    denom = np.outer(z_var, v_var)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(denom > 0, cov * cov / np.where(denom > 0, denom, 1.0), 0.0)
    gaps = []
    for j in range(k):
        if v_var[j] <= 0:
            continue
        top = np.sort(r2[:, j])[::-1]
        gaps.append(top[0] - (top[1] if n > 1 else 0.0))
    if not gaps:
        raise MetricError("no factor with variance to predict")
    return float(np.clip(np.mean(gaps), 0.0, 1.0))


def factor_vae_score(
    encode_fn,
    dataset: FactorDataset,
    votes: int = 800,
    seed: int = 0,
    episode_batch: int = 64,
    std_sample: int = 1000,
) -> float:
    """Fixed-factor majority-vote accuracy.

    Each episode fixes one random factor value, samples a batch sharing
    it, encodes, rescales by the global per-dimension std, and votes for
    the dimension with the smallest within-batch variance.  The score is
    the accuracy of the per-dimension majority classifier over all votes.
    """
    if votes < 1:
        raise MetricError(f"votes must be >= 1, got {votes}")
    sizes = dataset.factor_sizes
    if np.any(sizes < 2):
        raise MetricError(
            f"degenerate dataset: factor cardinalities {sizes.tolist()} "
            "include a single-valued factor"
        )
    rng = np.random.default_rng(seed)
    sample = rng.integers(0, len(dataset), size=min(std_sample, len(dataset)))
    global_std = np.asarray(encode_fn(dataset.float_images(sample))).std(axis=0)
    active = global_std > 1e-6
    if not np.any(active):
        return 0.0
    k = dataset.num_factors
    by_value = [
        [np.flatnonzero(dataset.factor_values[:, j] == val) for val in range(sizes[j])]
        for j in range(k)
    ]
    n = global_std.size
    table = np.zeros((n, k), dtype=np.int64)
    for _ in range(votes):
        j = int(rng.integers(k))
        val = int(rng.integers(sizes[j]))
        pool = by_value[j][val]
        idx = pool[rng.integers(0, pool.size, size=episode_batch)]
        z = np.asarray(encode_fn(dataset.float_images(idx)))
        scaled = z[:, active] / global_std[active]
        var = scaled.var(axis=0)
        dim = int(np.flatnonzero(active)[np.argmin(var)])
        table[dim, j] += 1
    return float(table.max(axis=1).sum() / votes)


def omniscient_flags(
    batch: PosteriorBatch,
    epsilon: float = 0.001,
    n_eval_batches: int = 10,
    delta: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """Flag latent dimensions with near-zero estimated marginal entropy.

    The batch is split into ``n_eval_batches`` evaluation batches; per
    batch and dimension the entropy estimate is the mean of
    ``-log q_hat(z_d)``.  Dimension d is flagged when the fraction of
    evaluation batches with an estimate below ``epsilon`` is at least
    ``1 - delta``.  Returns (flags, mean per-dimension entropy); the
    estimates are differential entropies and may legitimately be negative,
    which the literal threshold also catches.
    """
    if epsilon <= 0:
        raise MetricError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise MetricError(f"delta must be in (0, 1), got {delta}")
    if n_eval_batches < 10:
        raise MetricError(
            f"need at least 10 evaluation batches to certify 1-delta, "
            f"got {n_eval_batches}"
        )
    if batch.m < n_eval_batches:
        raise MetricError(
            f"batch of {batch.m} rows cannot form {n_eval_batches} "
            "evaluation batches"
        )
    chunks = np.array_split(np.arange(batch.m), n_eval_batches)
    n = batch.n
    entropies = np.zeros((n_eval_batches, n))
    for ci, rows in enumerate(chunks):
        sub = batch.rows(rows)
        for d in range(n):
            entropies[ci, d] = float(-np.mean(mws_log_marginal(sub, (d,))))
    below = (entropies < epsilon).mean(axis=0)
    flags = below >= 1.0 - delta
    return flags, entropies.mean(axis=0)
