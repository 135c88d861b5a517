"""Training objectives assembled from estimator outputs.

Both objectives are maximized; training minimizes their negation.  The
grouped variant replaces the full total-correlation penalty with the
grouped one, and collapses to the ungrouped objective exactly when the
layout uses singleton blocks.  The unweighted ELBO is kept separate: it
ignores both the penalty weight and the layout, which is what makes it
comparable across every cell of a sweep.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .estimators import InfoEstimate
from .grouping import LatentLayout


@dataclass(frozen=True)
class LossConfig:
    """Objective weights: ``beta`` scales the total-correlation penalty,
    ``alpha`` the index-code MI (conventionally 1)."""

    beta: float
    layout: LatentLayout
    alpha: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


def loss_beta_tcvae(info: InfoEstimate, cfg: LossConfig):
    """recon - alpha*I(z;x) - beta*TC(z) - dimwise KL (full TC penalty)."""
    return (
        info.recon
        - cfg.alpha * info.index_code_mi
        - cfg.beta * info.tc_full
        - info.dimwise_kl
    )


def loss_beta_stcvae(info: InfoEstimate, cfg: LossConfig):
    """Same objective with the grouped total correlation as the penalty."""
    return (
        info.recon
        - cfg.alpha * info.index_code_mi
        - cfg.beta * info.tc_grouped
        - info.dimwise_kl
    )


def elbo(recon, mu, log_var):
    """Unweighted evidence lower bound with the closed-form Gaussian KL.

    recon - mean_i sum_d 0.5*(exp(log_var) + mu^2 - 1 - log_var); no
    beta, no layout, so values are comparable across granularities.
    """
    if isinstance(mu, Tensor) or isinstance(log_var, Tensor):
        mu, log_var = ad.as_tensor(mu), ad.as_tensor(log_var)
        kl = (0.5 * (ad.exp(log_var) + mu * mu - 1.0 - log_var)).sum(axis=1).mean()
        return recon - kl
    mu = np.asarray(mu)
    log_var = np.asarray(log_var)
    kl = (0.5 * (np.exp(log_var) + mu * mu - 1.0 - log_var)).sum(axis=1).mean()
    return recon - float(kl)
