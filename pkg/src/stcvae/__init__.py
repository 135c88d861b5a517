"""Grouped total-correlation VAEs at desk scale.

The package splits into:

* ``grouping`` -- block layouts, granularity, pairing-level schedules.
* ``oracle`` -- closed-form Gaussian and brute-force discrete references.
* ``estimators`` -- minibatch-weighted-sampling information estimates.
* ``autodiff``/``models``/``params``/``optim``/``gradcheck`` -- the
  numpy training substrate (MLP and conv VAEs, Adam, checkpoints,
  finite-difference verification).
* ``losses`` -- the grouped and ungrouped objectives plus the ELBO.
* ``data`` -- synthetic factor datasets and the FVDS container.
* ``metrics`` -- MIG, SAP, FactorVAE score, collapsed-latent detector.
* ``sweep``/``report`` -- the capacity x granularity experiment harness.
* ``cli`` -- ``stcvae`` command-line entry points.
"""

__version__ = "0.1.0"

from .grouping import (  # noqa: F401
    LatentLayout,
    LayoutError,
    PairingLevels,
    decomposition_depth,
    make_layout,
    pairing_levels,
    valid_grouping_factors,
)
from .oracle import (  # noqa: F401
    GaussianSpec,
    OracleDomainError,
    brute_force_tc,
    gaussian_entropy,
    gaussian_grouped_tc,
    gaussian_group_mi,
    gaussian_mu_level,
    gaussian_residual_mi,
    gaussian_tc,
    random_pd_spec,
)
from .estimators import (  # noqa: F401
    DecompositionReport,
    EstimatorDomainError,
    InfoEstimate,
    PosteriorBatch,
    decomposition_report,
    estimate_info,
    log_density_matrix,
    mws_log_marginal,
)
from .losses import LossConfig, elbo, loss_beta_stcvae, loss_beta_tcvae  # noqa: F401
from .data import (  # noqa: F401
    DataError,
    FactorDataset,
    FormatError,
    generate_toy_factors,
    read_fvds,
    write_fvds,
)
from .metrics import (  # noqa: F401
    MetricError,
    MetricScores,
    factor_vae_score,
    mig,
    omniscient_flags,
    sap,
)
from .models import ConvSpec, MlpSpec, ModelError  # noqa: F401
from .params import ParamStore, load_checkpoint, save_checkpoint  # noqa: F401
from .optim import DivergenceError, adam_step  # noqa: F401
from .gradcheck import GradCheckReport, grad_check  # noqa: F401
from .sweep import (  # noqa: F401
    SweepConfig,
    SweepConfigError,
    TrialConfig,
    TrialRecord,
    fit_trajectory_curve,
    omniscient_region,
    optimal_granularity_points,
    run_sweep,
    run_trial,
)
