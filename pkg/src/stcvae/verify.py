"""Executable verification suites for oracles, estimators and gradients.

Each suite returns a ``SuiteResult``; the CLI prints them as a pass/fail
table and the test suite asserts them individually.  ``quick`` mode
shrinks the statistical sample sizes and loosens tolerances accordingly
(quick: M=512 and tolerance 0.15 for the estimator-accuracy suite versus
M=2048 and 0.05 in full mode; other suites only reduce case counts).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .estimators import PosteriorBatch, decomposition_report, estimate_info
from .gradcheck import grad_check
from .grouping import make_layout, pairing_levels, valid_grouping_factors
from .losses import LossConfig, loss_beta_stcvae, loss_beta_tcvae
from .models import (
    MlpSpec,
    decode,
    encode,
    init_params,
    reconstruction_log_likelihood,
    reparameterize,
)
from .oracle import (
    GaussianSpec,
    gaussian_grouped_tc,
    gaussian_mu_level,
    gaussian_residual_mi,
    gaussian_tc,
    mixture_tc_quadrature_2d,
    random_pd_spec,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def gaussian_identity_suite(n_specs: int = 200, seed: int = 0) -> SuiteResult:
    """Closed-form decomposition identity: tc = sum of level MIs + residual."""
    rng = np.random.default_rng(seed)
    max_err = 0.0
    for _ in range(n_specs):
        n = int(rng.integers(2, 17))
        spec = random_pd_spec(n, rng)
        levels = pairing_levels(n)
        total = sum(
            gaussian_mu_level(spec, levels, b) for b in range(1, levels.depth + 1)
        )
        err = abs(gaussian_tc(spec) - total - gaussian_residual_mi(spec, levels))
        max_err = max(max_err, err)
    return SuiteResult(
        "gaussian-identity", max_err <= 1e-9,
        f"max |tc - sum(mu) - residual| = {max_err:.3e} over {n_specs} specs",
    )


def inference1_suite(n_specs: int = 200, seed: int = 0) -> SuiteResult:
    """Grouped TC never exceeds full TC, for every valid layout."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    checked = 0
    for _ in range(n_specs):
        n = int(rng.integers(2, 17))
        spec = random_pd_spec(n, rng)
        tc = gaussian_tc(spec)
        for b_hat in valid_grouping_factors(n):
            margin = tc - gaussian_grouped_tc(spec, make_layout(n, b_hat))
            worst = min(worst, margin)
            checked += 1
    return SuiteResult(
        "inference-1", worst >= -1e-12,
        f"min (tc - grouped_tc) = {worst:.3e} over {checked} layouts",
    )


def gaussian_telescoping_suite(n_specs: int = 50, seed: int = 1) -> SuiteResult:
    """Per-level peeling: grouped TC over level-b groups equals the
    previous level's minus that level's MI sum."""
    rng = np.random.default_rng(seed)
    max_err = 0.0
    for _ in range(n_specs):
        n = int(rng.integers(2, 17))
        spec = random_pd_spec(n, rng)
        levels = pairing_levels(n)

        def level_tc(level: int) -> float:
            groups = levels.groups_at(level)
            block_sum = sum(
                2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(
                    spec.cov[np.ix_(g, g)]
                )))) for g in groups
            )
            full = 2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(spec.cov))))
            return 0.5 * (block_sum - full)

        for b in range(1, levels.depth + 1):
            err = abs(
                level_tc(b) - (level_tc(b - 1) - gaussian_mu_level(spec, levels, b))
            )
            max_err = max(max_err, err)
    return SuiteResult(
        "gaussian-telescoping", max_err <= 1e-9,
        f"max per-level error = {max_err:.3e} over {n_specs} specs",
    )


def estimator_telescoping_suite(
    ns=(2, 4, 5, 8, 12), m: int = 64, seed: int = 2
) -> SuiteResult:
    """Shared-term telescoping of the minibatch decomposition report."""
    rng = np.random.default_rng(seed)
    max_err = 0.0
    for n in ns:
        batch = PosteriorBatch(
            mu=rng.standard_normal((m, n)),
            log_var=0.5 * rng.standard_normal((m, n)),
            z=rng.standard_normal((m, n)),
            dataset_size=4 * m,
        )
        rep = decomposition_report(batch, pairing_levels(n))
        err = abs(rep.tc_full - sum(rep.mu_levels) - rep.residual)
        max_err = max(max_err, err)
    return SuiteResult(
        "estimator-telescoping", max_err <= 1e-9,
        f"max |tc - sum(mu) - residual| = {max_err:.3e} for n in {tuple(ns)}",
    )


def degeneracy_suite(n_batches: int = 100, seed: int = 3) -> SuiteResult:
    """Singleton-block grouped objective equals the ungrouped one exactly."""
    rng = np.random.default_rng(seed)
    n, m = 6, 32
    layout = make_layout(n, 1)
    cfg = LossConfig(beta=4.0, layout=layout)
    exact = True
    for _ in range(n_batches):
        batch = PosteriorBatch(
            mu=rng.standard_normal((m, n)),
            log_var=0.3 * rng.standard_normal((m, n)),
            z=rng.standard_normal((m, n)),
            dataset_size=m,
        )
        info = estimate_info(batch, layout, recon_loglik=float(rng.standard_normal()))
        if loss_beta_stcvae(info, cfg) != loss_beta_tcvae(info, cfg):
            exact = False
            break
    return SuiteResult(
        "degeneracy", exact,
        f"grouped == ungrouped objective bit-for-bit on {n_batches} batches",
    )


def estimator_accuracy_suite(quick: bool = False, seed: int = 4) -> SuiteResult:
    """Statistical calibration against quadrature/closed-form oracles.

    Tolerance schedule: full mode M=2048, |err| <= 0.05 (10 seeds);
    quick mode M=512, |err| <= 0.15 (4 seeds).
    """
    m = 512 if quick else 2048
    seeds = 4 if quick else 10
    tol = 0.15 if quick else 0.05
    s = 0.5
    rho = 0.5
    n = 4
    cov = np.full((n, n), rho) + (1 - rho) * np.eye(n)
    chol = np.linalg.cholesky(cov - s * s * np.eye(n))
    tc_true = gaussian_tc(GaussianSpec(mean=np.zeros(n), cov=cov))
    grouped_true = gaussian_grouped_tc(
        GaussianSpec(mean=np.zeros(n), cov=cov), make_layout(n, 2)
    )
    fulls, groupeds = [], []
    layout = make_layout(n, 2)
    for k in range(seeds):
        rng = np.random.default_rng(seed + k)
        mu = rng.standard_normal((m, n)) @ chol.T
        lv = np.full((m, n), 2.0 * math.log(s))
        z = mu + s * rng.standard_normal((m, n))
        info = estimate_info(PosteriorBatch(mu, lv, z, dataset_size=m), layout)
        fulls.append(info.tc_full)
        groupeds.append(info.tc_grouped)
    err_full = abs(float(np.mean(fulls)) - tc_true)
    err_grouped = abs(float(np.mean(groupeds)) - grouped_true)

    means = np.array([[-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]])
    counts = np.array([m // 2 - m // 8, m // 2 - m // 8, m // 8, m // 8])
    counts[0] += m - counts.sum()
    sigma = 0.5
    target = mixture_tc_quadrature_2d(means, sigma, counts / m)
    mix_layout = make_layout(2, 1)
    ests = []
    for k in range(seeds):
        rng = np.random.default_rng(seed + 100 + k)
        comp = np.repeat(np.arange(4), counts)
        mu = means[comp]
        lv = np.full((m, 2), 2.0 * math.log(sigma))
        z = mu + sigma * rng.standard_normal((m, 2))
        info = estimate_info(PosteriorBatch(mu, lv, z, dataset_size=m), mix_layout)
        ests.append(info.tc_full)
    err_mix = abs(float(np.mean(ests)) - target)
    worst = max(err_full, err_grouped, err_mix)
    return SuiteResult(
        "estimator-accuracy", worst <= tol,
        f"errors: equicorr full {err_full:.4f}, grouped {err_grouped:.4f}, "
        f"2-D mixture {err_mix:.4f} (tolerance {tol}, M={m})",
    )


def gradient_check_suite(quick: bool = False, seed: int = 5) -> SuiteResult:
    """Full grouped objective vs central finite differences, float64."""
    spec = MlpSpec(input_shape=(8, 8, 1), latent_dim=4, neuron_num=16, layers=1)
    m = 8
    layout = make_layout(4, 2)
    cfg = LossConfig(beta=6.0, layout=layout)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(m, 64)).astype(np.float64)
    noise = rng.standard_normal((m, 4))
    store = init_params(spec, seed=seed, dtype=np.float64)

    def loss_fn(tensors):
        mu, lv = encode(spec, tensors, x)
        z = reparameterize(mu, lv, noise)
        logits = decode(spec, tensors, z)
        recon = reconstruction_log_likelihood(logits, x)
        info = estimate_info(
            PosteriorBatch(mu, lv, z, dataset_size=m), layout, recon_loglik=recon
        )
        return -loss_beta_stcvae(info, cfg)

    report = grad_check(
        loss_fn, store.arrays, tolerance=1e-4,
        n_coords=60 if quick else 200, seed=seed,
    )
    return SuiteResult(
        "gradient-check", report.passed,
        f"max rel err {report.max_rel_err:.3e} over {report.checked} coords "
        f"(worst {report.worst_param}{list(report.worst_index)})",
    )


def run_all(quick: bool = False, seed: int = 0) -> list[SuiteResult]:
    n_specs = 40 if quick else 200
    return [
        gaussian_identity_suite(n_specs=n_specs, seed=seed),
        inference1_suite(n_specs=n_specs, seed=seed),
        gaussian_telescoping_suite(n_specs=max(10, n_specs // 4), seed=seed + 1),
        estimator_telescoping_suite(seed=seed + 2),
        degeneracy_suite(n_batches=20 if quick else 100, seed=seed + 3),
        estimator_accuracy_suite(quick=quick, seed=seed + 4),
        gradient_check_suite(quick=quick, seed=seed + 5),
    ]
