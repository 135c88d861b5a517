"""Capacity x granularity x beta x seed sweep harness.

Each trial trains one model with the grouped-TC objective and records
the unweighted ELBO, the estimator terms, the metric panel and the
collapsed-dimension count.  Trials are deterministic given their seed
and cell, independent of execution order, so a sweep produces identical
output at any worker count; per-trial results are flushed to disk as
they finish, and a rerun skips completed cells.

The canonical data product is one CSV (see ``CSV_HEADER``).  Wall-clock
time is telemetry, not science: by default the wall_time_s column is
written as 0.000 so the CSV is byte-reproducible, and real timings are
opt-in via ``record_wall_time`` (they live in the per-trial JSON either
way).
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from . import models
from .data import FactorDataset, batch_indices, read_fvds
from .estimators import PosteriorBatch, estimate_info
from .grouping import make_layout, valid_grouping_factors
from .losses import LossConfig, elbo, loss_beta_stcvae, loss_beta_tcvae
from .metrics import factor_vae_score, mig, omniscient_flags, sap
from .models import (
    decode,
    encode,
    init_params,
    param_count,
    reconstruction_log_likelihood,
    reparameterize,
)
from .optim import DivergenceError, adam_step


class SweepConfigError(ValueError):
    """Raised for invalid trial or sweep configurations."""


CSV_HEADER = (
    "seed,n,b_hat,g,beta,neuron_num,layers,arch,param_count,final_elbo,"
    "recon,index_code_mi,tc_grouped,dimwise_kl,mig,factor_score,sap,"
    "omniscient_count,wall_time_s,status"
)

OMNISCIENT_EPSILON = 0.001
OMNISCIENT_DELTA = 0.01
OMNISCIENT_EVAL_BATCHES = 12


@dataclass(frozen=True)
class TrialConfig:
    """Parameters of a single training run."""

    dataset: str
    arch: str
    n: int
    b_hat: int
    beta: float
    neuron_num: int
    layers: int = 1
    iterations: int = 2000
    batch_size: int = 64
    lr: float = 1e-4
    alpha: float = 1.0
    objective: str = "stcvae"  # "stcvae" or "tcvae"
    eval_every: int = 0  # 0 = iterations // 10
    eval_batch: int = 512
    metric_votes: int = 300

    def __post_init__(self):
        if self.objective not in ("stcvae", "tcvae"):
            raise SweepConfigError(f"unknown objective {self.objective!r}")
        if self.iterations < 1 or self.batch_size < 1:
            raise SweepConfigError("iterations and batch_size must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    """The full grid: every combination becomes one trial per seed."""

    dataset: str
    latent_dims: tuple[int, ...]
    grouping_factors: tuple[int, ...]  # must be valid for every n in the grid
    capacities: tuple[int, ...]  # neuron_num values
    betas: tuple[float, ...]
    seeds: int
    iterations: int
    batch_size: int = 64
    lr: float = 1e-4
    layers: int = 1
    arch: str = "mlp"
    alpha: float = 1.0
    eval_every: int = 0
    eval_batch: int = 512
    metric_votes: int = 300
    out_dir: str = "sweep_out"
    record_wall_time: bool = False

    def __post_init__(self):
        if not self.latent_dims or not self.capacities or not self.betas:
            raise SweepConfigError(
                "latent_dims, capacities and betas must be non-empty"
            )
        if not self.grouping_factors:
            raise SweepConfigError("grouping_factors must be non-empty")
        if self.seeds < 1 or self.iterations < 1:
            raise SweepConfigError("seeds and iterations must be >= 1")
        for n in self.latent_dims:
            valid = valid_grouping_factors(n)
            for b in self.grouping_factors:
                if b not in valid:
                    raise SweepConfigError(
                        f"grouping factor {b} invalid for n={n}; "
                        f"valid: {list(valid)}"
                    )


@dataclass
class TrialRecord:
    """One trained model's configuration and results (one CSV row)."""

    seed: int
    n: int
    b_hat: int
    g: float
    beta: float
    neuron_num: int
    layers: int
    arch: str
    param_count: int
    final_elbo: float
    recon: float
    index_code_mi: float
    tc_grouped: float
    dimwise_kl: float
    mig: float
    factor_score: float
    sap: float
    omniscient_count: int
    wall_time_seconds: float
    status: str = "ok"
    # Diagnostics, not part of the CSV schema: (iteration, elbo) pairs.
    elbo_history: tuple = field(default_factory=tuple)

    def csv_row(self, include_wall_time: bool = False) -> str:
        wall = self.wall_time_seconds if include_wall_time else 0.0
        return ",".join(
            [
                str(self.seed),
                str(self.n),
                str(self.b_hat),
                f"{self.g:.6f}",
                f"{self.beta:g}",
                str(self.neuron_num),
                str(self.layers),
                self.arch,
                str(self.param_count),
                f"{self.final_elbo:.6f}",
                f"{self.recon:.6f}",
                f"{self.index_code_mi:.6f}",
                f"{self.tc_grouped:.6f}",
                f"{self.dimwise_kl:.6f}",
                f"{self.mig:.6f}",
                f"{self.factor_score:.6f}",
                f"{self.sap:.6f}",
                str(self.omniscient_count),
                f"{wall:.3f}",
                self.status,
            ]
        )

    def grid_key(self) -> tuple:
        return (self.neuron_num, self.n, self.b_hat, self.beta, self.seed)


def _trial_rng(cfg: TrialConfig, seed: int, stream: int) -> np.random.Generator:
    """Trial-and-stream-keyed generator, independent of execution order."""
    return np.random.default_rng(
        np.random.SeedSequence(
            [
                seed,
                stream,
                cfg.n,
                cfg.b_hat,
                cfg.neuron_num,
                cfg.layers,
                int(round(cfg.beta * 1_000_000)),
                cfg.iterations,
            ]
        )
    )


_DATASET_CACHE: dict[str, FactorDataset] = {}


def _load_dataset(path: str) -> FactorDataset:
    ds = _DATASET_CACHE.get(path)
    if ds is None:
        ds = read_fvds(path)
        _DATASET_CACHE[path] = ds
    return ds


@dataclass
class TrainedTrial:
    """Training-stage output: parameters, ELBO trace, divergence point."""

    store: object
    history: tuple[tuple[int, float], ...]
    failed_at: int | None


def train_trial(
    cfg: TrialConfig, seed: int, dataset: FactorDataset
) -> TrainedTrial:
    """Run the optimization loop only; deterministic per (cfg, seed)."""
    n_data = len(dataset)
    spec = models.make_spec(
        cfg.arch, dataset.image_shape, cfg.n, cfg.neuron_num, cfg.layers
    )
    layout = make_layout(cfg.n, cfg.b_hat)
    loss_cfg = LossConfig(beta=cfg.beta, layout=layout, alpha=cfg.alpha)
    loss_fn = loss_beta_stcvae if cfg.objective == "stcvae" else loss_beta_tcvae

    init_rng = _trial_rng(cfg, seed, stream=0)
    store = init_params(spec, seed=int(init_rng.integers(2**31)))
    train_rng = _trial_rng(cfg, seed, stream=1)
    eval_rng = _trial_rng(cfg, seed, stream=2)

    eval_idx = eval_rng.integers(0, n_data, size=min(cfg.eval_batch, n_data))
    eval_x = dataset.float_images(eval_idx)
    eval_noise = eval_rng.standard_normal(
        (eval_idx.size, cfg.n), dtype=np.float32
    )

    def eval_elbo() -> float:
        mu, lv = encode(spec, store, eval_x)
        z = reparameterize(mu, lv, eval_noise)
        logits = decode(spec, store, z)
        recon = float(reconstruction_log_likelihood(logits, eval_x).data)
        return float(elbo(recon, mu.data, lv.data))

    eval_every = cfg.eval_every or max(1, cfg.iterations // 10)
    history: list[tuple[int, float]] = [(0, eval_elbo())]
    failed_at: int | None = None

    for it in range(1, cfg.iterations + 1):
        idx = batch_indices(train_rng, n_data, cfg.batch_size)
        x = dataset.float_images(idx)
        noise = train_rng.standard_normal((cfg.batch_size, cfg.n), dtype=np.float32)
        tensors = store.tensors(requires_grad=True)
        mu, lv = encode(spec, tensors, x)
        z = reparameterize(mu, lv, noise)
        logits = decode(spec, tensors, z)
        recon = reconstruction_log_likelihood(logits, x)
        info = estimate_info(
            PosteriorBatch(mu, lv, z, dataset_size=n_data), layout,
            recon_loglik=recon,
        )
        loss = loss_fn(info, loss_cfg)
        if not np.isfinite(float(loss.data)):
            failed_at = it
            break
        (-loss).backward()
        try:
            adam_step(store, {k: t.grad for k, t in tensors.items()}, cfg.lr)
        except DivergenceError:
            failed_at = it
            break
        if it % eval_every == 0 or it == cfg.iterations:
            history.append((it, eval_elbo()))
    return TrainedTrial(store=store, history=tuple(history), failed_at=failed_at)


def train_params(cfg: TrialConfig, seed: int, dataset: FactorDataset):
    """Trained parameter store only (checkpoint convenience)."""
    return train_trial(cfg, seed, dataset).store


def run_trial(
    cfg: TrialConfig,
    seed: int,
    dataset: FactorDataset | None = None,
    trained: TrainedTrial | None = None,
) -> TrialRecord:
    """Train one model and evaluate it; never raises on divergence.

    A non-finite loss or gradient marks the record ``failed_at_<iter>``
    with NaN results so the surrounding sweep can continue.  Passing an
    already ``trained`` trial skips straight to evaluation.
    """
    started = time.perf_counter()
    if dataset is None:
        dataset = _load_dataset(cfg.dataset)
    n_data = len(dataset)
    spec = models.make_spec(
        cfg.arch, dataset.image_shape, cfg.n, cfg.neuron_num, cfg.layers
    )
    layout = make_layout(cfg.n, cfg.b_hat)
    if trained is None:
        trained = train_trial(cfg, seed, dataset)
    store, history, failed_at = trained.store, trained.history, trained.failed_at

    nan = float("nan")
    record = TrialRecord(
        seed=seed,
        n=cfg.n,
        b_hat=cfg.b_hat,
        g=float(layout.g),
        beta=cfg.beta,
        neuron_num=cfg.neuron_num,
        layers=cfg.layers,
        arch=cfg.arch,
        param_count=param_count(spec),
        final_elbo=nan,
        recon=nan,
        index_code_mi=nan,
        tc_grouped=nan,
        dimwise_kl=nan,
        mig=nan,
        factor_score=nan,
        sap=nan,
        omniscient_count=0,
        wall_time_seconds=0.0,
        status="ok" if failed_at is None else f"failed_at_{failed_at}",
        elbo_history=tuple(history),
    )
    if failed_at is not None:
        record.wall_time_seconds = time.perf_counter() - started
        return record

    # Final evaluation pass over the whole dataset.
    mu_all, lv_all = _encode_all(spec, store, dataset)
    metric_rng = _trial_rng(cfg, seed, stream=3)
    z_all = mu_all + np.exp(0.5 * lv_all) * metric_rng.standard_normal(
        mu_all.shape, dtype=np.float32
    ).astype(mu_all.dtype)
    eval_rows = min(n_data, 4096)
    post = PosteriorBatch(
        mu_all[:eval_rows], lv_all[:eval_rows], z_all[:eval_rows],
        dataset_size=n_data,
    )
    logits = decode(spec, store, z_all[:eval_rows])
    recon_final = float(
        reconstruction_log_likelihood(logits, dataset.float_images(slice(0, eval_rows))).data
    )
    info = estimate_info(post, layout, recon_loglik=recon_final)
    record.final_elbo = history[-1][1]
    record.recon = info.recon
    record.index_code_mi = info.index_code_mi
    record.tc_grouped = info.tc_grouped
    record.dimwise_kl = info.dimwise_kl

    record.mig = mig(mu_all, dataset.factor_values, dataset.factor_sizes)
    record.sap = sap(mu_all, dataset.factor_values)

    def encode_means(images: np.ndarray) -> np.ndarray:
        mu, _ = encode(spec, store, images)
        return mu.data

    record.factor_score = factor_vae_score(
        encode_means,
        dataset,
        votes=cfg.metric_votes,
        seed=int(metric_rng.integers(2**31)),
    )
    flags, _ = omniscient_flags(
        post,
        epsilon=OMNISCIENT_EPSILON,
        n_eval_batches=OMNISCIENT_EVAL_BATCHES,
        delta=OMNISCIENT_DELTA,
    )
    record.omniscient_count = int(flags.sum())
    record.wall_time_seconds = time.perf_counter() - started
    return record


def _encode_all(spec, store, dataset: FactorDataset, chunk: int = 1024):
    mus, lvs = [], []
    for start in range(0, len(dataset), chunk):
        x = dataset.float_images(slice(start, start + chunk))
        mu, lv = encode(spec, store, x)
        mus.append(mu.data)
        lvs.append(lv.data)
    return np.concatenate(mus, axis=0), np.concatenate(lvs, axis=0)


# -- sweep orchestration ---------------------------------------------------


def sweep_grid(cfg: SweepConfig) -> list[tuple[TrialConfig, int]]:
    """The full (trial, seed) list, sorted by grid key."""
    trials = []
    for neuron_num in cfg.capacities:
        for n in cfg.latent_dims:
            for b_hat in cfg.grouping_factors:
                for beta in cfg.betas:
                    for seed in range(cfg.seeds):
                        trial = TrialConfig(
                            dataset=cfg.dataset,
                            arch=cfg.arch,
                            n=n,
                            b_hat=b_hat,
                            beta=beta,
                            neuron_num=neuron_num,
                            layers=cfg.layers,
                            iterations=cfg.iterations,
                            batch_size=cfg.batch_size,
                            lr=cfg.lr,
                            alpha=cfg.alpha,
                            eval_every=cfg.eval_every,
                            eval_batch=cfg.eval_batch,
                            metric_votes=cfg.metric_votes,
                        )
                        trials.append((trial, seed))
    trials.sort(
        key=lambda ts: (ts[0].neuron_num, ts[0].n, ts[0].b_hat, ts[0].beta, ts[1])
    )
    return trials


def _trial_key(trial: TrialConfig, seed: int) -> str:
    return (
        f"cap{trial.neuron_num}_n{trial.n}_b{trial.b_hat}"
        f"_beta{trial.beta:g}_seed{seed}"
    )


_WORKER_DATASET: FactorDataset | None = None


def _worker_init(images, factor_values, factor_sizes, name):
    global _WORKER_DATASET
    _WORKER_DATASET = FactorDataset(
        images=images, factor_values=factor_values,
        factor_sizes=factor_sizes, name=name,
    )


def _worker_run(trial: TrialConfig, seed: int) -> TrialRecord:
    return run_trial(trial, seed, dataset=_WORKER_DATASET)


def run_sweep(cfg: SweepConfig, workers: int = 1) -> list[TrialRecord]:
    """Execute the grid, resuming completed cells, and write the outputs.

    Produces ``records.csv`` (sorted by grid key), ``manifest.json`` and
    one JSON per trial under ``trials/``.
    """
    dataset = read_fvds(cfg.dataset)  # fail before any trial if unloadable
    out = Path(cfg.out_dir)
    trials_dir = out / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)

    grid = sweep_grid(cfg)
    records: dict[str, TrialRecord] = {}
    pending: list[tuple[TrialConfig, int]] = []
    for trial, seed in grid:
        path = trials_dir / f"{_trial_key(trial, seed)}.json"
        if path.exists():
            records[_trial_key(trial, seed)] = _record_from_json(
                json.loads(path.read_text())
            )
        else:
            pending.append((trial, seed))

    def finish(trial: TrialConfig, seed: int, record: TrialRecord):
        key = _trial_key(trial, seed)
        records[key] = record
        payload = asdict(record)
        (trials_dir / f"{key}.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1)
        )

    if workers <= 1:
        for trial, seed in pending:
            finish(trial, seed, run_trial(trial, seed, dataset=dataset))
    else:
        ctx = get_context("fork")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_worker_init,
            initargs=(
                dataset.images,
                dataset.factor_values,
                dataset.factor_sizes,
                dataset.name,
            ),
        ) as pool:
            futures = {
                pool.submit(_worker_run, trial, seed): (trial, seed)
                for trial, seed in pending
            }
            for future, (trial, seed) in futures.items():
                finish(trial, seed, future.result())

    ordered = [records[_trial_key(t, s)] for t, s in grid]
    write_records_csv(ordered, out / "records.csv", cfg.record_wall_time)
    manifest = {
        "version": _pkg_version,
        "config": asdict(cfg),
        "grid_size": len(grid),
        "failed": sum(1 for r in ordered if r.status != "ok"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return ordered


def _record_from_json(payload: dict) -> TrialRecord:
    payload = dict(payload)
    payload["elbo_history"] = tuple(tuple(p) for p in payload.get("elbo_history", ()))
    return TrialRecord(**payload)


def write_records_csv(records, path, include_wall_time: bool = False):
    rows = [CSV_HEADER] + [r.csv_row(include_wall_time) for r in records]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def read_records_csv(path) -> list[TrialRecord]:
    """Parse a records CSV, reporting malformed rows by number."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise SweepConfigError(
            f"{path}: header does not match the records schema"
        )
    names = CSV_HEADER.split(",")
    records = []
    for row_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise SweepConfigError(
                f"{path}: row {row_no}: expected {len(names)} columns, "
                f"got {len(parts)}"
            )
        vals = dict(zip(names, parts))
        try:
            records.append(
                TrialRecord(
                    seed=int(vals["seed"]),
                    n=int(vals["n"]),
                    b_hat=int(vals["b_hat"]),
                    g=float(vals["g"]),
                    beta=float(vals["beta"]),
                    neuron_num=int(vals["neuron_num"]),
                    layers=int(vals["layers"]),
                    arch=vals["arch"],
                    param_count=int(vals["param_count"]),
                    final_elbo=float(vals["final_elbo"]),
                    recon=float(vals["recon"]),
                    index_code_mi=float(vals["index_code_mi"]),
                    tc_grouped=float(vals["tc_grouped"]),
                    dimwise_kl=float(vals["dimwise_kl"]),
                    mig=float(vals["mig"]),
                    factor_score=float(vals["factor_score"]),
                    sap=float(vals["sap"]),
                    omniscient_count=int(vals["omniscient_count"]),
                    wall_time_seconds=float(vals["wall_time_s"]),
                    status=vals["status"],
                )
            )
        except ValueError as exc:
            raise SweepConfigError(f"{path}: row {row_no}: {exc}") from exc
    return records


# -- analysis ---------------------------------------------------------------


@dataclass(frozen=True)
class OptimalPoint:
    """Best-granularity summary for one capacity.

    ``mean_best_g``: per trial family (seed, n, beta) take the g with the
    highest final ELBO, then average those g values.  ``g_of_mean_elbo``
    applies the orderings the other way round (argmax of the seed-averaged
    ELBO), kept as a secondary diagnostic.  Ties break toward smaller g.
    """

    capacity: int
    mean_best_g: float
    g_of_mean_elbo: float
    n_trials: int


def optimal_granularity_points(records) -> list[OptimalPoint]:
    """Per-capacity average granularity of the best-ELBO models."""
    ok = [r for r in records if r.status == "ok" and np.isfinite(r.final_elbo)]
    points = []
    for capacity in sorted({r.neuron_num for r in ok}):
        cell = [r for r in ok if r.neuron_num == capacity]
        families: dict[tuple, list[TrialRecord]] = {}
        for r in cell:
            families.setdefault((r.seed, r.n, r.beta), []).append(r)
        best_gs = []
        for fam in families.values():
            best = max(sorted(fam, key=lambda r: r.g), key=lambda r: r.final_elbo)
            best_gs.append(best.g)
        # Secondary ordering: average ELBO over seeds per g, then argmax.
        by_g: dict[float, list[float]] = {}
        for r in cell:
            by_g.setdefault(r.g, []).append(r.final_elbo)
        means = sorted((g, float(np.mean(v))) for g, v in by_g.items())
        g_of_mean = max(means, key=lambda gm: gm[1])[0]
        points.append(
            OptimalPoint(
                capacity=capacity,
                mean_best_g=float(np.mean(best_gs)),
                g_of_mean_elbo=float(g_of_mean),
                n_trials=len(cell),
            )
        )
    return points


class FitError(ValueError):
    """Raised when a trajectory fit is underdetermined."""


@dataclass(frozen=True)
class TrajectoryFit:
    """Least-squares quadratic g = a*capacity^2 + b*capacity + c."""

    a: float
    b: float
    c: float
    residual_norm: float

    def __call__(self, capacity):
        capacity = np.asarray(capacity, dtype=np.float64)
        return self.a * capacity**2 + self.b * capacity + self.c


def fit_trajectory_curve(points) -> TrajectoryFit:
    """Fit the optimal-granularity trajectory with a quadratic.

    ``points`` are (capacity, g) pairs or ``OptimalPoint`` objects; at
    least three distinct capacities are required.
    """
    pairs = [
        (p.capacity, p.mean_best_g) if isinstance(p, OptimalPoint) else tuple(p)
        for p in points
    ]
    caps = np.array([c for c, _ in pairs], dtype=np.float64)
    gs = np.array([g for _, g in pairs], dtype=np.float64)
    if np.unique(caps).size < 3:
        raise FitError(
            f"need >= 3 distinct capacities to fit a quadratic, "
            f"got {np.unique(caps).size}"
        )
    design = np.vander(caps, 3)
    coef, *_ = np.linalg.lstsq(design, gs, rcond=None)
    residual = float(np.linalg.norm(design @ coef - gs))
    return TrajectoryFit(
        a=float(coef[0]), b=float(coef[1]), c=float(coef[2]),
        residual_norm=residual,
    )


@dataclass(frozen=True)
class RegionCell:
    """Collapsed-dimension occurrence fraction for one grid cell."""

    capacity: int
    g: float
    fraction: float
    in_region: bool


def omniscient_region(records, threshold: float = 0.5) -> list[RegionCell]:
    """Per (capacity, granularity) cell: fraction of trials with at least
    one flagged dimension; cells at or above ``threshold`` form the
    reported region."""
    ok = [r for r in records if r.status == "ok"]
    cells: dict[tuple[int, float], list[int]] = {}
    for r in ok:
        cells.setdefault((r.neuron_num, r.g), []).append(r.omniscient_count)
    out = []
    for (capacity, g), counts in sorted(cells.items()):
        fraction = float(np.mean([c >= 1 for c in counts]))
        out.append(
            RegionCell(
                capacity=capacity,
                g=g,
                fraction=fraction,
                in_region=fraction >= threshold,
            )
        )
    return out


def baseline_granularity(records) -> float:
    """Average granularity of the singleton-block rows (the ungrouped
    baseline embedded in every sweep): mean of 1/m over the latent sizes
    present."""
    sizes = sorted({r.n for r in records})
    if not sizes:
        raise SweepConfigError("no records to derive a baseline from")
    return float(np.mean([1.0 / make_layout(n, 1).m for n in sizes]))
