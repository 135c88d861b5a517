"""Command-line surface: ``stcvae <subcommand>``.

Subcommands: ``verify-oracles``, ``train``, ``sweep``, ``metrics``,
``report``.  Exit codes: 0 success, 1 verification or validation
failure, 2 usage/config errors.  All commands are deterministic given
their config and seed.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, models, verify
from .config import ConfigError, load_sweep_config, load_train_config
from .data import FormatError, read_fvds
from .estimators import PosteriorBatch
from .metrics import (
    MetricScores,
    factor_vae_score,
    mig,
    omniscient_flags,
    sap,
)
from .models import encode
from .params import load_checkpoint, save_checkpoint
from .report import (
    render_report_svg,
    report_summary_lines,
    traversal_strip,
    write_image,
)
from .sweep import (
    OMNISCIENT_DELTA,
    OMNISCIENT_EPSILON,
    OMNISCIENT_EVAL_BATCHES,
    SweepConfigError,
    read_records_csv,
    run_sweep,
    run_trial,
    train_trial,
    write_records_csv,
)

USAGE_ERROR = 2
VALIDATION_ERROR = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stcvae",
        description="Grouped total-correlation VAE toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-oracles", help="run the oracle/estimator/gradient suites")
    p.add_argument("--quick", action="store_true",
                   help="reduced statistical sample sizes (looser tolerances)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("sweep", help="run a full sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config out_dir")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("metrics", help="evaluate metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None, help="write scores JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="fewer voting episodes")

    p = sub.add_parser("report", help="render a sweep records CSV into SVG + summary")
    p.add_argument("records", help="path to a records CSV")
    p.add_argument("--out", default="report_out")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="occurrence fraction defining the collapsed-latent region")
    return parser


def cmd_verify_oracles(args) -> int:
    results = verify.run_all(quick=args.quick, seed=args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.detail}")
    if all(r.passed for r in results):
        print("all suites passed")
        return 0
    failing = ", ".join(r.name for r in results if not r.passed)
    print(f"failing suites: {failing}", file=sys.stderr)
    return VALIDATION_ERROR


def cmd_train(args) -> int:
    trial, seed, out_dir = load_train_config(args.config)
    if args.seed is not None:
        seed = args.seed
    if args.out is not None:
        out_dir = args.out
    if not Path(trial.dataset).exists():
        print(f"dataset file not found: {trial.dataset}", file=sys.stderr)
        return VALIDATION_ERROR
    dataset = read_fvds(trial.dataset)
    trained = train_trial(trial, seed, dataset)
    record = run_trial(trial, seed, dataset=dataset, trained=trained)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv([record], out / "record.csv")

    spec = models.make_spec(
        trial.arch, dataset.image_shape, trial.n, trial.neuron_num, trial.layers
    )
    save_checkpoint(
        trained.store,
        out / "checkpoint.stc",
        metadata={
            "arch": trial.arch,
            "n": trial.n,
            "b_hat": trial.b_hat,
            "beta": trial.beta,
            "neuron_num": trial.neuron_num,
            "layers": trial.layers,
            "seed": seed,
            "input_shape": list(dataset.image_shape),
            "status": record.status,
        },
    )
    strip = traversal_strip(spec, trained.store)
    write_image(strip, out / "traversal.pgm")
    print(f"status={record.status} final_elbo={record.final_elbo:.4f} "
          f"mig={record.mig:.4f}")
    print(f"wrote {out / 'record.csv'}, {out / 'checkpoint.stc'}, "
          f"{out / 'traversal.pgm'}")
    return 0 if record.status == "ok" else VALIDATION_ERROR


def cmd_sweep(args) -> int:
    cfg = load_sweep_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if not Path(cfg.dataset).exists():
        print(f"dataset file not found: {cfg.dataset}", file=sys.stderr)
        return VALIDATION_ERROR
    records = run_sweep(cfg, workers=max(1, args.workers))
    failed = [r for r in records if r.status != "ok"]
    print(f"{len(records)} trials ({len(failed)} failed) -> {cfg.out_dir}/records.csv")
    return 0


def cmd_metrics(args) -> int:
    if not Path(args.checkpoint).exists():
        print(f"checkpoint file not found: {args.checkpoint}", file=sys.stderr)
        return VALIDATION_ERROR
    if not Path(args.dataset).exists():
        print(f"dataset file not found: {args.dataset}", file=sys.stderr)
        return VALIDATION_ERROR
    store, meta = load_checkpoint(args.checkpoint)
    dataset = read_fvds(args.dataset)
    spec = models.make_spec(
        meta["arch"], tuple(meta["input_shape"]), meta["n"],
        meta["neuron_num"], meta["layers"],
    )
    mus, lvs = [], []
    for start in range(0, len(dataset), 1024):
        mu, lv = encode(spec, store, dataset.float_images(slice(start, start + 1024)))
        mus.append(mu.data)
        lvs.append(lv.data)
    mu_all = np.concatenate(mus)
    lv_all = np.concatenate(lvs)
    rng = np.random.default_rng(args.seed)
    z_all = mu_all + np.exp(0.5 * lv_all) * rng.standard_normal(
        mu_all.shape
    ).astype(mu_all.dtype)

    def encode_means(images):
        mu, _ = encode(spec, store, images)
        return mu.data

    flags, entropy = omniscient_flags(
        PosteriorBatch(mu_all, lv_all, z_all, dataset_size=len(dataset)),
        epsilon=OMNISCIENT_EPSILON,
        n_eval_batches=OMNISCIENT_EVAL_BATCHES,
        delta=OMNISCIENT_DELTA,
    )
    scores = MetricScores(
        mig=mig(mu_all, dataset.factor_values, dataset.factor_sizes),
        factor_score=factor_vae_score(
            encode_means, dataset, votes=100 if args.quick else 800, seed=args.seed
        ),
        sap=sap(mu_all, dataset.factor_values),
        per_dim_entropy=entropy,
        omniscient_flags=flags,
    )
    print(f"mig={scores.mig:.4f} factor={scores.factor_score:.4f} "
          f"sap={scores.sap:.4f} omniscient_count={scores.omniscient_count}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({
            "mig": scores.mig,
            "factor_score": scores.factor_score,
            "sap": scores.sap,
            "per_dim_entropy": scores.per_dim_entropy.tolist(),
            "omniscient_flags": scores.omniscient_flags.tolist(),
        }, indent=1, sort_keys=True))
        print(f"wrote {out}")
    return 0


def cmd_report(args) -> int:
    records = read_records_csv(args.records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    svg = render_report_svg(records, region_threshold=args.threshold)
    (out / "report.svg").write_text(svg, encoding="utf-8")
    for line in report_summary_lines(records, region_threshold=args.threshold):
        print(line)
    print(f"wrote {out / 'report.svg'}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "verify-oracles": cmd_verify_oracles,
        "train": cmd_train,
        "sweep": cmd_sweep,
        "metrics": cmd_metrics,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SweepConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
