"""Command-line interface: ``halochoice {generate,fit,benchmark,scaling}``.

Failures print one line ``error: <kind>: <message>`` to stderr and exit
nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .data import ChoiceDataError, load_dataset, save_dataset
from .estimation import FAMILIES, FitConfig, FitError, fit, nll
from .evaluation import write_reports_csv
from .experiments import (
    ensure_dir,
    read_baselines,
    read_manifest,
    run_benchmark,
    run_scaling,
    write_category_table,
    write_scaling_csv,
)
from .models import save_params
from .synthetic import SyntheticSpec, generate

# flag name -> FitConfig field
_FIT_FLAGS = {
    "lambda": ("lambda_", float),
    "rank": ("rank", int),
    "mixture-k": ("mixture_k", int),
    "step-size": ("step_size", float),
    "beta1": ("beta1", float),
    "beta2": ("beta2", float),
    "eps": ("eps", float),
    "epochs": ("epochs", int),
    "batch-size": ("batch_size", int),
    "seed": ("seed", int),
    "init-scale": ("init_scale", float),
    "patience": ("patience", int),
    "val-fraction": ("val_fraction", float),
    "diag-mode": ("diag_mode", str),
    "optimizer": ("optimizer", str),
    "penalty-sign": ("penalty_sign", str),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {self.prog}: {message}\n")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a nonnegative integer, got {s}")
    return v


def _add_fit_flags(p, skip=()):
    g = p.add_argument_group("estimator settings (override --config)")
    g.add_argument("--config", help="flat 'key = value' FitConfig file")
    for flag, (field, kind) in _FIT_FLAGS.items():
        if flag in skip:
            continue
        default = getattr(FitConfig(), field)
        g.add_argument(f"--{flag}", dest=f"fit_{field}", type=kind, default=None,
                       help=f"default {default}")


def _fit_config(args) -> FitConfig:
    config = FitConfig.load(args.config) if args.config else FitConfig()
    overrides = {
        field: getattr(args, f"fit_{field}")
        for field, _ in _FIT_FLAGS.values()
        if getattr(args, f"fit_{field}", None) is not None
    }
    config = dataclasses.replace(config, **overrides)
    config.validate()
    return config


def cmd_generate(args) -> None:
    spec = SyntheticSpec(
        m=args.m, r=args.r, q=args.q, alpha_range=(args.alpha_low, args.alpha_high),
        factor_scale=args.factor_scale, n=args.n, seed=args.seed,
    )
    truth, data = generate(spec)
    out = ensure_dir(args.out)
    save_dataset(data, out / f"{args.name}.jsonl")
    save_params(truth, out / f"{args.name}.truth.json")
    print(f"n={spec.n} m={spec.m} r={spec.r} seed={spec.seed}")


def cmd_fit(args) -> None:
    data = load_dataset(args.dataset)
    config = _fit_config(args)
    result = fit(args.family, data, config)
    out = ensure_dir(args.out)
    result.save(out)
    config.save(out / "fit_config.txt")
    val = result.trace[-1].val_ce if result.trace else float("nan")
    best = result.trace[result.best_epoch - 1] if result.best_epoch else None
    print(f"family={args.family} epochs_run={result.epochs_run} converged={result.converged}")
    print(f"final_train_objective={result.final_objective!r} final_val_ce={val!r}")
    if best is not None:
        print(f"best_epoch={result.best_epoch} best_val_ce={best.val_ce!r}")
    if args.test:
        print(f"test_ce={nll(result.params, load_dataset(args.test))!r}")


def cmd_benchmark(args) -> None:
    manifest = read_manifest(args.manifest)
    config = _fit_config(args)
    baselines = read_baselines(args.baselines) if args.baselines else []
    reports, summary = run_benchmark(
        manifest, args.models, seeds=args.seeds, train_fraction=args.train_fraction,
        config=config, reference=args.reference, baselines=baselines,
        relative_loss=args.relative_loss, jobs=args.jobs,
    )
    out = ensure_dir(args.out)
    write_reports_csv(reports, out / "reports.csv")
    write_category_table(summary, out / "category_table.csv")
    (out / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    print(f"{'model':<24}{'wins':>6}{'loss':>10}")
    for m in summary.models:
        print(f"{m:<24}{summary.wins[m]:>6}{summary.relative_loss_pct[m]:>9.2f}%")


def cmd_scaling(args) -> None:
    config = _fit_config(args)
    rows = run_scaling(args.m, args.n, args.r, args.seeds, q=args.q, config=config,
                       kl_assortments=args.kl_assortments)
    out = ensure_dir(args.out)
    write_scaling_csv(rows, out / "scaling.csv")
    print(f"wrote {len(rows)} rows to {out / 'scaling.csv'}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="halochoice", description="Halo MNL / self-attention choice models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a synthetic low-rank Halo MNL dataset",
                       description="Writes OUT/NAME.jsonl and OUT/NAME.truth.json.")
    p.add_argument("--m", type=_positive_int, required=True, help="number of products")
    p.add_argument("--r", type=_positive_int, default=2, help="rank of the true halo part")
    p.add_argument("--q", type=float, default=0.5, help="per-product inclusion probability")
    p.add_argument("--n", type=_positive_int, required=True, help="number of transactions")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--alpha-low", type=float, default=-1.0)
    p.add_argument("--alpha-high", type=float, default=1.0)
    p.add_argument("--factor-scale", type=float, default=None, help="default 1/sqrt(r)")
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit a model to a transaction file",
                       description="Writes OUT/params.json, OUT/trace.csv and OUT/fit_config.txt.")
    p.add_argument("dataset")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--test", help="optional held-out transaction file to report test CE on")
    p.add_argument("--out", default=".")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser(
        "benchmark", help="cross-entropy benchmark across categories, models and seeds",
        description="Manifest: CSV with columns category_name,dataset_path. Writes "
        "OUT/reports.csv (one row per category, model, seed), OUT/category_table.csv "
        "(seed-averaged test CE) and OUT/summary.json (wins and relative loss).",
    )
    p.add_argument("manifest")
    p.add_argument("--models", nargs="+", choices=FAMILIES, default=["mnl", "halo", "lowrank"])
    p.add_argument("--seeds", nargs="+", type=_nonneg_int, default=[0, 1, 2])
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--reference", default="lowrank")
    p.add_argument("--baselines", help="CSV with columns category_name,model_name,test_ce")
    p.add_argument("--relative-loss", choices=("ratio_of_means", "mean_of_ratios"),
                   default="ratio_of_means")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", default=".")
    _add_fit_flags(p, skip=("seed",))
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser(
        "scaling", help="parameter-recovery and KL versus sample size",
        description="Writes OUT/scaling.csv in long format (m,n,r,seed,model,metric,value).",
    )
    p.add_argument("--m", nargs="+", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, default=2)
    p.add_argument("--n", nargs="+", type=_positive_int, required=True)
    p.add_argument("--seeds", nargs="+", type=_nonneg_int, default=[0, 1, 2])
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--kl-assortments", type=_positive_int, default=100)
    p.add_argument("--out", default=".")
    _add_fit_flags(p, skip=("seed", "rank"))
    p.set_defaults(func=cmd_scaling)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ChoiceDataError, FitError, ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
