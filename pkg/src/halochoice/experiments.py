"""Benchmark and sample-complexity scaling runners behind the CLI."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .data import load_dataset, split_dataset
from .estimation import FitConfig, fit, nll
from .evaluation import EvalReport, kl_to_truth, param_recovery_error, summarize_benchmark
from .models import MixtureMNLParams, load_params
from .synthetic import SyntheticSpec, sample_choices, sample_assortments, sample_eval_assortments, sample_ground_truth

logger = logging.getLogger(__name__)

__all__ = [
    "truth_path_for",
    "read_manifest",
    "read_baselines",
    "run_benchmark_cell",
    "run_benchmark",
    "run_scaling",
    "write_scaling_csv",
    "write_category_table",
    "SCALING_COLUMNS",
]

SCALING_COLUMNS = ("m", "n", "r", "seed", "model", "metric", "value")
SCALING_MODELS = ("halo", "lowrank")


def truth_path_for(dataset_path) -> Path:
    """``d/name.jsonl`` -> ``d/name.truth.json``."""
    p = Path(dataset_path)
    stem = p.name[: -len(".jsonl")] if p.name.endswith(".jsonl") else p.stem
    return p.with_name(stem + ".truth.json")


def read_manifest(path) -> list[tuple[str, str]]:
    """Rows of ``(category_name, dataset_path)``; relative paths resolve against the manifest."""
    base = Path(path).parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) != {"category_name", "dataset_path"}:
            raise ValueError("manifest needs exactly the columns category_name, dataset_path")
        rows = [(r["category_name"], str(base / r["dataset_path"])) for r in reader]
    if not rows:
        raise ValueError("manifest lists no datasets")
    return rows


def read_baselines(path) -> list[EvalReport]:
    """External test cross-entropies: columns ``category_name, model_name, test_ce``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) != {"category_name", "model_name", "test_ce"}:
            raise ValueError("baseline file needs exactly the columns category_name, model_name, test_ce")
        return [
            EvalReport(r["model_name"], r["category_name"], None, None, float(r["test_ce"]))
            for r in reader
        ]


def _config_for(base: FitConfig, seed: int) -> FitConfig:
    return dataclasses.replace(base, seed=seed)


def run_benchmark_cell(category, path, model, seed, train_fraction, config: FitConfig) -> EvalReport:
    """Split, fit and evaluate one (category, model, seed) cell."""
    data = load_dataset(path)
    train, test = split_dataset(data, train_fraction, seed)
    result = fit(model, train, _config_for(config, seed))
    report = EvalReport(model, category, seed, nll(result.params, train), nll(result.params, test))
    tpath = truth_path_for(path)
    if tpath.exists():
        truth = load_params(tpath)
        report.kl_to_truth = kl_to_truth(result.params, truth, test.assortments)
        if not isinstance(result.params, MixtureMNLParams):
            report.param_error = param_recovery_error(result.params, truth, "f2")
            report.param_error_l1 = param_recovery_error(result.params, truth, "l1")
    logger.info("%s %s seed=%d test_ce=%.6f", category, model, seed, report.test_ce)
    return report


def _run_cell(args):
    return run_benchmark_cell(*args)


def run_benchmark(
    manifest,
    models,
    seeds=(0, 1, 2),
    train_fraction=0.7,
    config: FitConfig | None = None,
    reference="lowrank",
    baselines=(),
    relative_loss="ratio_of_means",
    jobs=1,
):
    """Fit every model on every category for every seed and summarize.

    Returns ``(reports, summary)``; reports are ordered by manifest row,
    then model, then seed, whatever the number of worker processes.
    """
    config = config or FitConfig()
    cells = [
        (category, path, model, seed, train_fraction, config)
        for category, path in manifest
        for model in models
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_cell, cells))
    else:
        reports = [_run_cell(c) for c in cells]
    baselines = list(baselines)
    all_models = list(models) + sorted({b.model_name for b in baselines} - set(models))
    summary = summarize_benchmark(
        reports + baselines, reference, models=all_models, relative_loss=relative_loss
    )
    return reports, summary


def write_category_table(summary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category_name"] + list(summary.models))
        for c in summary.categories:
            w.writerow([c] + [repr(summary.table[c][m]) for m in summary.models])


def run_scaling(ms, ns, r, seeds, q=0.5, config: FitConfig | None = None, kl_assortments=100):
    """Fit full and low-rank Halo MNL on nested synthetic samples.

    For each ``(m, seed)`` one ground truth is drawn; each ``n`` uses the
    first ``n`` transactions of the same seeded stream. Returns long-format
    rows ``(m, n, r, seed, model, metric, value)`` for the metrics
    ``param_error_f2``, ``param_error_l1`` and ``kl_to_truth`` (on fresh
    held-out assortments).
    """
    config = config or FitConfig()
    rows = []
    for m in ms:
        for seed in seeds:
            spec = SyntheticSpec(m=m, r=r, q=q, n=max(ns), seed=seed)
            truth = sample_ground_truth(spec)
            full = sample_choices(truth, sample_assortments(spec), seed)
            held_out = sample_eval_assortments(spec, kl_assortments)
            for n in sorted(ns):
                data = full[:n]
                for model in SCALING_MODELS:
                    cfg = dataclasses.replace(config, seed=seed, rank=r)
                    params = fit(model, data, cfg).params
                    metrics = {
                        "param_error_f2": param_recovery_error(params, truth, "f2"),
                        "param_error_l1": param_recovery_error(params, truth, "l1"),
                        "kl_to_truth": kl_to_truth(params, truth, held_out),
                    }
                    logger.info("m=%d n=%d seed=%d %s %s", m, n, seed, model, metrics)
                    rows.extend((m, n, r, seed, model, k, v) for k, v in metrics.items())
    return rows


def write_scaling_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCALING_COLUMNS)
        for row in rows:
            w.writerow(list(row[:-1]) + [repr(float(row[-1]))])


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
