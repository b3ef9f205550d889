"""Metrics and benchmark aggregation.

Halo matrices are identified only up to column shifts (``H + 1 c^T`` gives
the same choice probabilities), so parameter-recovery errors are computed
after column-centering both matrices.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimation import nll
from .models import choice_log_probs, halo_matrix

__all__ = [
    "cross_entropy",
    "canonicalize_halo",
    "canonicalize_mnl",
    "param_recovery_error",
    "kl_to_truth",
    "entropy",
    "EvalReport",
    "BenchmarkSummary",
    "summarize_benchmark",
    "write_reports_csv",
    "read_reports_csv",
]

REPORT_COLUMNS = (
    "model",
    "dataset",
    "seed",
    "train_ce",
    "test_ce",
    "kl_to_truth",
    "param_error_f2",
    "param_error_l1",
)

# the benchmark metric is the mean NLL itself
cross_entropy = nll


def canonicalize_halo(h) -> np.ndarray:
    """Subtract each column's mean so every column sums to zero."""
    h = np.asarray(h, dtype=float)
    return h - h.mean(axis=0, keepdims=True)


def canonicalize_mnl(alpha) -> np.ndarray:
    """Shift utilities so product 0 has utility 0."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha - alpha[0]


def param_recovery_error(fitted, truth, norm: str = "f2") -> float:
    """``(1/m^2) * ||canon(H_fit) - canon(H_true)||`` (squared Frobenius, or entrywise L1).

    Accepts low-rank, Halo or MNL parameters, or raw ``m x m`` matrices.
    """
    hf, ht = halo_matrix(fitted), halo_matrix(truth)
    if hf.shape != ht.shape:
        raise ValueError(f"dimension mismatch: {hf.shape} vs {ht.shape}")
    d = canonicalize_halo(hf) - canonicalize_halo(ht)
    m2 = hf.shape[0] ** 2
    if norm == "f2":
        return float(np.sum(d * d) / m2)
    if norm == "l1":
        return float(np.sum(np.abs(d)) / m2)
    raise ValueError("norm must be 'f2' or 'l1'")


def kl_to_truth(fitted, truth, assortments) -> float:
    """Mean over assortments of ``KL(p_true(a) || p_fit(a))``.

    Infinite when the fitted model assigns zero probability to an item the
    truth can choose.
    """
    A = np.atleast_2d(np.asarray(assortments))
    if A.shape[0] == 0:
        raise ValueError("need at least one assortment")
    lt = choice_log_probs(truth, A)
    lf = choice_log_probs(fitted, A)
    pt = np.exp(lt)
    with np.errstate(invalid="ignore"):
        terms = np.where(pt > 0, pt * (lt - lf), 0.0)
    # Gibbs: round-off can dip a hair below zero
    return float(max(terms.sum(axis=1).mean(), 0.0))


def entropy(params, assortments) -> float:
    """Mean Shannon entropy (nats) of the model's choice distribution over assortments."""
    logp = choice_log_probs(params, np.atleast_2d(np.asarray(assortments)))
    p = np.exp(logp)
    with np.errstate(invalid="ignore"):
        terms = np.where(p > 0, p * logp, 0.0)
    return float(-terms.sum(axis=1).mean())


@dataclass
class EvalReport:
    """Metrics for one (model, dataset, seed) cell. Missing metrics are ``None``.

    External baselines carry only ``test_ce`` (``seed`` and ``train_ce`` are ``None``).
    """

    model_name: str
    dataset_name: str
    seed: int | None
    train_ce: float | None
    test_ce: float
    kl_to_truth: float | None = None
    param_error: float | None = None
    param_error_l1: float | None = None

    @property
    def nonfinite(self) -> list[str]:
        """Names of metrics that came out infinite or NaN."""
        values = {
            "train_ce": self.train_ce,
            "test_ce": self.test_ce,
            "kl_to_truth": self.kl_to_truth,
            "param_error_f2": self.param_error,
            "param_error_l1": self.param_error_l1,
        }
        return [k for k, v in values.items() if v is not None and not math.isfinite(v)]

    def as_row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return [
            self.model_name,
            self.dataset_name,
            "" if self.seed is None else self.seed,
            fmt(self.train_ce),
            fmt(self.test_ce),
            fmt(self.kl_to_truth),
            fmt(self.param_error),
            fmt(self.param_error_l1),
        ]


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.as_row())


def read_reports_csv(path) -> list[EvalReport]:
    def num(s):
        return None if s == "" else float(s)

    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EvalReport(
                row["model"],
                row["dataset"],
                None if row["seed"] == "" else int(row["seed"]),
                num(row["train_ce"]),
                float(row["test_ce"]),
                num(row["kl_to_truth"]),
                num(row["param_error_f2"]),
                num(row["param_error_l1"]),
            )
            for row in csv.DictReader(fh)
        ]


@dataclass
class BenchmarkSummary:
    reference: str
    models: list[str]
    categories: list[str]
    wins: dict[str, int]
    relative_loss_pct: dict[str, float]
    table: dict[str, dict[str, float]] = field(default_factory=dict)
    relative_loss_mode: str = "ratio_of_means"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)


def summarize_benchmark(
    reports,
    reference: str,
    models=None,
    tie_tol: float = 1e-9,
    relative_loss: str = "ratio_of_means",
) -> BenchmarkSummary:
    """Count per-category wins and average relative loss against a reference model.

    Each (category, model) cell is the mean test cross-entropy over its
    seeds. A model wins a category when its cell is within ``tie_tol`` of
    the category minimum, so tied models all score and wins can sum to more
    than the number of categories. Relative loss is
    ``100 * (mean_c model / mean_c reference - 1)``; with
    ``relative_loss="mean_of_ratios"`` it is
    ``100 * (mean_c (model / reference) - 1)`` instead.
    """
    if relative_loss not in ("ratio_of_means", "mean_of_ratios"):
        raise ValueError("relative_loss must be 'ratio_of_means' or 'mean_of_ratios'")
    cells = defaultdict(list)
    for r in reports:
        cells[(r.dataset_name, r.model_name)].append(r.test_ce)
    categories = sorted({c for c, _ in cells})
    if models is None:
        models = sorted({m for _, m in cells})
    models = list(models)
    if reference not in models:
        raise ValueError(f"reference model {reference!r} has no reports")
    if not categories:
        raise ValueError("no reports")
    missing = [(c, m) for c in categories for m in models if (c, m) not in cells]
    if missing:
        raise ValueError(f"missing (category, model) cells: {missing}")

    table = {c: {m: float(np.mean(cells[(c, m)])) for m in models} for c in categories}
    wins = {m: 0 for m in models}
    for c in categories:
        best = min(table[c].values())
        for m in models:
            if table[c][m] <= best + tie_tol:
                wins[m] += 1

    ref = np.array([table[c][reference] for c in categories])
    rel = {}
    for m in models:
        x = np.array([table[c][m] for c in categories])
        if relative_loss == "ratio_of_means":
            rel[m] = float(100.0 * (x.mean() / ref.mean() - 1.0))
        else:
            rel[m] = float(100.0 * (np.mean(x / ref) - 1.0))
    return BenchmarkSummary(reference, models, categories, wins, rel, table, relative_loss)
