"""Regularized maximum-likelihood fitting with analytic gradients.

The training objective, minimized, is the mean negative log-likelihood per
transaction plus ``lambda * ||theta||^2`` over the penalized parameters:
alpha, U, V for the low-rank model, H for Halo MNL, alpha for MNL and the
component utilities (not the weight logits) for the mixture.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import ChoiceDataset
from .models import (
    HaloParams,
    LowRankHaloParams,
    MixtureMNLParams,
    MNLParams,
    choice_log_probs,
    lowrank_materialize,
    masked_log_softmax,
    save_params,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FAMILIES",
    "FitConfig",
    "FitResult",
    "FitError",
    "NonFiniteObjectiveError",
    "nll",
    "penalty",
    "objective",
    "loss_and_grad",
    "objective_grad",
    "grad_mnl",
    "grad_halo",
    "grad_lowrank",
    "grad_mixture",
    "init_params",
    "fit",
    "params_to_arrays",
    "params_from_arrays",
]

FAMILIES = ("mnl", "mixture", "halo", "lowrank")

# fixed sub-stream ids so each purpose draws from its own generator
_STREAM_VALIDATION, _STREAM_SHUFFLE, _STREAM_INIT = 0, 1, 2


class FitError(RuntimeError):
    pass


class NonFiniteObjectiveError(FitError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite objective {value} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class FitConfig:
    """Estimator hyperparameters.

    ``lambda_`` is written as ``lambda`` in config files. ``patience=0``
    disables early stopping. ``penalty_sign`` selects whether the squared
    norm is added to the minimized loss ("penalize") or subtracted ("reward").
    """

    lambda_: float = 1e-4
    rank: int = 2
    mixture_k: int = 2
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    init_scale: float = 0.01
    patience: int = 10
    val_fraction: float = 0.1
    diag_mode: str = "additive"
    optimizer: str = "adam"
    penalty_sign: str = "penalize"

    def validate(self, family: str | None = None, m: int | None = None) -> None:
        if self.lambda_ < 0:
            raise ValueError("lambda must be nonnegative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.init_scale < 0:
            raise ValueError("init_scale must be nonnegative")
        if self.patience < 0:
            raise ValueError("patience must be nonnegative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid adaptive-moment hyperparameters")
        if self.diag_mode not in ("additive", "replace"):
            raise ValueError("diag_mode must be 'additive' or 'replace'")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.penalty_sign not in ("penalize", "reward"):
            raise ValueError("penalty_sign must be 'penalize' or 'reward'")
        if family is not None and family not in FAMILIES:
            raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
        if family == "lowrank":
            if self.rank < 1:
                raise ValueError("rank must be >= 1")
            if m is not None and self.rank > m:
                raise ValueError(f"rank > m ({self.rank} > {m})")
        if family == "mixture" and self.mixture_k < 1:
            raise ValueError("mixture_k must be >= 1")

    @property
    def sign(self) -> float:
        return 1.0 if self.penalty_sign == "penalize" else -1.0

    def to_dict(self) -> dict:
        return {("lambda" if k == "lambda_" else k): v for k, v in dataclasses.asdict(self).items()}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in self.to_dict().items():
                fh.write(f"{key} = {value!r}\n" if isinstance(value, float) else f"{key} = {value}\n")

    @classmethod
    def load(cls, path) -> "FitConfig":
        """Read a flat ``key = value`` file; ``#`` starts a comment."""
        defaults = cls()
        kwargs = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = (s.strip() for s in line.partition("="))
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                name = "lambda_" if key == "lambda" else key
                if name not in {f.name for f in dataclasses.fields(cls)}:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                kind = type(getattr(defaults, name))
                kwargs[name] = kind(value)
        return cls(**kwargs)


class TraceRow(NamedTuple):
    epoch: int
    train_objective: float
    val_ce: float  # nan when no validation split is used


@dataclass
class FitResult:
    """Outcome of :func:`fit`.

    ``converged`` is true when early stopping triggered. ``params`` are the
    best-validation parameters when a validation split was used, else the
    final iterate.
    """

    family: str
    params: object
    trace: list = field(default_factory=list)
    epochs_run: int = 0
    converged: bool = False
    initial_objective: float = float("nan")
    best_epoch: int = 0

    @property
    def final_objective(self) -> float:
        return self.trace[-1].train_objective if self.trace else self.initial_objective

    def save(self, out_dir, params_name="params.json", trace_name="trace.csv") -> None:
        os.makedirs(out_dir, exist_ok=True)
        save_params(self.params, os.path.join(out_dir, params_name))
        with open(os.path.join(out_dir, trace_name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_objective", "val_ce"])
            for row in self.trace:
                val = "" if np.isnan(row.val_ce) else repr(float(row.val_ce))
                w.writerow([row.epoch, repr(float(row.train_objective)), val])


def params_to_arrays(params) -> dict:
    if isinstance(params, MNLParams):
        return {"alpha": np.array(params.alpha)}
    if isinstance(params, MixtureMNLParams):
        return {"weight_logits": np.array(params.weight_logits), "alphas": np.array(params.alphas)}
    if isinstance(params, HaloParams):
        return {"h": np.array(params.h)}
    if isinstance(params, LowRankHaloParams):
        return {"alpha": np.array(params.alpha), "u": np.array(params.u), "v": np.array(params.v)}
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def params_from_arrays(like, arrays: dict):
    """Rebuild a parameter object of the same family (and diag mode) as ``like``."""
    if isinstance(like, MNLParams):
        return MNLParams(arrays["alpha"])
    if isinstance(like, MixtureMNLParams):
        return MixtureMNLParams(arrays["weight_logits"], arrays["alphas"])
    if isinstance(like, HaloParams):
        return HaloParams(arrays["h"])
    if isinstance(like, LowRankHaloParams):
        return LowRankHaloParams(arrays["alpha"], arrays["u"], arrays["v"], like.diag_mode)
    raise TypeError(f"unknown parameter type {type(like).__name__}")


def _penalized(params) -> dict:
    arrays = params_to_arrays(params)
    arrays.pop("weight_logits", None)
    return arrays


def penalty(params) -> float:
    """Sum of squared norms of the penalized parameters."""
    return float(sum(np.sum(x * x) for x in _penalized(params).values()))


def nll(params, dataset: ChoiceDataset) -> float:
    """Mean negative log-likelihood per transaction, in nats."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    logp = choice_log_probs(params, dataset.assortments)
    return float(-np.mean(logp[np.arange(len(dataset)), dataset.choices]))


def objective(params, dataset: ChoiceDataset, lambda_: float, penalty_sign: str = "penalize") -> float:
    if lambda_ < 0:
        raise ValueError("lambda must be nonnegative")
    sign = 1.0 if penalty_sign == "penalize" else -1.0
    value = nll(params, dataset)
    if lambda_ == 0:
        return value
    return value + sign * lambda_ * penalty(params)


def loss_and_grad(params, A: np.ndarray, Y: np.ndarray) -> tuple[float, dict]:
    """Mean NLL over a batch and its gradient with respect to every parameter array.

    ``A`` is an ``(n, m)`` offer-bit matrix and ``Y`` the matching one-hot
    choices. With residual ``R = P - Y`` the halo gradient is ``R^T A / n``;
    the low-rank gradients follow by the chain rule.
    """
    n = A.shape[0]
    mask = A != 0
    Af = A.astype(float, copy=False)
    rows = np.arange(n)
    ychoice = Y.argmax(axis=1)

    if isinstance(params, MixtureMNLParams):
        logp = masked_log_softmax(params.alphas[:, None, :], mask)  # (K, n, m)
        lw = params.weight_logits - params.weight_logits.max()
        lw = lw - np.log(np.exp(lw).sum())
        joint = lw[:, None] + logp[:, rows, ychoice]  # (K, n)
        top = joint.max(axis=0)
        log_py = top + np.log(np.exp(joint - top).sum(axis=0))
        resp = np.exp(joint - log_py)  # posterior responsibilities
        resid = np.exp(logp) - Y[None]
        grads = {
            "weight_logits": (np.exp(lw)[:, None] - resp).sum(axis=1) / n,
            "alphas": np.einsum("kn,knm->km", resp, resid) / n,
        }
        return float(-log_py.mean()), grads

    if isinstance(params, MNLParams):
        logp = masked_log_softmax(np.broadcast_to(params.alpha, A.shape), mask)
        resid = np.exp(logp) - Y
        return float(-logp[rows, ychoice].mean()), {"alpha": resid.sum(axis=0) / n}

    h = params.h if isinstance(params, HaloParams) else lowrank_materialize(params)
    logp = masked_log_softmax(Af @ h.T, mask)
    loss = float(-logp[rows, ychoice].mean())
    G = (np.exp(logp) - Y).T @ Af / n
    if isinstance(params, HaloParams):
        return loss, {"h": G}
    dalpha = np.diag(G).copy()
    if params.diag_mode == "replace":
        G[np.diag_indices_from(G)] = 0.0
    return loss, {"alpha": dalpha, "u": G @ params.v, "v": G.T @ params.u}


def _add_penalty_grad(params, grads: dict, lambda_: float, sign: float) -> dict:
    if lambda_ == 0:
        return grads
    for name, x in _penalized(params).items():
        grads[name] = grads[name] + 2.0 * sign * lambda_ * x
    return grads


def objective_grad(params, dataset: ChoiceDataset, lambda_: float, penalty_sign="penalize") -> dict:
    """Gradient of :func:`objective` as a dict of arrays keyed like :func:`params_to_arrays`."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    sign = 1.0 if penalty_sign == "penalize" else -1.0
    _, grads = loss_and_grad(params, dataset.assortments, dataset.one_hot())
    return _add_penalty_grad(params, grads, lambda_, sign)


def _single(transaction):
    a = transaction.assortment.bits[None, :]
    return a, transaction.one_hot()[None, :]


def grad_mnl(params: MNLParams, transaction) -> np.ndarray:
    return loss_and_grad(params, *_single(transaction))[1]["alpha"]


def grad_halo(h, transaction) -> np.ndarray:
    """Per-transaction NLL gradient ``(p - y) a^T``."""
    params = h if isinstance(h, HaloParams) else HaloParams(h)
    return loss_and_grad(params, *_single(transaction))[1]["h"]


def grad_lowrank(params: LowRankHaloParams, transaction):
    """Per-transaction NLL gradient as ``(dalpha, du, dv)``."""
    g = loss_and_grad(params, *_single(transaction))[1]
    return g["alpha"], g["u"], g["v"]


def grad_mixture(params: MixtureMNLParams, transaction):
    """Per-transaction NLL gradient as ``(dw, dalphas)``."""
    g = loss_and_grad(params, *_single(transaction))[1]
    return g["weight_logits"], g["alphas"]


def init_params(family: str, m: int, config: FitConfig, rng: np.random.Generator):
    s = config.init_scale
    if family == "mnl":
        return MNLParams(np.zeros(m))
    if family == "halo":
        return HaloParams(np.zeros((m, m)))
    if family == "mixture":
        k = config.mixture_k
        return MixtureMNLParams(np.zeros(k), s * rng.standard_normal((k, m)))
    if family == "lowrank":
        r = config.rank
        u = s * rng.standard_normal((m, r))
        v = s * rng.standard_normal((m, r))
        return LowRankHaloParams(np.zeros(m), u, v, config.diag_mode)
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


class _Adam:
    def __init__(self, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, arrays: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            arrays[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


class _GradientDescent:
    def __init__(self, lr):
        self.lr = lr

    def step(self, arrays: dict, grads: dict) -> None:
        for k, g in grads.items():
            arrays[k] -= self.lr * g


def fit(family: str, dataset: ChoiceDataset, config: FitConfig | None = None, init=None) -> FitResult:
    """Fit a choice model by mini-batch first-order descent on the regularized NLL.

    Parameters
    ----------
    family : {"mnl", "mixture", "halo", "lowrank"}
    dataset : ChoiceDataset
        Training transactions. If ``config.val_fraction > 0``, a seeded
        random subset is held out for early stopping on validation
        cross-entropy.
    config : FitConfig, optional
    init : parameters, optional
        Starting point; by default MNL-like (zero utilities, small random
        factors).

    Returns
    -------
    FitResult
    """
    config = config or FitConfig()
    config.validate(family, dataset.num_products)
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    m = dataset.num_products
    seed = config.seed

    train, val = dataset, None
    n_val = int(np.floor(config.val_fraction * len(dataset)))
    if config.val_fraction > 0 and n_val >= 1 and len(dataset) - n_val >= 1:
        perm = np.random.default_rng([seed, _STREAM_VALIDATION]).permutation(len(dataset))
        val, train = dataset[np.sort(perm[:n_val])], dataset[np.sort(perm[n_val:])]

    params = init if init is not None else init_params(
        family, m, config, np.random.default_rng([seed, _STREAM_INIT])
    )
    arrays = params_to_arrays(params)
    A, Y = train.assortments.astype(float), train.one_hot()
    n = len(train)
    sign = config.sign
    if config.optimizer == "adam":
        opt = _Adam(config.step_size, config.beta1, config.beta2, config.eps)
    else:
        opt = _GradientDescent(config.step_size)
    shuffle_rng = np.random.default_rng([seed, _STREAM_SHUFFLE])
    full_batch = config.batch_size >= n

    def train_objective(p):
        value = nll(p, train)
        return value + sign * config.lambda_ * penalty(p) if config.lambda_ else value

    initial = train_objective(params)
    result = FitResult(family=family, params=params, initial_objective=initial)
    best_val, best_params, stale = np.inf, params, 0

    for epoch in range(1, config.epochs + 1):
        if full_batch:
            batches = [slice(None)]
        else:
            order = shuffle_rng.permutation(n)
            batches = [order[i : i + config.batch_size] for i in range(0, n, config.batch_size)]
        for idx in batches:
            _, grads = loss_and_grad(params, A[idx], Y[idx])
            _add_penalty_grad(params, grads, config.lambda_, sign)
            opt.step(arrays, grads)
            if not all(np.isfinite(x).all() for x in arrays.values()):
                raise NonFiniteObjectiveError(epoch, float("nan"))
            params = params_from_arrays(params, arrays)

        obj = train_objective(params)
        if not np.isfinite(obj):
            raise NonFiniteObjectiveError(epoch, obj)
        val_ce = nll(params, val) if val is not None else float("nan")
        result.trace.append(TraceRow(epoch, obj, val_ce))
        logger.debug("epoch %d objective %.6f val_ce %.6f", epoch, obj, val_ce)

        if val is not None:
            if val_ce < best_val:
                best_val, best_params, stale = val_ce, params, 0
                result.best_epoch = epoch
            else:
                stale += 1
            if config.patience and stale >= config.patience:
                result.converged = True
                break

    result.epochs_run = len(result.trace)
    if val is not None:
        result.params = best_params
    else:
        result.params = params
        result.best_epoch = result.epochs_run
    return result
