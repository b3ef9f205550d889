"""Brute-force oracles for verifying the vectorized code paths.

These deliberately avoid the package's stabilized softmax and batching:
probabilities are plain scalar loops over products, gradients are central
differences, and the 2-product MNL optimum is found by grid search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FiniteDiffSpec",
    "DegenerateDataWarning",
    "oracle_probs",
    "oracle_nll",
    "fd_gradient",
    "grad_close",
    "grid_mle_mnl2",
]

MAX_ORACLE_PRODUCTS = 12
MAX_ORACLE_LOGIT = 30.0


class DegenerateDataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FiniteDiffSpec:
    h: float = 1e-5
    tolerance: float = 1e-4
    # coordinates with |gradient| at or below this are compared absolutely
    small: float = 1e-6
    abs_tolerance: float = 1e-8

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("finite-difference step must be positive")


def oracle_probs(h, assortment) -> list[float]:
    """Halo MNL probabilities by direct evaluation of the defining sums."""
    h = [[float(x) for x in row] for row in np.asarray(h)]
    a = [int(x) for x in np.asarray(getattr(assortment, "bits", assortment))]
    m = len(a)
    if m > MAX_ORACLE_PRODUCTS:
        raise ValueError(f"oracle limited to m <= {MAX_ORACLE_PRODUCTS}")
    logits = []
    for i in range(m):
        s = 0.0
        for k in range(m):
            s += a[k] * h[i][k]
        logits.append(s)
    if any(abs(logits[i]) > MAX_ORACLE_LOGIT for i in range(m) if a[i]):
        raise OverflowError(f"oracle valid only for |logit| <= {MAX_ORACLE_LOGIT}")
    denom = 0.0
    for j in range(m):
        if a[j]:
            denom += math.exp(logits[j])
    return [math.exp(logits[i]) / denom if a[i] else 0.0 for i in range(m)]


def oracle_nll(h, assortments, choices) -> float:
    """Mean negative log-likelihood, one transaction at a time."""
    total = 0.0
    for a, y in zip(assortments, choices):
        total -= math.log(oracle_probs(h, a)[int(y)])
    return total / len(choices)


def fd_gradient(f, x, spec: FiniteDiffSpec = FiniteDiffSpec()) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + spec.h
        fp = f(x.copy())
        flat[i] = orig - spec.h
        fm = f(x.copy())
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"objective not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2 * spec.h)
    return grad


def grad_close(analytic, numeric, spec: FiniteDiffSpec = FiniteDiffSpec()) -> bool:
    """Relative error below ``spec.tolerance`` on large coordinates, absolute elsewhere."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    big = np.abs(numeric) > spec.small
    rel = np.abs(analytic[big] - numeric[big]) / np.abs(numeric[big])
    ok_big = bool(np.all(rel < spec.tolerance))
    ok_small = bool(np.all(np.abs(analytic[~big] - numeric[~big]) < spec.abs_tolerance))
    return ok_big and ok_small


def grid_mle_mnl2(dataset, grid_halfwidth: float = 3.0, grid_points: int = 6001):
    """Grid-search MLE of a 2-product MNL with full assortments.

    Evaluates the NLL of ``alpha = (0, g)`` on a uniform grid of ``g`` and
    returns the minimizing :class:`~halochoice.models.MNLParams`. When one
    product is never chosen the optimum sits on the grid boundary and a
    :class:`DegenerateDataWarning` is issued.
    """
    from .models import MNLParams

    if dataset.num_products != 2:
        raise ValueError("grid_mle_mnl2 needs m = 2")
    if not (np.asarray(dataset.assortments) == 1).all():
        raise ValueError("grid_mle_mnl2 needs full assortments")
    y = np.asarray(dataset.choices)
    n1 = int((y == 1).sum())
    n0 = len(y) - n1
    best_g, best = None, math.inf
    for g in np.linspace(-grid_halfwidth, grid_halfwidth, grid_points):
        # -log p0 = log(1 + e^g), -log p1 = log(1 + e^-g)
        value = (n0 * math.log1p(math.exp(g)) + n1 * math.log1p(math.exp(-g))) / len(y)
        if value < best:
            best_g, best = float(g), value
    if n0 == 0 or n1 == 0:
        warnings.warn("one product is never chosen; optimum is at the grid boundary", DegenerateDataWarning)
    return MNLParams([0.0, best_g])
