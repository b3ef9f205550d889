"""Seeded generation of low-rank Halo MNL ground truths and transactions.

Assortments include each product independently with probability ``q``
(empty draws are rejected); choices are sampled from the ground truth's
choice probabilities by inverse-CDF. Ground truth, assortments and choices
each draw from their own sub-stream of ``seed`` so that growing ``n``
extends a dataset without changing its earlier rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ChoiceDataset
from .models import LowRankHaloParams, choice_probs

__all__ = [
    "SyntheticSpec",
    "sample_ground_truth",
    "sample_assortments",
    "sample_choices",
    "sample_eval_assortments",
    "generate",
]

_STREAM_TRUTH, _STREAM_ASSORT, _STREAM_CHOICE, _STREAM_EVAL = 0, 1, 2, 3
_BLOCK = 4096
_MAX_REJECTIONS = 10**6


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth and assortment sampling settings.

    ``factor_scale=None`` means ``1/sqrt(r)``, which keeps typical
    off-diagonal halo entries of order one.
    """

    m: int
    r: int = 2
    q: float = 0.5
    alpha_range: tuple[float, float] = (-1.0, 1.0)
    factor_scale: float | None = None
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if not 1 <= self.r <= self.m:
            raise ValueError(f"r must lie in [1, m={self.m}]")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        lo, hi = self.alpha_range
        if lo > hi:
            raise ValueError("alpha_range must be (low, high) with low <= high")
        if self.factor_scale is not None and self.factor_scale < 0:
            raise ValueError("factor_scale must be nonnegative")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.r) if self.factor_scale is None else float(self.factor_scale)


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, purpose])


def sample_ground_truth(spec: SyntheticSpec) -> LowRankHaloParams:
    rng = _stream(spec.seed, _STREAM_TRUTH)
    lo, hi = spec.alpha_range
    alpha = rng.uniform(lo, hi, size=spec.m)
    u = spec.scale * rng.standard_normal((spec.m, spec.r))
    v = spec.scale * rng.standard_normal((spec.m, spec.r))
    return LowRankHaloParams(alpha, u, v, "additive")


def _draw_assortments(rng, m, q, n) -> np.ndarray:
    out, have, rejected = [], 0, 0
    while have < n:
        block = rng.random((_BLOCK, m)) < q
        keep = block.any(axis=1)
        rejected = 0 if keep.any() else rejected + _BLOCK
        if rejected >= _MAX_REJECTIONS:
            raise RuntimeError("assortment sampler rejected 10^6 consecutive empty draws")
        out.append(block[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n].astype(np.int8)


def sample_assortments(spec: SyntheticSpec, n: int | None = None, stream: int = _STREAM_ASSORT) -> np.ndarray:
    """``(n, m)`` offer-bit matrix with independent Bernoulli(q) inclusions, empties resampled."""
    n = spec.n if n is None else n
    return _draw_assortments(_stream(spec.seed, stream), spec.m, spec.q, n)


def sample_eval_assortments(spec: SyntheticSpec, n: int) -> np.ndarray:
    """Fresh assortments from the same distribution, independent of the training draws."""
    return sample_assortments(spec, n, stream=_STREAM_EVAL)


def sample_choices(truth, assortments, seed: int = 0, outside_option: bool = False) -> ChoiceDataset:
    """Draw one choice per assortment from ``truth`` by inverse-CDF sampling."""
    A = np.asarray(assortments, dtype=np.int8)
    probs = choice_probs(truth, A)
    # u in (0, 1] so a zero-probability leading product is never selected
    u = 1.0 - _stream(seed, _STREAM_CHOICE).random(A.shape[0])
    cdf = np.cumsum(probs, axis=1)
    choices = (cdf < u[:, None] * cdf[:, -1:]).sum(axis=1)
    # round-off can push past the last offered product; clamp onto it
    last = A.shape[1] - 1 - np.argmax(A[:, ::-1] != 0, axis=1)
    choices = np.minimum(choices, last)
    return ChoiceDataset(A.shape[1], A, choices, outside_option)


def generate(spec: SyntheticSpec) -> tuple[LowRankHaloParams, ChoiceDataset]:
    truth = sample_ground_truth(spec)
    return truth, sample_choices(truth, sample_assortments(spec), spec.seed)
