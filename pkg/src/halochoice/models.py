"""Choice probabilities for MNL, mixture MNL, Halo MNL and low-rank Halo MNL.

Every probability function accepts either a single assortment (1-d bit
vector of length ``m``) or a batch (2-d array of shape ``(n, m)``) and
returns arrays of the same leading shape. Unoffered products get probability
exactly zero: they enter the softmax as ``-inf`` logits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "MNLParams",
    "MixtureMNLParams",
    "HaloParams",
    "LowRankHaloParams",
    "masked_softmax",
    "masked_log_softmax",
    "mnl_probs",
    "mixture_probs",
    "halo_logits",
    "halo_probs",
    "lowrank_materialize",
    "lowrank_probs",
    "attention_forward",
    "choice_probs",
    "choice_log_probs",
    "halo_matrix",
    "params_to_dict",
    "params_from_dict",
    "save_params",
    "load_params",
]

DIAG_MODES = ("additive", "replace")


def _readonly(x, ndim, name) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MNLParams:
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha, 1, "alpha"))

    @property
    def m(self) -> int:
        return self.alpha.size


@dataclass(frozen=True, eq=False)
class MixtureMNLParams:
    """K MNL components mixed with weights ``softmax(weight_logits)``.

    ``alphas`` has shape ``(K, m)``; row ``k`` holds component ``k``'s utilities.
    """

    weight_logits: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        w = _readonly(self.weight_logits, 1, "weight_logits")
        alphas = _readonly(self.alphas, 2, "alphas")
        if w.size < 1 or alphas.shape[0] != w.size:
            raise ValueError("need K >= 1 weight logits and one alpha row per component")
        object.__setattr__(self, "weight_logits", w)
        object.__setattr__(self, "alphas", alphas)

    @property
    def m(self) -> int:
        return self.alphas.shape[1]

    @property
    def n_components(self) -> int:
        return self.weight_logits.size

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.weight_logits - self.weight_logits.max())
        return w / w.sum()

    @property
    def components(self) -> list[MNLParams]:
        return [MNLParams(a) for a in self.alphas]


@dataclass(frozen=True, eq=False)
class HaloParams:
    h: np.ndarray

    def __post_init__(self):
        h = _readonly(self.h, 2, "h")
        if h.shape[0] != h.shape[1]:
            raise ValueError(f"h must be square, got shape {h.shape}")
        object.__setattr__(self, "h", h)

    @property
    def m(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True, eq=False)
class LowRankHaloParams:
    """``H = diag(alpha) + U V^T`` (additive) or ``U V^T`` with its diagonal set to alpha (replace)."""

    alpha: np.ndarray
    u: np.ndarray
    v: np.ndarray
    diag_mode: str = "additive"

    def __post_init__(self):
        alpha = _readonly(self.alpha, 1, "alpha")
        u = _readonly(self.u, 2, "u")
        v = _readonly(self.v, 2, "v")
        if u.shape != v.shape:
            raise ValueError(f"u and v must have identical shapes, got {u.shape} and {v.shape}")
        m, r = u.shape
        if m != alpha.size:
            raise ValueError("u must have one row per product")
        if not 1 <= r <= m:
            raise ValueError(f"rank must lie in [1, {m}], got {r}")
        if self.diag_mode not in DIAG_MODES:
            raise ValueError(f"diag_mode must be one of {DIAG_MODES}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def rank(self) -> int:
        return self.u.shape[1]


ChoiceParams = Union[MNLParams, MixtureMNLParams, HaloParams, LowRankHaloParams]


def _as_mask(assortment, m=None) -> np.ndarray:
    bits = getattr(assortment, "bits", assortment)
    mask = np.asarray(bits) != 0
    if mask.ndim not in (1, 2):
        raise ValueError("assortment must be a bit vector or an (n, m) bit matrix")
    if m is not None and mask.shape[-1] != m:
        raise ValueError(f"assortment has {mask.shape[-1]} products, model has {m}")
    if not mask.any(axis=-1).all():
        raise ValueError("empty assortment")
    return mask


def masked_log_softmax(logits, mask) -> np.ndarray:
    """Log-softmax over the last axis restricted to ``mask``; ``-inf`` elsewhere."""
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def masked_softmax(logits, mask) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mnl_probs(params: MNLParams, assortment) -> np.ndarray:
    mask = _as_mask(assortment, params.m)
    return masked_softmax(np.broadcast_to(params.alpha, mask.shape), mask)


def mixture_probs(params: MixtureMNLParams, assortment) -> np.ndarray:
    """Convex combination of the component MNL probabilities."""
    mask = _as_mask(assortment, params.m)
    comp = masked_softmax(params.alphas[(slice(None),) + (None,) * (mask.ndim - 1)], mask)
    return np.tensordot(params.weights, comp, axes=1)


def halo_logits(h, assortment) -> np.ndarray:
    """``H a`` for every product (masking is left to the softmax)."""
    h = np.asarray(getattr(h, "h", h), dtype=float)
    a = np.asarray(getattr(assortment, "bits", assortment), dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or a.shape[-1] != h.shape[1]:
        raise ValueError(f"shape mismatch: h {h.shape}, assortment {a.shape}")
    return a @ h.T


def halo_probs(params: HaloParams, assortment) -> np.ndarray:
    mask = _as_mask(assortment, params.m)
    return masked_softmax(halo_logits(params.h, mask), mask)


def lowrank_materialize(params: LowRankHaloParams) -> np.ndarray:
    h = params.u @ params.v.T
    if params.diag_mode == "additive":
        h[np.diag_indices_from(h)] += params.alpha
    else:
        h[np.diag_indices_from(h)] = params.alpha
    return h


def lowrank_probs(params: LowRankHaloParams, assortment) -> np.ndarray:
    mask = _as_mask(assortment, params.m)
    return masked_softmax(halo_logits(lowrank_materialize(params), mask), mask)


def attention_forward(params: LowRankHaloParams, assortment, normalize: bool = False) -> np.ndarray:
    """Choice probabilities computed as a single self-attention head.

    Queries are ``U``, keys ``sqrt(r) V`` and values the identity, so the
    scaled scores ``Q K^T / sqrt(r)`` equal ``U V^T``. With ``normalize`` the
    scores are softmaxed row-wise over the offered columns first. The
    diagonal is then merged with ``alpha`` according to ``params.diag_mode``,
    the result is applied to the assortment, and the output layer is a
    masked softmax.
    """
    mask = _as_mask(assortment, params.m)
    r = params.rank
    q = params.u
    k = np.sqrt(r) * params.v
    scores = q @ k.T / np.sqrt(r)
    batch = mask if mask.ndim == 2 else mask[None]
    if normalize:
        # one (m, m) attention matrix per assortment
        attn = masked_softmax(scores[None], batch[:, None, :])
    else:
        attn = np.broadcast_to(scores, (batch.shape[0],) + scores.shape).copy()
    diag = np.arange(params.m)
    if params.diag_mode == "additive":
        attn[:, diag, diag] += params.alpha
    else:
        attn[:, diag, diag] = params.alpha
    values = np.eye(params.m)
    logits = np.einsum("bij,bj->bi", attn @ values, batch.astype(float))
    probs = masked_softmax(logits, batch)
    return probs if mask.ndim == 2 else probs[0]


def halo_matrix(params) -> np.ndarray:
    """The effective ``m x m`` halo matrix of an MNL, Halo or low-rank model (or a raw matrix)."""
    if isinstance(params, LowRankHaloParams):
        return lowrank_materialize(params)
    if isinstance(params, HaloParams):
        return np.array(params.h)
    if isinstance(params, MNLParams):
        return np.diag(params.alpha)
    if isinstance(params, MixtureMNLParams):
        raise TypeError("a mixture of MNLs has no single halo matrix")
    h = np.asarray(params, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    return h


def choice_log_probs(params, assortment) -> np.ndarray:
    """Log choice probabilities for any model family; ``-inf`` off-assortment."""
    mask = _as_mask(assortment, params.m)
    if isinstance(params, MixtureMNLParams):
        logp = masked_log_softmax(params.alphas[(slice(None),) + (None,) * (mask.ndim - 1)], mask)
        lw = params.weight_logits - params.weight_logits.max()
        lw = lw - np.log(np.exp(lw).sum())
        z = logp + lw[(slice(None),) + (None,) * mask.ndim]
        zmax = z.max(axis=0)
        safe = np.where(np.isfinite(zmax), zmax, 0.0)
        with np.errstate(divide="ignore"):
            return safe + np.log(np.exp(z - safe).sum(axis=0))
    if isinstance(params, MNLParams):
        logits = np.broadcast_to(params.alpha, mask.shape)
    else:
        logits = halo_logits(halo_matrix(params), mask)
    return masked_log_softmax(logits, mask)


def choice_probs(params, assortment) -> np.ndarray:
    if isinstance(params, MNLParams):
        return mnl_probs(params, assortment)
    if isinstance(params, MixtureMNLParams):
        return mixture_probs(params, assortment)
    if isinstance(params, HaloParams):
        return halo_probs(params, assortment)
    if isinstance(params, LowRankHaloParams):
        return lowrank_probs(params, assortment)
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def params_to_dict(params) -> dict:
    if isinstance(params, MNLParams):
        return {"model": "mnl", "alpha": params.alpha.tolist()}
    if isinstance(params, MixtureMNLParams):
        return {
            "model": "mixture",
            "weight_logits": params.weight_logits.tolist(),
            "alphas": params.alphas.tolist(),
        }
    if isinstance(params, HaloParams):
        return {"model": "halo", "h": params.h.tolist()}
    if isinstance(params, LowRankHaloParams):
        return {
            "model": "lowrank",
            "alpha": params.alpha.tolist(),
            "u": params.u.tolist(),
            "v": params.v.tolist(),
            "rank": params.rank,
            "diag_mode": params.diag_mode,
        }
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def params_from_dict(d: dict):
    model = d.get("model")
    if model == "mnl":
        return MNLParams(d["alpha"])
    if model == "mixture":
        return MixtureMNLParams(d["weight_logits"], d["alphas"])
    if model == "halo":
        return HaloParams(d["h"])
    if model == "lowrank":
        m = len(d["alpha"])
        rank = int(d["rank"])
        u = np.array(d["u"], dtype=float).reshape(m, rank)
        v = np.array(d["v"], dtype=float).reshape(m, rank)
        return LowRankHaloParams(d["alpha"], u, v, d.get("diag_mode", "additive"))
    raise ValueError(f"unknown model tag {model!r}")


def save_params(params, path) -> None:
    # json writes floats via repr, which round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh, indent=1)
        fh.write("\n")


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
