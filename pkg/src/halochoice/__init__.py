"""Discrete choice models with halo effects: MNL, mixture MNL, Halo MNL and
low-rank Halo MNL (a single self-attention head), fitted by regularized
maximum likelihood."""

from .data import (
    Assortment,
    ChoiceDataError,
    ChoiceDataset,
    DatasetParseError,
    Transaction,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .estimation import FitConfig, FitResult, fit, nll, objective
from .estimators import HaloMNL, LowRankHaloMNL, MixtureMNL, MNL
from .models import (
    HaloParams,
    LowRankHaloParams,
    MixtureMNLParams,
    MNLParams,
    attention_forward,
    choice_probs,
    halo_probs,
    lowrank_materialize,
    lowrank_probs,
    mixture_probs,
    mnl_probs,
)

from .synthetic import SyntheticSpec, generate

__version__ = "0.1.0"
