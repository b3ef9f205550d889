"""Assortments, transactions and choice datasets, plus the JSON Lines file format.

A dataset file is UTF-8 JSON Lines. The first line is a header::

    {"num_products": 3, "outside_option": false}

and every following line is one transaction::

    {"a": [0, 2], "y": 2}

where ``a`` lists the offered product indices in ascending order and ``y`` is
the chosen index. Indices are 0-based and unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ChoiceDataError",
    "DatasetParseError",
    "Assortment",
    "Transaction",
    "ChoiceDataset",
    "load_dataset",
    "save_dataset",
    "split_dataset",
]

_HEADER_KEYS = {"num_products", "outside_option"}
_LINE_KEYS = {"a", "y"}


class ChoiceDataError(ValueError):
    """Raised when choice data violates a dataset invariant."""


class DatasetParseError(ChoiceDataError):
    """Raised when a dataset file cannot be parsed; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Assortment:
    """Binary offer vector over ``m`` products."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size == 0:
            raise ChoiceDataError("assortment must be a nonempty 1-d bit vector")
        if not np.isin(bits, (0, 1)).all():
            raise ChoiceDataError("assortment bits must be 0 or 1")
        if not bits.any():
            raise ChoiceDataError("empty assortment")
        object.__setattr__(self, "bits", _frozen(bits.astype(np.int8)))

    @classmethod
    def from_indices(cls, indices: Sequence[int], m: int) -> "Assortment":
        bits = np.zeros(m, dtype=np.int8)
        bits[list(indices)] = 1
        return cls(bits)

    @property
    def m(self) -> int:
        return self.bits.size

    @property
    def indices(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    def __eq__(self, other):
        if not isinstance(other, Assortment):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"Assortment({self.bits.tolist()})"


@dataclass(frozen=True)
class Transaction:
    assortment: Assortment
    choice: int

    def __post_init__(self):
        choice = int(self.choice)
        if not 0 <= choice < self.assortment.m:
            raise ChoiceDataError(f"choice {choice} out of range for m={self.assortment.m}")
        if self.assortment.bits[choice] != 1:
            raise ChoiceDataError("choice not in assortment")
        object.__setattr__(self, "choice", choice)

    def one_hot(self) -> np.ndarray:
        y = np.zeros(self.assortment.m)
        y[self.choice] = 1.0
        return y


class ChoiceDataset:
    """An immutable collection of transactions over ``num_products`` products.

    Storage is columnar: ``assortments`` is an ``(n, m)`` int8 bit matrix and
    ``choices`` an ``(n,)`` integer vector. ``transactions`` materializes the
    row view on demand.

    Parameters
    ----------
    num_products : int
        Number of products ``m``.
    assortments : array-like of shape (n, m)
        Offer bits, one row per transaction.
    choices : array-like of shape (n,)
        Chosen product index per transaction.
    outside_option : bool, default=False
        If true, product 0 is a no-purchase option and must be offered in
        every assortment. Models treat it as an ordinary product.
    """

    __slots__ = ("num_products", "assortments", "choices", "outside_option")

    def __init__(self, num_products, assortments, choices, outside_option=False):
        m = int(num_products)
        if m < 1:
            raise ChoiceDataError("num_products must be positive")
        A = np.asarray(assortments)
        y = np.asarray(choices)
        if A.size == 0:
            A = A.reshape(0, m)
        if A.ndim != 2 or A.shape[1] != m:
            raise ChoiceDataError(f"assortments must have shape (n, {m}), got {A.shape}")
        if y.shape != (A.shape[0],):
            raise ChoiceDataError("choices must have one entry per assortment")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.array_equal(y, np.round(y)):
                raise ChoiceDataError("choices must be integers")
        object.__setattr__(self, "num_products", m)
        object.__setattr__(self, "assortments", _frozen(np.array(A, dtype=np.int8)))
        object.__setattr__(self, "choices", _frozen(np.array(y, dtype=np.int64)))
        object.__setattr__(self, "outside_option", bool(outside_option))
        self.validate()

    def __setattr__(self, name, value):
        raise AttributeError("ChoiceDataset is immutable")

    def validate(self) -> None:
        """Check every invariant, naming the first offending transaction."""
        A, y, m = self.assortments, self.choices, self.num_products
        bad = ~np.isin(A, (0, 1)).all(axis=1)
        if bad.any():
            raise ChoiceDataError(f"transaction {int(np.argmax(bad))}: bits must be 0 or 1")
        empty = ~A.any(axis=1)
        if empty.any():
            raise ChoiceDataError(f"transaction {int(np.argmax(empty))}: empty assortment")
        out = (y < 0) | (y >= m)
        if out.any():
            i = int(np.argmax(out))
            raise ChoiceDataError(f"transaction {i}: choice index {int(y[i])} >= m={m}")
        offered = A[np.arange(len(y)), y] == 1
        if not offered.all():
            i = int(np.argmin(offered))
            raise ChoiceDataError(f"transaction {i}: choice not in assortment")
        if self.outside_option and len(y) and not (A[:, 0] == 1).all():
            i = int(np.argmin(A[:, 0]))
            raise ChoiceDataError(
                f"transaction {i}: outside option (product 0) missing from assortment"
            )

    @classmethod
    def from_transactions(cls, num_products, transactions, outside_option=False):
        transactions = list(transactions)
        A = np.array([t.assortment.bits for t in transactions], dtype=np.int8)
        y = np.array([t.choice for t in transactions], dtype=np.int64)
        return cls(num_products, A.reshape(len(transactions), num_products), y, outside_option)

    @property
    def transactions(self) -> list[Transaction]:
        return list(iter(self))

    def __iter__(self) -> Iterator[Transaction]:
        for bits, choice in zip(self.assortments, self.choices):
            yield Transaction(Assortment(bits), int(choice))

    def __len__(self):
        return self.choices.shape[0]

    def __getitem__(self, index):
        """Integer index returns a Transaction; slices and index arrays return a dataset."""
        if isinstance(index, (int, np.integer)):
            return Transaction(Assortment(self.assortments[index]), int(self.choices[index]))
        return ChoiceDataset(
            self.num_products, self.assortments[index], self.choices[index], self.outside_option
        )

    def __eq__(self, other):
        if not isinstance(other, ChoiceDataset):
            return NotImplemented
        return (
            self.num_products == other.num_products
            and self.outside_option == other.outside_option
            and np.array_equal(self.assortments, other.assortments)
            and np.array_equal(self.choices, other.choices)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"ChoiceDataset(num_products={self.num_products}, n={len(self)}, "
            f"outside_option={self.outside_option})"
        )

    def one_hot(self) -> np.ndarray:
        Y = np.zeros(self.assortments.shape)
        Y[np.arange(len(self)), self.choices] = 1.0
        return Y


def _parse_json(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DatasetParseError(lineno, "expected a JSON object")
    return obj


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def load_dataset(path) -> ChoiceDataset:
    """Read and validate a JSON Lines transaction file."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetParseError(1, "missing header line")
    header = _parse_json(lines[0], 1)
    unknown = set(header) - _HEADER_KEYS
    if unknown:
        raise DatasetParseError(1, f"unknown header keys: {sorted(unknown)}")
    m = header.get("num_products")
    if not _is_int(m) or m < 1:
        raise DatasetParseError(1, "num_products must be a positive integer")
    outside = header.get("outside_option", False)
    if not isinstance(outside, bool):
        raise DatasetParseError(1, "outside_option must be a boolean")

    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    A = np.zeros((len(body), m), dtype=np.int8)
    y = np.zeros(len(body), dtype=np.int64)
    for t, (lineno, line) in enumerate(body):
        obj = _parse_json(line, lineno)
        unknown = set(obj) - _LINE_KEYS
        if unknown:
            raise DatasetParseError(lineno, f"unknown keys: {sorted(unknown)}")
        if set(obj) != _LINE_KEYS:
            raise DatasetParseError(lineno, "transaction needs keys 'a' and 'y'")
        a, choice = obj["a"], obj["y"]
        if not isinstance(a, list) or not all(_is_int(k) for k in a):
            raise DatasetParseError(lineno, "'a' must be a list of integers")
        if not _is_int(choice):
            raise DatasetParseError(lineno, "'y' must be an integer")
        if not a:
            raise ChoiceDataError(f"transaction {t} (line {lineno}): empty assortment")
        if any(k < 0 or k >= m for k in a) or not 0 <= choice < m:
            raise ChoiceDataError(f"transaction {t} (line {lineno}): index >= m={m}")
        if any(j >= k for j, k in zip(a, a[1:])):
            raise DatasetParseError(lineno, "'a' must be strictly ascending")
        if choice not in a:
            raise ChoiceDataError(f"transaction {t} (line {lineno}): choice not in assortment")
        A[t, a] = 1
        y[t] = choice
    return ChoiceDataset(m, A, y, outside)


def save_dataset(dataset: ChoiceDataset, path) -> None:
    dataset.validate()
    header = {"num_products": dataset.num_products, "outside_option": dataset.outside_option}
    out = [json.dumps(header)]
    for bits, choice in zip(dataset.assortments, dataset.choices):
        out.append(json.dumps({"a": np.flatnonzero(bits).tolist(), "y": int(choice)}))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
    os.replace(tmp, path)


def split_dataset(dataset: ChoiceDataset, train_fraction: float, seed: int):
    """Seeded random split into ``(train, test)``.

    A permutation drawn from ``seed`` is cut at ``floor(train_fraction * n)``;
    both halves keep the permuted order. Duplicate transactions are kept.
    """
    n = len(dataset)
    if n < 2:
        raise ChoiceDataError("need at least 2 transactions to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    # guard against 0.7 * 10 landing at 6.999...
    k = math.floor(train_fraction * n + 1e-9)
    return dataset[perm[:k]], dataset[perm[k:]]
