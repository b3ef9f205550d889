import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halochoice.data import (
    Assortment,
    ChoiceDataError,
    ChoiceDataset,
    DatasetParseError,
    Transaction,
    load_dataset,
    save_dataset,
    split_dataset,
)


def write_lines(path, *objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n")
    return path


class TestTypes:
    def test_assortment_rejects_empty(self):
        with pytest.raises(ChoiceDataError, match="empty assortment"):
            Assortment([0, 0, 0])

    def test_assortment_rejects_non_binary(self):
        with pytest.raises(ChoiceDataError):
            Assortment([0, 2, 1])

    def test_transaction_choice_must_be_offered(self):
        with pytest.raises(ChoiceDataError, match="choice not in assortment"):
            Transaction(Assortment([0, 1]), 0)

    def test_one_hot(self):
        t = Transaction(Assortment.from_indices([0, 2], 3), 2)
        assert t.one_hot().tolist() == [0.0, 0.0, 1.0]

    def test_outside_option_requires_product_zero(self):
        with pytest.raises(ChoiceDataError, match="transaction 1: outside option"):
            ChoiceDataset(3, [[1, 1, 0], [0, 1, 1]], [0, 1], outside_option=True)

    def test_dataset_is_immutable(self):
        d = ChoiceDataset(2, [[1, 1]], [0])
        with pytest.raises(AttributeError):
            d.num_products = 3
        with pytest.raises(ValueError):
            d.assortments[0, 0] = 0

    def test_invariant_errors_name_transaction(self):
        with pytest.raises(ChoiceDataError, match="transaction 2: choice not in assortment"):
            ChoiceDataset(2, [[1, 1], [1, 0], [0, 1]], [0, 0, 0])

    def test_transactions_view(self):
        d = ChoiceDataset(3, [[1, 0, 1]], [2])
        (t,) = d.transactions
        assert t.assortment.indices == [0, 2] and t.choice == 2


class TestLoad:
    def test_direct_encoding(self, tmp_path):
        p = write_lines(tmp_path / "d.jsonl", {"num_products": 3}, {"a": [0, 2], "y": 2})
        d = load_dataset(p)
        assert d.num_products == 3 and len(d) == 1
        assert d.assortments[0].tolist() == [1, 0, 1]
        assert d.choices.tolist() == [2]
        assert d.outside_option is False

    def test_choice_not_in_assortment(self, tmp_path):
        p = write_lines(tmp_path / "d.jsonl", {"num_products": 3}, {"a": [1], "y": 0})
        with pytest.raises(ChoiceDataError, match="choice not in assortment"):
            load_dataset(p)

    def test_empty_assortment(self, tmp_path):
        p = write_lines(tmp_path / "d.jsonl", {"num_products": 3}, {"a": [], "y": 0})
        with pytest.raises(ChoiceDataError, match="empty assortment"):
            load_dataset(p)

    def test_index_out_of_range(self, tmp_path):
        p = write_lines(tmp_path / "d.jsonl", {"num_products": 2},
                        {"a": [0], "y": 0}, {"a": [0, 2], "y": 0})
        with pytest.raises(ChoiceDataError, match="transaction 1.*index >= m"):
            load_dataset(p)

    def test_parse_error_carries_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"num_products": 2}\n{"a": [0], "y": 0}\n{"a": [0\n')
        with pytest.raises(DatasetParseError) as info:
            load_dataset(p)
        assert info.value.lineno == 3

    @pytest.mark.parametrize(
        "header, line",
        [
            ({"num_products": 2, "extra": 1}, {"a": [0], "y": 0}),
            ({"num_products": 2}, {"a": [0], "y": 0, "w": 1.0}),
            ({"num_products": 0}, {"a": [0], "y": 0}),
            ({"num_products": 2}, {"a": [1, 0], "y": 0}),
            ({"num_products": 2}, {"a": [0], "y": True}),
        ],
    )
    def test_rejects_malformed(self, tmp_path, header, line):
        p = write_lines(tmp_path / "d.jsonl", header, line)
        with pytest.raises(ChoiceDataError):
            load_dataset(p)


class TestSave:
    def test_round_trip(self, tmp_path, rng):
        A = (rng.random((50, 6)) < 0.5).astype(int)
        A[:, 0] = 1
        y = np.array([rng.choice(np.flatnonzero(a)) for a in A])
        d = ChoiceDataset(6, A, y, outside_option=True)
        save_dataset(d, tmp_path / "d.jsonl")
        assert load_dataset(tmp_path / "d.jsonl") == d

    def test_empty_dataset_writes_header_only(self, tmp_path):
        d = ChoiceDataset(4, np.zeros((0, 4)), [])
        save_dataset(d, tmp_path / "d.jsonl")
        lines = (tmp_path / "d.jsonl").read_text().splitlines()
        assert lines == ['{"num_products": 4, "outside_option": false}']
        assert load_dataset(tmp_path / "d.jsonl") == d

    def test_refuses_outside_option_violation(self, tmp_path):
        d = ChoiceDataset(2, [[0, 1]], [1])
        object.__setattr__(d, "outside_option", True)  # bypass construction checks
        with pytest.raises(ChoiceDataError, match="outside option"):
            save_dataset(d, tmp_path / "d.jsonl")
        assert not (tmp_path / "d.jsonl").exists()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6).flatmap(
        lambda m: st.tuples(
            st.just(m),
            st.lists(st.lists(st.booleans(), min_size=m, max_size=m).filter(any), max_size=20),
        )
    ), st.data())
    def test_round_trip_property(self, tmp_path_factory, mA, data):
        m, rows = mA
        A = np.array(rows, dtype=int).reshape(len(rows), m)
        y = [data.draw(st.sampled_from(np.flatnonzero(a).tolist())) for a in A]
        d = ChoiceDataset(m, A, y)
        path = tmp_path_factory.mktemp("rt") / "d.jsonl"
        save_dataset(d, path)
        assert load_dataset(path) == d


class TestSplit:
    def make(self, n):
        return ChoiceDataset(3, np.ones((n, 3), dtype=int), np.arange(n) % 3)

    @pytest.mark.parametrize("fraction, n_train", [(0.7, 7), (0.8, 8)])
    def test_sizes(self, fraction, n_train):
        train, test = split_dataset(self.make(10), fraction, seed=1)
        assert (len(train), len(test)) == (n_train, 10 - n_train)

    def test_deterministic(self):
        d = self.make(25)
        a = split_dataset(d, 0.7, seed=3)
        b = split_dataset(d, 0.7, seed=3)
        assert a[0] == b[0] and a[1] == b[1]

    def test_partition_of_input(self, rng):
        A = (rng.random((40, 5)) < 0.5).astype(int)
        A[:, 2] = 1
        y = np.full(40, 2)
        d = ChoiceDataset(5, A, y)
        train, test = split_dataset(d, 0.7, seed=9)
        rows = sorted(map(tuple, np.vstack([train.assortments, test.assortments]).tolist()))
        assert rows == sorted(map(tuple, A.tolist()))

    def test_too_small(self):
        with pytest.raises(ChoiceDataError):
            split_dataset(self.make(1), 0.5, seed=0)
