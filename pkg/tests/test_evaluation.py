import math

import numpy as np
import pytest

from halochoice.data import ChoiceDataset
from halochoice.evaluation import (
    EvalReport,
    canonicalize_halo,
    canonicalize_mnl,
    cross_entropy,
    entropy,
    kl_to_truth,
    param_recovery_error,
    read_reports_csv,
    summarize_benchmark,
    write_reports_csv,
)
from halochoice.models import HaloParams, MNLParams, lowrank_materialize
from halochoice.testing import oracle_nll

from conftest import random_assortments, random_lowrank


def reports(table, seeds=(0,)):
    """{category: {model: ce}} -> EvalReports with identical CE for each seed."""
    return [
        EvalReport(model, cat, s, None, ce)
        for cat, row in table.items()
        for model, ce in row.items()
        for s in seeds
    ]


class TestCrossEntropy:
    def test_uniform_pair(self):
        d = ChoiceDataset(2, [[1, 1]], [0])
        assert cross_entropy(MNLParams([0.0, 0.0]), d) == pytest.approx(math.log(2), abs=1e-12)

    def test_matches_oracle(self, rng):
        for _ in range(10):
            h = rng.normal(size=(4, 4))
            A = random_assortments(rng, 20, 4)
            y = np.array([rng.choice(np.flatnonzero(a)) for a in A])
            d = ChoiceDataset(4, A, y)
            assert cross_entropy(HaloParams(h), d) == pytest.approx(oracle_nll(h, A, y), abs=1e-12)


class TestCanonicalize:
    def test_idempotent_and_shift_invariant(self, rng):
        for _ in range(100):
            h = rng.normal(size=(5, 5))
            c = rng.normal(size=5)
            canon = canonicalize_halo(h)
            np.testing.assert_allclose(canonicalize_halo(canon), canon, atol=1e-12)
            np.testing.assert_allclose(canonicalize_halo(h + c[None, :]), canon, atol=1e-12)
            np.testing.assert_allclose(canon.sum(axis=0), 0.0, atol=1e-12)

    def test_mnl(self):
        np.testing.assert_allclose(canonicalize_mnl([1.0, 2.5, 0.0]), [0.0, 1.5, -1.0])


class TestRecoveryError:
    def test_single_entry(self):
        delta = 0.3
        h = np.zeros((2, 2))
        g = h.copy()
        g[0, 0] = delta
        assert param_recovery_error(g, h) == pytest.approx(delta**2 / 8, abs=1e-15)
        assert param_recovery_error(g, h, "l1") == pytest.approx(delta / 4, abs=1e-15)

    def test_zero_for_column_shift(self, rng):
        h = rng.normal(size=(4, 4))
        assert param_recovery_error(h + rng.normal(size=4)[None, :], h) == pytest.approx(0.0, abs=1e-24)

    def test_symmetric(self, rng):
        a, b = random_lowrank(rng, 6, 2), random_lowrank(rng, 6, 2)
        assert param_recovery_error(a, b) == pytest.approx(param_recovery_error(b, a), rel=1e-12)
        assert param_recovery_error(a, lowrank_materialize(a)) == pytest.approx(0.0, abs=1e-24)

    def test_errors(self):
        with pytest.raises(ValueError, match="dimension"):
            param_recovery_error(np.zeros((2, 2)), np.zeros((3, 3)))
        with pytest.raises(ValueError, match="norm"):
            param_recovery_error(np.zeros((2, 2)), np.zeros((2, 2)), "l2")


class TestKL:
    def test_two_product_example(self):
        truth = MNLParams([math.log(2), 0.0])
        kl = kl_to_truth(MNLParams([0.0, 0.0]), truth, [[1, 1]])
        expected = (2 / 3) * math.log(4 / 3) + (1 / 3) * math.log(2 / 3)
        assert kl == pytest.approx(expected, abs=1e-12)

    def test_self_is_zero_and_nonnegative(self, rng):
        A = random_assortments(rng, 50, 6)
        for _ in range(20):
            a, b = random_lowrank(rng, 6, 2), random_lowrank(rng, 6, 2)
            assert kl_to_truth(a, a, A) == 0.0
            assert kl_to_truth(a, b, A) >= 0.0

    def test_entropy_uniform(self):
        assert entropy(MNLParams(np.zeros(4)), [[1, 1, 1, 0]]) == pytest.approx(math.log(3))


class TestSummary:
    TABLE = {
        "c1": {"A": 1.0, "B": 1.1},
        "c2": {"A": 1.0, "B": 0.9},
        "c3": {"A": 2.0, "B": 2.1},
    }

    def test_wins_and_reference(self):
        s = summarize_benchmark(reports(self.TABLE, seeds=(0, 1, 2)), reference="A")
        assert s.wins == {"A": 2, "B": 1}
        assert s.relative_loss_pct["A"] == 0.0
        assert s.relative_loss_pct["B"] == pytest.approx(100 * (4.1 / 4.0 - 1))

    def test_five_percent(self):
        s = summarize_benchmark(reports({"c": {"ref": 1.00, "x": 1.05}}), reference="ref")
        assert s.relative_loss_pct["x"] == pytest.approx(5.0)

    def test_ties_all_win(self):
        s = summarize_benchmark(reports({"c": {"A": 1.0, "B": 1.0 + 1e-12}}), reference="A")
        assert s.wins == {"A": 1, "B": 1}

    def test_seed_average(self):
        rs = [EvalReport("A", "c", 0, None, 1.0), EvalReport("A", "c", 1, None, 3.0),
              EvalReport("B", "c", 0, None, 2.5)]
        s = summarize_benchmark(rs, reference="B")
        assert s.table["c"]["A"] == 2.0 and s.wins == {"A": 1, "B": 0}

    def test_mean_of_ratios(self):
        table = {"c1": {"A": 1.0, "B": 2.0}, "c2": {"A": 4.0, "B": 4.0}}
        s = summarize_benchmark(reports(table), reference="A", relative_loss="mean_of_ratios")
        assert s.relative_loss_pct["B"] == pytest.approx(50.0)
        s = summarize_benchmark(reports(table), reference="A")
        assert s.relative_loss_pct["B"] == pytest.approx(20.0)

    def test_missing_cell(self):
        rs = reports({"c1": {"A": 1.0, "B": 1.0}, "c2": {"A": 1.0}})
        with pytest.raises(ValueError, match="missing"):
            summarize_benchmark(rs, reference="A")

    def test_unknown_reference(self):
        with pytest.raises(ValueError, match="reference"):
            summarize_benchmark(reports(self.TABLE), reference="Z")


class TestReportsCsv:
    def test_round_trip(self, tmp_path):
        rs = [EvalReport("lowrank", "cat", 1, 0.5, 0.6, 0.01, 0.002, 0.03),
              EvalReport("ext", "cat", None, None, 0.7)]
        write_reports_csv(rs, tmp_path / "r.csv")
        assert read_reports_csv(tmp_path / "r.csv") == rs

    def test_nonfinite(self):
        assert EvalReport("m", "d", 0, 1.0, math.inf, math.nan).nonfinite == ["test_ce", "kl_to_truth"]
