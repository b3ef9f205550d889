import math
import warnings

import numpy as np
import pytest

from halochoice.data import ChoiceDataset
from halochoice.models import HaloParams, halo_probs, mnl_probs, MNLParams
from halochoice.testing import (
    DegenerateDataWarning,
    FiniteDiffSpec,
    fd_gradient,
    grad_close,
    grid_mle_mnl2,
    oracle_nll,
    oracle_probs,
)

from conftest import random_assortment


def two_product(n0, n1):
    return ChoiceDataset(2, np.ones((n0 + n1, 2), dtype=int), [0] * n0 + [1] * n1)


class TestOracleProbs:
    def test_matches_vectorized(self, rng):
        for _ in range(1000):
            m = int(rng.integers(1, 9))
            h = rng.normal(size=(m, m))
            a = random_assortment(rng, m)
            np.testing.assert_allclose(oracle_probs(h, a), halo_probs(HaloParams(h), a), rtol=0, atol=1e-12)

    def test_diagonal_and_zero(self, rng):
        alpha = rng.normal(size=5)
        a = np.array([1, 0, 1, 1, 0])
        np.testing.assert_allclose(oracle_probs(np.diag(alpha), a), mnl_probs(MNLParams(alpha), a), atol=1e-12)
        assert oracle_probs(np.zeros((3, 3)), [1, 1, 0]) == [0.5, 0.5, 0.0]

    def test_limits(self):
        with pytest.raises(OverflowError):
            oracle_probs(np.full((2, 2), 20.0), [1, 1])
        with pytest.raises(ValueError):
            oracle_probs(np.zeros((13, 13)), np.ones(13))

    def test_nll(self):
        assert oracle_nll(np.zeros((2, 2)), [[1, 1], [1, 0]], [1, 0]) == pytest.approx(math.log(2) / 2)


class TestFiniteDifferences:
    def test_quadratic(self):
        g = fd_gradient(lambda x: float(x @ x), [1.0, 2.0])
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(fd_gradient(lambda x: 3.0, np.ones((2, 3))), np.zeros((2, 3)))

    def test_does_not_mutate_input(self):
        x = np.array([0.5, -1.0])
        fd_gradient(lambda z: float(np.sum(z**3)), x)
        np.testing.assert_array_equal(x, [0.5, -1.0])

    def test_nonfinite_objective(self):
        with pytest.raises(FloatingPointError):
            fd_gradient(lambda x: math.inf, [0.0])

    def test_grad_close(self):
        spec = FiniteDiffSpec()
        assert grad_close([1.0, 0.0], [1.00001, 1e-9], spec)
        assert not grad_close([1.0], [1.01], spec)
        assert not grad_close([1e-6], [0.0], spec)
        with pytest.raises(ValueError):
            FiniteDiffSpec(h=0.0)


class TestGridMLE:
    def test_balanced(self):
        assert grid_mle_mnl2(two_product(5000, 5000)).alpha[1] == pytest.approx(0.0, abs=1e-12)

    def test_one_to_two(self):
        step = 6.0 / 6000
        g = grid_mle_mnl2(two_product(3333, 6667)).alpha[1]
        assert abs(g - math.log(6667 / 3333)) <= step
        assert abs(g - math.log(2)) <= step

    def test_degenerate_warns(self):
        with pytest.warns(DegenerateDataWarning):
            p = grid_mle_mnl2(two_product(100, 0))
        assert p.alpha[1] == -3.0
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            grid_mle_mnl2(two_product(1, 1))

    def test_requirements(self):
        with pytest.raises(ValueError):
            grid_mle_mnl2(ChoiceDataset(3, [[1, 1, 1]], [0]))
        with pytest.raises(ValueError):
            grid_mle_mnl2(ChoiceDataset(2, [[1, 0]], [0]))
