import numpy as np
import pytest

from halochoice.models import LowRankHaloParams, MixtureMNLParams


def random_assortment(rng, m, min_size=1):
    while True:
        a = (rng.random(m) < 0.6).astype(np.int8)
        if a.sum() >= min_size:
            return a


def random_assortments(rng, n, m):
    return np.array([random_assortment(rng, m) for _ in range(n)])


def random_lowrank(rng, m, r, scale=1.0, diag_mode="additive"):
    return LowRankHaloParams(
        rng.normal(size=m), scale * rng.normal(size=(m, r)), scale * rng.normal(size=(m, r)), diag_mode
    )


def random_mixture(rng, k, m):
    return MixtureMNLParams(rng.normal(size=k), rng.normal(size=(k, m)))


def assert_valid_probs(p, a):
    """Rows sum to one and vanish exactly off-assortment."""
    p, a = np.atleast_2d(p), np.atleast_2d(a)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p[a == 0] == 0.0)
    assert np.all(p >= 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


class AcceptanceLog:
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def __init__(self, lines):
        self.lines = lines

    def record(self, number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}"
        if detail:
            line += f"  [{detail}]"
        self.lines.append((number, line))
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance_log(request):
    return AcceptanceLog(request.config.stash.setdefault(_ACCEPTANCE_KEY, []))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
