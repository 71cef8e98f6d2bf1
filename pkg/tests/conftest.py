from __future__ import annotations

import numpy as np
import pytest

from hubnet.series import MatrixSeries, YearMonth, month_range

ACCEPTANCE_LINES: list[str] = []


def make_series(x, *, diag_defined=False, start=(1982, 1), entities=None) -> MatrixSeries:
    x = np.asarray(x, float)
    n = x.shape[1]
    ents = entities or [f"E{i:02d}" for i in range(n)]
    return MatrixSeries(ents, month_range(YearMonth(*start), x.shape[0]), x, diag_defined=diag_defined, simulated=True)


def random_series(rng, T, n, *, diag_defined=False) -> MatrixSeries:
    return make_series(rng.standard_normal((T, n, n)), diag_defined=diag_defined)


def random_orthonormal(rng, n, r) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
