"""Lagged auto-cross-moments and the accumulated eigen-analysis matrix.

For lag ``h`` the column-orientation moment between columns ``i`` and ``j``
is ``(1/(T-h)) sum_t X_t[:, i] X_{t+h}[:, j]'``; the row orientation uses
rows instead. The accumulated matrix sums ``Omega Omega'`` over lags
``1..h0`` and all ``(i, j)`` pairs. Undefined diagonal cells enter as zero.

Two paths compute the accumulated matrix. ``NAIVE`` is the literal loop over
``(h, i, j)``. ``FAST`` uses the exact collapse

    sum_ij Omega_ij Omega_ij' = (T-h)^-2 sum_{t,s} <X_{t+h}, X_{s+h}>_F X_t X_s'

so only a ``(T-h) x (T-h)`` Gram matrix of lagged observations is needed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, RangeError
from .series import MatrixSeries


class Orientation(str, enum.Enum):
    COL = "col"
    ROW = "row"


class Mode(str, enum.Enum):
    COL = "col"
    ROW = "row"
    BOTH = "both"


class Path(str, enum.Enum):
    FAST = "fast"
    NAIVE = "naive"


@dataclass(frozen=True, eq=False)
class SymmetricAccumulator:
    m: np.ndarray
    h0: int
    mode: Mode
    t_range: tuple[str, str]
    centered: bool = False
    path: Path = Path.FAST

    @property
    def n(self) -> int:
        return self.m.shape[0]

    def min_eig_ratio(self) -> float:
        """Smallest eigenvalue over largest (0 for the zero matrix)."""
        ev = np.linalg.eigvalsh(self.m)
        top = ev[-1]
        return 0.0 if top <= 0 else float(ev[0] / top)


def _data(series: MatrixSeries, center: bool) -> np.ndarray:
    x = series.zero_filled()
    if center:
        x -= x.mean(axis=0, keepdims=True)
        # centering must not resurrect undefined cells
        x[:, ~series.defined_mask] = 0.0
    return x


def _check_lag(h: int, T: int) -> None:
    if not 1 <= h <= T - 1:
        raise RangeError(f"lag h={h} must satisfy 1 <= h <= T-1 = {T - 1}")


def lagged_cross_moment(
    series: MatrixSeries,
    h: int,
    i: int,
    j: int,
    orientation: Orientation | str = Orientation.COL,
    *,
    center: bool = False,
) -> np.ndarray:
    """Sample lag-``h`` moment between column (or row) ``i`` and ``j``.

    Computed as an explicit sum of outer products over ``t``.
    """
    orientation = Orientation(orientation)
    T = series.T
    _check_lag(h, T)
    x = _data(series, center)
    if orientation is Orientation.ROW:
        x = x.transpose(0, 2, 1)
    n = series.n
    out = np.zeros((n, n))
    for t in range(T - h):
        out += np.outer(x[t, :, i], x[t + h, :, j])
    return out / (T - h)


def _naive_lag(x: np.ndarray, h: int) -> np.ndarray:
    T, n, _ = x.shape
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            om = np.zeros((n, n))
            for t in range(T - h):
                om += np.outer(x[t, :, i], x[t + h, :, j])
            om /= T - h
            m += om @ om.T
    return m


def _fast_lag(x: np.ndarray, h: int) -> np.ndarray:
    T, n, _ = x.shape
    lead = x[:-h]
    lagged = x[h:].reshape(T - h, n * n)
    gram = lagged @ lagged.T
    mixed = np.tensordot(gram, lead, axes=(1, 0))  # sum_s G_ts X_s
    return np.einsum("tab,tcb->ac", lead, mixed) / float(T - h) ** 2


def _accumulate(x: np.ndarray, h0: int, path: Path) -> np.ndarray:
    lag_fn = _fast_lag if path is Path.FAST else _naive_lag
    n = x.shape[1]
    m = np.zeros((n, n))
    for h in range(1, h0 + 1):
        term = lag_fn(x, h)
        if not np.all(np.isfinite(term)):
            raise NonFiniteError(f"non-finite moment accumulation at lag h={h}")
        m += term
    return 0.5 * (m + m.T)


def build_m_matrix(
    series: MatrixSeries,
    h0: int = 1,
    mode: Mode | str = Mode.BOTH,
    path: Path | str = Path.FAST,
    *,
    center: bool = False,
    deterministic: bool = False,
) -> SymmetricAccumulator:
    """Accumulate the symmetric PSD matrix whose top eigenvectors span the loadings.

    ``mode`` selects the column term, the row term or their sum.
    ``deterministic`` forces the ``NAIVE`` summation order. ``center``
    subtracts each cell's temporal mean over the series first.
    """
    mode, path = Mode(mode), Path(path)
    if deterministic:
        path = Path.NAIVE
    T = series.T
    if not 1 <= h0 <= T - 1:
        raise RangeError(f"h0={h0} must satisfy 1 <= h0 <= T-1 = {T - 1}")
    x = _data(series, center)
    n = series.n
    m = np.zeros((n, n))
    if mode in (Mode.COL, Mode.BOTH):
        m = m + _accumulate(x, h0, path)
    if mode in (Mode.ROW, Mode.BOTH):
        m = m + _accumulate(np.ascontiguousarray(x.transpose(0, 2, 1)), h0, path)
    t_range = (str(series.times[0]), str(series.times[-1]))
    return SymmetricAccumulator(m, h0, mode, t_range, centered=center, path=path)
