"""Fitting the shared-loading and two-sided matrix factor models.

Model 1 uses one loading for both sides, ``X_t = Q Z_t Q' + E_t``, estimated
from the combined column + row accumulator. Model 2 allows separate export
(left) and import (right) loadings, ``X_t = Q1 Z_t Q2' + E_t``; the left
space comes from the column accumulator because every column of ``X_t``
lies in the span of the left loading, the right space from the row one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import HubnetError, RangeError
from .moments import Mode, Path, build_m_matrix
from .series import MatrixSeries
from .spectral import (
    DEFAULT_SCREE_THRESHOLD,
    LoadingMatrix,
    Spectrum,
    eigen_share,
    r_max_rule,
    ratio_rank,
    scree_rank,
    sym_eigen,
    top_loadings,
)

AUTO = "auto"


class ModelFamily(str, enum.Enum):
    SYMMETRIC_LOADING = "sym"
    TWO_SIDED = "two"


@dataclass(frozen=True, eq=False)
class FactorSeries:
    values: np.ndarray  # (T, r1, r2)
    hub_labels_left: tuple[str, ...]
    hub_labels_right: tuple[str, ...]
    times: tuple = ()

    @property
    def shape(self):
        return self.values.shape

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


@dataclass(frozen=True, eq=False)
class RankEstimates:
    ratio: int
    scree: int
    r_max: int
    threshold: float

    def as_dict(self) -> dict:
        return {"ratio": self.ratio, "scree": self.scree, "r_max": self.r_max, "threshold": self.threshold}


@dataclass(frozen=True, eq=False)
class ModelFit:
    model: ModelFamily
    q_left: LoadingMatrix
    q_right: LoadingMatrix | None
    factors: FactorSeries
    spectrum_left: Spectrum
    spectrum_right: Spectrum | None
    variance_explained: float
    h0: int
    window: tuple[str, str]
    entities: tuple[str, ...]
    ranks_left: RankEstimates
    ranks_right: RankEstimates | None = None
    side_variance: tuple[float, float] | None = None
    eigen_share: tuple[float, ...] = ()
    centered: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def right(self) -> LoadingMatrix:
        """Right loading (the shared one for Model 1)."""
        return self.q_left if self.q_right is None else self.q_right

    @property
    def r(self) -> tuple[int, int]:
        return self.q_left.r, self.right.r

    def fitted(self) -> np.ndarray:
        ql, qr = self.q_left.values, self.right.values
        return np.einsum("ik,tkl,jl->tij", ql, self.factors.values, qr)


def _resolve_rank(r, spectrum: Spectrum, rule: str, threshold: float, n: int):
    lam = spectrum.eigenvalues
    rmax = r_max_rule(n, rule)
    est = RankEstimates(ratio_rank(lam, rmax), scree_rank(lam, threshold), rmax, threshold)
    if isinstance(r, str):
        if r.lower() != AUTO:
            raise ValueError(f"rank must be a positive integer or 'auto', got {r!r}")
        r = est.ratio
    r = int(r)
    if not 1 <= r <= n:
        raise RangeError(f"r={r} must lie in [1, {n}]")
    return r, est


def _check_length(series: MatrixSeries, h0: int) -> None:
    if series.T < h0 + 2:
        raise RangeError(f"need T >= h0 + 2 = {h0 + 2}, got T={series.T}")


def _explained(x: np.ndarray, resid: np.ndarray, mask: np.ndarray) -> float:
    denom = float(np.sum(x[:, mask] ** 2))
    if denom == 0:
        raise HubnetError("variance explained undefined: series has zero total energy")
    val = 1.0 - float(np.sum(resid[:, mask] ** 2)) / denom
    return min(1.0, max(0.0, val))


def explained_fraction(x, resid, mask=None) -> float:
    """``1 - sum ||resid||^2 / sum ||x||^2`` over the cells selected by ``mask``."""
    x, resid = np.asarray(x, float), np.asarray(resid, float)
    if mask is None:
        mask = np.ones(x.shape[1:], dtype=bool)
    return _explained(x, resid, np.asarray(mask, bool))


def _extract(x: np.ndarray, ql: np.ndarray, qr: np.ndarray) -> np.ndarray:
    return np.einsum("ik,tij,jl->tkl", ql, x, qr)


def fit_model1(
    series: MatrixSeries,
    r=AUTO,
    h0: int = 1,
    *,
    center: bool = False,
    rmax_rule: str = "half",
    threshold: float = DEFAULT_SCREE_THRESHOLD,
    path: Path | str = Path.FAST,
    deterministic: bool = False,
) -> ModelFit:
    """Shared-loading fit: top-``r`` eigenvectors of the combined accumulator."""
    _check_length(series, h0)
    acc = build_m_matrix(series, h0, Mode.BOTH, path, center=center, deterministic=deterministic)
    spec = sym_eigen(acc)
    r, ranks = _resolve_rank(r, spec, rmax_rule, threshold, series.n)
    q = top_loadings(spec, r, series.entities)
    x = series.zero_filled()
    z = _extract(x, q.values, q.values)
    factors = FactorSeries(z, q.hub_labels, q.hub_labels, series.times)
    fit = ModelFit(
        model=ModelFamily.SYMMETRIC_LOADING,
        q_left=q,
        q_right=None,
        factors=factors,
        spectrum_left=spec,
        spectrum_right=None,
        variance_explained=0.0,
        h0=h0,
        window=acc.t_range,
        entities=series.entities,
        ranks_left=ranks,
        eigen_share=(eigen_share(spec.eigenvalues, r),),
        centered=center,
        meta={"m_mode": Mode.BOTH.value},
    )
    return _with_variance(series, fit)


def fit_model2(
    series: MatrixSeries,
    r1=AUTO,
    r2=AUTO,
    h0: int = 1,
    *,
    center: bool = False,
    rmax_rule: str = "half",
    threshold: float = DEFAULT_SCREE_THRESHOLD,
    path: Path | str = Path.FAST,
    deterministic: bool = False,
) -> ModelFit:
    """Two-sided fit with independent export (left) and import (right) ranks."""
    _check_length(series, h0)
    acc_col = build_m_matrix(series, h0, Mode.COL, path, center=center, deterministic=deterministic)
    acc_row = build_m_matrix(series, h0, Mode.ROW, path, center=center, deterministic=deterministic)
    spec1, spec2 = sym_eigen(acc_col), sym_eigen(acc_row)
    r1, ranks1 = _resolve_rank(r1, spec1, rmax_rule, threshold, series.n)
    r2, ranks2 = _resolve_rank(r2, spec2, rmax_rule, threshold, series.n)
    q1 = top_loadings(spec1, r1, series.entities, prefix="Ex")
    q2 = top_loadings(spec2, r2, series.entities, prefix="Im")
    x = series.zero_filled()
    z = _extract(x, q1.values, q2.values)
    fit = ModelFit(
        model=ModelFamily.TWO_SIDED,
        q_left=q1,
        q_right=q2,
        factors=FactorSeries(z, q1.hub_labels, q2.hub_labels, series.times),
        spectrum_left=spec1,
        spectrum_right=spec2,
        variance_explained=0.0,
        h0=h0,
        window=acc_col.t_range,
        entities=series.entities,
        ranks_left=ranks1,
        ranks_right=ranks2,
        eigen_share=(eigen_share(spec1.eigenvalues, r1), eigen_share(spec2.eigenvalues, r2)),
        centered=center,
        meta={"left": "export (columns, M_col)", "right": "import (rows, M_row)"},
    )
    return _with_variance(series, fit)


def _with_variance(series: MatrixSeries, fit: ModelFit) -> ModelFit:
    sides = None
    if fit.model is ModelFamily.TWO_SIDED:
        sides = side_variance_explained(series, fit)
    return replace(fit, variance_explained=variance_explained(series, fit), side_variance=sides)


def residuals(series: MatrixSeries, fit: ModelFit) -> np.ndarray:
    """``X_t - Q1 Z_t Q2'`` with undefined cells set to zero."""
    resid = series.zero_filled() - fit.fitted()
    resid[:, ~series.defined_mask] = 0.0
    return resid


def residuals_projection_form(series: MatrixSeries, fit: ModelFit) -> np.ndarray:
    """Residuals as ``(I - P1) X + P1 X (I - P2)`` with projections ``P = Q Q'``."""
    x = series.zero_filled()
    n = series.n
    p1 = fit.q_left.values @ fit.q_left.values.T
    p2 = fit.right.values @ fit.right.values.T
    eye = np.eye(n)
    resid = np.einsum("ij,tjk->tik", eye - p1, x) + np.einsum("ij,tjk,kl->til", p1, x, eye - p2)
    resid[:, ~series.defined_mask] = 0.0
    return resid


def variance_explained(series: MatrixSeries, fit: ModelFit) -> float:
    return _explained(series.zero_filled(), residuals(series, fit), series.defined_mask)


def side_variance_explained(series: MatrixSeries, fit: ModelFit) -> tuple[float, float]:
    """(export, import) shares: energy captured by each loading's projection alone."""
    x = series.zero_filled()
    mask = series.defined_mask
    p1 = fit.q_left.values @ fit.q_left.values.T
    p2 = fit.right.values @ fit.right.values.T
    left = x - np.einsum("ij,tjk->tik", p1, x)
    right = x - np.einsum("tij,jk->tik", x, p2)
    return _explained(x, left, mask), _explained(x, right, mask)


def refit_factors(x, fit: ModelFit) -> np.ndarray:
    """Project arbitrary ``(T, n, n)`` data onto the fit's loadings."""
    return _extract(np.asarray(x, float), fit.q_left.values, fit.right.values)
