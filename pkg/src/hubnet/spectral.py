"""Symmetric eigendecomposition, rank selection and loading extraction."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, DegenerateSpectrumError, RangeError

RATIO_FLOOR = 1e-12
DEFAULT_SCREE_THRESHOLD = 0.85


class LoadingState(str, enum.Enum):
    ORTHONORMAL = "orthonormal"
    VARIMAX = "varimax"
    SUM_ONE = "sum_one"


@dataclass(frozen=True, eq=False)
class LoadingMatrix:
    """``n x r`` loadings with entity (row) and hub (column) labels."""

    values: np.ndarray
    entities: tuple[str, ...]
    hub_labels: tuple[str, ...]
    state: LoadingState = LoadingState.ORTHONORMAL
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2:
            raise ValueError("loadings must be 2-D")
        if v.shape[0] != len(self.entities) or v.shape[1] != len(self.hub_labels):
            raise ValueError(
                f"loadings {v.shape} vs {len(self.entities)} entities, {len(self.hub_labels)} hubs"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "hub_labels", tuple(self.hub_labels))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def r(self) -> int:
        return self.values.shape[1]

    def with_values(self, values, state: LoadingState | None = None, **info) -> "LoadingMatrix":
        return replace(
            self,
            values=values,
            state=self.state if state is None else state,
            info={**self.info, **info},
        )

    def take(self, order) -> "LoadingMatrix":
        order = list(order)
        return replace(
            self, values=self.values[:, order], hub_labels=[self.hub_labels[k] for k in order]
        )


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties go to the first index attaining the maximum magnitude.
    """
    v = np.array(vectors, dtype=float, copy=True)
    if v.size == 0:
        return v
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivot, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def sym_eigen(m) -> Spectrum:
    """Full spectrum of a symmetric matrix, eigenvalues descending."""
    m = np.asarray(getattr(m, "m", m), dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(m) if np.all(np.isfinite(m)) else float("nan")
        raise ConvergenceError(
            f"eigendecomposition failed ({exc}); n={m.shape[0]}, cond={cond:.3e}, "
            f"max|m|={np.max(np.abs(m)):.3e}"
        ) from exc
    order = np.argsort(w, kind="stable")[::-1]
    return Spectrum(w[order], fix_signs(v[:, order]))


def r_max_rule(n: int, rule: str = "half") -> int:
    """Upper search bound for the ratio estimator: ``ceil(n/2)`` or ``ceil(n/3)``."""
    rule = rule.lower().replace("ceil_", "")
    if rule == "half":
        r = math.ceil(n / 2)
    elif rule == "third":
        r = math.ceil(n / 3)
    else:
        raise ValueError(f"unknown r_max rule {rule!r}")
    return max(1, min(r, n - 1))


def eigen_ratios(eigenvalues, r_max: int) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size < 2:
        raise RangeError("ratio rank needs at least two eigenvalues")
    if not 1 <= r_max <= lam.size - 1:
        raise RangeError(f"r_max={r_max} must lie in [1, {lam.size - 1}]")
    if lam[0] <= 0:
        raise DegenerateSpectrumError("all eigenvalues are zero (or the leading one is not positive)")
    floor = RATIO_FLOOR * lam[0]
    lam = np.maximum(lam[: r_max + 1], floor)
    return lam[1:] / lam[:-1]


def ratio_rank(eigenvalues, r_max: int) -> int:
    """Index ``j`` in ``1..r_max`` minimizing ``lambda_{j+1} / lambda_j``.

    Eigenvalues below ``1e-12 * lambda_1`` are floored before dividing;
    ties resolve to the smallest ``j``.
    """
    ratios = eigen_ratios(eigenvalues, r_max)
    return int(np.argmin(ratios)) + 1


def scree_rank(eigenvalues, threshold: float = DEFAULT_SCREE_THRESHOLD) -> int:
    """Smallest ``r`` whose cumulative eigenvalue share reaches ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam.sum()
    if total <= 0:
        raise DegenerateSpectrumError("eigenvalues sum to zero")
    share = np.cumsum(lam) / total
    # cumulative sums may land a few ulps under an exactly attainable threshold
    hit = np.nonzero(share >= threshold - 1e-12)[0]
    return int(hit[0]) + 1 if hit.size else lam.size


def eigen_share(eigenvalues, r: int) -> float:
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam.sum()
    return float(lam[:r].sum() / total) if total > 0 else 0.0


def top_loadings(
    spectrum: Spectrum,
    r: int,
    entities=None,
    prefix: str = "H",
) -> LoadingMatrix:
    n = spectrum.n
    if not 1 <= r <= n:
        raise RangeError(f"r={r} must lie in [1, {n}]")
    if entities is None:
        entities = [str(k) for k in range(n)]
    hubs = [f"{prefix}{k + 1}" for k in range(r)]
    return LoadingMatrix(spectrum.eigenvectors[:, :r], entities, hubs)
