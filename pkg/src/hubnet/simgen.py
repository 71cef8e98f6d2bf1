"""Synthetic matrix factor data with known loadings, and recovery metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .series import MatrixSeries, YearMonth, month_range

BURN_IN = 200


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Generating parameters of ``X_t = A_left F_t A_right' + E_t``.

    Factor entries follow independent AR(1) processes around ``factor_mean``
    with coefficient ``phi`` (scalar or ``r1 x r2``) and innovation scale
    ``sigma_f``; ``E_t`` entries are Gaussian with scale ``sigma_e``.
    """

    a_left: np.ndarray
    a_right: np.ndarray
    phi: np.ndarray | float = 0.7
    sigma_f: float = 1.0
    sigma_e: float = 1.0
    seed: int = 0
    factor_mean: np.ndarray | float = 0.0
    noise: str = "iid"
    noise_rho: float = 0.5
    mask_diagonal: bool = True
    entities: tuple[str, ...] = ()
    start: tuple[int, int] = (1982, 1)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        al = np.array(self.a_left, dtype=float)
        ar = np.array(self.a_right, dtype=float)
        if al.ndim != 2 or ar.ndim != 2 or al.shape[0] != ar.shape[0]:
            raise ValueError("loadings must be n x r1 and n x r2 with the same n")
        for name, a in (("a_left", al), ("a_right", ar)):
            if np.linalg.matrix_rank(a) < a.shape[1]:
                raise ValueError(f"{name} is not of full column rank")
        phi = np.broadcast_to(np.asarray(self.phi, float), (al.shape[1], ar.shape[1])).copy()
        if np.any(np.abs(phi) >= 1):
            raise ValueError("AR coefficients must satisfy |phi| < 1")
        if self.sigma_f < 0 or self.sigma_e < 0:
            raise ValueError("scales must be nonnegative")
        if self.noise not in ("iid", "correlated"):
            raise ValueError(f"unknown noise mode {self.noise!r}")
        ents = tuple(self.entities) or tuple(f"E{k + 1:02d}" for k in range(al.shape[0]))
        if len(ents) != al.shape[0]:
            raise ValueError("entity labels do not match loading rows")
        object.__setattr__(self, "a_left", al)
        object.__setattr__(self, "a_right", ar)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(
            self, "factor_mean", np.broadcast_to(np.asarray(self.factor_mean, float), phi.shape).copy()
        )
        object.__setattr__(self, "entities", ents)

    @property
    def n(self) -> int:
        return self.a_left.shape[0]

    @property
    def r(self) -> tuple[int, int]:
        return self.a_left.shape[1], self.a_right.shape[1]

    def basis_left(self) -> np.ndarray:
        return orthonormal_basis(self.a_left)

    def basis_right(self) -> np.ndarray:
        return orthonormal_basis(self.a_right)

    def to_json(self) -> dict:
        return {
            "a_left": self.a_left.tolist(),
            "a_right": self.a_right.tolist(),
            "phi": self.phi.tolist(),
            "sigma_f": self.sigma_f,
            "sigma_e": self.sigma_e,
            "seed": self.seed,
            "factor_mean": self.factor_mean.tolist(),
            "noise": self.noise,
            "noise_rho": self.noise_rho,
            "mask_diagonal": self.mask_diagonal,
            "entities": list(self.entities),
            "start": list(self.start),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        data = dict(data)
        data["start"] = tuple(data.get("start", (1982, 1)))
        data["entities"] = tuple(data.get("entities", ()))
        return cls(**data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(json.loads(Path(path).read_text()))


def orthonormal_basis(a) -> np.ndarray:
    q, _ = np.linalg.qr(np.asarray(a, float))
    return q


def random_loadings(n: int, r: int, rng: np.random.Generator, scale: float | None = None) -> np.ndarray:
    """Orthonormalized Gaussian ``n x r`` loading times ``scale`` (default ``sqrt(n)``).

    The ``sqrt(n)`` scale gives ``A'A = n I``, the pervasive-factor regime.
    """
    q = orthonormal_basis(rng.standard_normal((n, r)))
    return q * (np.sqrt(n) if scale is None else scale)


def planted_hub_loadings(
    n: int,
    r: int,
    rng: np.random.Generator,
    dominant: dict[int, int] | None = None,
    spill: float = 0.05,
    dominance: float = 4.0,
    scale: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative near-block loadings.

    Entities are split into ``r`` contiguous blocks; entity ``i`` loads on its
    block's hub with weight in ``[0.5, 1.5)`` and on every other hub with
    weight ``spill`` times a uniform draw. ``dominant`` maps hub -> entity whose
    loading on that hub is multiplied by ``dominance``. Returns the loadings
    and the block label of every entity.
    """
    blocks = np.minimum(np.arange(n) * r // n, r - 1)
    a = spill * rng.random((n, r))
    a[np.arange(n), blocks] = 0.5 + rng.random(n)
    for hub, ent in (dominant or {}).items():
        a[ent, hub] *= dominance
    a *= (np.sqrt(n) if scale is None else scale) / np.linalg.norm(a, axis=0)
    return a, blocks


def make_truth(
    n: int,
    r1: int,
    r2: int | None = None,
    *,
    two_sided: bool = False,
    phi=0.7,
    sigma_f: float = 1.0,
    sigma_e: float = 1.0,
    seed: int = 0,
    planted: bool = False,
    dominant: dict[int, int] | None = None,
    factor_mean=0.0,
    loading_scale: float | None = None,
    noise: str = "iid",
    mask_diagonal: bool = True,
    entities=(),
    start=(1982, 1),
) -> GroundTruth:
    """Draw loadings from ``seed`` and bundle them into a :class:`GroundTruth`.

    Model 1 truth (``two_sided=False``) shares one loading for both sides.
    """
    rng = np.random.default_rng([seed, 1])
    r2 = r1 if r2 is None else r2
    meta = {}
    if planted:
        al, blocks = planted_hub_loadings(n, r1, rng, dominant, scale=loading_scale)
        meta["blocks"] = blocks.tolist()
        meta["dominant"] = {str(k): int(v) for k, v in (dominant or {}).items()}
    else:
        al = random_loadings(n, r1, rng, loading_scale)
    if two_sided:
        if planted:
            ar, _ = planted_hub_loadings(n, r2, rng, dominant, scale=loading_scale)
        else:
            ar = random_loadings(n, r2, rng, loading_scale)
    else:
        if r2 != r1:
            raise ValueError("Model 1 truth needs r1 == r2")
        ar = al
    meta["model"] = "two" if two_sided else "sym"
    return GroundTruth(
        al,
        ar,
        phi=phi,
        sigma_f=sigma_f,
        sigma_e=sigma_e,
        seed=seed,
        factor_mean=factor_mean,
        noise=noise,
        mask_diagonal=mask_diagonal,
        entities=tuple(entities),
        start=tuple(start),
        meta=meta,
    )


def _ar1(phi: np.ndarray, mean: np.ndarray, sigma: float, T: int, rng) -> np.ndarray:
    r1, r2 = phi.shape
    f = np.zeros((r1, r2))
    out = np.empty((T, r1, r2))
    shocks = rng.standard_normal((T + BURN_IN, r1, r2)) * sigma
    for k in range(T + BURN_IN):
        f = phi * f + shocks[k]
        if k >= BURN_IN:
            out[k - BURN_IN] = f
    return out + mean


def _corr_root(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    c = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(c)


def simulate(truth: GroundTruth, T: int, *, return_factors: bool = False):
    """Draw a series of length ``T`` from ``truth`` (reproducible from its seed).

    Returns ``(series, truth)``; with ``return_factors`` also the ``(T, r1, r2)``
    factor path.
    """
    if T < 1:
        raise ValueError("T must be positive")
    rng = np.random.default_rng([truth.seed, 2])
    f = _ar1(truth.phi, truth.factor_mean, truth.sigma_f, T, rng)
    n = truth.n
    x = np.einsum("ik,tkl,jl->tij", truth.a_left, f, truth.a_right)
    if truth.sigma_e > 0:
        e = rng.standard_normal((T, n, n)) * truth.sigma_e
        if truth.noise == "correlated":
            root = _corr_root(n, truth.noise_rho)
            e = np.einsum("ij,tjk,lk->til", root, e, root)
        x = x + e
    series = MatrixSeries(
        truth.entities,
        month_range(YearMonth(*truth.start), T),
        x,
        diag_defined=not truth.mask_diagonal,
        simulated=True,
        meta={"seed": truth.seed},
    )
    if return_factors:
        return series, truth, f
    return series, truth


def subspace_distance(q1, q2, tol: float = 1e-8) -> float:
    """``||q1 q1' - q2 q2'||_F / sqrt(2 r)`` for orthonormal ``n x r`` frames."""
    q1 = np.asarray(getattr(q1, "values", q1), float)
    q2 = np.asarray(getattr(q2, "values", q2), float)
    if q1.shape != q2.shape:
        raise ValueError(f"shape mismatch {q1.shape} vs {q2.shape}")
    r = q1.shape[1]
    eye = np.eye(r)
    for q in (q1, q2):
        if np.max(np.abs(q.T @ q - eye)) > tol:
            raise ValueError("frames must be orthonormal")
    d = np.linalg.norm(q1 @ q1.T - q2 @ q2.T) / np.sqrt(2 * r)
    return float(min(1.0, d))
