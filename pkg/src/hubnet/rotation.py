"""Varimax rotation, sum-to-one loading normalization and hub alignment."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NormalizationError
from .spectral import LoadingMatrix, LoadingState

logger = logging.getLogger(__name__)

VARIMAX_TOL = 1e-8
VARIMAX_MAX_SWEEPS = 1000


def varimax_criterion(loadings) -> float:
    """Sum over columns of the variance of squared loadings (raw, unnormalized rows)."""
    sq = np.asarray(loadings, dtype=float) ** 2
    return float(np.sum(np.mean(sq**2, axis=0) - np.mean(sq, axis=0) ** 2))


def _pair_angle(x: np.ndarray, y: np.ndarray) -> float:
    # Kaiser's closed form for the planar rotation maximizing the pair criterion
    n = x.shape[0]
    u = x * x - y * y
    v = 2.0 * x * y
    su, sv = u.sum(), v.sum()
    num = 2.0 * (n * np.dot(u, v) - su * sv)
    den = n * (np.dot(u, u) - np.dot(v, v)) - (su * su - sv * sv)
    return 0.25 * np.arctan2(num, den)


def orient_columns(values: np.ndarray) -> np.ndarray:
    """Column signs making each column sum nonnegative (ties: largest entry positive)."""
    v = np.asarray(values, float)
    sums = v.sum(axis=0)
    signs = np.where(sums < 0, -1.0, 1.0)
    flat = np.isclose(sums, 0.0, atol=1e-12 * max(1.0, float(np.abs(v).max(initial=0.0))))
    if np.any(flat):
        pivot = np.argmax(np.abs(v), axis=0)
        piv_sign = np.sign(v[pivot, np.arange(v.shape[1])])
        signs = np.where(flat & (piv_sign < 0), -1.0, signs)
    return signs


def varimax(
    q,
    tol: float = VARIMAX_TOL,
    max_sweeps: int = VARIMAX_MAX_SWEEPS,
    *,
    orient: bool = True,
    strict: bool = False,
):
    """Orthogonal varimax rotation by pairwise (Jacobi) sweeps.

    Pairs ``(k, l)`` are visited in lexicographic order; each planar step is
    the exact maximizer of the criterion within that plane, so the criterion
    never decreases. Sweeps stop once a sweep gains less than ``tol`` or after
    ``max_sweeps``. With ``orient`` the rotated columns are sign-flipped to
    have nonnegative sums (the flips are folded into the returned rotation).

    Returns ``(rotated, rotation)`` with ``rotated = q @ rotation``; if ``q`` is
    a :class:`LoadingMatrix` the rotated one is too, carrying the per-sweep
    criterion history in ``info``.
    """
    is_lm = isinstance(q, LoadingMatrix)
    a = np.array(q.values if is_lm else q, dtype=float)
    n, r = a.shape
    rot = np.eye(r)
    b = a.copy()
    history = [varimax_criterion(b)]
    converged = r < 2
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        for k, l in itertools.combinations(range(r), 2):
            theta = _pair_angle(b[:, k], b[:, l])
            if theta == 0.0:
                continue
            c, s = np.cos(theta), np.sin(theta)
            g = np.array([[c, -s], [s, c]])
            b[:, [k, l]] = b[:, [k, l]] @ g
            rot[:, [k, l]] = rot[:, [k, l]] @ g
        history.append(varimax_criterion(b))
        if history[-1] - history[-2] < tol:
            converged = True
    if not converged:
        msg = f"varimax did not converge in {max_sweeps} sweeps"
        if strict:
            raise ConvergenceError(msg)
        logger.warning(msg)
    if orient:
        signs = orient_columns(b)
        rot = rot * signs
    b = a @ rot
    if not is_lm:
        return b, rot
    out = q.with_values(
        b,
        LoadingState.VARIMAX,
        criterion_history=history,
        sweeps=sweeps,
        converged=converged,
    )
    return out, rot


def sum_one_normalize(q) -> LoadingMatrix:
    """Set negative loadings to zero, then divide each column by its sum.

    The returned matrix carries ``info["truncated_mass"]``: per column, the
    absolute negative mass removed as a fraction of the column's absolute mass.
    """
    is_lm = isinstance(q, LoadingMatrix)
    a = np.array(q.values if is_lm else q, dtype=float)
    pos = np.maximum(a, 0.0)
    sums = pos.sum(axis=0)
    bad = np.nonzero(sums <= 0)[0]
    if bad.size:
        raise NormalizationError(
            f"column(s) {bad.tolist()} have no positive entry; check the sign convention"
        )
    absmass = np.abs(a).sum(axis=0)
    truncated = np.maximum(-a, 0.0).sum(axis=0) / absmass
    out = pos / sums
    if not is_lm:
        return out
    return q.with_values(out, LoadingState.SUM_ONE, truncated_mass=truncated.tolist())


def sum_one_scales(rotated) -> np.ndarray:
    """Signed column sums of rotated orthonormal loadings.

    Dividing the rotated columns by these sums is a pure column operation, so
    it keeps the fitted signal intact; see :func:`sum_one_factors`.
    """
    v = np.asarray(getattr(rotated, "values", rotated), float)
    s = v.sum(axis=0)
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    bad = np.nonzero(s <= 1e-12 * scale)[0]
    if bad.size:
        raise NormalizationError(f"column(s) {bad.tolist()} have non-positive sum after rotation")
    return s


def sum_one_factors(z, rot_left, scale_left, rot_right=None, scale_right=None) -> np.ndarray:
    """Re-express orthonormal-basis factors in the sum-to-one parameterization.

    With ``V = Q R`` and column sums ``s`` the sum-one loading is
    ``A = V diag(1/s)`` and ``F_t = diag(s) R' Z_t R diag(s)`` satisfies
    ``A F_t A' = Q Z_t Q'``. For two-sided fits pass the right-side rotation
    and scales as well.
    """
    z = np.asarray(z, float)
    if rot_right is None:
        rot_right, scale_right = rot_left, scale_left
    f = np.einsum("ka,tkl,lb->tab", rot_left, z, rot_right)
    return f * np.asarray(scale_left)[None, :, None] * np.asarray(scale_right)[None, None, :]


# ---------------------------------------------------------------------------
# alignment


class AlignMethod(str, enum.Enum):
    ANCHOR = "anchor"
    GREEDY_MATCH = "greedy_match"
    EXHAUSTIVE = "exhaustive"
    IDENTITY = "identity"


@dataclass(frozen=True)
class AlignmentMap:
    """``permutation[p]`` is the current hub placed at output position ``p``."""

    permutation: tuple[int, ...]
    method: AlignMethod
    anchor_report: tuple = ()
    conflicts: tuple = ()

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError(f"not a permutation: {self.permutation}")

    def apply(self, q: LoadingMatrix) -> LoadingMatrix:
        return q.take(self.permutation)

    def as_dict(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "method": self.method.value,
            "anchor_report": [dict(a) for a in self.anchor_report],
            "conflicts": list(self.conflicts),
        }


def _cosines(ref: np.ndarray, cur: np.ndarray) -> np.ndarray:
    rn = np.linalg.norm(ref, axis=0)
    cn = np.linalg.norm(cur, axis=0)
    rn[rn == 0] = 1.0
    cn[cn == 0] = 1.0
    return (ref / rn).T @ (cur / cn)


def _greedy(sim: np.ndarray, positions, hubs) -> dict[int, int]:
    positions, hubs = sorted(positions), sorted(hubs)
    out = {}
    while positions and hubs:
        sub = sim[np.ix_(positions, hubs)]
        flat = int(np.argmax(sub))  # row-major: ties go to lower position, then hub
        p, k = positions[flat // len(hubs)], hubs[flat % len(hubs)]
        out[p] = k
        positions.remove(p)
        hubs.remove(k)
    return out


def _exhaustive(sim: np.ndarray, positions, hubs) -> dict[int, int]:
    positions, hubs = sorted(positions), sorted(hubs)
    if len(hubs) > 8:
        raise ValueError("exhaustive matching is limited to r <= 8")
    best, best_val = None, -np.inf
    for perm in itertools.permutations(hubs, len(positions)):
        val = sum(sim[p, k] for p, k in zip(positions, perm))
        if val > best_val + 1e-15:
            best, best_val = perm, val
    return dict(zip(positions, best or ()))


def align_hubs(
    current: LoadingMatrix,
    reference: LoadingMatrix | None = None,
    anchors=None,
    *,
    matcher: str = "greedy",
) -> AlignmentMap:
    """Order the hubs of ``current``.

    With ``anchors`` the hub having the largest loading on ``anchors[p]``
    goes to position ``p``. Positions left open (beyond the anchor list, or
    where two anchors pick the same hub) are filled by cosine matching against
    ``reference`` when given, else in the original eigen order.
    """
    r = current.r
    a = current.values
    match = _exhaustive if matcher == "exhaustive" else _greedy
    if reference is not None:
        if reference.r != r or reference.entities != current.entities:
            raise ValueError("reference must share entities and hub count with current")
        sim = _cosines(reference.values, a)
    else:
        sim = None
    perm: dict[int, int] = {}
    report, conflicts = [], []
    anchors = list(anchors or [])[:r]
    eidx = {e: i for i, e in enumerate(current.entities)}
    for pos, name in enumerate(anchors):
        if name not in eidx:
            raise ValueError(f"anchor {name!r} is not an entity")
        row = a[eidx[name]]
        hub = int(np.argmax(row))
        if hub in perm.values():
            conflicts.append({"position": pos, "anchor": name, "hub": hub})
            logger.info("anchor %s also claims hub %d; resolving by matching", name, hub)
            continue
        perm[pos] = hub
        report.append({"position": pos, "anchor": name, "hub": hub, "loading": float(row[hub])})
    open_pos = [p for p in range(r) if p not in perm]
    free = [k for k in range(r) if k not in perm.values()]
    if sim is not None:
        perm.update(match(sim, open_pos, free))
    else:
        # conflicted anchors take their best remaining hub; the rest keep eigen order
        for c in conflicts:
            row = a[eidx[c["anchor"]]]
            hub = max(free, key=lambda k: (row[k], -k))
            perm[c["position"]] = hub
            free.remove(hub)
            report.append(
                {"position": c["position"], "anchor": c["anchor"], "hub": hub, "loading": float(row[hub])}
            )
        for p in [p for p in range(r) if p not in perm]:
            perm[p] = free.pop(0)
    if anchors:
        method = AlignMethod.ANCHOR
    elif sim is not None:
        method = AlignMethod.EXHAUSTIVE if matcher == "exhaustive" else AlignMethod.GREEDY_MATCH
    else:
        method = AlignMethod.IDENTITY
    return AlignmentMap(
        tuple(perm[p] for p in range(r)),
        method,
        tuple(sorted(report, key=lambda d: d["position"])),
        tuple(conflicts),
    )
