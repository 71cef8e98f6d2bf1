"""Rolling-window estimation, entity clustering and hub-network summaries."""

from __future__ import annotations

import csv
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import RangeError
from .estimator import ModelFamily, ModelFit, fit_model1, fit_model2
from .rotation import (
    AlignmentMap,
    align_hubs,
    sum_one_factors,
    sum_one_normalize,
    sum_one_scales,
    varimax,
)
from .series import MatrixSeries, window
from .spectral import LoadingMatrix, LoadingState

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# per-window normalization


@dataclass(frozen=True, eq=False)
class WindowResult:
    """One fitted window after varimax, sum-to-one scaling and alignment.

    ``normalized_*`` and ``factors_sum_one`` are in the fit's eigen order;
    the ``aligned_*`` views apply the recorded permutations.
    """

    label: object
    start_index: int
    fit: ModelFit
    rotation_left: np.ndarray
    rotation_right: np.ndarray | None
    normalized_left: LoadingMatrix
    normalized_right: LoadingMatrix | None
    factors_sum_one: np.ndarray
    alignment_left: AlignmentMap
    alignment_right: AlignmentMap | None = None

    @property
    def two_sided(self) -> bool:
        return self.fit.model is ModelFamily.TWO_SIDED

    def _aligned(self, q: LoadingMatrix, amap: AlignmentMap, prefix: str) -> LoadingMatrix:
        out = amap.apply(q)
        return replace(out, hub_labels=[f"{prefix}{p + 1}" for p in range(out.r)])

    @property
    def aligned_left(self) -> LoadingMatrix:
        return self._aligned(self.normalized_left, self.alignment_left, "Ex" if self.two_sided else "H")

    @property
    def aligned_right(self) -> LoadingMatrix:
        if not self.two_sided:
            return self.aligned_left
        return self._aligned(self.normalized_right, self.alignment_right, "Im")

    @property
    def aligned_factors(self) -> np.ndarray:
        pl = list(self.alignment_left.permutation)
        pr = list((self.alignment_right or self.alignment_left).permutation)
        return self.factors_sum_one[:, pl][:, :, pr]

    def sides(self):
        """``(side, aligned loading)`` pairs: one for Model 1, export/import for Model 2."""
        if self.two_sided:
            return [("export", self.aligned_left), ("import", self.aligned_right)]
        return [("shared", self.aligned_left)]


def normalize_fit(
    fit: ModelFit,
    *,
    label=None,
    start_index: int = 0,
    anchors: Sequence[str] | None = None,
    reference: "WindowResult | None" = None,
    matcher: str = "greedy",
) -> WindowResult:
    """Rotate, rescale and align one fit.

    Each loading is varimax-rotated independently and oriented to positive
    column sums. Factors are re-expressed so that the sum-to-one loadings
    reproduce the fitted signal exactly. Alignment uses ``anchors`` first and
    cosine matching against ``reference`` (a previous window) for the rest.
    """
    rot_l_q, rot_l = varimax(fit.q_left)
    scale_l = sum_one_scales(rot_l_q)
    norm_l = sum_one_normalize(rot_l_q)
    if fit.model is ModelFamily.TWO_SIDED:
        rot_r_q, rot_r = varimax(fit.q_right)
        scale_r = sum_one_scales(rot_r_q)
        norm_r = sum_one_normalize(rot_r_q)
        f = sum_one_factors(fit.factors.values, rot_l, scale_l, rot_r, scale_r)
    else:
        rot_r, norm_r = None, None
        f = sum_one_factors(fit.factors.values, rot_l, scale_l)
    ref_l = reference.aligned_left if reference is not None else None
    amap_l = align_hubs(norm_l, _relabelled(ref_l, norm_l), anchors, matcher=matcher)
    amap_r = None
    if norm_r is not None:
        ref_r = reference.aligned_right if reference is not None else None
        amap_r = align_hubs(norm_r, _relabelled(ref_r, norm_r), anchors, matcher=matcher)
    return WindowResult(
        label=label,
        start_index=start_index,
        fit=fit,
        rotation_left=rot_l,
        rotation_right=rot_r,
        normalized_left=norm_l,
        normalized_right=norm_r,
        factors_sum_one=f,
        alignment_left=amap_l,
        alignment_right=amap_r,
    )


def _relabelled(ref: LoadingMatrix | None, like: LoadingMatrix):
    if ref is None or ref.r != like.r:
        return None
    return replace(ref, hub_labels=like.hub_labels)


# ---------------------------------------------------------------------------
# rolling driver


@dataclass(frozen=True, eq=False)
class RollingResult:
    windows: tuple[WindowResult, ...]
    model: ModelFamily
    window_months: int
    step_months: int
    settings: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def labels(self) -> list:
        return [w.label for w in self.windows]

    @property
    def fits(self) -> list[ModelFit]:
        return [w.fit for w in self.windows]

    @property
    def aligned_loadings(self) -> list:
        return [dict(w.sides()) for w in self.windows]

    @property
    def alignment_maps(self) -> list:
        return [(w.alignment_left, w.alignment_right) for w in self.windows]

    @property
    def entities(self) -> tuple[str, ...]:
        return self.windows[0].fit.entities

    def rank_rows(self) -> list[dict]:
        """Long-form per-window rank estimates and variance explained."""
        rows = []
        for w in self.windows:
            f = w.fit
            rr = f.ranks_right or f.ranks_left
            row = {
                "window_label": w.label,
                "start": f.window[0],
                "end": f.window[1],
                "ratio_left": f.ranks_left.ratio,
                "scree_left": f.ranks_left.scree,
                "ratio_right": rr.ratio,
                "scree_right": rr.scree,
                "r_left": f.r[0],
                "r_right": f.r[1],
                "variance_explained": f.variance_explained,
                "variance_left": f.side_variance[0] if f.side_variance else f.variance_explained,
                "variance_right": f.side_variance[1] if f.side_variance else f.variance_explained,
                "eigen_share_left": f.eigen_share[0],
                "eigen_share_right": f.eigen_share[-1],
            }
            rows.append(row)
        return rows


def window_label(series: MatrixSeries, start: int, length: int, step: int):
    mid = series.times[start + length // 2]
    return mid.year if step % 12 == 0 else str(mid)


def window_starts(T: int, window_months: int, step_months: int) -> list[int]:
    if window_months < 1 or step_months < 1:
        raise ValueError("window and step must be positive")
    if window_months > T:
        raise RangeError(f"window of {window_months} months exceeds series length {T}")
    return list(range(0, T - window_months + 1, step_months))


def rolling_fit(
    series: MatrixSeries,
    window_months: int = 60,
    step_months: int = 12,
    model: ModelFamily | str = ModelFamily.SYMMETRIC_LOADING,
    r: int = 4,
    r2: int | None = None,
    h0: int = 1,
    anchors: Sequence[str] | None = None,
    *,
    center: bool = False,
    rmax_rule: str = "half",
    threshold: float = 0.85,
    workers: int = 1,
    deterministic: bool = False,
    matcher: str = "greedy",
) -> RollingResult:
    """Fit every rolling window, then rotate, normalize and align them in order.

    The first window is ordered by ``anchors`` (if any); later windows are
    matched to the previous aligned window, with anchors overriding the
    positions they claim. ``r`` (and ``r2`` for the two-sided model) must be
    fixed integers so hubs can be tracked across windows.
    """
    model = ModelFamily(model)
    if isinstance(r, str) or (r2 is not None and isinstance(r2, str)):
        raise ValueError("rolling estimation needs fixed integer ranks")
    r2 = r if r2 is None else r2
    starts = window_starts(series.T, window_months, step_months)
    labels = [window_label(series, s, window_months, step_months) for s in starts]
    kw = dict(h0=h0, center=center, rmax_rule=rmax_rule, threshold=threshold, deterministic=deterministic)

    def one(start: int) -> ModelFit:
        sub = window(series, start, window_months)
        if model is ModelFamily.TWO_SIDED:
            return fit_model2(sub, r, r2, **kw)
        return fit_model1(sub, r, **kw)

    if workers > 1 and not deterministic:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(one, starts))
    else:
        fits = [one(s) for s in starts]

    windows: list[WindowResult] = []
    prev = None
    for label, start, fit in zip(labels, starts, fits):
        wr = normalize_fit(fit, label=label, start_index=start, anchors=anchors, reference=prev, matcher=matcher)
        windows.append(wr)
        prev = wr
    settings = {
        "model": model.value,
        "r": r,
        "r2": r2,
        "h0": h0,
        "anchors": list(anchors or []),
        "center": center,
        "rmax_rule": rmax_rule,
        "threshold": threshold,
    }
    return RollingResult(tuple(windows), model, window_months, step_months, settings)


def rank_table_layout(result: RollingResult) -> list[list[str]]:
    """Rows in the layout of the per-window rank comparison tables."""
    labels = [str(lab) for lab in result.labels]
    two = result.model is ModelFamily.TWO_SIDED
    rows = result.rank_rows()
    if two:
        r1, r2 = rows[0]["r_left"], rows[0]["r_right"]
        ratio = [f"({d['ratio_left']}, {d['ratio_right']})" for d in rows]
        scree = [f"({d['scree_left']}, {d['scree_right']})" for d in rows]
        var = [
            f"({round(100 * d['variance_left'])}, {round(100 * d['variance_right'])})" for d in rows
        ]
        last = f"({r1},{r2})"
    else:
        ratio = [str(d["ratio_left"]) for d in rows]
        scree = [str(d["scree_left"]) for d in rows]
        var = [str(round(100 * d["variance_explained"])) for d in rows]
        last = f"r={rows[0]['r_left']}"
    return [[""] + labels, ["Ratio"] + ratio, ["Scree"] + scree, [last] + var]


# ---------------------------------------------------------------------------
# ward.D clustering


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Agglomerative merge tree.

    ``merges`` rows are ``(left_id, right_id, height, size)``; leaves are ids
    ``0..n-1`` and the cluster formed at step ``s`` gets id ``n + s``.
    """

    merges: np.ndarray
    labels: np.ndarray
    leaf_order: tuple[int, ...]
    entities: tuple[str, ...]
    k: int
    squared: bool = True


def _ward_distance(x: np.ndarray, squared: bool) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    d = np.sum(diff * diff, axis=-1)
    return d if squared else np.sqrt(d)


def ward_cluster(features, k: int, entities: Sequence[str] | None = None, *, squared: bool = True) -> ClusterResult:
    """Ward minimum-variance agglomeration via the Lance-Williams recurrence.

    The recurrence is run on squared Euclidean distances by default
    (``squared=False`` runs it on plain Euclidean distances, as R's
    ``ward.D`` does when handed ``dist()`` output). Equal merge costs are
    resolved toward the pair whose smallest member indices are lowest.
    """
    x = np.asarray(features, float)
    if x.ndim != 2:
        raise ValueError("features must be an n x p matrix")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise RangeError(f"k={k} must lie in [1, {n}]")
    entities = tuple(entities) if entities is not None else tuple(str(i) for i in range(n))
    base = _ward_distance(x, squared)
    # cluster id -> (size, representative = smallest member index)
    size = {i: 1 for i in range(n)}
    rep = {i: i for i in range(n)}
    dist: dict[tuple[int, int], float] = {
        (i, j): float(base[i, j]) for i in range(n) for j in range(i + 1, n)
    }
    merges = np.zeros((max(n - 1, 0), 4))
    children: dict[int, tuple[int, int]] = {}
    for step in range(n - 1):
        dmin = min(dist.values())
        tol = 1e-12 * max(abs(dmin), 1e-300)
        cands = [p for p, v in dist.items() if v <= dmin + tol]
        a, b = min(cands, key=lambda p: tuple(sorted((rep[p[0]], rep[p[1]]))))
        if rep[a] > rep[b]:
            a, b = b, a
        dab = dist.pop((min(a, b), max(a, b)))
        new = n + step
        na, nb = size[a], size[b]
        for w in list(size):
            if w in (a, b):
                continue
            nw = size[w]
            daw = dist.pop((min(a, w), max(a, w)))
            dbw = dist.pop((min(b, w), max(b, w)))
            dist[(w, new)] = ((na + nw) * daw + (nb + nw) * dbw - nw * dab) / (na + nb + nw)
        size[new] = na + nb
        rep[new] = min(rep[a], rep[b])
        del size[a], size[b]
        children[new] = (a, b)
        merges[step] = (a, b, dab, na + nb)
    labels = cut_tree(merges, n, k)
    order = _leaf_order(children, n)
    return ClusterResult(merges, labels, order, entities, k, squared)


def cut_tree(merges: np.ndarray, n: int, k: int) -> np.ndarray:
    """Flat labels from the first ``n - k`` merges, numbered by smallest member."""
    parent = list(range(2 * n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for step in range(n - k):
        a, b = int(merges[step, 0]), int(merges[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = [find(i) for i in range(n)]
    mapping: dict[int, int] = {}
    for root in roots:
        mapping.setdefault(root, len(mapping))
    return np.array([mapping[r] for r in roots])


def _leaf_order(children: dict[int, tuple[int, int]], n: int) -> tuple[int, ...]:
    if n == 1:
        return (0,)
    root = max(children)
    out, stack = [], [root]
    while stack:
        node = stack.pop()
        if node < n:
            out.append(node)
        else:
            a, b = children[node]
            stack.extend((b, a))
    return tuple(out)


def cluster_features(result: RollingResult, side: str = "shared", mode: str = "concat", label=None) -> np.ndarray:
    """Entity feature rows from aligned loadings.

    ``concat`` joins every window's loadings; ``per-window`` uses one window
    (``label``). ``side`` is ``shared``, ``export``, ``import`` or ``joint``
    (export and import side by side).
    """
    sides = ("export", "import") if side == "joint" else (side,)
    windows = result.windows
    if mode in ("per-window", "per_window"):
        windows = [w for w in windows if w.label == label]
        if not windows:
            raise ValueError(f"no window labelled {label!r}")
    elif mode != "concat":
        raise ValueError(f"unknown clustering mode {mode!r}")
    blocks = []
    for w in windows:
        sd = dict(w.sides())
        for s in sides:
            if s not in sd:
                raise ValueError(f"side {s!r} not available for this model")
            blocks.append(sd[s].values)
    return np.hstack(blocks)


# ---------------------------------------------------------------------------
# hub network


@dataclass(frozen=True, eq=False)
class HubNetwork:
    mean_factor: np.ndarray
    truncated_left: np.ndarray
    truncated_right: np.ndarray
    hub_labels_left: tuple[str, ...]
    hub_labels_right: tuple[str, ...]
    entities: tuple[str, ...]
    two_sided: bool = False

    @property
    def hub_self_volume(self) -> np.ndarray:
        return np.diag(self.mean_factor)

    @property
    def direction_flipped(self) -> np.ndarray:
        """Mean-factor entries whose negative sign reverses the flow direction."""
        return self.mean_factor < 0

    @property
    def truncated_loadings(self) -> np.ndarray:
        return self.truncated_left


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def truncate_loadings(a, values: str = "rounded") -> np.ndarray:
    """Sparse display version of sum-to-one loadings.

    Entries of ``10 a`` are rounded half away from zero; the nonzero rounded
    entries are then rescaled to sum to one per column (``values="rounded"``
    rescales the rounded integers, ``"original"`` the original loadings at
    those positions). A column whose entries all round to zero keeps only its
    largest entry.
    """
    a = np.asarray(a, float)
    rounded = round_half_away(10.0 * a)
    rounded[rounded < 0] = 0.0
    base = rounded if values == "rounded" else np.where(rounded > 0, a, 0.0)
    if values not in ("rounded", "original"):
        raise ValueError(f"unknown truncation values mode {values!r}")
    out = np.array(base, copy=True)
    for k in range(a.shape[1]):
        if out[:, k].sum() <= 0:
            out[:, k] = 0.0
            out[int(np.argmax(a[:, k])), k] = 1.0
    return out / out.sum(axis=0)


def hub_network(
    loadings_left,
    factors,
    loadings_right=None,
    *,
    values: str = "rounded",
) -> HubNetwork:
    """Average hub-to-hub flows and the truncated entity-hub memberships."""
    left = loadings_left if isinstance(loadings_left, LoadingMatrix) else None
    right = loadings_right if isinstance(loadings_right, LoadingMatrix) else None
    al = np.asarray(getattr(loadings_left, "values", loadings_left), float)
    ar = al if loadings_right is None else np.asarray(getattr(loadings_right, "values", loadings_right), float)
    f = np.asarray(factors, float)
    if f.ndim == 2:
        f = f[None]
    mean = f.mean(axis=0)
    if mean.shape != (al.shape[1], ar.shape[1]):
        raise ValueError(f"factor shape {mean.shape} does not match loadings")
    hl = left.hub_labels if left is not None else tuple(f"H{k + 1}" for k in range(al.shape[1]))
    hr = (right or left).hub_labels if (right or left) is not None else hl
    ents = left.entities if left is not None else tuple(str(i) for i in range(al.shape[0]))
    return HubNetwork(
        mean_factor=mean,
        truncated_left=truncate_loadings(al, values),
        truncated_right=truncate_loadings(ar, values),
        hub_labels_left=tuple(hl),
        hub_labels_right=tuple(hr),
        entities=tuple(ents),
        two_sided=loadings_right is not None,
    )


def window_network(w: WindowResult, values: str = "rounded") -> HubNetwork:
    right = w.aligned_right if w.two_sided else None
    return hub_network(w.aligned_left, w.aligned_factors, right, values=values)


# ---------------------------------------------------------------------------
# exports


class PlotData(str, enum.Enum):
    HEATMAP = "heatmap"
    NETWORK = "network"
    DENDROGRAM = "dendrogram"
    SCREE = "scree"


HEATMAP_HEADER = ("side", "entity", "hub", "window_label", "loading")
NODE_HEADER = ("window_label", "side", "hub", "self_volume")
EDGE_HEADER = ("window_label", "source", "target", "weight", "value", "direction_flipped")
MEMBER_HEADER = ("window_label", "side", "entity", "hub", "weight")
MERGE_HEADER = ("variant", "step", "left", "right", "height", "size")
CLUSTER_HEADER = ("variant", "entity", "cluster", "leaf_position")
SCREE_HEADER = ("window_label", "side", "index", "eigenvalue")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def network_rows(label, net: HubNetwork):
    nodes, edges, members = [], [], []
    m = net.mean_factor
    if net.two_sided:
        for k, h in enumerate(net.hub_labels_left):
            nodes.append((label, "export", h, m[k, k] if k < m.shape[1] else 0.0))
        for l, h in enumerate(net.hub_labels_right):
            nodes.append((label, "import", h, m[l, l] if l < m.shape[0] else 0.0))
        pairs = [(k, l) for k in range(m.shape[0]) for l in range(m.shape[1])]
    else:
        for k, h in enumerate(net.hub_labels_left):
            nodes.append((label, "shared", h, m[k, k]))
        pairs = [(k, l) for k in range(m.shape[0]) for l in range(m.shape[1]) if k != l]
    for k, l in pairs:
        v = m[k, l]
        src, dst = net.hub_labels_left[k], net.hub_labels_right[l]
        if v < 0:
            src, dst = dst, src
        edges.append((label, src, dst, abs(v), v, int(v < 0)))
    sides = [("export", net.truncated_left, net.hub_labels_left), ("import", net.truncated_right, net.hub_labels_right)]
    if not net.two_sided:
        sides = [("shared", net.truncated_left, net.hub_labels_left)]
    for side, a, hubs in sides:
        for i, e in enumerate(net.entities):
            for k, h in enumerate(hubs):
                if a[i, k] > 0:
                    members.append((label, side, e, h, a[i, k]))
    return nodes, edges, members


def export_plot_data(
    result: RollingResult,
    what: PlotData | str,
    outdir,
    *,
    k: int = 4,
    truncation: str = "rounded",
) -> list[Path]:
    """Write plot-ready CSVs for ``what`` into ``outdir`` and return the paths."""
    try:
        what = PlotData(str(getattr(what, "value", what)).lower())
    except ValueError:
        raise ValueError(f"unknown export kind {what!r}; choose from {[p.value for p in PlotData]}") from None
    if not len(result):
        raise ValueError("rolling result is empty")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if what is PlotData.HEATMAP:
        rows = []
        for w in result.windows:
            for side, q in w.sides():
                for i, e in enumerate(q.entities):
                    for kk, h in enumerate(q.hub_labels):
                        rows.append((side, e, h, w.label, q.values[i, kk]))
        return [_write(outdir / "heatmap.csv", HEATMAP_HEADER, rows)]
    if what is PlotData.NETWORK:
        nodes, edges, members = [], [], []
        for w in result.windows:
            a, b, c = network_rows(w.label, window_network(w, truncation))
            nodes += a
            edges += b
            members += c
        return [
            _write(outdir / "network_nodes.csv", NODE_HEADER, nodes),
            _write(outdir / "network_edges.csv", EDGE_HEADER, edges),
            _write(outdir / "network_members.csv", MEMBER_HEADER, members),
        ]
    if what is PlotData.DENDROGRAM:
        variants = ["export", "import", "joint"] if result.model is ModelFamily.TWO_SIDED else ["shared"]
        merge_rows, cluster_rows = [], []
        kk = min(k, len(result.entities))
        for v in variants:
            cr = ward_cluster(cluster_features(result, v), kk, result.entities)
            merge_rows += _merge_rows(v, cr)
            pos = {leaf: p for p, leaf in enumerate(cr.leaf_order)}
            cluster_rows += [(v, e, int(cr.labels[i]), pos[i]) for i, e in enumerate(cr.entities)]
        return [
            _write(outdir / "dendrogram.csv", MERGE_HEADER, merge_rows),
            _write(outdir / "clusters.csv", CLUSTER_HEADER, cluster_rows),
        ]
    rows = []
    for w in result.windows:
        specs = [("left", w.fit.spectrum_left)]
        if w.fit.spectrum_right is not None:
            specs.append(("right", w.fit.spectrum_right))
        for side, sp in specs:
            rows += [(w.label, side, j + 1, lam) for j, lam in enumerate(sp.eigenvalues)]
    return [_write(outdir / "scree.csv", SCREE_HEADER, rows)]


def _merge_rows(variant: str, cr: ClusterResult):
    return [
        (variant, s, int(m[0]), int(m[1]), float(m[2]), int(m[3])) for s, m in enumerate(cr.merges)
    ]


def write_cluster_result(cr: ClusterResult, outdir, variant: str = "shared") -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pos = {leaf: p for p, leaf in enumerate(cr.leaf_order)}
    return [
        _write(outdir / "dendrogram.csv", MERGE_HEADER, _merge_rows(variant, cr)),
        _write(
            outdir / "clusters.csv",
            CLUSTER_HEADER,
            [(variant, e, int(cr.labels[i]), pos[i]) for i, e in enumerate(cr.entities)],
        ),
    ]


# ---------------------------------------------------------------------------
# readers (parse-back)


def _label(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def read_heatmap(path) -> dict:
    """``{(side, window_label): LoadingMatrix}`` from a heatmap CSV."""
    cells: dict = {}
    order: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["side"], _label(row["window_label"]))
            ents, hubs = order.setdefault(key, ([], []))
            if row["entity"] not in ents:
                ents.append(row["entity"])
            if row["hub"] not in hubs:
                hubs.append(row["hub"])
            cells[key + (row["entity"], row["hub"])] = float(row["loading"])
    out = {}
    for key, (ents, hubs) in order.items():
        vals = np.array([[cells[key + (e, h)] for h in hubs] for e in ents])
        out[key] = LoadingMatrix(vals, ents, hubs, LoadingState.SUM_ONE)
    return out


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_dendrogram(path) -> dict[str, np.ndarray]:
    """``{variant: merges}`` from a dendrogram CSV."""
    out: dict[str, list] = {}
    for row in read_csv_rows(path):
        out.setdefault(row["variant"], []).append(
            (int(row["left"]), int(row["right"]), float(row["height"]), int(row["size"]))
        )
    return {k: np.array(v, dtype=float) for k, v in out.items()}
