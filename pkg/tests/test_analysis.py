from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from hubnet.analysis import (
    PlotData,
    cluster_features,
    cut_tree,
    export_plot_data,
    hub_network,
    normalize_fit,
    rank_table_layout,
    read_csv_rows,
    read_dendrogram,
    read_heatmap,
    rolling_fit,
    round_half_away,
    truncate_loadings,
    ward_cluster,
    window_network,
)
from hubnet.errors import RangeError
from hubnet.estimator import fit_model1, fit_model2
from hubnet.simgen import make_truth, planted_hub_loadings, simulate
from hubnet.spectral import LoadingMatrix


@pytest.fixture(scope="module")
def planted_series():
    truth = make_truth(24, 4, seed=1, planted=True, sigma_e=0.5)
    s, _ = simulate(truth, 408)
    return s


@pytest.fixture(scope="module")
def rolled(planted_series):
    return rolling_fit(planted_series, 60, 12, r=4, anchors=["E01", "E07", "E13", "E19"])


# --- rolling -----------------------------------------------------------------


def test_thirty_windows_mid_year_labels(rolled):
    assert len(rolled) == 30
    assert rolled.labels == list(range(1984, 2014))
    assert rolled.windows[0].fit.window == ("1982-01", "1986-12")
    assert rolled.windows[-1].fit.window == ("2011-01", "2015-12")


def test_single_window_and_errors(planted_series):
    from hubnet.series import window

    s60 = window(planted_series, 0, 60)
    res = rolling_fit(s60, 60, 12, r=4)
    assert len(res) == 1 and res.labels == [1984]
    with pytest.raises(RangeError):
        rolling_fit(s60, 61, 12, r=4)
    with pytest.raises(ValueError):
        rolling_fit(s60, 60, 12, r="auto")


def test_non_annual_step_labels(planted_series):
    from hubnet.series import window

    res = rolling_fit(window(planted_series, 0, 84), 60, 6, r=2)
    assert res.labels == ["1984-07", "1985-01", "1985-07", "1986-01", "1986-07"]


def test_recorded_permutations_reproduce_aligned(rolled):
    for w in rolled.windows:
        raw = w.normalized_left.values
        assert np.array_equal(raw[:, list(w.alignment_left.permutation)], w.aligned_left.values)
        pl = list(w.alignment_left.permutation)
        assert np.array_equal(w.factors_sum_one[:, pl][:, :, pl], w.aligned_factors)
        assert np.allclose(w.aligned_left.values.sum(axis=0), 1.0, atol=1e-12)


def test_anchor_positions_hold(rolled):
    anchors = ["E01", "E07", "E13", "E19"]
    for w in rolled.windows:
        q = w.aligned_left
        for p, name in enumerate(anchors):
            row = q.values[q.entities.index(name)]
            assert int(np.argmax(row)) == p


def test_aligned_fits_reconstruct_signal(rolled):
    w = rolled.windows[5]
    a = w.aligned_left.values
    # the sum-one loadings here are truncated; compare against the exact scaling
    fit = w.fit
    assert np.allclose(a.sum(axis=0), 1.0)
    assert np.isclose(w.aligned_factors.sum(axis=(1, 2)).mean(), fit.fitted().sum(axis=(1, 2)).mean(), rtol=1e-8)


def test_parallel_matches_sequential(planted_series):
    from hubnet.series import window

    s = window(planted_series, 0, 120)
    a = rolling_fit(s, 60, 12, r=3, workers=1)
    b = rolling_fit(s, 60, 12, r=3, workers=4)
    for wa, wb in zip(a.windows, b.windows):
        assert np.array_equal(wa.aligned_left.values, wb.aligned_left.values)
        assert np.array_equal(wa.aligned_factors, wb.aligned_factors)


def test_rank_table_layout(rolled, planted_series):
    rows = rank_table_layout(rolled)
    assert [r[0] for r in rows] == ["", "Ratio", "Scree", "r=4"]
    assert rows[0][1:] == [str(y) for y in range(1984, 2014)]
    assert all(len(r) == 31 for r in rows)
    assert all(v.isdigit() for v in rows[3][1:])
    from hubnet.series import window

    two = rolling_fit(window(planted_series, 0, 72), 60, 12, "two", r=4, r2=3)
    rows2 = rank_table_layout(two)
    assert rows2[3][0] == "(4,3)"
    assert rows2[1][1].startswith("(") and rows2[3][1].count(",") == 1


def test_break_shows_up_at_window_fifteen():
    rng = np.random.default_rng(5)
    n, r, T, brk = 24, 4, 408, 228
    a, _ = planted_hub_loadings(n, r, rng)
    b = a.copy()
    b[[0, 1, 2, 6, 7, 8]] = a[[6, 7, 8, 0, 1, 2]]
    f = np.zeros((T, r, r))
    cur = np.zeros((r, r))
    for k in range(T + 200):
        cur = 0.7 * cur + rng.standard_normal((r, r))
        if k >= 200:
            f[k - 200] = cur
    x = np.empty((T, n, n))
    for t in range(T):
        load = a if t < brk else b
        x[t] = load @ f[t] @ load.T + 0.3 * rng.standard_normal((n, n))
    res = rolling_fit(make_series(x), r=4, anchors=["E00", "E06", "E12", "E18"])
    al = [w.aligned_left.values for w in res.windows]
    change = np.array([np.abs(al[k] - al[k - 1]).sum() for k in range(1, 30)])
    # change[k-1] compares window k to window k-1; window 15 is the first with post-break months
    first = int(np.argmax(change > 0.15)) + 1
    assert first == 15
    assert change.max() > 1.0


# --- ward --------------------------------------------------------------------


def brute_ward(x):
    """Merge sequence from centroid-based Ward costs, no recurrence."""
    clusters = {i: [i] for i in range(len(x))}
    out = []
    nxt = len(x)
    while len(clusters) > 1:
        best = None
        for a in clusters:
            for b in clusters:
                if a >= b:
                    continue
                ma, mb = clusters[a], clusters[b]
                ca, cb = x[ma].mean(axis=0), x[mb].mean(axis=0)
                cost = 2 * len(ma) * len(mb) / (len(ma) + len(mb)) * np.sum((ca - cb) ** 2)
                key = (cost, tuple(sorted((min(ma), min(mb)))))
                if best is None or cost < best[0] * (1 - 1e-12) or (
                    abs(cost - best[0]) <= 1e-12 * max(cost, 1e-300) and key[1] < best[1]
                ):
                    best = (cost, key[1], a, b)
        cost, _, a, b = best
        out.append((frozenset(clusters[a]), frozenset(clusters[b]), cost))
        clusters[nxt] = clusters.pop(a) + clusters.pop(b)
        nxt += 1
    return out


def merged_sets(cr):
    n = len(cr.labels)
    members = {i: frozenset([i]) for i in range(n)}
    out = []
    for s, (a, b, h, _) in enumerate(cr.merges):
        ma, mb = members[int(a)], members[int(b)]
        out.append((ma, mb, h))
        members[n + s] = ma | mb
    return out


def test_ward_hand_computed_five_points():
    x = np.array([[0.0], [1.0], [3.0], [7.0], [8.0]])
    cr = ward_cluster(x, 2)
    assert np.allclose(cr.merges[:, 2], [1.0, 1.0, 25.0 / 3.0, 1369.0 / 15.0], rtol=1e-12)
    assert cr.merges[0, :2].tolist() == [0, 1]
    assert cr.merges[1, :2].tolist() == [3, 4]
    assert cr.labels.tolist() == [0, 0, 0, 1, 1]
    assert cr.merges[:, 3].tolist() == [2, 2, 3, 5]


def test_ward_matches_brute_force(rng):
    for _ in range(10):
        x = rng.standard_normal((9, 3))
        cr = ward_cluster(x, 3)
        for (ga, gb, gh), (wa, wb, wh) in zip(merged_sets(cr), brute_ward(x)):
            assert {ga, gb} == {wa, wb}
            assert gh == pytest.approx(wh, rel=1e-10)


def test_ward_matches_scipy_heights(rng):
    hierarchy = pytest.importorskip("scipy.cluster.hierarchy")
    x = rng.standard_normal((12, 4))
    cr = ward_cluster(x, 4)
    z = hierarchy.linkage(x, method="ward")
    assert np.allclose(np.sort(z[:, 2] ** 2), np.sort(cr.merges[:, 2]), rtol=1e-10)
    ref = hierarchy.fcluster(z, 4, criterion="maxclust")
    ours = cr.labels
    assert len({(a, b) for a, b in zip(ours, ref)}) == 4


def test_duplicates_merge_first(rng):
    x = rng.standard_normal((6, 2))
    x[4] = x[1]
    cr = ward_cluster(x, 5)
    assert cr.merges[0, :2].tolist() == [1, 4] and cr.merges[0, 2] == 0.0
    assert cr.labels[1] == cr.labels[4] and len(set(cr.labels)) == 5


def test_ward_errors_and_edge_cases(rng):
    with pytest.raises(RangeError):
        ward_cluster(rng.random((3, 2)), 4)
    single = ward_cluster(rng.random((1, 2)), 1)
    assert single.merges.shape == (0, 4) and single.labels.tolist() == [0]
    cr = ward_cluster(rng.random((5, 2)), 5)
    assert cr.labels.tolist() == [0, 1, 2, 3, 4]
    assert sorted(cr.leaf_order) == list(range(5))
    plain = ward_cluster(np.array([[0.0], [1.0], [3.0]]), 1, squared=False)
    assert plain.merges[0, 2] == 1.0


def test_cut_tree_labels_follow_smallest_member():
    merges = np.array([[3, 4, 1, 2], [0, 1, 1, 2], [2, 5, 2, 3], [6, 7, 5, 5]], float)
    assert cut_tree(merges, 5, 2).tolist() == [0, 0, 1, 1, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 12), st.integers(1, 4))
def test_ward_heights_non_decreasing(seed, n, p):
    rng = np.random.default_rng(seed)
    cr = ward_cluster(rng.standard_normal((n, p)), 1)
    assert np.all(np.diff(cr.merges[:, 2]) >= -1e-12 * max(1.0, cr.merges[:, 2].max()))


def test_planted_two_block_partition():
    hits = 0
    for seed in range(10):
        truth = make_truth(20, 2, seed=seed, planted=True)
        s, _ = simulate(truth, 200)
        w = normalize_fit(fit_model1(s, 2))
        labels = ward_cluster(w.aligned_left.values, 2).labels
        blocks = np.array(truth.meta["blocks"])
        hits += np.array_equal(labels, blocks) or np.array_equal(labels, 1 - blocks)
    assert hits == 10


def test_cluster_features_modes(rolled):
    concat = cluster_features(rolled)
    assert concat.shape == (24, 30 * 4)
    one = cluster_features(rolled, mode="per-window", label=1990)
    assert one.shape == (24, 4)
    with pytest.raises(ValueError):
        cluster_features(rolled, side="export")
    with pytest.raises(ValueError):
        cluster_features(rolled, mode="per-window", label=1900)
    res = ward_cluster(concat, 4, rolled.entities)
    assert len(set(res.labels)) == 4


# --- hub network -------------------------------------------------------------


def test_constant_factors_mean():
    c = np.array([[1.0, -2.0], [3.0, 4.0]])
    net = hub_network(np.array([[0.6, 0.2], [0.4, 0.8]]), np.repeat(c[None], 7, axis=0))
    assert np.array_equal(net.mean_factor, c)
    assert np.array_equal(net.hub_self_volume, [1.0, 4.0])
    assert net.direction_flipped.tolist() == [[False, True], [False, False]]


def test_truncation_example():
    col = np.array([[0.52], [0.31], [0.12], [0.05]])
    # 10A = (5.2, 3.1, 1.2, 0.5); half away from zero gives (5, 3, 1, 1)
    assert round_half_away(10 * col)[:, 0].tolist() == [5, 3, 1, 1]
    assert np.allclose(truncate_loadings(col)[:, 0], [0.5, 0.3, 0.1, 0.1], atol=1e-15)
    kept = truncate_loadings(col, "original")[:, 0]
    assert np.allclose(kept, col[:, 0] / col.sum())


def test_truncation_all_small_column_keeps_argmax():
    a = np.full((20, 1), 0.04)
    a[7] = 0.045
    t = truncate_loadings(a)
    assert t[7, 0] == 1.0 and t.sum() == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 15), st.integers(1, 5))
def test_truncation_invariants(seed, n, r):
    rng = np.random.default_rng(seed)
    a = rng.random((n, r)) ** 3
    a /= a.sum(axis=0)
    t = truncate_loadings(a)
    assert np.allclose(t.sum(axis=0), 1.0, atol=1e-12)
    pattern = np.floor(10 * a + 0.5) > 0
    for k in range(r):
        if pattern[:, k].any():
            assert np.array_equal(t[:, k] > 0, pattern[:, k])


def test_mass_conservation(rolled):
    for w in rolled.windows[::7]:
        net = window_network(w)
        fitted_total = w.fit.fitted().sum(axis=(1, 2)).mean()
        assert net.mean_factor.sum() == pytest.approx(fitted_total, rel=1e-8)


def test_two_sided_network(planted_series):
    from hubnet.series import window

    fit = fit_model2(window(planted_series, 0, 60), 3, 2)
    w = normalize_fit(fit)
    net = window_network(w)
    assert net.two_sided and net.mean_factor.shape == (3, 2)
    assert net.hub_labels_left == ("Ex1", "Ex2", "Ex3") and net.hub_labels_right == ("Im1", "Im2")
    assert net.mean_factor.sum() == pytest.approx(fit.fitted().sum(axis=(1, 2)).mean(), rel=1e-8)


# --- exports -----------------------------------------------------------------


def test_single_window_heatmap_rows(tmp_path, planted_series):
    from hubnet.series import window

    res = rolling_fit(window(planted_series, 0, 60), r=4)
    (path,) = export_plot_data(res, PlotData.HEATMAP, tmp_path)
    assert len(read_csv_rows(path)) == 24 * 4


def test_network_export_shape(tmp_path, planted_series):
    from hubnet.series import window

    res = rolling_fit(window(planted_series, 0, 60), r=4)
    nodes, edges, members = export_plot_data(res, "network", tmp_path)
    assert len(read_csv_rows(nodes)) == 4
    assert len(read_csv_rows(edges)) <= 16
    rows = read_csv_rows(members)
    net = window_network(res.windows[0])
    assert len(rows) == int((net.truncated_left > 0).sum())


def test_heatmap_round_trip(tmp_path, rolled):
    (path,) = export_plot_data(rolled, PlotData.HEATMAP, tmp_path)
    back = read_heatmap(path)
    assert len(back) == 30
    for w in rolled.windows:
        got = back[("shared", w.label)]
        assert np.array_equal(got.values, w.aligned_left.values)
        assert got.entities == w.aligned_left.entities and got.hub_labels == w.aligned_left.hub_labels


def test_dendrogram_round_trip(tmp_path, rolled):
    merge_path, cluster_path = export_plot_data(rolled, PlotData.DENDROGRAM, tmp_path)
    back = read_dendrogram(merge_path)
    want = ward_cluster(cluster_features(rolled), 4, rolled.entities)
    assert np.array_equal(back["shared"], want.merges)
    rows = read_csv_rows(cluster_path)
    assert [int(r["cluster"]) for r in rows] == want.labels.tolist()


def test_two_sided_dendrogram_variants(tmp_path, planted_series):
    from hubnet.series import window

    res = rolling_fit(window(planted_series, 0, 72), 60, 12, "two", r=3, r2=3)
    merge_path, _ = export_plot_data(res, PlotData.DENDROGRAM, tmp_path, k=3)
    assert set(read_dendrogram(merge_path)) == {"export", "import", "joint"}


def test_scree_export(tmp_path, rolled):
    (path,) = export_plot_data(rolled, PlotData.SCREE, tmp_path)
    rows = read_csv_rows(path)
    assert len(rows) == 30 * 24
    w0 = rolled.windows[0]
    vals = [float(r["eigenvalue"]) for r in rows if r["window_label"] == "1984"]
    assert np.array_equal(vals, w0.fit.spectrum_left.eigenvalues)


def test_unknown_export_kind(tmp_path, rolled):
    with pytest.raises(ValueError):
        export_plot_data(rolled, "chord", tmp_path)


def test_hub_network_accepts_loading_matrix(rolled):
    w = rolled.windows[0]
    lm = w.aligned_left
    assert isinstance(lm, LoadingMatrix)
    net = hub_network(lm, w.aligned_factors)
    assert net.entities == lm.entities and net.hub_labels_left == ("H1", "H2", "H3", "H4")
