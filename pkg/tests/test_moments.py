from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series, random_orthonormal, random_series
from hubnet.errors import NonFiniteError, RangeError
from hubnet.moments import Mode, Orientation, Path, build_m_matrix, lagged_cross_moment


def scalar_moment(x, h, i, j, orientation):
    """Entry-by-entry oracle written with scalar loops only."""
    T, n, _ = x.shape
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for t in range(T - h):
                if orientation == "col":
                    acc += x[t, a, i] * x[t + h, b, j]
                else:
                    acc += x[t, i, a] * x[t + h, j, b]
            out[a, b] = acc / (T - h)
    return out


def scalar_m(x, h0, mode):
    n = x.shape[1]
    m = np.zeros((n, n))
    orients = {"col": ["col"], "row": ["row"], "both": ["col", "row"]}[mode]
    for h in range(1, h0 + 1):
        for o in orients:
            for i in range(n):
                for j in range(n):
                    om = scalar_moment(x, h, i, j, o)
                    m += om @ om.T
    return m


def test_zero_series_moment_is_zero():
    s = make_series(np.zeros((5, 3, 3)))
    assert np.all(lagged_cross_moment(s, 1, 0, 1) == 0)
    acc = build_m_matrix(s, 2)
    assert np.all(acc.m == 0)
    assert acc.min_eig_ratio() == 0.0


def test_single_term_moment_by_hand():
    x = np.array([[[0.0, 2.0], [3.0, 0.0]], [[0.0, 5.0], [7.0, 0.0]]])
    s = make_series(x)
    # column 1 at t=0 is (2, 0), column 0 at t=1 is (0, 7)
    col = lagged_cross_moment(s, 1, 1, 0, Orientation.COL)
    assert np.array_equal(col, np.array([[0.0, 14.0], [0.0, 0.0]]))
    # row 1 at t=0 is (3, 0), row 0 at t=1 is (0, 5)
    row = lagged_cross_moment(s, 1, 1, 0, Orientation.ROW)
    assert np.array_equal(row, np.array([[0.0, 15.0], [0.0, 0.0]]))


def test_moment_matches_scalar_oracle(rng):
    s = random_series(rng, 20, 5)
    x = s.zero_filled()
    for h, i, j in [(1, 0, 3), (2, 4, 4), (5, 2, 1)]:
        for o in ("col", "row"):
            got = lagged_cross_moment(s, h, i, j, o)
            assert np.allclose(got, scalar_moment(x, h, i, j, o), rtol=0, atol=1e-12)


def test_lag_out_of_range(rng):
    s = random_series(rng, 4, 3)
    with pytest.raises(RangeError):
        lagged_cross_moment(s, 4, 0, 1)
    with pytest.raises(RangeError):
        build_m_matrix(s, 4)
    with pytest.raises(RangeError):
        build_m_matrix(s, 0)


def test_fast_equals_naive_example(rng):
    s = random_series(rng, 30, 6)
    fast = build_m_matrix(s, 2, Mode.BOTH, Path.FAST).m
    naive = build_m_matrix(s, 2, Mode.BOTH, Path.NAIVE).m
    assert np.max(np.abs(fast - naive)) <= 1e-10 * np.max(np.abs(naive))


def test_naive_matches_scalar_oracle(rng):
    s = random_series(rng, 9, 4)
    x = s.zero_filled()
    for mode in ("col", "row", "both"):
        got = build_m_matrix(s, 2, mode, Path.NAIVE).m
        want = scalar_m(x, 2, mode)
        assert np.allclose(got, want, rtol=1e-12, atol=0)


def test_noise_free_low_rank_spectrum(rng):
    n, r, T = 10, 3, 60
    q = random_orthonormal(rng, n, r)
    z = np.zeros((T, r, r))
    for t in range(1, T):
        z[t] = 0.8 * z[t - 1] + rng.standard_normal((r, r))
    s = make_series(np.einsum("ik,tkl,jl->tij", q, z, q), diag_defined=True)
    ev = np.sort(np.linalg.eigvalsh(build_m_matrix(s, 1).m))[::-1]
    assert np.all(ev[r:] < 1e-8 * ev[0])
    assert ev[r - 1] > 1e-3 * ev[0]


def test_both_is_col_plus_row(rng):
    s = random_series(rng, 15, 5)
    both = build_m_matrix(s, 3, Mode.BOTH).m
    col = build_m_matrix(s, 3, Mode.COL).m
    row = build_m_matrix(s, 3, Mode.ROW).m
    assert np.allclose(both, col + row, rtol=1e-14, atol=0)


def test_non_finite_accumulation_names_lag():
    x = np.full((4, 2, 2), 1e100)
    with pytest.raises(NonFiniteError, match="h=1"):
        build_m_matrix(make_series(x), 1)


def test_deterministic_is_bit_stable(rng):
    s = random_series(rng, 12, 4)
    a = build_m_matrix(s, 2, deterministic=True)
    b = build_m_matrix(s, 2, deterministic=True)
    assert a.path is Path.NAIVE
    assert np.array_equal(a.m, b.m)


def test_centering_subtracts_cell_means(rng):
    base = rng.standard_normal((20, 4, 4))
    shifted = make_series(base + 3.0)
    plain = make_series(base)
    a = build_m_matrix(shifted, 1, center=True).m
    b = build_m_matrix(plain, 1, center=True).m
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
    assert not np.allclose(build_m_matrix(shifted, 1).m, build_m_matrix(plain, 1).m)


def test_accumulator_provenance(rng):
    s = random_series(rng, 10, 3)
    acc = build_m_matrix(s, 2, Mode.ROW)
    assert acc.h0 == 2 and acc.mode is Mode.ROW
    assert acc.t_range == ("1982-01", "1982-10")


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.integers(2, 8),
    st.integers(4, 40),
    st.integers(1, 3),
    st.sampled_from(list(Mode)),
    st.booleans(),
)
def test_fast_naive_property(seed, n, T, h0, mode, diag):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n, diag_defined=diag)
    fast = build_m_matrix(s, h0, mode, Path.FAST).m
    naive = build_m_matrix(s, h0, mode, Path.NAIVE).m
    scale = np.max(np.abs(naive))
    assert np.max(np.abs(fast - naive)) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 7), st.integers(3, 25), st.integers(1, 2))
def test_psd_and_symmetric(seed, n, T, h0):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n)
    m = build_m_matrix(s, h0).m
    assert np.array_equal(m, m.T)
    ev = np.linalg.eigvalsh(m)
    assert ev[0] >= -1e-10 * ev[-1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(3, 20))
def test_permutation_equivariance(seed, n, T):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n)
    perm = rng.permutation(n)
    m = build_m_matrix(s, 1).m
    mp = build_m_matrix(s.permute(perm), 1).m
    assert np.allclose(mp, m[np.ix_(perm, perm)], rtol=1e-12, atol=1e-12 * np.abs(m).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    s = random_series(rng, 15, 5)
    m = build_m_matrix(s, 1).m
    mc = build_m_matrix(make_series(c * s.values), 1).m
    assert np.allclose(mc, c**4 * m, rtol=1e-10, atol=0)
    top = np.linalg.eigh(m)[1][:, -2:]
    topc = np.linalg.eigh(mc)[1][:, -2:]
    assert np.allclose(top @ top.T, topc @ topc.T, atol=1e-8)
