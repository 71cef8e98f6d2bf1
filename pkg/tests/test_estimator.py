from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series, random_orthonormal, random_series
from hubnet.errors import HubnetError, RangeError
from hubnet.estimator import (
    AUTO,
    explained_fraction,
    fit_model1,
    fit_model2,
    refit_factors,
    residuals,
    residuals_projection_form,
    side_variance_explained,
)
from hubnet.simgen import make_truth, simulate, subspace_distance


def exact_series(rng, n, r1, r2, T, *, shared=False):
    q1 = random_orthonormal(rng, n, r1)
    q2 = q1 if shared else random_orthonormal(rng, n, r2)
    z = np.zeros((T, r1, r2))
    for t in range(1, T):
        z[t] = 0.7 * z[t - 1] + rng.standard_normal((r1, r2))
    x = np.einsum("ik,tkl,jl->tij", q1, z, q2)
    return make_series(x, diag_defined=True), q1, q2


def test_model1_noise_free_exact(rng):
    s, q, _ = exact_series(rng, 12, 3, 3, 100, shared=True)
    fit = fit_model1(s, 3)
    assert fit.variance_explained == pytest.approx(1.0, abs=1e-8)
    res = residuals(s, fit)
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(s.values)
    assert subspace_distance(fit.q_left, q) < 1e-8


def test_model2_noise_free_exact(rng):
    s, q1, q2 = exact_series(rng, 12, 3, 2, 100)
    fit = fit_model2(s, 3, 2)
    assert fit.variance_explained == pytest.approx(1.0, abs=1e-8)
    assert subspace_distance(fit.q_left, q1) < 1e-8
    assert subspace_distance(fit.q_right, q2) < 1e-8
    assert fit.factors.values.shape == (100, 3, 2)
    assert fit.q_left.hub_labels == ("Ex1", "Ex2", "Ex3")
    assert fit.q_right.hub_labels == ("Im1", "Im2")


def test_fit_invariants(rng):
    s = random_series(rng, 30, 8)
    for fit in (fit_model1(s, 3), fit_model2(s, 3, 2)):
        for q in (fit.q_left, fit.right):
            assert np.max(np.abs(q.values.T @ q.values - np.eye(q.r))) <= 1e-10
        assert fit.factors.values.shape == (30,) + fit.r
        assert 0.0 <= fit.variance_explained <= 1.0
        assert np.all(np.isfinite(fit.factors.values))
        assert fit.window == ("1982-01", "1984-06")


def test_model1_moderate_noise_recovery():
    truth = make_truth(20, 3, seed=21, sigma_e=1.0)
    s, _ = simulate(truth, 500)
    fit = fit_model1(s, 3)
    assert subspace_distance(fit.q_left, truth.basis_left()) < 0.1


def test_model2_on_model1_data_gives_matching_sides():
    for seed in range(5):
        truth = make_truth(20, 3, seed=seed, sigma_e=0.5)
        s, _ = simulate(truth, 500)
        fit = fit_model2(s, 3, 3)
        assert subspace_distance(fit.q_left, fit.q_right) < 0.05


def test_side_variance_pair_reported(rng):
    s = random_series(rng, 40, 10)
    fit = fit_model2(s, 4, 4)
    assert len(fit.side_variance) == 2
    assert fit.side_variance == side_variance_explained(s, fit)
    assert all(0 <= v <= 1 for v in fit.side_variance)
    assert len(fit.eigen_share) == 2
    assert fit.meta["left"].startswith("export")


def test_auto_rank_records_both_estimators():
    truth = make_truth(20, 3, seed=5, sigma_e=0.5)
    s, _ = simulate(truth, 400)
    fit = fit_model1(s, AUTO)
    assert fit.r == (3, 3)
    assert fit.ranks_left.ratio == 3
    assert fit.ranks_left.scree >= 1
    assert fit.ranks_left.r_max == 10
    two = fit_model2(s, AUTO, AUTO)
    assert two.ranks_left.ratio == two.r[0] and two.ranks_right.ratio == two.r[1]


def test_errors(rng):
    s = random_series(rng, 10, 4)
    with pytest.raises(RangeError):
        fit_model1(s, 5)
    with pytest.raises(ValueError):
        fit_model1(s, "many")
    with pytest.raises(RangeError):
        fit_model1(random_series(rng, 2, 4), 1)
    with pytest.raises(HubnetError):
        explained_fraction(np.zeros((5, 3, 3)), np.zeros((5, 3, 3)))


def test_degenerate_variance_examples(rng):
    x = rng.standard_normal((5, 3, 3))
    assert explained_fraction(x, x) == 0.0
    assert explained_fraction(x, np.zeros_like(x)) == 1.0


def test_diagonal_excluded_from_residuals(rng):
    s = random_series(rng, 20, 5)
    fit = fit_model1(s, 2)
    res = residuals(s, fit)
    assert np.all(res[:, np.arange(5), np.arange(5)] == 0)
    x = s.zero_filled()
    mask = s.defined_mask
    want = 1 - np.sum(res[:, mask] ** 2) / np.sum(x[:, mask] ** 2)
    assert fit.variance_explained == pytest.approx(want, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 8), st.integers(5, 30), st.booleans())
def test_residual_identity(seed, n, T, two):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n)
    fit = fit_model2(s, 2, 1) if two else fit_model1(s, 2)
    a = residuals(s, fit)
    b = residuals_projection_form(s, fit)
    assert np.max(np.abs(a - b)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 8), st.integers(5, 30))
def test_projection_idempotence(seed, n, T):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n)
    fit = fit_model2(s, 2, 2)
    z = refit_factors(fit.fitted(), fit)
    assert np.max(np.abs(z - fit.factors.values)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 7), st.integers(6, 25))
def test_permutation_equivariance(seed, n, T):
    rng = np.random.default_rng(seed)
    s = random_series(rng, T, n)
    perm = rng.permutation(n)
    a = fit_model1(s, 2)
    b = fit_model1(s.permute(perm), 2)
    pa = a.q_left.values @ a.q_left.values.T
    pb = b.q_left.values @ b.q_left.values.T
    gap = a.spectrum_left.eigenvalues[1] - a.spectrum_left.eigenvalues[2]
    if gap < 1e-6 * a.spectrum_left.eigenvalues[0]:
        return  # subspace not well defined
    assert np.allclose(pb, pa[np.ix_(perm, perm)], atol=1e-8)
    assert b.variance_explained == pytest.approx(a.variance_explained, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_variance_monotone_in_rank(seed, diag_defined):
    rng = np.random.default_rng(seed)
    s = random_series(rng, 15, 7, diag_defined=diag_defined)
    ve = [fit_model1(s, r).variance_explained for r in range(1, 7)]
    assert np.all(np.diff(ve) >= -1e-12)
