import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavelet_ica.metrics import (amari_error, amari_scale, fit_loglog, haar_contrast_oracle,
                                 kernel_factors, risk_curve, select_resolution, u_v_statistics)
from wavelet_ica.sources import random_rotation, rotation
from wavelet_ica.wavelets import build_phi_table, eval_phi_periodized, make_filter

HAAR = build_phi_table(make_filter(1), 10)
D4 = build_phi_table(make_filter(2), 10)


# -- Amari ---------------------------------------------------------------------

def test_half_degree_rotation():
    value = amari_error(rotation(2, np.deg2rad(0.5)), np.eye(2))
    assert value == pytest.approx(100 * math.tan(np.deg2rad(0.5)), rel=1e-12)
    assert 0.7 <= value <= 1.0


def scaled_permutation(rng, d):
    return np.diag(rng.uniform(0.5, 3, d) * rng.choice([-1, 1], d))[rng.permutation(d)]


@pytest.mark.parametrize("d", [2, 3, 6])
def test_scaled_permutation_is_zero(d):
    rng = np.random.default_rng(d)
    assert amari_error(scaled_permutation(rng, d), np.eye(d)) == 0.0
    A = rng.standard_normal((d, d))
    assert amari_error(A, np.linalg.inv(A) * 1.0) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_amari_invariances(d, seed):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((d, d))
    base = amari_scale(P)
    assert 0 <= base.raw <= 1
    perm = np.eye(d)[rng.permutation(d)]
    assert amari_scale(P @ perm).raw == pytest.approx(base.raw, rel=1e-12)
    assert amari_scale(perm @ P).raw == pytest.approx(base.raw, rel=1e-12)
    assert amari_scale(P.T).raw == pytest.approx(base.raw, rel=1e-12)
    # rescaling is only harmless on the zero set: a scaled permutation stays at 0
    Q = scaled_permutation(rng, d)
    assert amari_scale(Q @ scaled_permutation(rng, d)).raw == 0.0


def test_amari_uses_whitener():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    N = rng.standard_normal((3, 3))
    W = np.linalg.inv(N @ A)
    assert amari_error(A, W, N) < 1e-10


def test_amari_errors():
    with pytest.raises(ValueError):
        amari_scale(np.ones((2, 3)))
    with pytest.raises(np.linalg.LinAlgError):
        amari_error(np.zeros((2, 2)), np.eye(2))


# -- Haar oracle ---------------------------------------------------------------

def test_oracle_examples():
    assert haar_contrast_oracle([[0.3, 0.8]], 2) == 0.0
    assert haar_contrast_oracle([[0.25, 0.25], [0.75, 0.75]], 1) == pytest.approx(1.0)


# -- U and V statistics --------------------------------------------------------

def brute(f, n, distinct):
    total, count = 0.0, 0
    for idx in itertools.product(range(n), repeat=len(f)):
        if distinct and len(set(idx)) < len(idx):
            continue
        total += np.prod([f[t][i] for t, i in enumerate(idx)])
        count += 1
    return total / count


def test_m1_is_sample_mean():
    X = np.random.default_rng(1).random((10, 2))
    p = u_v_statistics(X, D4, 1, (0, 1), 1, 0)
    direct = np.mean(eval_phi_periodized(D4, 1, 0, X[:, 0]) * eval_phi_periodized(D4, 1, 1, X[:, 1]))
    assert p.u_stat == pytest.approx(direct, abs=1e-15) and p.v_stat == pytest.approx(direct, abs=1e-15)


@pytest.mark.parametrize("rho, sigma", [(2, 0), (1, 1), (0, 2), (2, 1), (1, 2), (0, 3)])
def test_small_n_enumeration(rho, sigma):
    X = np.random.default_rng(rho * 3 + sigma).random((3, 2))
    k = (1, 2)
    ells = [t % 2 for t in range(sigma)]
    fast = u_v_statistics(X, D4, 2, k, rho, sigma, ells)
    walk = u_v_statistics(X, D4, 2, k, rho, sigma, ells, enumerate_all=True)
    # independent hand enumeration over the per-observation kernel slots
    f = kernel_factors(X, D4, 2, k, rho, ells)
    assert fast.u_stat == pytest.approx(brute(f, 3, True), abs=1e-14)
    assert fast.v_stat == pytest.approx(brute(f, 3, False), abs=1e-14)
    assert abs(walk.u_stat - fast.u_stat) <= 1e-14 and abs(walk.v_stat - fast.v_stat) <= 1e-14


def test_one_dimensional_example():
    # n = 3, m = 2 on a 1-d sample: 9 ordered pairs for V, 6 for U
    X = np.array([[0.1], [0.4], [0.8]])
    g = eval_phi_periodized(HAAR, 1, 0, X[:, 0])
    p = u_v_statistics(X, HAAR, 1, (0,), 1, 1, [0])
    assert p.v_stat == pytest.approx(g.sum() ** 2 / 9)
    assert p.u_stat == pytest.approx((g.sum() ** 2 - (g ** 2).sum()) / 6)


def test_u_unbiased_on_discrete_distribution():
    atoms = np.array([[0.1, 0.2], [0.6, 0.3], [0.4, 0.9], [0.85, 0.7]])
    probs = np.array([0.1, 0.4, 0.3, 0.2])
    j, k = 1, (1, 0)
    tensor = kernel_factors(atoms, D4, j, k, 1, [0])
    # population coefficients: expectation over the atoms
    alpha_joint = probs @ tensor[0]
    alpha_marg = probs @ tensor[1]
    truth = alpha_joint * alpha_marg
    rng = np.random.default_rng(0)
    us, vs = [], []
    for _ in range(4000):
        X = atoms[rng.choice(4, size=5, p=probs)]
        p = u_v_statistics(X, D4, j, k, 1, 1, [0])
        us.append(p.u_stat)
        vs.append(p.v_stat)
    us = np.array(us)
    assert abs(us.mean() - truth) <= 3 * us.std(ddof=1) / np.sqrt(us.size)
    # V carries an O(1/n) bias that shows at this tiny n
    assert abs(np.mean(vs) - truth) > abs(us.mean() - truth)


def test_uv_errors():
    X = np.random.default_rng(0).random((4, 2))
    with pytest.raises(ValueError):
        u_v_statistics(X, D4, 1, (0, 0), 2, 2)
    with pytest.raises(ValueError):
        u_v_statistics(X[:1], D4, 1, (0, 0), 1, 1)
    with pytest.raises(ValueError):
        u_v_statistics(X, D4, 1, (0,), 1, 1)
    with pytest.raises(ValueError):
        u_v_statistics(X, D4, 1, (0, 0), 1, 1, enumerate_all=True, budget=10)


# -- risk curve and regression -------------------------------------------------

def test_risk_curve_shape_and_growth():
    rows = risk_curve("uniform", 2, [1, 2, 3], 500, 30, 0, D4)
    assert [r.j for r in rows] == [1, 2, 3]
    assert all(r.bias == r.mean and r.variance > 0 for r in rows)
    assert rows[0].variance < rows[-1].variance


def test_risk_curve_single_observation():
    rows = risk_curve("exponential", 2, [1, 2], 1, 5, 0, D4)
    assert all(r.variance == 0 and r.mean == 0 for r in rows)


def test_risk_curve_deterministic():
    a = risk_curve("uniform", 2, [2], 200, 5, 3, HAAR)
    assert a == risk_curve("uniform", 2, [2], 200, 5, 3, HAAR)
    with pytest.raises(ValueError):
        risk_curve("uniform", 2, [2], 200, 1, 3, HAAR)


def test_fit_loglog():
    x = np.arange(5.0)
    slope, se = fit_loglog(x, 3 * x + 1)
    assert slope == pytest.approx(3) and se == pytest.approx(0, abs=1e-10)


# -- resolution rule -------------------------------------------------------------

@pytest.mark.parametrize("n, d, s, p, j", [
    (1000, 2, math.inf, 2, 0),
    (2 ** 10, 2, 2, 2, 1),          # n = 2^(4s+d)
    (2 ** 14, 3, 2.75, 2, 1),       # 4 s + d = 14
    (100000, 2, 2, 2, 2),           # round(16.61 / 10)
    (100000, 2, 2, 1, 3),           # s' = 2 + 1 - 2 = 1: round(16.61 / 6) = 3
])
def test_select_resolution(n, d, s, p, j):
    assert select_resolution(n, d, s, p) == j


def test_select_resolution_large_p_and_small_n():
    assert select_resolution(100000, 2, 2, 3) == select_resolution(100000, 2, 2, 2)
    assert select_resolution(1, 5, 1) == 0


@pytest.mark.parametrize("args", [(0, 2, 1), (10, 2, 0), (10, 2, 1, 0.5), (10, 2, 0.5, 1)])
def test_select_resolution_errors(args):
    with pytest.raises(ValueError):
        select_resolution(*args)
