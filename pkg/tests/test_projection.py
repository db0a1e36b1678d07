import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wavelet_ica.metrics import haar_contrast_oracle
from wavelet_ica.projection import (CellBudgetError, check_sample, contrast, contrast_of, project,
                                    read_sample_csv, write_sample_csv)
from wavelet_ica.wavelets import build_phi_table, eval_phi_periodized, make_filter

HAAR = build_phi_table(make_filter(1), 10)
D4 = build_phi_table(make_filter(2), 10)
TABLES = [build_phi_table(make_filter(g), 10) for g in (1, 2, 3, 4)]


def test_two_point_haar_example():
    X = np.array([[0.25, 0.25], [0.75, 0.75]])
    c = project(X, HAAR, 1)
    assert np.allclose(c.joint, [1, 0, 0, 1], atol=1e-15)
    assert np.allclose(c.marginals, math.sqrt(2) / 2, atol=1e-15)
    delta = c.joint - c.product_of_marginals()
    assert np.allclose(delta, [0.5, -0.5, -0.5, 0.5], atol=1e-15)
    assert contrast(c) == pytest.approx(1.0, abs=1e-14)
    assert contrast_of(X, HAAR, 1) == contrast(c)


@pytest.mark.parametrize("table", TABLES, ids=lambda t: t.spec.name)
@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("j", [0, 1, 2, 3])
def test_single_observation(table, d, j):
    x = np.random.default_rng(d * 10 + j).random((1, d))
    c = project(x, table, j)
    assert np.allclose(c.joint, c.product_of_marginals(), rtol=0, atol=1e-13)
    assert contrast(c) <= 1e-15


def test_haar_level_zero_is_zero():
    X = np.random.default_rng(1).random((500, 3))
    assert contrast_of(X, HAAR, 0) == 0.0


@pytest.mark.parametrize("table", TABLES, ids=lambda t: t.spec.name)
def test_coefficients_match_direct_evaluation(table):
    X = np.random.default_rng(2).random((40, 2))
    j = 2
    c = project(X, table, j)
    width = 1 << j
    phi = np.array([[eval_phi_periodized(table, j, k, X[:, l]) for k in range(width)] for l in range(2)])
    direct = np.einsum("ai,bi->ab", phi[0], phi[1]) / len(X)
    assert np.allclose(c.joint_grid, direct, atol=1e-13)
    assert np.allclose(c.marginals, phi.mean(axis=2), atol=1e-13)


@pytest.mark.parametrize("j", [0, 1, 3])
def test_marginal_partition(j):
    X = np.random.default_rng(3).random((200, 3))
    c = project(X, D4, j)
    assert np.allclose(c.marginals.sum(axis=1), 2 ** (j / 2), atol=1e-12)


def test_haar_oracle_equivalence():
    rng = np.random.default_rng(4)
    for _ in range(20):
        d, j = int(rng.integers(2, 4)), int(rng.integers(1, 5))
        X = rng.random((300, d))
        assert contrast_of(X, HAAR, j) == pytest.approx(haar_contrast_oracle(X, j), abs=1e-12)


def test_boundary_point_goes_to_last_cell():
    X = np.array([[1.0, 0.0]])
    c = project(X, HAAR, 2)
    assert c.joint_grid[3, 0] == pytest.approx(4.0)  # 2^(jd/2) for n = 1


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 30), st.integers(2, 3)), elements=st.floats(0, 1)),
       st.integers(0, 3), st.sampled_from([1, 2, 4]))
def test_nonnegative_and_permutation_invariant(X, j, genus):
    table = TABLES[genus - 1]
    value = contrast_of(X, table, j)
    assert value >= 0
    perm = np.roll(np.arange(X.shape[1]), 1)
    assert contrast_of(X[:, perm], table, j) == pytest.approx(value, rel=1e-12, abs=1e-12)


def test_duplication_invariance():
    X = np.random.default_rng(5).random((333, 2))
    a, b = project(X, D4, 3), project(np.vstack([X, X]), D4, 3)
    assert np.allclose(a.joint, b.joint, rtol=0, atol=1e-14)
    assert np.allclose(a.marginals, b.marginals, rtol=0, atol=1e-14)
    assert contrast(b) == pytest.approx(contrast(a), rel=1e-12)


def test_chunking_does_not_change_result(monkeypatch):
    import wavelet_ica.projection as proj
    X = np.random.default_rng(6).random((500, 3))
    full = project(X, D4, 2)
    monkeypatch.setattr(proj, "_CHUNK_TERMS", 1000)
    chunked = project(X, D4, 2)
    assert np.allclose(full.joint, chunked.joint, atol=1e-14)


def test_deterministic():
    X = np.random.default_rng(7).random((1000, 2))
    assert contrast_of(X, D4, 3) == contrast_of(X.copy(), D4, 3)


def test_budget_guard():
    with pytest.raises(CellBudgetError, match="budget"):
        project(np.full((2, 3), 0.5), D4, 5, cell_budget=1000)
    assert isinstance(CellBudgetError("x"), ValueError)


@pytest.mark.parametrize("bad", [[[0.5, 1.2]], [[-0.1, 0.5]], [[np.nan, 0.5]], [0.5, 0.5], np.zeros((0, 2))])
def test_check_sample_rejects(bad):
    with pytest.raises(ValueError):
        check_sample(bad)


def test_check_sample_names_row():
    with pytest.raises(ValueError, match="row 2"):
        check_sample([[0.1, 0.1], [0.2, 0.2], [0.3, 1.5]])


def test_negative_j():
    with pytest.raises(ValueError):
        project([[0.5, 0.5]], D4, -1)


def test_sample_csv_roundtrip(tmp_path):
    X = np.random.default_rng(8).random((10, 3))
    path = tmp_path / "x.csv"
    write_sample_csv(path, X)
    assert np.array_equal(read_sample_csv(path), X)
    path.write_text("# comment\n0.1,0.2\n0.3,0.4\n")
    assert read_sample_csv(path).shape == (2, 2)


def test_coefficients_csv(tmp_path):
    c = project(np.random.default_rng(9).random((50, 2)), HAAR, 1)
    c.to_csv(tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "k1,k2,alpha" and len(rows) == 5
