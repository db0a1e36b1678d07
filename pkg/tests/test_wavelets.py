import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavelet_ica.wavelets import (SUPPORTED_GENERA, WaveletSpec, build_phi_table,
                                  eval_phi_periodized, make_filter, periodized_terms)


@pytest.mark.parametrize("genus", SUPPORTED_GENERA)
def test_filter_invariants(genus):
    h = make_filter(genus).h
    assert h.size == 2 * genus
    assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-14)
    for m in range(genus):
        # orthonormality of integer shifts
        assert np.dot(h[: h.size - 2 * m], h[2 * m:]) == pytest.approx(float(m == 0), abs=1e-14)
        # vanishing moments of the wavelet
        k = np.arange(h.size)
        assert abs(np.sum((-1.0) ** k * k ** m * h)) < 1e-12 * max(1, h.size ** m)


@pytest.mark.parametrize("bad", [0, 5, -1, 2.5])
def test_make_filter_rejects(bad):
    with pytest.raises(ValueError, match="D8"):
        make_filter(bad)


@pytest.mark.parametrize("name, genus", [("D2", 1), ("haar", 1), ("d4", 2), ("D6", 3), ("D8", 4)])
def test_from_name(name, genus):
    assert WaveletSpec.from_name(name).genus == genus


@pytest.mark.parametrize("name", ["D3", "D10", "sym4", ""])
def test_from_name_rejects(name):
    with pytest.raises(ValueError):
        WaveletSpec.from_name(name)


def test_d4_integer_values():
    t = build_phi_table(make_filter(2), 10)
    step = 1 << 10
    assert t.values[step] == pytest.approx((1 + math.sqrt(3)) / 2, abs=1e-10)
    assert t.values[2 * step] == pytest.approx((1 - math.sqrt(3)) / 2, abs=1e-10)
    assert t.values[0] == 0 and t.values[-1] == 0


@pytest.mark.parametrize("genus", SUPPORTED_GENERA)
def test_partition_of_unity_and_mass(genus):
    spec = make_filter(genus)
    t = build_phi_table(spec, 12)
    step = 1 << 12
    padded = np.zeros((spec.support_len + 1) * step)
    padded[: t.values.size] = t.values
    assert np.abs(padded.reshape(-1, step).sum(axis=0) - 1).max() <= 1e-8
    assert abs(t.values.sum() / step - 1) <= 1e-8


@pytest.mark.parametrize("genus", [2, 3, 4])
def test_discrete_orthonormality(genus):
    spec = make_filter(genus)
    t = build_phi_table(spec, 12)
    step = 1 << 12
    v = t.values
    for k in range(spec.support_len):
        got = np.dot(v[k * step:], v[: v.size - k * step]) / step
        assert got == pytest.approx(float(k == 0), abs=1e-3)


def test_refinement_holds_on_coarser_grid():
    # tables at two precisions agree on the coarse grid: dyadic values are exact
    spec = make_filter(3)
    coarse, fine = build_phi_table(spec, 6), build_phi_table(spec, 10)
    assert np.abs(fine.values[:: 1 << 4] - coarse.values).max() < 1e-12


def test_haar_table_is_indicator():
    t = build_phi_table(make_filter(1), 8)
    assert np.all(t.values[:-1] == 1.0) and t.values[-1] == 0.0
    assert t(0.0) == 1.0 and t(0.999) == 1.0 and t(1.0) == 0.0 and t(-0.1) == 0.0


def test_table_deterministic_and_readonly():
    a = build_phi_table(make_filter(4), 8)
    b = build_phi_table(make_filter(4), 8)
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        a.values[0] = 1.0


@pytest.mark.parametrize("L", [0, -3, 1.5])
def test_bad_precision(L):
    with pytest.raises(ValueError):
        build_phi_table(make_filter(2), L)


def test_table_csv(tmp_path):
    t = build_phi_table(make_filter(2), 3)
    path = tmp_path / "phi.csv"
    t.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (t.values.size, 2)
    assert np.array_equal(data[:, 1], t.values)


def test_periodized_example():
    # D4, j=3, k=7, x=0.01: 2^3 * 0.01 = 0.08 sits in cell 0; translate 7 wraps
    # around, so the value is 2^(3/2) phi(0.08 - 7 + 8) = 2^(3/2) phi(1.08)
    t = build_phi_table(make_filter(2), 10)
    expected = 2 ** 1.5 * t(math.floor(1.08 * 2 ** 10) / 2 ** 10)
    assert eval_phi_periodized(t, 3, 7, 0.01) == pytest.approx(expected, abs=1e-15)
    assert expected != 0


@pytest.mark.parametrize("genus", SUPPORTED_GENERA)
@pytest.mark.parametrize("j", [0, 1, 2, 4])
def test_periodized_partition(genus, j):
    # summing the periodized translates covers every integer shift once
    t = build_phi_table(make_filter(genus), 10)
    x = np.linspace(0, 1, 101)
    total = sum(eval_phi_periodized(t, j, k, x) for k in range(1 << j))
    assert np.allclose(total, 2 ** (j / 2), atol=1e-12)


def test_periodized_terms_shape_and_range():
    t = build_phi_table(make_filter(3), 8)
    x = np.random.default_rng(0).random((7, 3))
    cells, vals = periodized_terms(t, 2, x)
    assert cells.shape == vals.shape == (7, 3, 5)
    assert cells.min() >= 0 and cells.max() < 4


@pytest.mark.parametrize("j, k", [(-1, 0), (2, 4), (2, -1)])
def test_periodized_rejects(j, k):
    t = build_phi_table(make_filter(2), 6)
    with pytest.raises(ValueError):
        eval_phi_periodized(t, j, k, 0.5)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0, 1), j=st.integers(0, 5))
def test_haar_periodized_is_scaled_indicator(x, j):
    t = build_phi_table(make_filter(1), 10)
    cell = min(math.floor(x * 2 ** j), 2 ** j - 1)
    for k in range(2 ** j):
        want = 2 ** (j / 2) if k == cell else 0.0
        assert eval_phi_periodized(t, j, k, x) == pytest.approx(want, abs=1e-15)
