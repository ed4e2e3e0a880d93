import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cjlab.fock import (
    CutoffError,
    SqueezeParams,
    TwoModeFockState,
    apply_bs_numeric,
    apply_pdc_numeric,
    bs_matrix_element,
    cutoff_for_gain,
    pdc_matrix_element,
)


def brute_bs_amplitude(n, m, j, k, theta):
    """Expand (a^dag)^j (b^dag)^k / sqrt(j! k!) under the mode map by enumeration."""
    c, s = math.cos(theta), math.sin(theta)
    amp = 0.0
    # each of the j a-photons goes to a (c) or b (-s); each of the k b-photons to a (s) or b (c)
    for ja in range(j + 1):
        for kb in range(k + 1):
            na = ja + (k - kb)
            if na != n:
                continue
            coef = math.comb(j, ja) * c ** ja * (-s) ** (j - ja) * math.comb(k, kb) * c ** kb * s ** (k - kb)
            amp += coef
    return amp * math.sqrt(math.factorial(n) * math.factorial(m) / (math.factorial(j) * math.factorial(k)))


def test_squeeze_params_consistency():
    p = SqueezeParams.from_gain(2.0)
    assert np.isclose(math.cosh(p.squeeze) ** 2, 2.0, rtol=0, atol=1e-12)
    assert np.isclose(SqueezeParams.from_squeeze(0.7).gain, math.cosh(0.7) ** 2)
    assert np.isclose(SqueezeParams.from_transmittance(0.36).transmittance, 0.36)
    with pytest.raises(ValueError):
        SqueezeParams(gain=2.0, squeeze=0.1)
    with pytest.raises(ValueError):
        SqueezeParams.from_gain(0.9)


def test_state_validation():
    with pytest.raises(ValueError):
        TwoModeFockState(2, np.zeros((2, 2)))
    with pytest.raises(CutoffError):
        TwoModeFockState.basis(3, 0, 2)
    assert TwoModeFockState.vacuum(3).is_normalized()


def test_cutoff_rule():
    N = cutoff_for_gain(2.0)
    assert 0.5 ** (N - 2 + 1) < 1e-12 <= 0.5 ** (N - 2)
    assert cutoff_for_gain(1.0) == 2


def test_pdc_identity_at_unit_gain():
    s = TwoModeFockState.basis(2, 1, 6)
    out = apply_pdc_numeric(s, SqueezeParams.from_gain(1.0))
    assert np.allclose(out.amplitudes, s.amplitudes, atol=1e-14)


def test_pdc_vacuum_gives_squeezed_vacuum():
    out = apply_pdc_numeric(TwoModeFockState.vacuum(40), SqueezeParams.from_gain(2.0))
    # layers near the cutoff carry the truncation error; the populated half does not
    n = np.arange(21)
    expected = np.sqrt(1.0 / 2.0 ** (n + 1))
    assert np.allclose(out.amplitudes[n, n].real, expected, atol=1e-10)
    assert np.allclose(out.amplitudes[n, n].imag, 0, atol=1e-12)


def test_pdc_pair_null_numeric():
    out = apply_pdc_numeric(TwoModeFockState.basis(1, 1, 40), SqueezeParams.from_gain(2.0))
    assert abs(out.amplitudes[1, 1]) ** 2 < 1e-10


def test_pdc_preserves_difference():
    out = apply_pdc_numeric(TwoModeFockState.basis(3, 1, 30), SqueezeParams.from_gain(1.5))
    nh, nv = np.nonzero(np.abs(out.amplitudes) > 1e-15)
    assert np.all(nh - nv == 2)


def test_pdc_cutoff_error():
    with pytest.raises(CutoffError):
        apply_pdc_numeric(TwoModeFockState.basis(6, 6, 40), SqueezeParams.from_gain(3.0))


def test_bs_hom_dip():
    out = apply_bs_numeric(TwoModeFockState.basis(1, 1, 4), SqueezeParams.from_transmittance(0.5).theta)
    assert abs(out.amplitudes[1, 1]) ** 2 < 1e-12
    assert np.isclose(abs(out.amplitudes[2, 0]) ** 2, 0.5)


def test_bs_identity_and_single_photon():
    s = TwoModeFockState.basis(2, 3, 6)
    assert np.allclose(apply_bs_numeric(s, 0.0).amplitudes, s.amplitudes)
    th = SqueezeParams.from_transmittance(0.36).theta
    out = apply_bs_numeric(TwoModeFockState.basis(1, 0, 3), th)
    assert np.isclose(abs(out.amplitudes[1, 0]) ** 2, 0.36)


def test_bs_numeric_norm():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    a /= np.linalg.norm(a)
    out = apply_bs_numeric(TwoModeFockState(6, a), 0.83)
    assert abs(out.norm() - 1.0) < 1e-12


def test_pdc_element_examples():
    for g in (1.0, 1.3, 2.0, 2.7):
        assert np.isclose(abs(pdc_matrix_element(1, 1, 1, 1, g)) ** 2, (2 - g) ** 2 / g ** 3,
                          rtol=0, atol=1e-14)
        for n in range(6):
            assert np.isclose(abs(pdc_matrix_element(n, n, 0, 0, g)) ** 2,
                              (g - 1) ** n / g ** (n + 1), rtol=1e-12, atol=0)
    assert abs(pdc_matrix_element(1, 1, 1, 1, 2.0)) < 1e-15
    with pytest.raises(ValueError):
        pdc_matrix_element(0, 0, 0, 0, 0.5)


def test_pdc_element_matches_propagator():
    out = apply_pdc_numeric(TwoModeFockState.basis(1, 0, 40), SqueezeParams.from_gain(1.5))
    assert np.isclose(out.amplitudes[2, 1], pdc_matrix_element(2, 1, 1, 0, 1.5), rtol=0, atol=1e-9)


def test_bs_element_examples():
    for T in (0.0, 0.2, 0.5, 0.9):
        th = math.acos(math.sqrt(T))
        assert np.isclose(bs_matrix_element(1, 1, 1, 1, th).real, 2 * T - 1, atol=1e-14)
    assert bs_matrix_element(3, 2, 3, 2, 0.0) == 1
    assert np.isclose(abs(bs_matrix_element(2, 0, 1, 1, math.pi / 4)) ** 2, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5), st.floats(-3.0, 3.0))
def test_bs_element_matches_enumeration(n, j, k, theta):
    m = j + k - n
    if m < 0:
        assert bs_matrix_element(n, 0, j, k, theta) == 0
        return
    assert np.isclose(bs_matrix_element(n, m, j, k, theta).real,
                      brute_bs_amplitude(n, m, j, k, theta), atol=1e-10)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 6),
       st.floats(1.0, 4.0))
def test_selection_rules(n, m, j, k, g):
    if n - m != j - k:
        assert pdc_matrix_element(n, m, j, k, g) == 0
    if n + m != j + k:
        assert bs_matrix_element(n, m, j, k, 0.4) == 0


@pytest.mark.parametrize("g", [1.2, 1.5, 2.0, 3.0])
def test_duality(g):
    th = math.acos(math.sqrt(1.0 / g))
    r = range(7)
    worst = max(abs(g * abs(pdc_matrix_element(n, m, j, k, g)) ** 2
                    - abs(bs_matrix_element(n, k, j, m, th)) ** 2)
                for n in r for m in r for j in r for k in r)
    assert worst < 1e-10


def test_bs_unitarity_of_elements():
    th = 0.61
    for j, k in [(0, 3), (2, 2), (4, 1)]:
        s = sum(abs(bs_matrix_element(n, j + k - n, j, k, th)) ** 2 for n in range(j + k + 1))
        assert np.isclose(s, 1.0, atol=1e-13)


def test_pdc_large_occupations_finite():
    a = pdc_matrix_element(60, 40, 25, 5, 2.5)
    assert math.isfinite(a.real)
    col = sum(abs(pdc_matrix_element(n, n - 3, 3, 0, 1.8)) ** 2 for n in range(3, 200))
    assert np.isclose(col, 1.0, atol=1e-12)
