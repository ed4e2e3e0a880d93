import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cjlab.distributions import (
    HeraldedSourceParams,
    OverlapParams,
    PhotonNumberDist,
    apply_loss,
    cj_output_dist,
    cj_p11,
    dist_given_input,
    full_output_dist,
    heralded_source_dist,
    hom_p11,
    spdc_dist,
    tilde_input_dist,
)
from cjlab.fock import SqueezeParams, TwoModeFockState, apply_pdc_numeric
from cjlab.model import ExperimentModel
from cjlab._validation import DegenerateSourceError


def pair_mixture_oracle(g, o1, o2, n):
    """Closed-form H-mode law for overlap-mixed single-photon inputs."""
    return ((g - 1) ** (n - 1) / g ** (n + 2)) * (
        (1 - o1) * (1 - o2) * (g - 1) * g + (1 - o1) * o2 * (g - 1) * (n + 1)
        + o1 * (1 - o2) * g * n + o1 * o2 * (n + 1 - g) ** 2)


def test_hom_p11():
    assert hom_p11(0.5) == 0
    assert hom_p11(1.0) == 1
    assert np.isclose(hom_p11(0.8), 0.36)
    with pytest.raises(ValueError):
        hom_p11(1.2)


def test_cj_p11():
    assert cj_p11(2.0) == 0
    assert cj_p11(1.0) == 1
    assert np.isclose(cj_p11(1.21), (2 - 1.21) ** 2 / 1.21 ** 3)
    assert np.isclose(cj_p11(1.21), 0.35228, atol=5e-6)
    with pytest.raises(ValueError):
        cj_p11(0.99)


def test_cj_output_dist_gain_two():
    d = cj_output_dist(2.0, 60)
    assert np.allclose(d.probs[:5], [1 / 4, 0, 1 / 16, 1 / 8, 9 / 64], atol=1e-15)
    assert np.isclose(d.total(), 1.0, atol=1e-12)
    assert cj_output_dist(3.0, 60).probs[2] < 1e-15
    d1 = cj_output_dist(1.0, 5)
    assert d1.probs[1] == 1 and d1.probs.sum() == 1


def test_cj_p11_matches_distribution():
    for g in np.linspace(1.0, 3.0, 21):
        assert np.isclose(cj_p11(g), cj_output_dist(g, 80).probs[1], rtol=0, atol=1e-12)


def test_spdc_dist():
    assert np.allclose(spdc_dist(2.0, 10).probs[:3], [0.5, 0.25, 0.125])
    assert spdc_dist(1.0, 4).probs[0] == 1
    assert np.isclose(spdc_dist(1.2, 10).probs[0], 5 / 6)
    d = spdc_dist(1.7, 30)
    assert np.isclose(d.tail_bound, (0.7 / 1.7) ** 31)
    assert np.isclose(d.total(), 1.0, atol=1e-14)


def test_dist_given_input_special_cases():
    g = 1.7
    for j in range(4):
        d = dist_given_input(j, 0, g, 60)
        for n in range(j, 12):
            ref = math.comb(n, j) * (g - 1) ** (n - j) / g ** (n + 1)
            assert np.isclose(d.probs[n], ref, rtol=1e-12)
    for k in range(4):
        d = dist_given_input(0, k, g, 60)
        for n in range(12):
            ref = math.comb(n + k, n) * (g - 1) ** n / g ** (n + k + 1)
            assert np.isclose(d.probs[n], ref, rtol=1e-12)
    assert np.allclose(dist_given_input(0, 0, g, 40).probs, spdc_dist(g, 40).probs)
    assert dist_given_input(1, 1, 2.0, 40).probs[1] < 1e-15


def test_dist_given_input_matches_propagator():
    d = dist_given_input(2, 1, 1.5, 40)
    out = apply_pdc_numeric(TwoModeFockState.basis(2, 1, 40), SqueezeParams.from_gain(1.5))
    assert np.allclose(d.probs[:30], out.marginal_h()[:30], atol=1e-9)


def test_tilde_reductions():
    g, N = 1.8, 60
    ov = OverlapParams(0.0, 0.0)
    assert np.allclose(tilde_input_dist("11", g, ov, N).probs, spdc_dist(g, N).probs, atol=1e-12)
    a = tilde_input_dist("11", g, OverlapParams(0.4, 0.0), N).probs
    b = tilde_input_dist("10", g, OverlapParams(0.4, 0.9), N).probs
    assert np.allclose(a, b, atol=1e-12)
    c = tilde_input_dist("11", 2.0, OverlapParams(1.0, 1.0), N).probs
    assert np.allclose(c, cj_output_dist(2.0, N).probs, atol=1e-12)


def test_tilde_unit_gain_single_photon():
    d = tilde_input_dist("10", 1.0, OverlapParams(0.65, 0.0), 4)
    assert np.isclose(d.probs[0], 0.35) and np.isclose(d.probs[1], 0.65)


def test_tilde_pair_mixture_matches_closed_form():
    g, o1, o2 = 2.03, 0.65, 0.74
    d = tilde_input_dist("11", g, OverlapParams(o1, o2), 60)
    ref = np.array([pair_mixture_oracle(g, o1, o2, n) for n in range(61)])
    assert np.allclose(d.probs, ref, rtol=0, atol=1e-14)


def test_v_mode_marginal_by_symmetry():
    g, ov = 1.3, OverlapParams(0.6, 0.8)
    v = tilde_input_dist("11", g, ov, 40, mode="V")
    h_swapped = tilde_input_dist("11", g, OverlapParams(0.8, 0.6), 40)
    assert np.allclose(v.probs, h_swapped.probs)


def test_stimulation_ordering():
    ov = OverlapParams(0.65, 0.65)
    for g in (1.05, 1.1, 1.21):
        p = {s: tilde_input_dist(s, g, ov, 60).probs[1] for s in ("00", "10", "01", "11")}
        assert p["01"] > p["00"]
        assert p["11"] < p["10"]


def test_heralded_source_limits():
    d = heralded_source_dist(HeraldedSourceParams(1.0001, 1.0, 1.0), 10)
    assert d.probs[1] > 0.9998
    d0 = heralded_source_dist(HeraldedSourceParams(1.3, 0.0, 0.5), 10)
    assert np.isclose(d0.probs[0], 1.0)
    with pytest.raises(DegenerateSourceError):
        heralded_source_dist(HeraldedSourceParams(1.0, 0.5, 0.5), 10)


def test_heralded_source_enumeration():
    g, ov, et = 1.06, 0.65, 0.5
    d = heralded_source_dist(HeraldedSourceParams(g, ov, et), 20)
    # direct enumeration over pair numbers m <= 20
    w = np.array([(g - 1) ** m / g ** (m + 1) * (1 - (1 - et) ** m) for m in range(21)])
    ref = np.zeros(21)
    for m in range(21):
        for n in range(m + 1):
            ref[n] += w[m] * math.comb(m, n) * ov ** n * (1 - ov) ** (m - n)
    ref /= w.sum()
    assert np.allclose(d.probs, ref, atol=1e-14)
    assert d.meta["m_max"] > 0


def test_apply_loss():
    d = PhotonNumberDist.from_probs([0, 1, 0, 0])
    assert np.allclose(apply_loss(d, 0.4).probs, [0.6, 0.4, 0, 0])
    s = spdc_dist(1.5, 40)
    assert np.allclose(apply_loss(s, 1.0).probs, s.probs)
    assert np.isclose(apply_loss(s, 0.0).probs[0], 1.0)
    # subnormal transmissions stay finite
    assert np.isclose(apply_loss(s, 1e-308).probs[0], 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_apply_loss_composes(t1, t2):
    d = tilde_input_dist("11", 1.4, OverlapParams(0.7, 0.5), 30)
    a = apply_loss(apply_loss(d, t1), t2).probs
    b = apply_loss(d, t1 * t2).probs
    assert np.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("g", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("o", [0.0, 0.5, 1.0])
def test_normalization_grid(g, o):
    N = 120
    for s in ("00", "10", "01", "11"):
        d = tilde_input_dist(s, g, OverlapParams(o, o), N)
        assert abs(d.total() - 1.0) < 1e-9
        assert np.all(d.probs >= -1e-15) and np.all(d.probs <= 1)
    m = ExperimentModel(g=g, o1=o, o2=o, g1=1.1, g2=1.1, eta_t1=0.3, eta_t2=0.3)
    assert abs(full_output_dist(m, N).total() - 1.0) < 1e-9


def test_full_output_reductions():
    g = 2.03
    blocked = full_output_dist(ExperimentModel(g=g, o1=0.65, o2=0.74, transmission=0.0), 60)
    assert np.allclose(blocked.probs, spdc_dist(g, 60).probs, atol=1e-14)
    ideal = full_output_dist(ExperimentModel(g=g, o1=0.65, o2=0.74), 60)
    ref = tilde_input_dist("11", g, OverlapParams(0.65, 0.74), 60)
    assert np.allclose(ideal.probs, ref.probs, atol=1e-12)


def test_full_output_residual_with_weak_sources():
    m = ExperimentModel(g=2.03, o1=0.65, o2=0.74, g1=1.02, g2=1.02, eta_t1=0.3, eta_t2=0.3)
    p1 = full_output_dist(m, 60).probs[1]
    assert 0.05 < p1 < 0.2
