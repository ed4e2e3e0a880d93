import math

import numpy as np
import pytest

from cjlab.detectors import DetectorArray, coincidence_probs, deadtime_correct
from cjlab.distributions import spdc_dist
from cjlab.model import ExperimentModel
from cjlab.montecarlo import (
    ClickRecord,
    apply_dead_time,
    estimate_cm,
    read_record,
    sample_pulses,
    write_record,
)


def test_zero_efficiency_gives_no_clicks():
    rec = sample_pulses(ExperimentModel(g=2.0), DetectorArray.uniform(6, 0.0), 5000, seed=1)
    assert not rec.clicks().any()
    assert np.all(estimate_cm(rec).probs == 0)


def test_all_click_record():
    rec = ClickRecord.from_clicks(np.ones((10, 6), bool))
    st = estimate_cm(rec)
    assert np.all(st.probs == 1)
    assert np.allclose(st.sigma, 0.1)
    assert np.allclose(st.cov, 0)


def test_covariance_of_orders():
    rng = np.random.default_rng(0)
    st = estimate_cm(ClickRecord.from_clicks(rng.random((5000, 4)) < 0.3))
    assert np.allclose(np.sqrt(np.diag(st.cov)), st.sigma)
    corr = st.cov[0, 1] / (st.sigma[0] * st.sigma[1])
    assert 0.3 < corr < 1


def test_subset_average():
    clicks = np.zeros((4, 3), bool)
    clicks[0, :2] = True
    st = estimate_cm(ClickRecord.from_clicks(clicks))
    assert np.isclose(st.probs[0], (2 / 3) / 4)
    assert np.isclose(st.probs[1], (1 / 3) / 4)
    assert st.probs[2] == 0


def test_seed_determinism_and_workers(monkeypatch):
    monkeypatch.setenv("CJLAB_THREADS", "4")
    m = ExperimentModel(g=1.5, o1=0.6, o2=0.7, g1=1.05, g2=1.05, eta_t1=0.3, eta_t2=0.3)
    dets = DetectorArray.uniform(6, 0.13)
    a = sample_pulses(m, dets, 30000, seed=7, chunk_size=4096, workers=1)
    b = sample_pulses(m, dets, 30000, seed=7, chunk_size=4096, workers=4)
    c = sample_pulses(m, dets, 30000, seed=8, chunk_size=4096)
    assert a == b
    assert a != c
    with pytest.raises(ValueError):
        sample_pulses(m, dets, 10, seed=None)


def test_binary_round_trip(tmp_path):
    rec = sample_pulses(ExperimentModel(g=2.0), DetectorArray.uniform(5, 0.15), 1001, seed=3)
    p = tmp_path / "r.bin"
    write_record(rec, p)
    back = read_record(p)
    assert back == rec and back.pulses == 1001 and back.n_detectors == 5
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        read_record(bad)


def test_dead_time_rule():
    c = np.array([[1], [1], [1], [0], [1]], bool)
    assert apply_dead_time(c, 1)[:, 0].tolist() == [True, False, True, False, True]
    assert apply_dead_time(c, 2)[:, 0].tolist() == [True, False, False, False, True]
    assert np.array_equal(apply_dead_time(c, 0), c)


def test_statistics_match_exact_coincidences():
    g = 1.8
    n = 400_000
    blocked = ExperimentModel(g=g, o1=0.0, o2=0.0)
    rec = sample_pulses(blocked, DetectorArray.uniform(6, 0.13), n, seed=21)
    st = estimate_cm(rec)
    exact = coincidence_probs(spdc_dist(g, 150), 0.13, 6).probs
    pulls = (st.probs - exact) / st.sigma
    assert np.all(np.abs(pulls[:4]) < 4)


def test_dead_time_attenuation():
    # a deterministic ~10% click probability per pulse from an attenuated source
    m = ExperimentModel(g=1.0, o1=1.0, o2=0.0)
    eta = 0.1
    n = 200_000
    free = estimate_cm(sample_pulses(m, DetectorArray.uniform(1, eta), n, seed=4)).probs[0]
    rec = sample_pulses(m, DetectorArray.uniform(1, eta, 1), n, seed=4)
    ps = estimate_cm(rec).probs[0]
    p, lam = deadtime_correct(ps, 1)
    sig = math.sqrt(eta * (1 - eta) / n)
    assert abs(ps - eta * (1 - eta)) < 4 * sig
    assert abs(p - eta) < 5 * sig
    assert abs(free - eta) < 4 * sig
