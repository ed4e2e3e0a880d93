import numpy as np

from cjlab.detectors import DetectorArray, coincidence_probs
from cjlab.distributions import OverlapParams, spdc_dist, tilde_input_dist
from cjlab.model import ExperimentModel
from cjlab.montecarlo import estimate_cm, sample_pulses

ETA = 0.13
TRUTH = {"g": 2.03, "o1": 0.65, "o2": 0.74}


def exact_bundle(g, o1, o2, eta=ETA, M=6, cutoff=120):
    """Noiseless coincidences of the three auxiliary runs."""
    return {
        "spdc": coincidence_probs(spdc_dist(g, cutoff), eta, M),
        "h_input": coincidence_probs(tilde_input_dist("10", g, OverlapParams(o1, 0), cutoff), eta, M),
        "v_input": coincidence_probs(tilde_input_dist("01", g, OverlapParams(0, o2), cutoff), eta, M),
    }


def stage_models(g, o1, o2, eta=ETA):
    """Models of the three auxiliary runs: both sources blocked, H only, V only."""
    base = ExperimentModel(g=g, o1=o1, o2=o2, eta=eta)
    return {"spdc": base.replace(o1=0.0, o2=0.0),
            "h_input": base.replace(o2=0.0),
            "v_input": base.replace(o1=0.0)}


def mc_bundle(g, o1, o2, pulses, seed, eta=ETA, K=6):
    dets = DetectorArray.uniform(K, eta)
    return {name: estimate_cm(sample_pulses(m, dets, pulses, seed + i))
            for i, (name, m) in enumerate(stage_models(g, o1, o2, eta).items())}
