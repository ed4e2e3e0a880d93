"""Simulation, inversion and fitting toolkit for two-photon interference in a
parametric down-conversion crystal."""
from ._validation import CutoffError, DegenerateSourceError, NonConvergenceError
from .detectors import (CoincidenceStats, DetectorArray, UnphysicalEfficiencyWarning,
                        coincidence_probs, deadtime_correct, g2_threshold, klyshko_efficiency)
from .distributions import (OverlapParams, PhotonNumberDist, cj_output_dist, cj_p11,
                            full_output_dist, hom_p11, spdc_dist, tilde_input_dist)
from .fitting import (FitResult, StagedInterferenceFitter, fit_gain, fit_overlap, fit_staged,
                      predict_interference)
from .fock import (SqueezeParams, TwoModeFockState, apply_bs_numeric, apply_pdc_numeric,
                   bs_matrix_element, pdc_matrix_element)
from .inversion import CoincidenceInverter, inversion_coefficients, p1_truncated, pn_solve
from .model import ExperimentModel
from .montecarlo import ClickRecord, estimate_cm, sample_pulses
from .spectral import build_jsa, apply_filter, purity_from_g2, schmidt_purity
from .wigner import output_mixed_state, wigner_slice

__version__ = "0.1.0"
