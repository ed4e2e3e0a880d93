"""Threshold-detector array response, calibration and dead-time correction."""
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
import math
import warnings

import numpy as np

from ._validation import check_efficiency, check_occupation

__all__ = [
    "DetectorArray",
    "CoincidenceStats",
    "UnphysicalEfficiencyWarning",
    "click_prob_subset",
    "response_matrix",
    "coincidence_probs",
    "deadtime_correct",
    "deadtime_attenuate",
    "klyshko_efficiency",
    "thermal_multimode_dist",
    "g2_threshold",
]


class UnphysicalEfficiencyWarning(UserWarning):
    """The detector efficiencies sum to more than one.

    The linear map between photon numbers and coincidences stays well defined
    (and exactly invertible), but its outputs are no longer probabilities.
    """


@dataclass(frozen=True)
class DetectorArray:
    """Threshold detectors fed by one optical mode.

    ``efficiencies[k]`` is the probability that a given photon is routed to
    and registered by detector ``k``; a photon is lost with probability
    ``1 - sum(efficiencies)``. ``dead_pulses`` is the number of pulses a
    detector stays blind after each click.
    """

    efficiencies: tuple
    dead_pulses: int = 0

    def __post_init__(self):
        eff = tuple(float(e) for e in np.atleast_1d(self.efficiencies))
        if not eff:
            raise ValueError("need at least one detector")
        if any(not 0.0 <= e <= 1.0 for e in eff):
            raise ValueError("efficiencies must lie in [0, 1]")
        if sum(eff) > 1.0 + 1e-12:
            raise ValueError(f"efficiencies sum to {sum(eff):.6g} > 1")
        check_occupation(self.dead_pulses, "dead_pulses")
        object.__setattr__(self, "efficiencies", eff)

    @classmethod
    def uniform(cls, n_detectors, eta, dead_pulses=0):
        """``n_detectors`` detectors each with per-detector efficiency ``eta``."""
        return cls((float(eta),) * n_detectors, dead_pulses)

    @classmethod
    def from_total(cls, n_detectors, eta_total, dead_pulses=0):
        """Split an overall efficiency evenly over ``n_detectors``."""
        return cls.uniform(n_detectors, eta_total / n_detectors, dead_pulses)

    @classmethod
    def from_times(cls, efficiencies, dead_time, pulse_period):
        return cls(efficiencies, int(math.floor(dead_time / pulse_period)))

    @property
    def n_detectors(self):
        return len(self.efficiencies)

    @property
    def loss(self):
        return max(0.0, 1.0 - sum(self.efficiencies))


@dataclass(frozen=True)
class CoincidenceStats:
    """m-fold coincidence probabilities ``C_1..C_M``.

    ``C_m`` is the probability that a fixed set of ``m`` detectors all click
    in one pulse (averaged over all such sets when estimated from data).
    ``counts`` and ``sigma`` are present for measured or simulated data;
    ``sigma_m = sqrt(C_m (1 - C_m) / pulses)``. ``cov`` is the optional
    ``M x M`` covariance of the estimates; orders estimated from the same
    pulses are strongly correlated.
    """

    probs: np.ndarray
    counts: np.ndarray = None
    sigma: np.ndarray = None
    pulses: int = None
    meta: dict = field(default_factory=dict, compare=False)
    cov: np.ndarray = None

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        for name in ("counts", "sigma"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=float)
                if v.shape != p.shape:
                    raise ValueError(f"{name} must match probs in shape")
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        if self.cov is not None:
            c = np.array(self.cov, dtype=float)
            if c.shape != (p.size, p.size):
                raise ValueError("cov must be M x M")
            c.setflags(write=False)
            object.__setattr__(self, "cov", c)

    @classmethod
    def from_counts(cls, counts, pulses, **meta):
        counts = np.asarray(counts, dtype=float)
        probs = counts / pulses
        sigma = np.sqrt(probs * (1.0 - probs) / pulses)
        return cls(probs, counts, sigma, int(pulses), dict(meta))

    @property
    def order(self):
        return self.probs.size

    def truncated(self, M):
        if M > self.order:
            raise ValueError(f"only {self.order} coincidence orders available, asked for {M}")
        cut = lambda v: None if v is None else v[:M]
        cov = None if self.cov is None else self.cov[:M, :M]
        return CoincidenceStats(self.probs[:M], cut(self.counts), cut(self.sigma),
                                self.pulses, dict(self.meta), cov)

    def to_dict(self):
        d = {"C": self.probs.tolist()}
        if self.counts is not None:
            d["counts"] = self.counts.tolist()
        if self.sigma is not None:
            d["sigma"] = self.sigma.tolist()
        if self.pulses is not None:
            d["pulses"] = int(self.pulses)
        if self.cov is not None:
            d["cov"] = self.cov.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        if "C" not in d:
            raise ValueError("coincidence record needs a 'C' array")
        return cls(d["C"], d.get("counts"), d.get("sigma"), d.get("pulses"), cov=d.get("cov"))


def click_prob_subset(n, subset_effs):
    """Probability that every detector in a subset clicks for an n-photon input.

    Inclusion-exclusion over the detectors that stay dark:
    ``sum_r (-1)**r sum_{|S| = r} (1 - sum_{l in S} eta_l)**n``.
    """
    n = check_occupation(n, "n")
    effs = [float(e) for e in subset_effs]
    if sum(effs) > 1.0 + 1e-12:
        raise ValueError("subset efficiencies sum to more than one")
    terms = []
    for r in range(len(effs) + 1):
        for S in combinations(effs, r):
            terms.append((-1) ** r * (1.0 - math.fsum(S)) ** n)
    return math.fsum(terms)


def response_matrix(eta, M, cutoff):
    """``A[m-1, n] = sum_r (-1)**r C(m, r) (1 - r eta)**n`` for equal efficiencies.

    The probability that a given m-subset of equal detectors all fire when
    ``n`` photons arrive; zero for ``n < m``.
    """
    return _response_matrix(float(eta), int(M), int(cutoff)).copy()


@lru_cache(maxsize=64)
def _response_matrix(eta, M, cutoff):
    A = np.zeros((M, cutoff + 1))
    for m in range(1, M + 1):
        coef = [(-1) ** r * math.comb(m, r) for r in range(m + 1)]
        for n in range(m, cutoff + 1):
            A[m - 1, n] = math.fsum(c * (1.0 - r * eta) ** n for r, c in enumerate(coef))
    A.setflags(write=False)
    return A


def coincidence_probs(dist, eta, M):
    """Equal-efficiency m-fold coincidence probabilities for a photon-number law.

    Parameters
    ----------
    dist : PhotonNumberDist
    eta : float
        Per-detector efficiency.
    M : int
        Number of detectors, and highest coincidence order returned.

    Returns
    -------
    CoincidenceStats
        Noiseless ``C_1..C_M``. Mass beyond the distribution's cutoff can
        shift each ``C_m`` by at most ``dist.tail_bound``; that bound is kept
        in ``meta["tail_bound"]``.
    """
    eta = check_efficiency(eta)
    if M < 1:
        raise ValueError("M must be >= 1")
    if M * eta > 1.0 + 1e-12:
        warnings.warn(f"M * eta = {M * eta:.3g} > 1: coincidences are not probabilities",
                      UnphysicalEfficiencyWarning, stacklevel=2)
    A = _response_matrix(eta, int(M), dist.cutoff)
    C = np.array([math.fsum(row * dist.probs) for row in A])
    return CoincidenceStats(C, meta={"eta": eta, "tail_bound": dist.tail_bound})


def deadtime_correct(p_star, n_d):
    """Undo dead-time attenuation of a single-detector click probability.

    Returns ``(p, lam)`` with ``p = p* / (1 - n_d p*)`` and ``lam = 1 - n_d p*``,
    so that ``lam * p == p*``.
    """
    n_d = check_occupation(n_d, "n_d")
    p_star = float(p_star)
    if not 0.0 <= p_star < 1.0 / (1 + n_d):
        raise ValueError(f"p* = {p_star!r} is outside [0, 1/(1 + n_d)) for n_d = {n_d}")
    lam = 1.0 - n_d * p_star
    return p_star / lam, lam


def deadtime_attenuate(p, n_d):
    """Click probability registered by a detector blind for ``n_d`` pulses after each click."""
    return p / (1.0 + n_d * p)


def klyshko_efficiency(N_H, N_V, N_HV):
    """Heralding efficiencies from singles and coincidence rates.

    Returns ``(eta_H, eta_V)`` with ``eta_V = N_HV / N_H`` and
    ``eta_H = N_HV / N_V``.
    """
    N_H, N_V, N_HV = float(N_H), float(N_V), float(N_HV)
    if N_H <= 0 or N_V <= 0 or N_HV < 0:
        raise ValueError("singles rates must be positive and the coincidence rate non-negative")
    if N_HV > min(N_H, N_V):
        raise ValueError("coincidence rate exceeds a singles rate")
    return N_HV / N_V, N_HV / N_H


def thermal_multimode_dist(weights, mean_photons, tol=1e-12, max_photons=10_000):
    """Photon-number law of independent thermal modes with means ``mu * c_j**2``.

    Returns ``(probs, tail)`` where ``probs`` stops once the missing mass is
    below ``tol``.
    """
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    mus = mean_photons * w / w.sum()
    mus = mus[mus > 1e-300]
    # grow the support until the accumulated mass is within tol of one
    size = 16
    while True:
        p = np.zeros(size)
        p[0] = 1.0
        n = np.arange(size)
        for mu in mus:
            q = mu / (1.0 + mu)
            geo = (1.0 - q) * q ** n
            p = np.convolve(p, geo)[:size]
        tail = 1.0 - math.fsum(p)
        if tail < tol or size >= max_photons:
            return p, max(0.0, tail)
        size *= 2


def g2_threshold(schmidt_weights, mean_photons, eta=1.0):
    """Click-level g2(0) of a multimode thermal beam in a Hanbury Brown-Twiss setup.

    The beam is split 50:50 onto two threshold detectors; each photon reaches
    a given arm and registers there with probability ``eta / 2``.

    Parameters
    ----------
    schmidt_weights : array_like
        ``c_j**2``, summing to one; mode ``j`` carries ``mean_photons * c_j**2``.
    mean_photons : float
        Total mean photon number in front of the splitter.
    eta : float
        Overall detection efficiency.

    Returns
    -------
    float
        ``C_ab / (C_a C_b)``.
    """
    w = np.asarray(schmidt_weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("Schmidt weights must be non-negative and sum to one")
    if mean_photons <= 0:
        raise ValueError("mean_photons must be positive")
    eta = check_efficiency(eta)
    p, _ = thermal_multimode_dist(w, mean_photons)
    n = np.arange(p.size)
    dark_one = (1.0 - eta / 2.0) ** n
    dark_both = (1.0 - eta) ** n
    c_a = math.fsum(p * (1.0 - dark_one))
    # 1 - 2 a**n + b**n, computed termwise to keep the small-n cancellations exact
    both = np.array([math.fsum((1.0, -2.0 * a, b)) for a, b in zip(dark_one, dark_both)])
    c_ab = math.fsum(p * both)
    return c_ab / c_a ** 2
