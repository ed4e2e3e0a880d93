"""Closed-form H-mode photon-number distributions at the interference crystal.

Covers the ideal Fock inputs, the overlap-mixed inputs (each heralded photon
couples with probability equal to its overlap, otherwise the mode stays in
vacuum), heralded multi-photon sources, a binomial loss channel and the full
composition over source photon numbers.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from ._validation import (
    DegenerateSourceError,
    check_cutoff,
    check_gain,
    check_occupation,
    check_unit_interval,
)
from .fock import pdc_matrix_element

__all__ = [
    "PhotonNumberDist",
    "OverlapParams",
    "HeraldedSourceParams",
    "hom_p11",
    "cj_p11",
    "cj_output_dist",
    "spdc_dist",
    "dist_given_input",
    "tilde_input_dist",
    "ideal_source_dist",
    "heralded_source_dist",
    "source_dist",
    "apply_loss",
    "compose_output_dist",
    "full_output_dist",
    "INPUT_STATES",
]

INPUT_STATES = ("00", "10", "01", "11")
SOURCE_TAIL_TOL = 1e-14
PAIR_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class PhotonNumberDist:
    """Single-mode photon-number probabilities ``P_n`` for ``n = 0..cutoff``.

    ``tail_bound`` is the probability mass beyond the cutoff; ``meta`` holds
    provenance details such as source truncation depths.
    """

    probs: np.ndarray
    tail_bound: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be >= 0")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_probs(cls, probs, **meta):
        """Wrap a finite-support distribution; the tail is whatever ``probs`` misses."""
        p = np.asarray(probs, dtype=float)
        return cls(p, max(0.0, 1.0 - math.fsum(p)), dict(meta))

    @property
    def cutoff(self):
        return self.probs.size - 1

    def __getitem__(self, n):
        return self.probs[n] if n <= self.cutoff else 0.0

    def total(self):
        return math.fsum(self.probs) + self.tail_bound

    def mean(self):
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def resized(self, cutoff):
        """Zero-pad or truncate to ``cutoff``, moving dropped mass to the tail."""
        if cutoff >= self.cutoff:
            p = np.zeros(cutoff + 1)
            p[: self.probs.size] = self.probs
            return PhotonNumberDist(p, self.tail_bound, dict(self.meta))
        dropped = math.fsum(self.probs[cutoff + 1:])
        return PhotonNumberDist(self.probs[: cutoff + 1], self.tail_bound + dropped,
                                dict(self.meta))


@dataclass(frozen=True)
class OverlapParams:
    """Mode overlaps of the heralded H and V photons with the crystal modes."""

    o1: float = 1.0
    o2: float = 1.0

    def __post_init__(self):
        check_unit_interval(self.o1, "o1")
        check_unit_interval(self.o2, "o2")


@dataclass(frozen=True)
class HeraldedSourceParams:
    gain_src: float
    overlap: float = 1.0
    trig_eff: float = 1.0

    def __post_init__(self):
        check_gain(self.gain_src, "gain_src")
        check_unit_interval(self.overlap, "overlap")
        check_unit_interval(self.trig_eff, "trig_eff")


def _complement_tail(probs):
    return max(0.0, 1.0 - math.fsum(probs))


def hom_p11(T):
    """Coincidence probability ``(2T - 1)**2`` behind a beam splitter fed ``|1, 1>``."""
    T = check_unit_interval(T, "T")
    return (2.0 * T - 1.0) ** 2


def cj_p11(g):
    """Probability that ``|1, 1>`` leaves a crystal of gain ``g`` as ``|1, 1>``."""
    g = check_gain(g)
    return (2.0 - g) ** 2 / g ** 3


def _geometric_part(g, n):
    """``(g - 1)**(n - 1) / g**(n + 2)`` evaluated without dividing by ``g - 1``."""
    return (g - 1.0) ** (n - 1) / g ** (n + 2)


def _p_spdc(g, n):
    return (g - 1.0) ** n / g ** (n + 1)


def _p_10(g, n):
    return n * (g - 1.0) ** (n - 1) / g ** (n + 1) if n >= 1 else 0.0


def _p_01(g, n):
    return (n + 1) * (g - 1.0) ** n / g ** (n + 2)


def _p_11(g, n):
    if n == 0:
        return (g - 1.0) / g ** 2
    return _geometric_part(g, n) * (n + 1.0 - g) ** 2


def _tabulate(fn, g, cutoff):
    return np.array([fn(g, n) for n in range(cutoff + 1)])


def spdc_dist(g, cutoff):
    """Two-mode squeezed vacuum: geometric ``P_n = (g-1)**n / g**(n+1)``."""
    g = check_gain(g)
    cutoff = check_cutoff(cutoff)
    tail = ((g - 1.0) / g) ** (cutoff + 1)
    return PhotonNumberDist(_tabulate(_p_spdc, g, cutoff), tail)


def cj_output_dist(g, cutoff):
    """Pair-number distribution of ``U_g |1, 1>``.

    ``P_n = (g-1)**(n-1) (n + 1 - g)**2 / g**(n+2)``; at integer ``g >= 2`` the
    ``n = g - 1`` term vanishes.
    """
    g = check_gain(g)
    cutoff = check_cutoff(cutoff)
    p = _tabulate(_p_11, g, cutoff)
    return PhotonNumberDist(p, _complement_tail(p))


@lru_cache(maxsize=4096)
def _dist_given_input(j, k, g, cutoff):
    p = np.zeros(cutoff + 1)
    for n in range(max(0, j - k), cutoff + 1):
        p[n] = abs(pdc_matrix_element(n, n - j + k, j, k, g)) ** 2
    p.setflags(write=False)
    return p


def dist_given_input(j, k, g, cutoff):
    """H-mode distribution ``P_{n|jk}`` for the Fock input ``|j, k>``."""
    j = check_occupation(j, "j")
    k = check_occupation(k, "k")
    g = check_gain(g)
    cutoff = check_cutoff(cutoff)
    p = _dist_given_input(j, k, g, cutoff)
    return PhotonNumberDist(p, _complement_tail(p))


_MIX_COMPONENTS = {"00": _p_spdc, "01": _p_01, "10": _p_10, "11": _p_11}


def _input_weights(input_state, ov):
    o1, o2 = ov.o1, ov.o2
    if input_state == "00":
        return {"00": 1.0}
    if input_state == "10":
        return {"00": 1.0 - o1, "10": o1}
    if input_state == "01":
        return {"00": 1.0 - o2, "01": o2}
    return {"00": (1 - o1) * (1 - o2), "01": (1 - o1) * o2,
            "10": o1 * (1 - o2), "11": o1 * o2}


def tilde_input_dist(input_state, g, ov, cutoff, mode="H"):
    """Output distribution of one mode for an overlap-mixed input.

    Parameters
    ----------
    input_state : {"00", "10", "01", "11"}
        Which heralded photons are sent in (H first, V second).
    g : float
        Crystal gain.
    ov : OverlapParams
        Each sent photon is present in the crystal mode with probability equal
        to its overlap, independently of the other.
    cutoff : int
    mode : {"H", "V"}
        Which output mode to report. The PDC unitary is symmetric under
        swapping the modes, so the V marginal is the H marginal of the
        swapped input.
    """
    if input_state not in INPUT_STATES:
        raise ValueError(f"input_state must be one of {INPUT_STATES}, got {input_state!r}")
    if mode == "V":
        return tilde_input_dist(input_state[::-1], g, OverlapParams(ov.o2, ov.o1), cutoff)
    if mode != "H":
        raise ValueError("mode must be 'H' or 'V'")
    g = check_gain(g)
    cutoff = check_cutoff(cutoff)
    p = np.zeros(cutoff + 1)
    for comp, w in _input_weights(input_state, ov).items():
        if w:
            p += w * _tabulate(_MIX_COMPONENTS[comp], g, cutoff)
    return PhotonNumberDist(p, _complement_tail(p))


def ideal_source_dist(overlap):
    """Perfect heralded single photon coupled with probability ``overlap``."""
    overlap = check_unit_interval(overlap, "overlap")
    return PhotonNumberDist(np.array([1.0 - overlap, overlap]), 0.0)


def _source_depth(g, p_trig):
    # smallest m_max with ((g-1)/g)**(m_max+1) / p_trig < SOURCE_TAIL_TOL
    ratio = (g - 1.0) / g
    return max(1, math.ceil(math.log(SOURCE_TAIL_TOL * p_trig) / math.log(ratio)) - 1)


def _binomial_kernel(k, n, p):
    """``K[a, b] = P(k[a] successes of n[b] trials)``, evaluated in log space.

    Unlike ``scipy.stats.binom.pmf`` this stays finite for subnormal ``p``.
    """
    k = np.asarray(k)[:, None]
    n = np.asarray(n)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_k = (gammaln(n + 1) - gammaln(k + 1) - gammaln(np.maximum(n - k, 0) + 1)
                 + xlogy(k, p) + xlog1py(n - k, -p))
        return np.where(k <= n, np.exp(log_k), 0.0)


def heralded_source_dist(src, cutoff):
    """Photon number delivered by a heralded SPDC source, given a trigger click.

    Pairs ``m`` follow the geometric SPDC law of the source gain; the trigger
    fires with probability ``1 - (1 - trig_eff)**m`` and each heralded photon
    couples to the crystal with probability ``overlap``.
    """
    cutoff = check_cutoff(cutoff)
    g, ov, eta_t = src.gain_src, src.overlap, src.trig_eff
    if g == 1.0 or eta_t == 0.0:
        raise DegenerateSourceError("the trigger can never fire: gain_src == 1 or trig_eff == 0")
    p_trig = 1.0 - 1.0 / (1.0 + (g - 1.0) * eta_t)
    m_max = _source_depth(g, p_trig)
    m = np.arange(m_max + 1)
    weight = _p_spdc(g, m) * (1.0 - (1.0 - eta_t) ** m) / p_trig
    n = np.arange(min(cutoff, m_max) + 1)
    kernel = _binomial_kernel(n, m, ov)
    p = np.zeros(cutoff + 1)
    p[: n.size] = kernel @ weight
    # conditional mass with m > m_max is below SOURCE_TAIL_TOL by construction
    tail = math.fsum(weight) - math.fsum(p) + ((g - 1.0) / g) ** (m_max + 1) / p_trig
    return PhotonNumberDist(p, max(0.0, tail), {"m_max": int(m_max), "p_trig": p_trig})


def source_dist(gain_src, overlap, trig_eff, cutoff=None):
    """Heralded source distribution, or the ideal single photon when ``gain_src == 1``."""
    if gain_src == 1.0:
        return ideal_source_dist(overlap)
    src = HeraldedSourceParams(gain_src, overlap, trig_eff)
    if cutoff is None:
        cutoff = max(8, _source_depth(gain_src, 1.0 - 1.0 / (1.0 + (gain_src - 1.0) * trig_eff)))
    return heralded_source_dist(src, cutoff)


def apply_loss(dist, transmission):
    """Binomial loss: each photon survives independently with ``transmission``."""
    T = check_unit_interval(transmission, "transmission")
    n = np.arange(dist.probs.size)
    p = _binomial_kernel(n, n, T) @ dist.probs
    return PhotonNumberDist(p, _complement_tail(p), dict(dist.meta))


def compose_output_dist(g, src_h, src_v, cutoff):
    """``P_n = sum_jk P_{n|jk} p_j p_k`` for independent H and V input distributions.

    Pairs with ``p_j p_k < 1e-12`` are skipped; their weight, the sources'
    tails and each ``P_{n|jk}`` tail are accumulated into ``tail_bound``.
    """
    g = check_gain(g)
    cutoff = check_cutoff(cutoff)
    p = np.zeros(cutoff + 1)
    tail_terms = [src_h.tail_bound, src_v.tail_bound]
    skipped = []
    for j, pj in enumerate(src_h.probs):
        for k, pk in enumerate(src_v.probs):
            w = pj * pk
            if w < PAIR_WEIGHT_TOL:
                if w > 0:
                    skipped.append(w)
                continue
            d = dist_given_input(j, k, g, cutoff)
            p += w * d.probs
            tail_terms.append(w * d.tail_bound)
    tail = math.fsum(tail_terms) + math.fsum(skipped)
    return PhotonNumberDist(p, tail, {"skipped_pair_mass": math.fsum(skipped)})


def full_output_dist(model, cutoff):
    """H-mode output distribution of the full experiment described by ``model``.

    Heralded sources (or ideal single photons when a source gain is ``1``)
    pass through the neutral filter before meeting the crystal.
    """
    src_h = source_dist(model.g1, model.o1, model.eta_t1)
    src_v = source_dist(model.g2, model.o2, model.eta_t2)
    if model.transmission != 1.0:
        src_h = apply_loss(src_h, model.transmission)
        src_v = apply_loss(src_v, model.transmission)
    out = compose_output_dist(model.g, src_h, src_v, cutoff)
    out.meta.update(m_max_h=src_h.meta.get("m_max"), m_max_v=src_v.meta.get("m_max"))
    return out
