"""Truncated two-mode Fock space with the PDC and beam-splitter unitaries.

Amplitudes follow the convention ``U = exp[r(a_H^dag a_V^dag - a_H a_V)]``, so the
two-mode squeezed vacuum has positive amplitudes ``tanh(r)**n / cosh(r)`` on
``|n, n>``. The opposite sign of the generator only flips the phase of odd pair
numbers and leaves every probability unchanged.

Two independent routes are provided for each unitary: closed-form matrix
elements (finite sums evaluated in log space) and a numerical propagator that
exponentiates the truncated generator block by block.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from ._validation import CutoffError, check_cutoff, check_gain, check_occupation

__all__ = [
    "SqueezeParams",
    "TwoModeFockState",
    "CutoffError",
    "cutoff_for_gain",
    "apply_pdc_numeric",
    "apply_bs_numeric",
    "pdc_matrix_element",
    "bs_matrix_element",
    "pdc_block_propagator",
]

LEAKAGE_TOL = 1e-6


@dataclass(frozen=True)
class SqueezeParams:
    """Gain/squeezing of a PDC crystal and the angle of a beam splitter.

    ``gain = cosh(squeeze)**2`` and the beam-splitter transmittance is
    ``cos(theta)**2``. Use :meth:`from_gain` or :meth:`from_squeeze` rather
    than populating both fields by hand.
    """

    gain: float = 1.0
    squeeze: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        check_gain(self.gain, "gain")
        if self.squeeze < 0:
            raise ValueError("squeeze must be >= 0")
        if abs(math.cosh(self.squeeze) ** 2 - self.gain) > 1e-12 * max(1.0, self.gain):
            raise ValueError("gain and squeeze are inconsistent: need gain = cosh(squeeze)**2")

    @classmethod
    def from_gain(cls, g, theta=0.0):
        g = check_gain(g)
        return cls(gain=g, squeeze=math.acosh(math.sqrt(g)), theta=theta)

    @classmethod
    def from_squeeze(cls, r, theta=0.0):
        return cls(gain=math.cosh(r) ** 2, squeeze=float(r), theta=theta)

    @classmethod
    def from_transmittance(cls, T):
        if not 0.0 <= T <= 1.0:
            raise ValueError("transmittance must lie in [0, 1]")
        return cls(theta=math.acos(math.sqrt(T)))

    @property
    def transmittance(self):
        return math.cos(self.theta) ** 2


@dataclass(frozen=True)
class TwoModeFockState:
    """Pure two-mode state truncated at ``cutoff`` photons per mode.

    ``amplitudes[n_H, n_V]`` is the complex amplitude of ``|n_H, n_V>``.
    ``tail_bound`` is the probability mass known to lie outside the cutoff;
    ``leakage`` is the population the last propagation left in the two
    outermost layers, which estimates the truncation error it made.
    """

    cutoff: int
    amplitudes: np.ndarray
    tail_bound: float = 0.0
    leakage: float = 0.0

    def __post_init__(self):
        check_cutoff(self.cutoff)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.cutoff + 1, self.cutoff + 1):
            raise ValueError(
                f"amplitudes must have shape {(self.cutoff + 1,) * 2}, got {amps.shape}")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be >= 0")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_h, n_v, cutoff):
        """The Fock state ``|n_h, n_v>``."""
        if max(n_h, n_v) > cutoff:
            raise CutoffError(f"|{n_h},{n_v}> does not fit below cutoff {cutoff}")
        amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        amps[n_h, n_v] = 1.0
        return cls(cutoff, amps)

    @classmethod
    def vacuum(cls, cutoff):
        return cls.basis(0, 0, cutoff)

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return float(np.sum(self.probabilities()))

    def marginal_h(self):
        """Photon-number distribution of the H mode."""
        return self.probabilities().sum(axis=1)

    def marginal_v(self):
        return self.probabilities().sum(axis=0)

    def is_normalized(self, atol=1e-9):
        return abs(self.norm() + self.tail_bound - 1.0) <= atol


def cutoff_for_gain(g, input_photons=0, tol=1e-12):
    """Smallest per-mode cutoff whose squeezed-vacuum tail is below ``tol``.

    The tail mass beyond ``N`` is ``((g - 1) / g)**(N + 1)``. Inputs carrying
    at most two photons get two extra layers.
    """
    g = check_gain(g)
    if g == 1.0:
        n = 0
    else:
        n = max(0, math.ceil(math.log(tol) / math.log((g - 1.0) / g)) - 1)
    if input_photons <= 2:
        n += 2
    else:
        n += input_photons
    return n


def _exp_antihermitian(G):
    """``expm(G)`` for a real antisymmetric ``G`` via the Hermitian matrix ``iG``."""
    w, V = np.linalg.eigh(1j * G)
    return (V * np.exp(-1j * w)) @ V.conj().T


@lru_cache(maxsize=256)
def _pdc_block(d, cutoff, r):
    # basis |d + k, k>, k = 0 .. cutoff - d
    size = cutoff - d + 1
    k = np.arange(size - 1)
    A = np.zeros((size, size))
    A[k + 1, k] = np.sqrt((d + k + 1.0) * (k + 1.0))
    U = _exp_antihermitian(r * (A - A.T))
    U.setflags(write=False)
    return U


def pdc_block_propagator(d, cutoff, g):
    """Truncated PDC unitary on the block of photon-number difference ``d``.

    Rows and columns are indexed by the smaller of the two occupations, so the
    block basis is ``|d + k, k>`` for ``d >= 0`` and ``|k, k - d>`` for
    ``d < 0``. The generator is symmetric under swapping the modes, so both
    signs share one matrix.
    """
    g = check_gain(g)
    if abs(d) > cutoff:
        raise ValueError("|d| exceeds the cutoff")
    return _pdc_block(abs(int(d)), int(cutoff), math.acosh(math.sqrt(g)))


def apply_pdc_numeric(state, params, leakage_tol=LEAKAGE_TOL):
    """Propagate ``state`` through the PDC unitary by exponentiating its generator.

    The generator ``r (a_H^dag a_V^dag - a_H a_V)`` conserves ``n_H - n_V``, so
    each difference block is exponentiated on its own.

    Raises
    ------
    CutoffError
        If the output population in the layers ``max(n_H, n_V) >= N - 1``
        exceeds ``leakage_tol``.
    """
    N = state.cutoff
    amps = state.amplitudes
    out = np.zeros_like(amps)
    for d in range(-N, N + 1):
        size = N - abs(d) + 1
        k = np.arange(size)
        rows = (k + d, k) if d >= 0 else (k, k - d)
        vec = amps[rows]
        if not np.any(vec):
            continue
        out[rows] = pdc_block_propagator(d, N, params.gain) @ vec
    probs = np.abs(out) ** 2
    edge = float(probs[max(N - 1, 0):, :].sum() + probs[:max(N - 1, 0), max(N - 1, 0):].sum())
    if N > 1 and edge > leakage_tol:
        raise CutoffError(
            f"cutoff {N} too small: {edge:.3e} of the population reached the top two layers")
    return TwoModeFockState(N, out, tail_bound=state.tail_bound, leakage=edge)


@lru_cache(maxsize=256)
def _bs_block(s, cutoff, theta):
    # basis |s - k, k>, k = max(0, s - N) .. min(s, N)
    k0, k1 = max(0, s - cutoff), min(s, cutoff)
    k = np.arange(k0, k1 + 1)
    nh = s - k
    G = np.zeros((k.size, k.size))
    # a^dag b |nh, k> = sqrt((nh + 1) k) |nh + 1, k - 1>
    i = np.arange(1, k.size)
    G[i - 1, i] = np.sqrt((nh[i] + 1.0) * k[i])
    U = _exp_antihermitian(theta * (G - G.T))
    U.setflags(write=False)
    return U, k


def apply_bs_numeric(state, theta):
    """Propagate ``state`` through ``exp[theta (a^dag b - b^dag a)]``.

    The generator is block diagonal in total photon number, so the truncated
    propagation is exactly unitary.
    """
    N = state.cutoff
    amps = state.amplitudes
    out = np.zeros_like(amps)
    for s in range(2 * N + 1):
        U, k = _bs_block(s, N, float(theta))
        rows = (s - k, k)
        vec = amps[rows]
        if np.any(vec):
            out[rows] = U @ vec
    return TwoModeFockState(N, out, tail_bound=state.tail_bound)


def _signed_logsum(logs, signs):
    if not logs:
        return 0.0
    top = max(logs)
    return math.exp(top) * math.fsum(s * math.exp(v - top) for v, s in zip(logs, signs))


def pdc_matrix_element(n, m, j, k, g):
    """Amplitude ``<n, m| U_g^PDC |j, k>``.

    Uses the binomial expansion of ``d^n/da^n [a^j (1 + a b)^(n+k-j)]`` at
    ``a = -sqrt(g - 1)/g``, ``b = sqrt(g - 1)``, with the prefactor
    ``k! / (g n! j! m! g^(n-k))`` under a square root; the sum carries the
    sign of the amplitude. Zero unless ``n - m == j - k``.
    """
    for name, v in (("n", n), ("m", m), ("j", j), ("k", k)):
        check_occupation(v, name)
    g = check_gain(g)
    if n - m != j - k:
        return 0.0 + 0.0j
    if g == 1.0:
        return complex(n == j and m == k)
    la = 0.5 * math.log(g - 1.0) - math.log(g)  # log|a|
    lb = 0.5 * math.log(g - 1.0)
    lg = math.lgamma
    logpref = 0.5 * (-math.log(g) + lg(k + 1) - lg(n + 1) - lg(j + 1) - lg(m + 1)
                     - (n - k) * math.log(g))
    logs, signs = [], []
    for i in range(max(0, n - j), m + 1):
        p = j + i - n  # power of a left after differentiating n times
        logs.append(logpref + lg(m + 1) - lg(i + 1) - lg(m - i + 1) + i * lb
                    + lg(j + i + 1) - lg(p + 1) + p * la)
        signs.append(-1.0 if p % 2 else 1.0)
    return complex(_signed_logsum(logs, signs))


def bs_matrix_element(n, m, j, k, theta):
    """Amplitude ``<n, m| exp[theta (a^dag b - b^dag a)] |j, k>``.

    Finite sum from ``a^dag -> a^dag cos - b^dag sin`` and
    ``b^dag -> a^dag sin + b^dag cos``; zero unless ``n + m == j + k``.
    """
    for name, v in (("n", n), ("m", m), ("j", j), ("k", k)):
        check_occupation(v, name)
    if n + m != j + k:
        return 0.0 + 0.0j
    c, s = math.cos(theta), math.sin(theta)
    lg = math.lgamma
    logpref = 0.5 * (lg(n + 1) + lg(m + 1) - lg(j + 1) - lg(k + 1))
    logs, signs = [], []
    # p photons of mode a stay in a, q = n - p photons of b move to a
    for p in range(max(0, n - k), min(j, n) + 1):
        q = n - p
        pc, ps = p + (k - q), (j - p) + q  # powers of cos and sin
        if (pc and c == 0.0) or (ps and s == 0.0):
            continue
        term = (logpref + lg(j + 1) - lg(p + 1) - lg(j - p + 1)
                + lg(k + 1) - lg(q + 1) - lg(k - q + 1))
        if pc:
            term += pc * math.log(abs(c))
        if ps:
            term += ps * math.log(abs(s))
        sign = (-1.0) ** (j - p)
        if c < 0 and pc % 2:
            sign = -sign
        if s < 0 and ps % 2:
            sign = -sign
        logs.append(term)
        signs.append(sign)
    return complex(_signed_logsum(logs, signs))
