"""Joint spectral amplitudes, spectral filtering and Schmidt purity.

Frequencies are detunings from the degenerate centre in rad/ps. The pump
envelope depends on ``w_i + w_s``; phase matching depends on
``pm_length * (w_i - gvm_slope * w_s) / 2``.
"""
from dataclasses import dataclass, field, replace
import csv
import math
import warnings

import numpy as np
from scipy.optimize import brentq

from .detectors import g2_threshold
from .gridio import read_grid, write_grid

__all__ = [
    "JointSpectralAmplitude",
    "SchmidtSpectrum",
    "EmptyPassbandError",
    "LowTransmissionWarning",
    "build_jsa",
    "gaussian_jsa",
    "apply_filter",
    "schmidt_purity",
    "schmidt_weights_for_purity",
    "purity_from_g2",
    "nm_to_rad_per_ps",
    "write_jsa_csv",
    "read_jsa_csv",
    "write_jsa_binary",
    "read_jsa_binary",
]

SPEED_OF_LIGHT = 299792.458  # nm / ps
# sinc(x) ~ exp(-GAUSS_SINC x**2): equal full width at half maximum of the squares
GAUSS_SINC = 0.193


class EmptyPassbandError(ValueError):
    """A filter window does not overlap the frequency grid."""


class LowTransmissionWarning(UserWarning):
    """A filter passes almost none of the joint spectrum."""


@dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    """Normalized amplitude ``S[i, s]`` on uniform idler and signal axes.

    ``transmitted`` is the fraction of the photon-pair flux kept by the
    filters applied so far.
    """

    grid: np.ndarray
    omega_i: np.ndarray
    omega_s: np.ndarray
    units: str = "rad/ps"
    transmitted: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S = np.asarray(self.grid, dtype=complex)
        if S.shape != (len(self.omega_i), len(self.omega_s)):
            raise ValueError("grid shape must match the axes")
        norm = np.linalg.norm(S)
        if norm == 0:
            raise ValueError("joint spectrum is identically zero")
        S = S / norm
        S.setflags(write=False)
        object.__setattr__(self, "grid", S)
        object.__setattr__(self, "omega_i", np.asarray(self.omega_i, dtype=float))
        object.__setattr__(self, "omega_s", np.asarray(self.omega_s, dtype=float))

    def transposed(self):
        """Swap the roles of signal and idler."""
        return replace(self, grid=self.grid.T, omega_i=self.omega_s, omega_s=self.omega_i)


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Schmidt coefficients ``c_j`` (descending, ``sum c_j**2 = 1``) and purity ``sum c_j**4``."""

    coefficients: np.ndarray
    purity: float

    @property
    def schmidt_number(self):
        return 1.0 / self.purity


def _axis(grid_size, half_span):
    return np.linspace(-half_span, half_span, grid_size)


def build_jsa(pump_sigma=1.0, pm_length=2.4, gvm_slope=1.0, grid_size=256, span_sigmas=8.0,
              pm_shape="sinc"):
    """Joint spectral amplitude of a pulsed down-conversion source.

    Parameters
    ----------
    pump_sigma : float
        RMS width of the pump's spectral intensity, in rad/ps.
    pm_length : float
        Crystal length times the group-velocity mismatch, in ps; sets the
        width of the phase-matching function.
    gvm_slope : float
        Ratio of the signal and idler group-velocity mismatches with the pump;
        ``1`` makes phase matching depend on ``w_i - w_s`` only.
    grid_size : int
        Points per axis, at least 64.
    span_sigmas : float
        Half width of both axes in units of ``pump_sigma``.
    pm_shape : {"sinc", "gaussian"}
        Sinc phase matching, or its Gaussian approximation without side lobes.

    Returns
    -------
    JointSpectralAmplitude
    """
    if min(pump_sigma, pm_length, span_sigmas) <= 0:
        raise ValueError("pump_sigma, pm_length and span_sigmas must be positive")
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    w = _axis(grid_size, span_sigmas * pump_sigma)
    wi, ws = np.meshgrid(w, w, indexing="ij")
    pump = np.exp(-((wi + ws) ** 2) / (4.0 * pump_sigma ** 2))
    x = 0.5 * pm_length * (wi - gvm_slope * ws)
    if pm_shape == "sinc":
        pm = np.sinc(x / np.pi)
    elif pm_shape == "gaussian":
        pm = np.exp(-GAUSS_SINC * x ** 2)
    else:
        raise ValueError("pm_shape must be 'sinc' or 'gaussian'")
    meta = {"pump_sigma": pump_sigma, "pm_length": pm_length, "gvm_slope": gvm_slope,
            "pm_shape": pm_shape}
    return JointSpectralAmplitude(pump * pm, w, w, meta=meta)


def separable_pm_length(pump_sigma):
    """``pm_length`` at which the Gaussian model with ``gvm_slope=1`` factorizes."""
    return 1.0 / (pump_sigma * math.sqrt(GAUSS_SINC))


def gaussian_jsa(rho, grid_size=512, half_span=8.0):
    """Amplitude whose squared modulus is a unit bivariate normal with correlation ``rho``.

    Its purity is ``sqrt(1 - rho**2)``.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    w = _axis(grid_size, half_span)
    x, y = np.meshgrid(w, w, indexing="ij")
    S = np.exp(-(x * x - 2.0 * rho * x * y + y * y) / (4.0 * (1.0 - rho * rho)))
    return JointSpectralAmplitude(S, w, w, meta={"rho": rho})


def apply_filter(jsa, center, width, mode="both"):
    """Top-hat filter of full width ``width`` centred on ``center``.

    ``mode`` selects the filtered arm(s): ``"idler"``, ``"signal"`` or
    ``"both"``. The result is renormalized; the kept fraction multiplies
    ``transmitted``.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if mode not in ("idler", "signal", "both"):
        raise ValueError("mode must be 'idler', 'signal' or 'both'")
    half = 0.5 * width
    ti = (np.abs(jsa.omega_i - center) <= half) if mode in ("idler", "both") \
        else np.ones(jsa.omega_i.size, bool)
    ts = (np.abs(jsa.omega_s - center) <= half) if mode in ("signal", "both") \
        else np.ones(jsa.omega_s.size, bool)
    if not ti.any() or not ts.any():
        raise EmptyPassbandError(f"window {center:g} +/- {half:g} misses the grid")
    S = jsa.grid * ti[:, None] * ts[None, :]
    kept = float(np.sum(np.abs(S) ** 2))
    if kept == 0.0:
        raise EmptyPassbandError("the window passes no part of the joint spectrum")
    if kept < 1e-6:
        warnings.warn(f"filter transmits only {kept:.2e} of the spectrum",
                      LowTransmissionWarning, stacklevel=2)
    meta = dict(jsa.meta)
    meta.setdefault("filters", [])
    meta["filters"] = meta["filters"] + [{"center": center, "width": width, "mode": mode}]
    return replace(jsa, grid=S, transmitted=jsa.transmitted * kept, meta=meta)


def schmidt_purity(jsa):
    """Schmidt decomposition of the discretized amplitude by SVD."""
    grid = jsa.grid if isinstance(jsa, JointSpectralAmplitude) else np.asarray(jsa)
    s = np.linalg.svd(grid, compute_uv=False)
    c = s / math.sqrt(math.fsum(s * s))
    return SchmidtSpectrum(c, math.fsum(c ** 4))


def nm_to_rad_per_ps(width_nm, center_nm):
    """Angular-frequency width of a wavelength band ``width_nm`` wide at ``center_nm``."""
    return 2.0 * math.pi * SPEED_OF_LIGHT * width_nm / center_nm ** 2


def schmidt_weights_for_purity(purity, tol=1e-15):
    """Geometric Schmidt weights ``c_j**2 = (1 - q) q**j`` with ``sum c_j**4 = purity``.

    ``q = (1 - purity) / (1 + purity)``, the thermal-like spectrum of a
    Gaussian joint amplitude. Truncated once a weight falls below ``tol``.
    """
    if not 0.0 < purity <= 1.0:
        raise ValueError("purity must lie in (0, 1]")
    q = (1.0 - purity) / (1.0 + purity)
    if q == 0.0:
        return np.array([1.0])
    n = int(math.ceil(math.log(tol) / math.log(q))) + 1
    w = (1.0 - q) * q ** np.arange(n)
    return w / w.sum()


def purity_from_g2(g2, mean_photons=None, eta=1.0, bracket=(0.05, 1.0)):
    """Spectral purity implied by a measured heralding-arm ``g2(0)``.

    Without ``mean_photons`` this is the photon-number-resolving relation
    ``purity = g2 - 1``. With ``mean_photons`` the threshold-detector value
    :func:`g2_threshold` is inverted, assuming geometric Schmidt weights.
    """
    g2 = float(g2)
    if not 1.0 <= g2 <= 2.0:
        raise ValueError(f"g2 must lie in [1, 2], got {g2!r}")
    if mean_photons is None:
        return g2 - 1.0

    def f(p):
        return g2_threshold(schmidt_weights_for_purity(p), mean_photons, eta) - g2

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError(f"g2 = {g2} is outside the threshold-model range "
                         f"[{flo + g2:.4f}, {fhi + g2:.4f}] at this photon number")
    return brentq(f, lo, hi, xtol=1e-12)


def write_jsa_csv(jsa, path):
    """One row per grid point: ``omega_i, omega_s, re, im``."""
    wi, ws = np.meshgrid(jsa.omega_i, jsa.omega_s, indexing="ij")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["omega_i", "omega_s", "re", "im"])
        for row in zip(wi.ravel(), ws.ravel(), jsa.grid.real.ravel(), jsa.grid.imag.ravel()):
            out.writerow(["%.17g" % v for v in row])


def read_jsa_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    wi, ws = np.unique(data[:, 0]), np.unique(data[:, 1])
    grid = (data[:, 2] + 1j * data[:, 3]).reshape(wi.size, ws.size)
    return JointSpectralAmplitude(grid, wi, ws)


def write_jsa_binary(jsa, path):
    write_grid(path, jsa.grid, (jsa.omega_i[0], jsa.omega_i[-1]),
               (jsa.omega_s[0], jsa.omega_s[-1]))


def read_jsa_binary(path):
    grid, (i0, i1), (s0, s1) = read_grid(path)
    return JointSpectralAmplitude(grid, np.linspace(i0, i1, grid.shape[0]),
                                  np.linspace(s0, s1, grid.shape[1]))
