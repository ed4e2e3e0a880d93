"""Two-mode Wigner functions of the interference crystal's output.

Quadratures follow ``a = (x + i p) / sqrt(2)`` with hbar = 1, so a single-mode
vacuum has ``W(0, 0) = 1/pi`` and the two-mode vacuum ``1/pi**2``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import math
import warnings

import numpy as np

from ._validation import check_cutoff
from .fock import TwoModeFockState, cutoff_for_gain, pdc_matrix_element
from .gridio import read_grid, write_grid
from .montecarlo import max_workers

__all__ = [
    "TwoModeMixedState",
    "WignerGrid",
    "CutoffWarning",
    "output_mixed_state",
    "fock_wigner_kernels",
    "wigner_slice",
    "wigner_full",
    "wigner_normalization",
    "wigner_mean_photons",
    "write_wigner_csv",
    "write_wigner_binary",
    "read_wigner_binary",
]

TOP_LAYER_TOL = 1e-6
_ROW_BLOCK = 16


class CutoffWarning(UserWarning):
    """The Fock cutoff leaves noticeable population in the top layer."""


@dataclass(frozen=True)
class TwoModeMixedState:
    """Weighted mixture of pure two-mode Fock states."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components if w > 0)
        if not comps:
            raise ValueError("need at least one component with positive weight")
        if any(w < 0 for w, _ in self.components):
            raise ValueError("weights must be non-negative")
        total = math.fsum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if len({s.cutoff for _, s in comps}) != 1:
            raise ValueError("components must share one cutoff")
        object.__setattr__(self, "components", comps)

    @property
    def cutoff(self):
        return self.components[0][1].cutoff

    def marginal_h(self):
        return sum(w * s.marginal_h() for w, s in self.components)

    def marginal_v(self):
        return sum(w * s.marginal_v() for w, s in self.components)

    def top_layer_population(self):
        N = self.cutoff
        return math.fsum(w * float(s.probabilities()[N, :].sum() + s.probabilities()[:N, N].sum())
                         for w, s in self.components)

    def reduced_h(self):
        """Density matrix of the H mode."""
        return sum(w * s.amplitudes @ s.amplitudes.conj().T for w, s in self.components)


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """Slice ``W(x=0, p_x, y, p_y=0)`` on a uniform ``(p_x, y)`` grid."""

    values: np.ndarray
    p_x: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def at(self, p_x, y):
        """Value at the grid point nearest to ``(p_x, y)``."""
        return float(self.values[np.argmin(np.abs(self.p_x - p_x)),
                                 np.argmin(np.abs(self.y - y))])


def _pure_output(j, k, g, cutoff):
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    for n in range(cutoff + 1):
        m = n - j + k
        if 0 <= m <= cutoff:
            amps[n, m] = pdc_matrix_element(n, m, j, k, g)
    norm = float(np.sum(np.abs(amps) ** 2))
    return TwoModeFockState(cutoff, amps, tail_bound=max(0.0, 1.0 - norm))


def output_mixed_state(model, cutoff=None):
    """Crystal output for overlap-mixed single-photon inputs.

    Components ``U|0,0>``, ``U|0,1>``, ``U|1,0>``, ``U|1,1>`` carry weights
    from the overlaps; the neutral filter scales each overlap by its
    transmission.
    """
    if cutoff is None:
        cutoff = cutoff_for_gain(model.g)
    cutoff = check_cutoff(cutoff)
    o1 = model.o1 * model.transmission
    o2 = model.o2 * model.transmission
    weights = {(0, 0): (1 - o1) * (1 - o2), (0, 1): (1 - o1) * o2,
               (1, 0): o1 * (1 - o2), (1, 1): o1 * o2}
    comps = [(w, _pure_output(j, k, model.g, cutoff)) for (j, k), w in weights.items() if w > 0]
    return TwoModeMixedState(tuple(comps))


def fock_wigner_kernels(cutoff, x, p):
    """``K[m, n, ...]``: Wigner function of ``|m><n|`` at the points ``(x, p)``.

    For ``m >= n``::

        K = (-1)**n / pi * sqrt(n!/m!) * (sqrt(2) (x - i p))**(m - n)
            * exp(-r**2) * L_n^(m - n)(2 r**2)

    and ``K[n, m] = conj(K[m, n])``. The normalized Laguerre functions are
    built by their three-term recurrence, seeded with a log-space prefactor,
    so nothing overflows at large photon numbers.
    """
    N = check_cutoff(cutoff)
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    z = 2.0 * (x * x + p * p)
    phase = np.exp(-1j * np.arctan2(p, x))
    K = np.zeros((N + 1, N + 1) + x.shape, dtype=complex)
    with np.errstate(divide="ignore"):
        logz = np.log(z)
    for a in range(N + 1):
        # l_n = sqrt(n!/(n+a)!) z**(a/2) exp(-z/2) L_n^(a)(z)
        if a == 0:
            prev = np.exp(-0.5 * z)
        else:
            prev = np.where(z > 0, np.exp(0.5 * a * logz - 0.5 * z - 0.5 * math.lgamma(a + 1)),
                            0.0)
        prev2 = np.zeros_like(prev)
        ph = phase ** a
        for n in range(N + 1 - a):
            if n > 0:
                s1 = math.sqrt(n / (n + a))
                s2 = math.sqrt((n - 1) / (n - 1 + a)) if n > 1 else 0.0
                cur = ((2 * n - 1 + a - z) * s1 * prev - (n - 1 + a) * s1 * s2 * prev2) / n
                prev2, prev = prev, cur
            val = ((-1) ** n / math.pi) * prev * ph
            K[n + a, n] = val
            if a:
                K[n, n + a] = np.conj(val)
    return K


def _check_cutoff_population(state):
    top = state.top_layer_population()
    if top > TOP_LAYER_TOL:
        warnings.warn(f"cutoff {state.cutoff} leaves {top:.2e} of the population in the top "
                      "layer", CutoffWarning, stacklevel=3)
    return top


def _slice_block(state, K1, K2):
    # W[a, b] = sum_c w_c sum psi[n1,n2] K1[n1,n1',a] conj(psi[n1',n2']) K2[n2,n2',b]
    out = np.zeros((K1.shape[-1], K2.shape[-1]), dtype=complex)
    for w, s in state.components:
        psi = s.amplitudes
        T = np.einsum("ij,ika,kl->ajl", psi, K1, psi.conj(), optimize=True)
        out += w * np.einsum("ajl,jlb->ab", T, K2, optimize=True)
    return out


def wigner_slice(state, p_range=(-4.0, 4.0), y_range=(-4.0, 4.0), points=201, workers=None):
    """Two-mode Wigner function on the plane ``x = 0``, ``p_y = 0``.

    Parameters
    ----------
    state : TwoModeMixedState
    p_range, y_range : tuple
        Bounds of the H-mode momentum and V-mode position axes.
    points : int or tuple
        Grid points per axis.
    workers : int, optional
        Threads over fixed row blocks; the result does not depend on it.

    Returns
    -------
    WignerGrid
        Real values; ``meta["max_imag"]`` records the largest discarded
        imaginary part.
    """
    npx, ny = (points, points) if np.isscalar(points) else points
    px = np.linspace(p_range[0], p_range[1], npx)
    y = np.linspace(y_range[0], y_range[1], ny)
    top = _check_cutoff_population(state)
    N = state.cutoff
    K2 = fock_wigner_kernels(N, y, np.zeros_like(y))
    blocks = [px[i:i + _ROW_BLOCK] for i in range(0, npx, _ROW_BLOCK)]

    def run(rows):
        return _slice_block(state, fock_wigner_kernels(N, np.zeros_like(rows), rows), K2)

    cap = max_workers()
    workers = cap if workers is None else max(1, min(int(workers), cap))
    if workers == 1 or len(blocks) == 1:
        parts = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    W = np.concatenate(parts, axis=0)
    meta = {"max_imag": float(np.max(np.abs(W.imag))), "cutoff": N, "top_layer": top}
    return WignerGrid(W.real.copy(), px, y, meta)


def wigner_full(state, axis):
    """Full two-mode Wigner function on the tensor grid ``axis**4``.

    Returns an array indexed ``[x1, p1, x2, p2]``. Meant for small cutoffs.
    """
    axis = np.asarray(axis, dtype=float)
    X, P = np.meshgrid(axis, axis, indexing="ij")
    K = fock_wigner_kernels(state.cutoff, X.ravel(), P.ravel())
    W = _slice_block(state, K, K)
    n = axis.size
    if np.max(np.abs(W.imag)) > 1e-12:
        raise ArithmeticError("Wigner function acquired an imaginary part")  # pragma: no cover
    return W.real.reshape(n, n, n, n)


def wigner_normalization(state, half_width=5.0, points=41):
    """Trapezoidal integral of the full Wigner function over ``[-L, L]**4``."""
    axis = np.linspace(-half_width, half_width, points)
    W = wigner_full(state, axis)
    for _ in range(4):
        W = np.trapezoid(W, axis, axis=0)
    return float(W)


def wigner_mean_photons(state, mode="H", half_width=8.0, points=161):
    """``<n>`` of one mode from its reduced Wigner function: ``<(x**2 + p**2)/2> - 1/2``.

    The ``1/2`` is weighted by the integral of ``W`` so that truncated states
    with trace below one stay consistent with their Fock representation.
    """
    if mode == "H":
        rho = state.reduced_h()
    elif mode == "V":
        rho = sum(w * s.amplitudes.T @ s.amplitudes.conj() for w, s in state.components)
    else:
        raise ValueError("mode must be 'H' or 'V'")
    axis = np.linspace(-half_width, half_width, points)
    X, P = np.meshgrid(axis, axis, indexing="ij")
    K = fock_wigner_kernels(state.cutoff, X, P)
    W = np.einsum("mn,nm...->...", rho, K).real
    integrand = (0.5 * (X * X + P * P) - 0.5) * W
    return float(np.trapezoid(np.trapezoid(integrand, axis, axis=1), axis))


def write_wigner_csv(grid, path):
    """One row per grid point: ``p_x, y, W``."""
    PX, Y = np.meshgrid(grid.p_x, grid.y, indexing="ij")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["p_x", "y", "W"])
        for row in zip(PX.ravel(), Y.ravel(), grid.values.ravel()):
            out.writerow(["%.17g" % v for v in row])


def write_wigner_binary(grid, path):
    write_grid(path, grid.values, (grid.p_x[0], grid.p_x[-1]), (grid.y[0], grid.y[-1]))


def read_wigner_binary(path):
    values, (p0, p1), (y0, y1) = read_grid(path)
    return WignerGrid(values, np.linspace(p0, p1, values.shape[0]),
                      np.linspace(y0, y1, values.shape[1]))
