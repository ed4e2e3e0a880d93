"""Staged estimation of gain and overlaps from coincidence statistics.

The gain is fitted first from a run with both heralded sources blocked, then
each overlap from a run with a single heralded photon sent in, holding the
gain fixed. Every stage is a bounded one-dimensional least-squares problem.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import NonConvergenceError, check_efficiency, check_gain
from .detectors import CoincidenceStats, coincidence_probs
from .distributions import OverlapParams, full_output_dist, spdc_dist, tilde_input_dist
from .fock import cutoff_for_gain
from .model import ExperimentModel

__all__ = [
    "FitResult",
    "BoundaryWarning",
    "UnidentifiableWarning",
    "default_cutoff",
    "fit_gain",
    "fit_overlap",
    "fit_staged",
    "predict_interference",
    "StagedInterferenceFitter",
]

XATOL = 1e-8
MAXITER = 200
GAIN_BOUNDS = (1.0, 10.0)
STAGES = ("spdc", "h_input", "v_input")


class BoundaryWarning(UserWarning):
    """The optimum sits on a bound of the search interval."""


class UnidentifiableWarning(UserWarning):
    """The data carry no information about the fitted parameter."""


@dataclass(frozen=True)
class FitResult:
    """Outcome of a one-parameter fit.

    ``ci_low``/``ci_high`` bound the 68% profile interval, ``residual`` is the
    (weighted) sum of squared deviations at the optimum. ``meta["stderr"]``,
    when present, is the linearized standard error under the full covariance
    of the coincidence estimates, including uncertainty inherited from
    earlier stages.
    """

    value: float
    ci_low: float
    ci_high: float
    residual: float
    iterations: int
    at_boundary: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def sigma(self):
        """Half width of the confidence interval."""
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def stderr(self):
        """Covariance-aware standard error, or :attr:`sigma` when unavailable."""
        se = self.meta.get("stderr")
        return self.sigma if se is None else se

    def to_dict(self):
        return {"value": self.value, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "residual": self.residual, "iterations": self.iterations,
                "at_boundary": self.at_boundary, **self.meta}


def default_cutoff(g, extra=8):
    """Per-mode cutoff generous enough for the full model at gain ``g``."""
    return cutoff_for_gain(g) + extra


def _weights(stats, weighted):
    """Return ``(w, label)``; Poisson weights need ``sigma``, else unit weights."""
    if not weighted or stats.sigma is None:
        return np.ones(stats.order), "unweighted"
    sig = np.asarray(stats.sigma, dtype=float)
    # zero-count orders still carry information; floor at one count
    floor = 1.0 / stats.pulses if stats.pulses else 1e-12
    sig = np.maximum(sig, floor)
    return 1.0 / sig ** 2, "poisson"


def _minimize(objective, bounds, xatol=XATOL, maxiter=MAXITER):
    res = minimize_scalar(objective, bounds=bounds, method="bounded",
                          options={"xatol": xatol, "maxiter": maxiter})
    if not res.success or res.nit >= maxiter:
        raise NonConvergenceError(f"scalar fit did not converge in {maxiter} iterations: "
                                  f"{res.message}")
    x, fx = float(res.x), float(res.fun)
    # the bounded search never evaluates the endpoints themselves
    for b in bounds:
        fb = objective(b)
        if fb <= fx:
            x, fx = float(b), fb
    return x, fx, int(res.nit)


def _profile_interval(objective, x, fx, bounds, delta):
    """Where the objective rises by ``delta`` on either side of ``x``."""
    target = fx + delta
    ends = []
    for b in bounds:
        if b == x or objective(b) <= target:
            ends.append(float(b))
        else:
            ends.append(brentq(lambda t: objective(t) - target, min(x, b), max(x, b),
                               xtol=1e-12, rtol=4 * np.finfo(float).eps))
    return min(ends), max(ends)


def _fit_scalar(objective, bounds, n_obs, weighting, name):
    x, fx, nit = _minimize(objective, bounds)
    if weighting == "poisson":
        delta = 1.0
    else:
        # unit weights: scale by the residual variance per degree of freedom
        delta = fx / max(n_obs - 1, 1)
    lo, hi = _profile_interval(objective, x, fx, bounds, delta) if delta > 0 else (x, x)
    at_bound = x in bounds
    if at_bound:
        warnings.warn(f"{name} pinned to the bound {x:g}", BoundaryWarning, stacklevel=3)
    meta = {"weighting": weighting, "delta_chi2": delta, "bounds": list(bounds)}
    return FitResult(x, min(lo, x), max(hi, x), max(fx, 0.0), nit, at_bound, meta)


def _data_cov(stats):
    if stats.cov is not None:
        return stats.cov
    if stats.sigma is not None:
        return np.diag(np.asarray(stats.sigma, dtype=float) ** 2)
    return None


def _sandwich(jac, w, cov):
    """Variance of a weighted least-squares scalar when the data have covariance ``cov``."""
    a = w * jac
    info = float(a @ jac)
    if info <= 0.0:
        return math.inf
    return float(a @ cov @ a) / info ** 2


def _derivative(f, x, bounds, h=1e-5):
    lo, hi = max(bounds[0], x - h), min(bounds[1], x + h)
    return (np.asarray(f(hi)) - np.asarray(f(lo))) / (hi - lo)


def _sse(model_probs, stats, w):
    d = np.asarray(model_probs) - stats.probs
    return math.fsum(w * d * d)


def fit_gain(stats, eta, weighted=True, bounds=GAIN_BOUNDS, cutoff=None):
    """Fit the crystal gain to coincidences recorded with both sources blocked.

    Parameters
    ----------
    stats : CoincidenceStats
        ``C_1..C_M`` of the two-mode squeezed vacuum's H mode.
    eta : float
        Per-detector efficiency.
    weighted : bool
        Use Poisson weights ``1/sigma_m**2`` when ``stats.sigma`` is present.
    bounds : tuple
        Search interval for ``g``.
    cutoff : int, optional
        Fock cutoff; defaults to one adequate at the upper bound.

    Returns
    -------
    FitResult
    """
    eta = check_efficiency(eta)
    lo, hi = check_gain(bounds[0]), check_gain(bounds[1])
    if cutoff is None:
        cutoff = cutoff_for_gain(hi)
    M = stats.order
    w, label = _weights(stats, weighted)

    def model(g):
        return coincidence_probs(spdc_dist(g, cutoff), eta, M).probs

    def objective(g):
        return _sse(model(g), stats, w)

    res = _fit_scalar(objective, (lo, hi), M, label, "gain")
    cov = _data_cov(stats)
    stderr = None
    if cov is not None:
        stderr = math.sqrt(_sandwich(_derivative(model, res.value, (lo, hi)), w, cov))
    res.meta.update(parameter="g", eta=eta, cutoff=cutoff, stderr=stderr)
    return res


def overlap_response(eta, g, M, mode="H_input", cutoff=None):
    """Coincidences at overlap 0 and 1; the model is linear in between."""
    if mode not in ("H_input", "V_input"):
        raise ValueError("mode must be 'H_input' or 'V_input'")
    if cutoff is None:
        cutoff = default_cutoff(g)
    state = "10" if mode == "H_input" else "01"
    out = []
    for o in (0.0, 1.0):
        ov = OverlapParams(o, 0.0) if mode == "H_input" else OverlapParams(0.0, o)
        out.append(coincidence_probs(tilde_input_dist(state, g, ov, cutoff), eta, M).probs)
    return out[0], out[1]


def fit_overlap(stats, eta, g, mode="H_input", weighted=True, cutoff=None, g_stderr=None):
    """Fit one heralded photon's overlap with the crystal mode.

    ``mode="H_input"`` fits the H photon from a run with only the H source
    open, ``"V_input"`` the V photon. The crystal gain ``g`` is held fixed.
    The model coincidences are ``(1 - O) C(O=0) + O C(O=1)``, exact because
    the overlap enters as a classical mixture. ``g_stderr`` is the standard
    error of ``g``; it is propagated into ``meta["stderr"]``.
    """
    eta = check_efficiency(eta)
    g = check_gain(g)
    M = stats.order
    c0, c1 = overlap_response(eta, g, M, mode, cutoff)
    w, label = _weights(stats, weighted)
    span = c1 - c0

    def objective(o):
        return _sse(c0 + o * span, stats, w)

    res = _fit_scalar(objective, (0.0, 1.0), M, label, f"overlap ({mode})")
    cov = _data_cov(stats)
    stderr = None
    if cov is not None:
        var = _sandwich(span, w, cov)
        if g_stderr:
            def at_gain(gg):
                a, b = overlap_response(eta, gg, M, mode, cutoff)
                return a + res.value * (b - a)
            dg = _derivative(at_gain, g, (1.0, math.inf))
            info = float((w * span) @ span)
            if info > 0:
                var += (float((w * span) @ dg) / info * g_stderr) ** 2
        stderr = math.sqrt(var)
    identifiable = bool(np.any(stats.probs > 0)) and float(np.max(np.abs(span))) > 1e-12
    if not identifiable:
        warnings.warn(f"overlap ({mode}) is not identifiable from these data",
                      UnidentifiableWarning, stacklevel=2)
    res.meta.update(parameter="o1" if mode == "H_input" else "o2", eta=eta, g=g,
                    identifiable=identifiable, stderr=stderr)
    return res


def fit_staged(bundle, eta, weighted=True, bounds=GAIN_BOUNDS):
    """Gain from the ``"spdc"`` run, then ``o1`` and ``o2`` from the single-photon runs.

    ``bundle`` maps ``"spdc"``, ``"h_input"`` and ``"v_input"`` to
    :class:`CoincidenceStats`. Returns a dict of :class:`FitResult` keyed
    ``g``, ``o1``, ``o2``.
    """
    missing = [s for s in STAGES if s not in bundle or bundle[s] is None]
    if missing:
        raise KeyError(f"missing auxiliary run(s): {', '.join(missing)}")
    g = fit_gain(bundle["spdc"], eta, weighted, bounds)
    se = g.meta.get("stderr")
    o1 = fit_overlap(bundle["h_input"], eta, g.value, "H_input", weighted, g_stderr=se)
    o2 = fit_overlap(bundle["v_input"], eta, g.value, "V_input", weighted, g_stderr=se)
    return {"g": g, "o1": o1, "o2": o2}


def predict_interference(model, M, cutoff=None):
    """Output distribution and coincidences of the interference run.

    Returns
    -------
    dist : PhotonNumberDist
        H-mode photon-number law of the full model.
    stats : CoincidenceStats
        ``C_1..C_M`` at the model's per-detector efficiency.
    """
    if cutoff is None:
        cutoff = default_cutoff(model.g)
    dist = full_output_dist(model, cutoff)
    return dist, coincidence_probs(dist, model.eta, M)


class StagedInterferenceFitter(BaseEstimator):
    """Estimator wrapper around the staged fit.

    ``fit`` takes the bundle of auxiliary runs (see :func:`fit_staged`);
    ``predict`` maps a column of neutral-filter transmissions to the model's
    ``P_1`` for the interference run. Source gains and trigger efficiencies
    are calibrated separately and passed as parameters.
    """

    def __init__(self, eta=0.13, weighted=True, gain_bounds=GAIN_BOUNDS, g1=1.0, g2=1.0,
                 eta_t1=1.0, eta_t2=1.0, n_d=0):
        self.eta = eta
        self.weighted = weighted
        self.gain_bounds = gain_bounds
        self.g1 = g1
        self.g2 = g2
        self.eta_t1 = eta_t1
        self.eta_t2 = eta_t2
        self.n_d = n_d

    def fit(self, X, y=None):
        self.results_ = fit_staged(X, self.eta, self.weighted, self.gain_bounds)
        self.gain_ = self.results_["g"].value
        self.o1_ = self.results_["o1"].value
        self.o2_ = self.results_["o2"].value
        self.model_ = ExperimentModel(g=self.gain_, o1=self.o1_, o2=self.o2_, g1=self.g1,
                                      g2=self.g2, eta_t1=self.eta_t1, eta_t2=self.eta_t2,
                                      eta=self.eta, n_d=self.n_d)
        return self

    def predict(self, X=None):
        """``P_1`` of the interference run for each transmission in ``X``."""
        check_is_fitted(self, "model_")
        if X is None:
            X = [[self.model_.transmission]]
        X = check_array(X, dtype=float)
        out = [predict_interference(self.model_.replace(transmission=float(t)), 1)[0][1]
               for t in X[:, 0]]
        return np.array(out)

    def predict_stats(self, M=6, transmission=1.0):
        check_is_fitted(self, "model_")
        return predict_interference(self.model_.replace(transmission=transmission), M)[1]
