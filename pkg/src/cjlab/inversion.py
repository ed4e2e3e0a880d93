"""Recover photon-number probabilities from m-fold coincidence probabilities.

The map ``C = A(eta) P`` is upper triangular with diagonal ``m! eta**m``, so
``P_1`` is a finite linear combination of ``C_1..C_m`` whenever the state has
no more than ``m`` photons. Truncating that combination at a finite number of
detectors gives the few-detector estimates of ``P_1``.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_efficiency
from .detectors import CoincidenceStats, coincidence_probs, response_matrix
from .distributions import PhotonNumberDist

__all__ = [
    "InversionCoefficients",
    "P1Estimate",
    "IllConditionedWarning",
    "response_polynomial",
    "inversion_polynomials",
    "inversion_coefficients",
    "p1_truncated",
    "pn_solve",
    "truncation_scan",
    "CoincidenceInverter",
]


class IllConditionedWarning(UserWarning):
    pass


@lru_cache(maxsize=None)
def response_polynomial(m, n):
    """Integer coefficients of ``A[m, n] / eta**m`` in ascending powers of ``eta``.

    ``A[m, n] = sum_r (-1)**r C(m, r) (1 - r eta)**n``; the powers below ``m``
    cancel identically.
    """
    if n < m:
        return (0,)
    coeffs = []
    for i in range(n + 1):
        s = sum((-1) ** r * math.comb(m, r) * r ** i for r in range(m + 1))
        coeffs.append((-1) ** i * math.comb(n, i) * s)
    if any(coeffs[:m]):
        raise ArithmeticError("low powers failed to cancel")  # pragma: no cover
    return tuple(coeffs[m:])


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _poly_add(a, b):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, x in enumerate(a):
        out[i] += x
    for i, y in enumerate(b):
        out[i] += y
    return out


@lru_cache(maxsize=None)
def inversion_polynomials(n, order):
    """Exact row ``n`` of ``B**-1`` where ``B[m, l] = A[m, l] / eta**m``.

    Returns a tuple over ``m = 1..order`` of polynomials (ascending
    ``Fraction`` coefficients) such that
    ``P_n = sum_m poly_m(eta) / eta**m * C_m`` for states with at most
    ``order`` photons. Entries with ``m < n`` are zero.
    """
    if not 1 <= n <= order:
        raise ValueError("need 1 <= n <= order")
    row = {}
    for m in range(n, order + 1):
        if m == n:
            row[m] = [Fraction(1, math.factorial(n))]
            continue
        acc = [Fraction(0)]
        for l in range(n, m):
            acc = _poly_add(acc, _poly_mul(row[l], [Fraction(c) for c in response_polynomial(l, m)]))
        row[m] = [-c / math.factorial(m) for c in acc]
    polys = []
    for m in range(1, order + 1):
        p = row.get(m, [Fraction(0)])
        while len(p) > 1 and p[-1] == 0:
            p = p[:-1]
        polys.append(tuple(p))
    return tuple(polys)


def _eval_poly(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + float(c)
    return acc


@dataclass(frozen=True)
class InversionCoefficients:
    """Multipliers of ``C_1..C_order`` in the estimate of ``P_n`` (``n = 1`` by default)."""

    order: int
    eta: float
    coeffs: np.ndarray
    polys: tuple
    n: int = 1


def inversion_coefficients(order, eta, n=1):
    eta = check_efficiency(eta)
    polys = inversion_polynomials(n, order)
    coeffs = np.array([_eval_poly(p, eta) / eta ** m for m, p in enumerate(polys, start=1)])
    return InversionCoefficients(order, eta, coeffs, polys, n)


@dataclass(frozen=True)
class P1Estimate:
    value: float
    sigma: float = None
    order: int = None

    def __float__(self):
        return float(self.value)


def p1_truncated(stats, eta, m):
    """Few-detector estimate of ``P_1`` from ``C_1..C_m``.

    Exact whenever the state carries at most ``m`` photons. The uncertainty is
    propagated linearly from ``stats.sigma`` when present.
    """
    if m > stats.order:
        raise ValueError(f"estimate of order {m} needs C_1..C_{m}, only {stats.order} available")
    if m < 1:
        raise ValueError("m must be >= 1")
    coef = inversion_coefficients(m, eta).coeffs
    value = math.fsum(coef * stats.probs[:m])
    sigma = None
    if stats.sigma is not None:
        sigma = math.sqrt(math.fsum((coef * stats.sigma[:m]) ** 2))
    return P1Estimate(value, sigma, m)


def pn_solve(stats, eta, cutoff):
    """Solve ``C = A(eta) P`` for ``P_1..P_cutoff`` assuming ``P_n = 0`` beyond.

    Back-substitution from the highest order down; ``P_0`` closes the
    normalization. Negative components are returned unclipped; those more
    than five standard errors below zero are listed in ``meta["negative"]``.
    """
    eta = check_efficiency(eta)
    if cutoff > stats.order:
        raise ValueError(f"cutoff {cutoff} needs {cutoff} coincidence orders, have {stats.order}")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if eta < 0.2 and cutoff >= 5:
        warnings.warn(f"inverting {cutoff} orders at eta = {eta:.3g} amplifies noise strongly",
                      IllConditionedWarning, stacklevel=2)
    A = response_matrix(eta, cutoff, cutoff)[:, 1:]
    C = stats.probs[:cutoff]
    p = solve_triangular(A, C, lower=False)
    probs = np.concatenate([[1.0 - math.fsum(p)], p])
    meta = {"eta": eta}
    if stats.sigma is not None:
        Ainv = solve_triangular(A, np.eye(cutoff), lower=False)
        cov = Ainv @ np.diag(stats.sigma[:cutoff] ** 2) @ Ainv.T
        sig = np.sqrt(np.diag(cov))
        sig0 = math.sqrt(max(0.0, cov.sum()))
        sigma = np.concatenate([[sig0], sig])
        meta["sigma"] = sigma
        meta["negative"] = [int(n) for n in np.flatnonzero(probs < -5.0 * sigma)]
    return PhotonNumberDist(probs, 0.0, meta)


def truncation_scan(dist, eta, M=6):
    """``[(m, P1 estimate from C_1..C_m)]`` for ``m = 1..M`` on exact coincidences."""
    stats = coincidence_probs(dist, eta, M)
    return [(m, p1_truncated(stats, eta, m).value) for m in range(1, M + 1)]


class CoincidenceInverter(BaseEstimator, TransformerMixin):
    """Map rows of coincidence probabilities to photon-number estimates.

    Parameters
    ----------
    eta : float
        Per-detector efficiency.
    order : int
        Number of coincidence orders used.
    output : {"p1", "pn"}
        ``"p1"`` returns the truncated ``P_1`` estimate (one column);
        ``"pn"`` solves for ``P_0..P_order`` (``order + 1`` columns).
    """

    def __init__(self, eta=0.13, order=5, output="p1"):
        self.eta = eta
        self.order = order
        self.output = output

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        check_efficiency(self.eta)
        if self.output not in ("p1", "pn"):
            raise ValueError("output must be 'p1' or 'pn'")
        if X.shape[1] < self.order:
            raise ValueError(f"need at least {self.order} coincidence orders, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        self.coef_ = inversion_coefficients(self.order, self.eta).coeffs
        return self

    def transform(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        if self.output == "p1":
            return X[:, : self.order] @ self.coef_[:, None]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            rows = [pn_solve(CoincidenceStats(x), self.eta, self.order).probs for x in X]
        return np.vstack(rows)
