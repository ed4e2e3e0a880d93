"""Input validation helpers shared by the public functions and estimators."""
import math
import numbers

import numpy as np


class CutoffError(ValueError):
    """Raised when a Fock-space cutoff is too small for the requested accuracy."""


class NonConvergenceError(RuntimeError):
    """Raised when an iterative fit fails to converge within its iteration cap."""


class DegenerateSourceError(ValueError):
    """Raised when a heralded source can never trigger (gain equal to one)."""


def check_gain(g, name="g"):
    g = float(g)
    if not math.isfinite(g) or g < 1.0:
        raise ValueError(f"{name} must be a finite gain >= 1, got {g!r}")
    return g


def check_unit_interval(x, name):
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")
    return x


def check_efficiency(eta, name="eta"):
    eta = float(eta)
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {eta!r}")
    return eta


def check_occupation(n, name):
    if not isinstance(n, numbers.Integral) or n < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {n!r}")
    return int(n)


def check_cutoff(cutoff, name="cutoff"):
    return check_occupation(cutoff, name)


def check_probability_vector(p, name="probs", atol=1e-9):
    """Return ``p`` as a float array after checking entries are in [0, 1]."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return p
