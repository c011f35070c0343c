import logging
from typing import NamedTuple

import numpy as np
from scipy import integrate

from kernel.eigensystem import Eigensystem
from utils.error_utils import DomainError


class SeriesValue(NamedTuple):
    value: float
    partial: float     # sum over the supplied eigenvalues
    tail: float        # integral estimate of the terms beyond the truncation


def _power_law(eigenvalues, decay_beta=None):
    """(C, beta) with lambda_i ~ C i^{-beta}, fitted on the last half unless beta is known."""
    m = eigenvalues.shape[0]
    index = np.arange(1, m + 1, dtype=np.float64)
    if decay_beta is not None:
        return float(eigenvalues[-1] * m ** decay_beta), float(decay_beta)
    if m < 4:
        return 0.0, 0.0
    upper = index >= m / 2
    slope, intercept = np.polyfit(np.log(index[upper]), np.log(eigenvalues[upper]), 1)
    return float(np.exp(intercept)), float(-slope)


def _spectrum(eigenvalues):
    if isinstance(eigenvalues, Eigensystem):
        return np.asarray(eigenvalues.eigenvalues, dtype=np.float64), eigenvalues.decay_beta
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if eigenvalues.ndim != 1 or eigenvalues.shape[0] == 0 or np.any(eigenvalues <= 0):
        raise DomainError("eigenvalues must be a non-empty positive sequence")
    return eigenvalues, None


def _tail(term, eigenvalues, decay_beta):
    # sum_{i>M} f(i) ~ int_{M+1/2}^inf f(x) dx under the fitted power law
    scale, beta = _power_law(eigenvalues, decay_beta)
    if beta <= 1:
        logging.warning("eigenvalue tail does not look summable (beta={:.3f}); tail omitted".format(beta))
        return 0.0
    m = eigenvalues.shape[0]
    value, _ = integrate.quad(lambda x: term(scale * x ** -beta, x), m + 0.5, np.inf, limit=200)
    return float(value)


def _summed(term, eigenvalues, decay_beta):
    index = np.arange(1, eigenvalues.shape[0] + 1, dtype=np.float64)
    partial = float(np.sum(term(eigenvalues, index)))
    tail = _tail(term, eigenvalues, decay_beta)
    return SeriesValue(partial + tail, partial, tail)


def series_value(eigenvalues, p, lam):
    """sum_i (lambda_i^p / (lambda_i + lam))^2 i^{-1}, truncated sum plus integral tail."""
    if not p > 0:
        raise DomainError(f"series exponent p must be positive, got {p}")
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    eigenvalues, decay_beta = _spectrum(eigenvalues)
    return _summed(lambda ev, i: (ev ** p / (ev + lam)) ** 2 / i, eigenvalues, decay_beta)


def effective_dimension(eigenvalues, p, lam):
    """N_p(lam) = sum_i (lambda_i / (lambda_i + lam))^p."""
    if not p >= 1:
        raise DomainError(f"effective dimension needs p >= 1, got {p}")
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    eigenvalues, decay_beta = _spectrum(eigenvalues)
    return _summed(lambda ev, i: (ev / (ev + lam)) ** p, eigenvalues, decay_beta)
