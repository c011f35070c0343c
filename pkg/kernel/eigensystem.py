import math
from typing import NamedTuple

import numpy as np
import scipy.fft
import torch

from utils.error_utils import DomainError
from utils.general_utils import DTYPE, to_tensor

DEFAULT_TRUNCATION = 5000
# 2^19 Simpson panels keep the projection error below 1e-12 up to i = 5000
DEFAULT_PROJECTION_INTERVALS = 2 ** 19

QUARTER_WAVE = "quarter_wave"   # e_i(x) = sqrt(2) sin((2i-1) pi x / 2)
HALF_WAVE = "half_wave"         # e_i(x) = sqrt(2) sin(i pi x)


class Eigensystem(NamedTuple):
    """
    Truncated Mercer pairs (lambda_i, e_i), i = 1..M, on [0, 1] with the uniform measure.
    Every shipped family is a sine family, so e_i is stored through its frequency.
    """
    eigenvalues: np.ndarray
    frequencies: np.ndarray
    decay_beta: float
    family: str

    @property
    def truncation(self):
        return self.eigenvalues.shape[0]


def _check_truncation(truncation):
    if int(truncation) < 1:
        raise DomainError(f"truncation must be a positive integer, got {truncation}")
    return int(truncation)


def min_kernel_eigensystem(truncation=DEFAULT_TRUNCATION):
    truncation = _check_truncation(truncation)
    index = np.arange(1, truncation + 1, dtype=np.float64)
    frequencies = (2.0 * index - 1.0) * math.pi / 2.0
    return Eigensystem(
        eigenvalues=frequencies ** -2.0,
        frequencies=frequencies,
        decay_beta=2.0,
        family=QUARTER_WAVE,
    )


def power_law_eigensystem(beta, truncation=DEFAULT_TRUNCATION):
    if not beta > 1:
        raise DomainError(f"decay beta must exceed 1, got {beta}")
    truncation = _check_truncation(truncation)
    index = np.arange(1, truncation + 1, dtype=np.float64)
    return Eigensystem(
        eigenvalues=index ** -float(beta),
        frequencies=index * math.pi,
        decay_beta=float(beta),
        family=HALF_WAVE,
    )


def eigenfunctions(eigensystem, x, indices=None):
    """
    Values e_i(x) as a (len(x), len(indices)) tensor; ``indices`` are 1-based.
    """
    x = to_tensor(x).reshape(-1)
    if indices is None:
        freqs = eigensystem.frequencies
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.min() < 1 or indices.max() > eigensystem.truncation:
            raise DomainError(f"eigen-index outside 1..{eigensystem.truncation}")
        freqs = eigensystem.frequencies[indices - 1]
    freqs = torch.as_tensor(freqs, dtype=DTYPE)
    return math.sqrt(2.0) * torch.sin(x[:, None] * freqs[None, :])


def eigenfunction(eigensystem, index, x):
    return eigenfunctions(eigensystem, x, [index])[:, 0]


def project_coefficients(eigensystem, func, intervals=DEFAULT_PROJECTION_INTERVALS):
    """
    Composite-Simpson projection b_i = <func, e_i> for i = 1..M.

    With x_j = j / N the Simpson sum sum_j w_j f(x_j) sqrt(2) sin(omega_i x_j) is a
    discrete sine transform of g_j = w_j f(x_j): DST-III for quarter-wave sines,
    DST-I for half-wave sines. ``func`` maps a float64 tensor to a tensor.
    """
    intervals = int(intervals)
    if intervals % 2 != 0 or intervals < 2 * eigensystem.truncation:
        raise DomainError("projection needs an even number of intervals >= 2M")

    h = 1.0 / intervals
    x = torch.linspace(0.0, 1.0, intervals + 1, dtype=DTYPE)
    weights = np.full(intervals + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = 1.0
    weights[-1] = 1.0
    g = weights * (h / 3.0) * func(x).detach().cpu().numpy().astype(np.float64)

    if eigensystem.family == QUARTER_WAVE:
        # y[k] = (-1)^k v[N-1] + 2 sum_{m<N-1} v[m] sin(pi (2k+1)(m+1) / 2N), m+1 = j
        v = g[1:].copy()
        v[:-1] *= 0.5
        sums = scipy.fft.dst(v, type=3)
    elif eigensystem.family == HALF_WAVE:
        # y[k] = 2 sum_m v[m] sin(pi (k+1)(m+1) / N), m+1 = j = 1..N-1
        v = 0.5 * g[1:-1]
        sums = scipy.fft.dst(v, type=1)
    else:
        raise DomainError(f"no fast projection for eigensystem family {eigensystem.family!r}")
    return math.sqrt(2.0) * sums[:eigensystem.truncation]
