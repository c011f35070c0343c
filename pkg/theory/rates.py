import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from utils.error_utils import DomainError

UNDERFITTING = "underfitting"
OVERFITTING = "overfitting"
INTERPOLATING = "interpolating"
NOISELESS = "noiseless"

NO_FLOOR = "none"
CONSTANT_SIGMA2 = "constant_sigma2"

SATURATION = 2.0
EXPONENT_ATOL = 1e-12


class Noise(NamedTuple):
    kind: str
    tau: Optional[float] = None   # sigma^2 = n^{-tau}; tau = 0 is constant noise


def noisy(tau=0.0):
    if not tau >= 0:
        raise DomainError(f"noise decay tau must be >= 0, got {tau}")
    return Noise("noisy", float(tau))


NOISE_FREE = Noise(NOISELESS, None)


class RatePrediction(NamedTuple):
    bias_exponent: Optional[float]
    variance_exponent: Optional[float]
    risk_exponent: Optional[float]
    regime: str
    floor: str
    log_factor: bool                        # the s = 2 case carries a log factor
    upper_bound: bool = False               # risk exponent is an O(.) statement only
    info_lower_exponent: Optional[float] = None
    covered: bool = True
    unknown_upper: bool = False
    boundary: bool = False                  # bias and variance exponents coincide


class ApproximationLaw(NamedTuple):
    case: str
    values: np.ndarray


def saturated(s):
    return min(float(s), SATURATION)


def _check_source(s, beta):
    if not s > 0:
        raise DomainError(f"smoothness s must be positive, got {s}")
    if not beta > 1:
        raise DomainError(f"decay beta must exceed 1, got {beta}")


def predict_rates(s, beta, theta, noise=Noise("noisy", 0.0)):
    """
    Closed-form exponents r in n^{-r} for KRR with lambda = c n^{-theta}.

    ``theta=None`` is kernel interpolation (lambda = 0), predicted as the theta >= beta case.
    ``noise`` is ``noisy(tau)`` for sigma^2 = n^{-tau} or ``NOISE_FREE``.
    """
    _check_source(s, beta)
    if theta is not None and not theta > 0:
        raise DomainError(f"theta must be positive (or None for interpolation), got {theta}")
    if noise.kind == "noisy" and not noise.tau >= 0:
        raise DomainError(f"noise decay tau must be >= 0, got {noise.tau}")

    s_tilde = saturated(s)
    log_factor = float(s) == SATURATION
    below = theta is not None and theta < beta

    if noise.kind == NOISELESS:
        if below:
            rate = s_tilde * theta
            return RatePrediction(rate, None, rate, NOISELESS, NO_FLOOR, log_factor)
        if s <= 1:
            # no proven statement for mis-specified targets beyond theta = beta
            return RatePrediction(None, None, None, NOISELESS, NO_FLOOR, log_factor, covered=False)
        rate = s_tilde * beta
        return RatePrediction(
            rate, None, rate, NOISELESS, NO_FLOOR, log_factor,
            upper_bound=True, info_lower_exponent=float(s) * beta,
        )

    tau = noise.tau
    if below:
        bias = s_tilde * theta
        variance = tau + 1.0 - theta / beta
        boundary = math.isclose(bias, variance, rel_tol=0.0, abs_tol=EXPONENT_ATOL)
        regime = UNDERFITTING if bias <= variance or boundary else OVERFITTING
        return RatePrediction(
            bias, variance, min(bias, variance), regime, NO_FLOOR, log_factor, boundary=boundary,
        )

    bias = s_tilde * beta
    floor = CONSTANT_SIGMA2 if tau == 0 else NO_FLOOR
    unknown_upper = tau > 0 and (s <= 1 or tau >= bias)
    return RatePrediction(
        bias, tau, tau, INTERPOLATING, floor, log_factor,
        covered=s > 1, unknown_upper=unknown_upper,
    )


def optimal_theta(s, beta) -> Tuple[float, float]:
    """theta_op = beta / (s~ beta + 1), where the bias and variance exponents balance."""
    _check_source(s, beta)
    s_tilde = saturated(s)
    return beta / (s_tilde * beta + 1.0), s_tilde * beta / (s_tilde * beta + 1.0)


def crossover_tau(s, beta, theta):
    """Noise decay tau at which s~ theta = tau + 1 - theta/beta (min switches argument)."""
    _check_source(s, beta)
    if not 0 < theta < beta:
        raise DomainError(f"crossover needs 0 < theta < beta, got theta={theta}")
    return saturated(s) * theta - 1.0 + theta / beta


def approximation_error_law(s, gamma, lambda_grid):
    """
    Order of ||f_lambda - f*||^2 in [H]^gamma:
    lambda^{s-gamma} if s-gamma < 2, lambda^2 ln(1/lambda) if s-gamma = 2, lambda^2 otherwise.
    """
    if not 0 <= gamma < s:
        raise DomainError(f"need 0 <= gamma < s, got gamma={gamma}, s={s}")
    lam = np.asarray(lambda_grid, dtype=np.float64)
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise DomainError("lambda values must lie in (0, 1)")
    gap = float(s) - float(gamma)
    if math.isclose(gap, SATURATION, rel_tol=0.0, abs_tol=EXPONENT_ATOL):
        return ApproximationLaw("lambda^2 ln(1/lambda)", lam ** 2 * np.log(1.0 / lam))
    if gap < SATURATION:
        return ApproximationLaw(f"lambda^{gap:g}", lam ** gap)
    return ApproximationLaw("lambda^2", lam ** 2)
