import numpy as np
import torch


class DomainError(ValueError):
    pass


class ConfigError(DomainError):
    pass


class SingularSystemError(RuntimeError):
    """
    Raised when the regularized kernel matrix is not numerically positive definite.
    ``pivot`` is the order of the first leading minor that failed (1-based).
    """

    def __init__(self, pivot, n, lam):
        self.pivot = pivot
        super().__init__(
            f"Cholesky factorization failed at pivot {pivot} of {n} "
            f"(leading minor of order {pivot} not positive definite, lambda={lam:g})"
        )


class UndefinedSmoothnessError(ValueError):
    pass


class RateFitError(ValueError):
    pass


def check_unit_interval(x, name="x"):
    if isinstance(x, torch.Tensor):
        bad = bool(((x < 0) | (x > 1) | torch.isnan(x)).any())
    else:
        arr = np.asarray(x, dtype=np.float64)
        bad = bool(((arr < 0) | (arr > 1) | np.isnan(arr)).any())
    if bad:
        raise DomainError(f"{name} must lie in [0, 1]")
