from typing import NamedTuple, Sequence, Union

import numpy as np
import torch

from kernel.spectral_kernel import cross_gram, gram
from target.target_model import evaluate_target
from utils.error_utils import DomainError, SingularSystemError
from utils.general_utils import DTYPE, to_tensor

MIN_SEPARATION = 1e-12
RESIDUAL_TOL = 1e-10
ROW_CHUNK = 2048

DESIGN_STREAM = 0
LABEL_STREAM = 1


class Design(NamedTuple):
    X: torch.Tensor
    n: int
    sigma2: float
    seed: Union[int, Sequence[int]]


class RidgeSolution(NamedTuple):
    weights: torch.Tensor
    lam: float
    design: Design
    factor: torch.Tensor     # lower Cholesky factor of K + n lambda I
    residual: float          # ||(K + n lambda I) w - y|| / ||y||


def _seed_sequence(seed, *spawn_key):
    entropy = seed if isinstance(seed, (int, np.integer)) else [int(s) for s in seed]
    return np.random.SeedSequence(entropy, spawn_key=spawn_key)


def regularization(c, n, theta):
    """lambda = c n^{-theta}; ``theta=None`` marks an interpolation (lambda = 0) cell."""
    if theta is None:
        return 0.0
    return float(c) * float(n) ** (-float(theta))


def sample_design(n, sigma2=0.0, seed=0, distribution="uniform"):
    """n i.i.d. U[0,1] inputs; near-duplicates (gap <= 1e-12) are redrawn from the same stream."""
    if int(n) < 1:
        raise DomainError(f"design size must be >= 1, got {n}")
    if distribution != "uniform":
        raise DomainError(f"unsupported sampling distribution {distribution!r}")
    if sigma2 < 0:
        raise DomainError(f"noise variance must be >= 0, got {sigma2}")
    n = int(n)
    rng = np.random.default_rng(_seed_sequence(seed, DESIGN_STREAM))
    x = rng.random(n)
    while n > 1:
        order = np.argsort(x, kind="stable")
        duplicate = np.diff(x[order]) <= MIN_SEPARATION
        if not duplicate.any():
            break
        redraw = order[1:][duplicate]
        x[redraw] = rng.random(redraw.shape[0])
    return Design(torch.as_tensor(x, dtype=DTYPE), n, float(sigma2), seed)


def sample_labels(design, target, draw=0):
    """y_i = f*(x_i) + eps_i with eps_i ~ N(0, sigma2); ``draw`` selects an independent noise vector."""
    clean = evaluate_target(target, design.X)
    if design.sigma2 == 0:
        return clean
    rng = np.random.default_rng(_seed_sequence(design.seed, LABEL_STREAM, int(draw)))
    noise = rng.standard_normal(design.n) * np.sqrt(design.sigma2)
    return clean + torch.as_tensor(noise, dtype=DTYPE)


def relative_residual(A, weights, y):
    """Largest column-wise ||A w - y|| / ||y||; all-zero label columns count as exact."""
    y = y.reshape(y.shape[0], -1)
    weights = weights.reshape(y.shape)
    scale = torch.linalg.norm(y, dim=0)
    error = torch.linalg.norm(A @ weights - y, dim=0)
    ratio = error / torch.where(scale > 0, scale, torch.ones_like(scale))
    ratio = torch.where(scale > 0, ratio, torch.zeros_like(ratio))
    return float(ratio.max()) if ratio.numel() else 0.0


def factorize(kernel, design, lam):
    if lam < 0:
        raise DomainError(f"regularization must be >= 0, got {lam}")
    A = gram(kernel, design.X)
    if lam > 0:
        A = A + design.n * lam * torch.eye(design.n, dtype=DTYPE)
    L, info = torch.linalg.cholesky_ex(A)
    pivot = int(info)
    if pivot > 0:
        raise SingularSystemError(pivot, design.n, lam)
    return A, L


def solve(kernel, design, y, lam):
    """Representer-form KRR weights w = (K + n lambda I)^{-1} y via Cholesky, no jitter."""
    y = to_tensor(y).reshape(-1)
    if y.shape[0] != design.n:
        raise DomainError(f"label vector has length {y.shape[0]}, design has {design.n}")
    A, L = factorize(kernel, design, lam)
    weights = torch.cholesky_solve(y[:, None], L)[:, 0]
    # one step of iterative refinement
    weights = weights + torch.cholesky_solve((y - A @ weights)[:, None], L)[:, 0]
    residual = relative_residual(A, weights, y)
    return RidgeSolution(weights, float(lam), design, L, residual)


def conditional_mean_solution(kernel, design, target, lam):
    """E[f_hat | X]: by linearity the solve on the noiseless labels f*(X)."""
    return solve(kernel, design, evaluate_target(target, design.X), lam)


def predict(kernel, solution, x):
    x = to_tensor(x).reshape(-1)
    X = solution.design.X
    return torch.cat([
        cross_gram(kernel, x[start:start + ROW_CHUNK], X) @ solution.weights
        for start in range(0, x.shape[0], ROW_CHUNK)
    ])
