import math
from typing import NamedTuple, List

import numpy as np
import torch

from kernel.spectral_kernel import CLOSED_FORM_MIN, cross_gram
from krr.ridge import factorize, relative_residual
from target.target_model import evaluate_target
from utils.error_utils import DomainError
from utils.general_utils import DTYPE
from utils.quadrature_utils import breakpoint_rule, check_quadrature

EXACT = "exact"
MONTE_CARLO = "monte_carlo"
FAILED = "failed"

NODE_CHUNK = 2048


class RiskBreakdown(NamedTuple):
    bias2: float
    variance: float
    excess: float
    method: str
    n: int
    lam: float
    sigma2: float
    se: float = 0.0            # Monte Carlo standard error of the excess risk
    variance_se: float = 0.0   # Monte Carlo standard error of the variance
    residual: float = 0.0      # ||A w - f*(X)|| / ||f*(X)|| of the noiseless-label solve


def failed_breakdown(n, lam, sigma2):
    nan = float("nan")
    return RiskBreakdown(nan, nan, nan, FAILED, int(n), float(lam), float(sigma2), nan, nan, nan)


def _node_chunks(quadrature):
    for start in range(0, quadrature.size, NODE_CHUNK):
        yield quadrature.nodes[start:start + NODE_CHUNK], quadrature.weights[start:start + NODE_CHUNK]


def _smoother_columns(kernel, design, L, nodes):
    # Z = (K + n lambda I)^{-1} k(X, x) for a block of nodes: tilde f(x) = Z^T f*(X)
    Kq = cross_gram(kernel, nodes, design.X)
    return torch.cholesky_solve(Kq.T.contiguous(), L)


def _design_breakpoints(design):
    order = torch.argsort(design.X)
    edges = torch.tensor([0.0, 1.0], dtype=DTYPE)
    return order, torch.cat([edges[:1], design.X[order], edges[1:]])


def _breakpoint_values(values, order):
    # min(0, X) = 0, and min(x, X) stops changing past the last design point
    ordered = values[order]
    return torch.cat([torch.zeros_like(ordered[:1]), ordered, ordered[-1:]])


def _design_rule(design, quadrature):
    order, breakpoints = _design_breakpoints(design)
    return order, breakpoint_rule(breakpoints, quadrature.size - 1, quadrature.panels_per_gap)


def _smoothed_blocks(kernel, design, L, lam, columns, quadrature):
    """
    Yields (nodes, weights, values) with values[:, j] the ridge smoother applied to
    columns[:, j], evaluated at the nodes.

    For k = min(x, y) the smoother is linear between consecutive design points, so it is
    interpolated from its values K A^{-1} columns = columns - n lambda A^{-1} columns at
    the design and integrated on a rule split at the design points.
    """
    if kernel.kind == CLOSED_FORM_MIN:
        fitted = columns - design.n * lam * torch.cholesky_solve(columns, L) if lam > 0 else columns
        order, rule = _design_rule(design, quadrature)
        values = _breakpoint_values(fitted, order)
        for start in range(0, rule.size, NODE_CHUNK):
            piece = rule.chunk(start, start + NODE_CHUNK)
            yield piece.nodes, piece.weights, piece.interpolate(values)
        return
    for nodes, weights in _node_chunks(quadrature):
        Z = _smoother_columns(kernel, design, L, nodes)
        yield nodes, weights, Z.T @ columns


def _piecewise_variance(design, L, lam):
    """
    int ||Z(x)||^2 dx for the min kernel. Z is linear on every gap between breakpoints, so
    the gap integral (b - a) (|u|^2 + u.v + |v|^2) / 3 is what Simpson returns there.
    Z at the design points are the columns of K A^{-1} = I - n lambda A^{-1}.
    """
    order, breakpoints = _design_breakpoints(design)
    widths = torch.diff(breakpoints)
    if lam > 0:
        smoother = torch.eye(design.n, dtype=DTYPE) - design.n * lam * torch.cholesky_inverse(L)
        columns = smoother[:, order]
        squares = torch.sum(columns ** 2, dim=0)
        cross = torch.sum(columns[:, :-1] * columns[:, 1:], dim=0)
    else:
        squares = torch.ones(design.n, dtype=DTYPE)
        cross = torch.zeros(design.n - 1, dtype=DTYPE)
    inner = torch.sum(widths[1:-1] * (squares[:-1] + cross + squares[1:])) / 3.0
    # Z ramps up from 0 on the first gap and is flat on the last one
    return float(widths[0] * squares[0] / 3.0 + inner + widths[-1] * squares[-1])


def _exact_pass(kernel, design, targets, lam, quadrature, with_variance=True):
    check_quadrature(quadrature, design.n)
    A, L = factorize(kernel, design, lam)
    labels = torch.stack([evaluate_target(t, design.X) for t in targets], dim=1)
    residual = relative_residual(A, torch.cholesky_solve(labels, L), labels)

    bias = torch.zeros(len(targets), dtype=DTYPE)
    if kernel.kind == CLOSED_FORM_MIN:
        for nodes, weights, fitted in _smoothed_blocks(kernel, design, L, lam, labels, quadrature):
            truth = torch.stack([evaluate_target(t, nodes) for t in targets], dim=1)
            bias = bias + weights @ (fitted - truth) ** 2
        variance_unit = _piecewise_variance(design, L, lam) if with_variance else 0.0
        return bias.tolist(), variance_unit, residual

    variance_unit = torch.zeros((), dtype=DTYPE)
    for nodes, weights in _node_chunks(quadrature):
        Z = _smoother_columns(kernel, design, L, nodes)
        truth = torch.stack([evaluate_target(t, nodes) for t in targets], dim=1)
        bias = bias + weights @ (Z.T @ labels - truth) ** 2
        variance_unit = variance_unit + weights @ torch.sum(Z ** 2, dim=0)
    return bias.tolist(), float(variance_unit), residual


def bias_squared(kernel, design, target, lam, quadrature):
    """||tilde f_lambda - f*||^2_{L2} with tilde f_lambda the noise-conditional mean predictor."""
    bias, _, _ = _exact_pass(kernel, design, [target], lam, quadrature, with_variance=False)
    return bias[0]


def variance_exact(kernel, design, lam, sigma2, quadrature):
    """sigma^2 int k(x,X)^T (K + n lambda I)^{-2} k(X,x) dx, as sigma^2 int ||Z(x)||^2 dx."""
    if sigma2 < 0:
        raise DomainError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return 0.0
    check_quadrature(quadrature, design.n)
    _, L = factorize(kernel, design, lam)
    if kernel.kind == CLOSED_FORM_MIN:
        return float(sigma2) * _piecewise_variance(design, L, lam)
    variance_unit = torch.zeros((), dtype=DTYPE)
    for nodes, weights in _node_chunks(quadrature):
        Z = _smoother_columns(kernel, design, L, nodes)
        variance_unit = variance_unit + weights @ torch.sum(Z ** 2, dim=0)
    return float(sigma2) * float(variance_unit)


def risk_for_targets(kernel, design, targets, lam, sigma2, quadrature) -> List[RiskBreakdown]:
    """Exact breakdowns for several targets sharing one design, factorization and variance."""
    if sigma2 < 0:
        raise DomainError(f"noise variance must be >= 0, got {sigma2}")
    bias, variance_unit, residual = _exact_pass(kernel, design, targets, lam, quadrature,
                                                with_variance=sigma2 > 0)
    variance = float(sigma2) * variance_unit
    return [
        RiskBreakdown(b, variance, b + variance, EXACT, design.n, float(lam), float(sigma2),
                      residual=residual)
        for b in bias
    ]


def excess_risk(kernel, design, target, lam, sigma2, quadrature):
    return risk_for_targets(kernel, design, [target], lam, sigma2, quadrature)[0]


def monte_carlo_risk(kernel, design, target, lam, sigma2, draws, quadrature, seed):
    """
    Empirical breakdown over ``draws`` independent noise vectors on a fixed design.

    excess   = mean_d ||f_hat_d - f*||^2
    variance = unbiased spread of f_hat_d around their mean
    bias2    = ||mean_d f_hat_d - f*||^2 - variance / draws   (clipped at 0)
    """
    draws = int(draws)
    if draws < 1:
        raise DomainError(f"need at least one Monte Carlo draw, got {draws}")
    check_quadrature(quadrature, design.n)
    seed_sequence = np.random.SeedSequence(seed if isinstance(seed, (int, np.integer)) else list(seed))
    rng = np.random.default_rng(seed_sequence)
    noise = torch.as_tensor(rng.standard_normal((design.n, draws)) * math.sqrt(sigma2), dtype=DTYPE)

    A, L = factorize(kernel, design, lam)
    labels = evaluate_target(target, design.X)[:, None]
    residual = relative_residual(A, torch.cholesky_solve(labels, L), labels)
    # the smoother is linear: one pass over [labels | noise | mean noise]
    columns = torch.cat([labels, noise, noise.mean(dim=1, keepdim=True)], dim=1)
    loss = torch.zeros(draws, dtype=DTYPE)
    spread = torch.zeros(draws, dtype=DTYPE)
    mean_gap = torch.zeros((), dtype=DTYPE)
    for nodes, weights, values in _smoothed_blocks(kernel, design, L, lam, columns, quadrature):
        gap = values[:, :1] - evaluate_target(target, nodes)[:, None]
        fluctuation = values[:, 1:-1]
        mean_fluctuation = values[:, -1:]
        loss = loss + weights @ (gap + fluctuation) ** 2
        spread = spread + weights @ (fluctuation - mean_fluctuation) ** 2
        mean_gap = mean_gap + weights @ (gap + mean_fluctuation)[:, 0] ** 2

    loss = loss.numpy()
    if draws > 1:
        spread = spread.numpy() * draws / (draws - 1)
        variance = float(np.mean(spread))
        variance_se = float(np.std(spread, ddof=1) / math.sqrt(draws))
        se = float(np.std(loss, ddof=1) / math.sqrt(draws))
    else:
        variance = 0.0
        variance_se = 0.0
        se = 0.0
    bias2 = max(float(mean_gap) - variance / draws, 0.0)
    return RiskBreakdown(
        bias2=bias2,
        variance=variance,
        excess=float(np.mean(loss)),
        method=MONTE_CARLO,
        n=design.n,
        lam=float(lam),
        sigma2=float(sigma2),
        se=se,
        variance_se=variance_se,
        residual=residual,
    )


def population_bias(target, lam, gamma=0.0):
    """
    ||f_lambda - f*||^2 in [H]^gamma for the population regularized solution
    f_lambda = (T + lambda)^{-1} T f*: sum_i b_i^2 (lambda / (lambda_i + lambda))^2 lambda_i^{-gamma}.
    """
    if not lam > 0:
        raise DomainError(f"population bias needs lambda > 0, got {lam}")
    eigenvalues = target.eigensystem.eigenvalues
    shrink = lam / (eigenvalues + lam)
    return float(np.sum(target.coefficients ** 2 * shrink ** 2 * eigenvalues ** (-gamma)))
