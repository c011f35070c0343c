from typing import NamedTuple

import numpy as np
import torch

from kernel.eigensystem import Eigensystem, eigenfunctions, eigenfunction
from utils.error_utils import DomainError, check_unit_interval
from utils.general_utils import DTYPE, to_tensor

CLOSED_FORM_MIN = "closed_form_min"
SPECTRAL_TRUNCATED = "spectral_truncated"

# rows per block when a kernel matrix would not fit comfortably in memory
ROW_CHUNK = 2048


class KernelSpec(NamedTuple):
    kind: str
    eigensystem: Eigensystem
    sup_bound: float    # kappa^2 >= sup_x k(x, x)


def min_kernel(eigensystem):
    return KernelSpec(CLOSED_FORM_MIN, eigensystem, 1.0)


def spectral_kernel(eigensystem):
    # sup_x e_i(x)^2 = 2 for every sine family
    return KernelSpec(SPECTRAL_TRUNCATED, eigensystem, float(2.0 * np.sum(eigensystem.eigenvalues)))


def cross_gram(kernel, x, y):
    """k(x_a, y_b) as a (len(x), len(y)) float64 tensor."""
    x = to_tensor(x).reshape(-1)
    y = to_tensor(y).reshape(-1)
    check_unit_interval(x)
    check_unit_interval(y)
    if kernel.kind == CLOSED_FORM_MIN:
        return torch.minimum(x[:, None], y[None, :])
    if kernel.kind == SPECTRAL_TRUNCATED:
        lam = torch.as_tensor(kernel.eigensystem.eigenvalues, dtype=DTYPE)
        phi_x = eigenfunctions(kernel.eigensystem, x)
        phi_y = eigenfunctions(kernel.eigensystem, y)
        return (phi_x * lam[None, :]) @ phi_y.T
    raise DomainError(f"unknown kernel kind {kernel.kind!r}")


def eval_kernel(kernel, x, y):
    return float(cross_gram(kernel, [float(x)], [float(y)])[0, 0])


def gram(kernel, X):
    X = to_tensor(X).reshape(-1)
    if X.shape[0] == 0:
        raise DomainError("gram of an empty design")
    K = cross_gram(kernel, X, X)
    # exact symmetry; the spectral product is symmetric only up to rounding
    return 0.5 * (K + K.T)


def mercer_gap(kernel, x):
    """x - sum_{i<=M} lambda_i e_i(x)^2, the truncation gap of the min-kernel diagonal."""
    x = to_tensor(x).reshape(-1)
    check_unit_interval(x)
    lam = torch.as_tensor(kernel.eigensystem.eigenvalues, dtype=DTYPE)
    diagonal = (eigenfunctions(kernel.eigensystem, x) ** 2) @ lam
    return x - diagonal


def verify_eigensystem(kernel, index, quadrature):
    """
    max_x |int k(x, y) e_i(y) dy - lambda_i e_i(x)| over the quadrature nodes,
    with the integral taken by the same quadrature rule.
    """
    if not 1 <= index <= kernel.eigensystem.truncation:
        raise DomainError(f"eigen-index {index} outside 1..{kernel.eigensystem.truncation}")
    nodes = quadrature.nodes
    e_i = eigenfunction(kernel.eigensystem, index, nodes)
    weighted = quadrature.weights * e_i
    lam_i = float(kernel.eigensystem.eigenvalues[index - 1])

    residual = 0.0
    for start in range(0, nodes.shape[0], ROW_CHUNK):
        rows = nodes[start:start + ROW_CHUNK]
        integral = cross_gram(kernel, rows, nodes) @ weighted
        gap = torch.abs(integral - lam_i * e_i[start:start + ROW_CHUNK])
        residual = max(residual, float(gap.max()))
    return residual


def orthonormality_gap(eigensystem, count, quadrature):
    """max_ij |<e_i, e_j>_Q - delta_ij| for i, j <= count under the quadrature rule."""
    phi = eigenfunctions(eigensystem, quadrature.nodes, np.arange(1, count + 1))
    gram_q = phi.T @ (quadrature.weights[:, None] * phi)
    return float(torch.abs(gram_q - torch.eye(count, dtype=DTYPE)).max())
