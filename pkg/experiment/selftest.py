import logging
import math
from typing import NamedTuple

import numpy as np
import torch
from texttable import Texttable

from kernel import get_kernel
from krr import RESIDUAL_TOL, conditional_mean_solution, sample_design, sample_labels, solve
from risk import default_quadrature, excess_risk, monte_carlo_risk, refined
from target import get_target
from theory import effective_dimension, series_value
from kernel.eigensystem import min_kernel_eigensystem, power_law_eigensystem
from utils.general_utils import stream_entropy, trial_rng

IDENTITY_ATOL = 1e-12
REFINEMENT_ATOL = 1e-8

# (n, lambda): a ridge cell and two cells at interpolation scale
REFINEMENT_CELLS = ((50, 0.005 * 50 ** -0.5), (1000, 0.0), (1000, 0.005 * 1000 ** -3.0))
RESIDUAL_SIZES = (200, 1000, 5000)
NOISY_RESIDUAL_SIZE = 200


class SelfCheck(NamedTuple):
    name: str
    value: float
    bound: float
    passed: bool


def oracle_cells(seed, count, targets, n_range=(20, 200)):
    """Random (n, lambda, sigma2, target) cells drawn from a dedicated stream."""
    rng = trial_rng(seed, "selftest/cells")
    cells = []
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        lam = float(10.0 ** rng.uniform(-5.0, -1.0))
        sigma2 = float(rng.uniform(0.01, 1.0))
        target = targets[int(rng.integers(len(targets)))]
        cells.append((i, n, lam, sigma2, target))
    return cells


def oracle_checks(kernel, targets, seed, count, draws, se_multiplier=3.0):
    checks = []
    for i, n, lam, sigma2, target in oracle_cells(seed, count, targets):
        design = sample_design(n, sigma2, seed=stream_entropy(seed, "selftest/design", i))
        quadrature = default_quadrature(n)
        exact = excess_risk(kernel, design, target, lam, sigma2, quadrature)
        mc = monte_carlo_risk(kernel, design, target, lam, sigma2, draws, quadrature,
                              stream_entropy(seed, "selftest/noise", i))
        name = f"cell{i}:{target.name}/n={n}/lambda={lam:.2e}/sigma2={sigma2:.3f}"
        bounds = {
            "excess": se_multiplier * mc.se,
            "variance": se_multiplier * mc.variance_se,
            "bias2": se_multiplier * math.hypot(mc.se, mc.variance_se),
        }
        for quantity, bound in bounds.items():
            gap = abs(getattr(exact, quantity) - getattr(mc, quantity))
            checks.append(SelfCheck(f"{name}/{quantity}", gap, bound, gap <= bound))
        identity = abs(exact.excess - exact.bias2 - exact.variance)
        checks.append(SelfCheck(f"{name}/identity", identity, IDENTITY_ATOL, identity <= IDENTITY_ATOL))
    return checks


def refinement_check(kernel, target, seed, cells=REFINEMENT_CELLS, sigma2=0.05):
    """Halving every quadrature panel moves each exact quantity by less than 1e-8."""
    checks = []
    for n, lam in cells:
        design = sample_design(n, sigma2, seed=stream_entropy(seed, "selftest/refinement", n))
        quadrature = default_quadrature(n)
        coarse = excess_risk(kernel, design, target, lam, sigma2, quadrature)
        fine = excess_risk(kernel, design, target, lam, sigma2, refined(quadrature))
        for quantity in ("bias2", "variance", "excess"):
            change = abs(getattr(coarse, quantity) - getattr(fine, quantity))
            checks.append(SelfCheck(f"refinement/n={n}/lambda={lam:.1e}/{quantity}", change, REFINEMENT_ATOL,
                                    change < REFINEMENT_ATOL))
    return checks


def residual_check(kernel, target, seed, sizes=RESIDUAL_SIZES):
    """
    Reproduction residuals of the noiseless-label solve, which every exact cell relies on,
    at sweep-scale n. Noisy labels are checked on small designs only: near interpolation
    their residual is bounded below by the rounding of A w itself.
    """
    checks = []
    for n in sizes:
        design = sample_design(n, 0.05, seed=stream_entropy(seed, "selftest/residual", n))
        for lam in (0.0, 1e-6, 1e-2):
            solution = conditional_mean_solution(kernel, design, target, lam)
            checks.append(SelfCheck(f"residual/n={n}/lambda={lam:g}", solution.residual, RESIDUAL_TOL,
                                    solution.residual <= RESIDUAL_TOL))
            if n <= NOISY_RESIDUAL_SIZE:
                noisy = solve(kernel, design, sample_labels(design, target), lam)
                checks.append(SelfCheck(f"residual/n={n}/lambda={lam:g}/noisy", noisy.residual, RESIDUAL_TOL,
                                        noisy.residual <= RESIDUAL_TOL))
    return checks


def _band(values, factor):
    values = np.asarray(values, dtype=np.float64)
    return float(values.max() / values.min()), factor


def sum_checks():
    checks = []
    min_spectrum = min_kernel_eigensystem()
    lams = np.logspace(-6, -2, 9)
    spread, factor = _band([effective_dimension(min_spectrum, 1, lam).value * lam ** 0.5 for lam in lams], 2.0)
    checks.append(SelfCheck("effective_dimension/N1*sqrt(lambda)", spread, factor, spread <= factor))

    eigensystem = power_law_eigensystem(2.0)
    lams = np.array([1e-3, 1e-4, 1e-5, 1e-6])
    normalizers = {
        0.5: lambda lam: lam,                       # Theta(lambda^{2(p-1)}) = lambda^{-1}
        1.0: lambda lam: 1.0 / math.log(1.0 / lam),  # Theta(ln 1/lambda)
        1.5: lambda lam: 1.0,                       # Theta(1)
    }
    for p, normalize in normalizers.items():
        values = [series_value(eigensystem, p, lam).value * normalize(lam) for lam in lams]
        spread, factor = _band(values, 1.2 / 0.8)
        checks.append(SelfCheck(f"series_value/p={p:g}", spread, factor, spread <= factor))
    return checks


def selftest(cfg):
    """Oracle equivalence and numerical hygiene; nonzero exit if any check fails."""
    torch.set_num_threads(int(cfg.torch_threads))
    kernel = get_kernel(cfg.kernel)
    targets = [get_target(name, kernel.eigensystem) for name in cfg.targets]
    seed = int(cfg.seed)

    checks = oracle_checks(kernel, targets, seed, int(cfg.selftest.cells), int(cfg.oracle.draws),
                           float(cfg.selftest.se_multiplier))
    checks += refinement_check(kernel, targets[0], seed)
    checks += residual_check(kernel, targets[0], seed)
    checks += sum_checks()

    t = Texttable(max_width=0)
    t.set_cols_align(["l", "r", "r", "c"])
    t.add_rows([["check", "value", "bound", "pass"]] + [
        [c.name, f"{c.value:.3e}", f"{c.bound:.3e}", "ok" if c.passed else "FAIL"] for c in checks
    ])
    logging.info("\n" + t.draw())
    failed = [c for c in checks if not c.passed]
    logging.info("selftest: {} of {} checks passed".format(len(checks) - len(failed), len(checks)))
    return 1 if failed else 0
