import math

import numpy as np
import pytest
import torch
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from scipy import integrate

from kernel import spectral_kernel
from kernel.spectral_kernel import cross_gram
from krr import conditional_mean_solution, factorize, predict, sample_design
from risk import (
    EXACT,
    MONTE_CARLO,
    bias_squared,
    breakpoint_rule,
    default_node_count,
    default_quadrature,
    excess_risk,
    monte_carlo_risk,
    population_bias,
    refined,
    risk_for_targets,
    simpson_rule,
    variance_exact,
)
from target import evaluate_target, synthesize_target
from theory import approximation_error_law
from utils.error_utils import DomainError


def test_simpson_rule_basics():
    rule = simpson_rule(8193)
    assert float(rule.weights.sum()) == pytest.approx(1.0, abs=1e-14)
    assert float(rule.integrate(rule.nodes)) == pytest.approx(0.5, abs=1e-14)
    assert bool((rule.weights > 0).all())
    for bad in (1, 2, 8192):
        with pytest.raises(DomainError):
            simpson_rule(bad)


def test_breakpoint_rule_follows_the_kinks():
    rule = breakpoint_rule([0.0, 0.3, 0.31, 1.0], base_intervals=16, panels_per_gap=4)
    # gap widths 0.3, 0.01, 0.69 get 6, 4 and 12 panels
    assert rule.size == 7 + 5 + 13
    assert float(rule.weights.sum()) == pytest.approx(1.0, abs=1e-14)
    # Simpson is exact on both sides of a kink that sits on a breakpoint
    assert float(rule.weights @ torch.abs(rule.nodes - 0.3)) == pytest.approx(0.29, abs=1e-14)
    values = torch.tensor([0.0, 3.0, -1.0, 2.0], dtype=torch.float64)
    expected = np.interp(rule.nodes.numpy(), [0.0, 0.3, 0.31, 1.0], values.numpy())
    assert np.allclose(rule.interpolate(values).numpy(), expected, rtol=0, atol=1e-14)
    assert rule.chunk(0, 7).size == 7
    with pytest.raises(DomainError):
        breakpoint_rule([0.5, 0.2], 4)
    with pytest.raises(DomainError):
        breakpoint_rule([0.0, 1.0], 4, panels_per_gap=3)


def test_refined_rule_halves_every_panel():
    rule = refined(simpson_rule(9, panels_per_gap=4))
    assert rule.size == 17
    assert rule.panels_per_gap == 8


def test_default_node_count():
    assert default_node_count(100) == 8193
    assert default_node_count(5000) == 20001
    assert default_node_count(2048) % 2 == 1
    assert default_quadrature(3000).size == 12001


def test_quadrature_must_resolve_the_design(min_kernel, named_targets):
    design = sample_design(100, 0.05, seed=0)
    with pytest.raises(DomainError):
        excess_risk(min_kernel, design, named_targets["sin2pi"], 1e-3, 0.05, simpson_rule(399))


def test_decomposition_identity(min_kernel, named_targets, quadrature):
    design = sample_design(150, 0.05, seed=4)
    for target in named_targets.values():
        breakdown = excess_risk(min_kernel, design, target, 1e-4, 0.05, quadrature)
        assert breakdown.method == EXACT
        assert breakdown.excess == pytest.approx(breakdown.bias2 + breakdown.variance, abs=1e-12)
        assert breakdown.bias2 >= 0 and breakdown.variance >= 0


def test_noiseless_risk_is_bias(min_kernel, named_targets, quadrature):
    design = sample_design(80, 0.0, seed=2)
    target = named_targets["cos2pi"]
    breakdown = excess_risk(min_kernel, design, target, 1e-3, 0.0, quadrature)
    assert breakdown.variance == 0.0
    assert breakdown.excess == breakdown.bias2
    assert variance_exact(min_kernel, design, 1e-3, 0.0, quadrature) == 0.0
    assert bias_squared(min_kernel, design, target, 1e-3, quadrature) == pytest.approx(breakdown.bias2, rel=1e-12)


def test_huge_ridge_leaves_the_whole_target_as_bias(min_kernel, named_targets, quadrature):
    design = sample_design(100, 0.0, seed=8)
    # int_0^1 sin^2(3 pi x / 2) dx = 1/2
    assert bias_squared(min_kernel, design, named_targets["sin3pi2"], 1e8, quadrature) == pytest.approx(0.5, abs=1e-4)


def test_interpolation_bias_shrinks_for_a_smooth_target(min_kernel, named_targets):
    target = named_targets["sin3pi2"]
    biases = []
    for n in (100, 1000):
        design = sample_design(n, 0.0, seed=6)
        biases.append(bias_squared(min_kernel, design, target, 0.0, default_quadrature(n)))
    assert biases[1] < biases[0] / 100.0


def test_bias_scales_quadratically_with_the_target(power_law, quadrature):
    kernel = spectral_kernel(power_law)
    design = sample_design(60, 0.05, seed=1)
    one = synthesize_target(power_law, 1.5)
    three = synthesize_target(power_law, 1.5, coefficient_rule=lambda i: 3.0)
    a = excess_risk(kernel, design, one, 1e-3, 0.05, quadrature)
    b = excess_risk(kernel, design, three, 1e-3, 0.05, quadrature)
    assert b.bias2 == pytest.approx(9.0 * a.bias2, rel=1e-9)
    assert b.variance == pytest.approx(a.variance, rel=1e-12)


def test_variance_decreases_with_the_ridge(min_kernel, quadrature):
    rng = np.random.default_rng(0)
    for trial in range(20):
        design = sample_design(int(rng.integers(10, 120)), 0.1, seed=trial)
        lams = np.sort(10.0 ** rng.uniform(-6, -1, size=2))
        small, large = (variance_exact(min_kernel, design, lam, 0.1, quadrature) for lam in lams)
        assert small >= large


def test_targets_share_one_pass(min_kernel, named_targets, quadrature):
    design = sample_design(90, 0.05, seed=12)
    targets = list(named_targets.values())
    shared = risk_for_targets(min_kernel, design, targets, 2e-4, 0.05, quadrature)
    for target, breakdown in zip(targets, shared):
        single = excess_risk(min_kernel, design, target, 2e-4, 0.05, quadrature)
        assert breakdown.bias2 == pytest.approx(single.bias2, rel=1e-12, abs=1e-18)
        assert breakdown.variance == single.variance


@pytest.mark.parametrize("n, lam, name", [
    (50, 0.005 * 50 ** -0.5, "cos2pi"),
    (1000, 0.0, "sin2pi"),
    (1000, 0.005 * 1000 ** -2.0, "sin2pi"),
    (1000, 0.005 * 1000 ** -3.0, "sin3pi2"),
])
def test_quadrature_refinement(min_kernel, named_targets, n, lam, name):
    design = sample_design(n, 0.05, seed=21)
    quadrature = default_quadrature(n)
    coarse = excess_risk(min_kernel, design, named_targets[name], lam, 0.05, quadrature)
    fine = excess_risk(min_kernel, design, named_targets[name], lam, 0.05, refined(quadrature))
    for quantity in ("bias2", "variance", "excess"):
        assert abs(getattr(coarse, quantity) - getattr(fine, quantity)) < 1e-8


def test_interpolation_variance_is_closed_form(min_kernel, quadrature):
    # lambda = 0 reproduces each label, so Z(x) is the hat basis of linear interpolation
    design = sample_design(400, 0.05, seed=17)
    xs = np.sort(design.X.numpy())
    expected = 0.05 * (xs[0] / 3.0 + 2.0 * (xs[-1] - xs[0]) / 3.0 + 1.0 - xs[-1])
    assert variance_exact(min_kernel, design, 0.0, 0.05, quadrature) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, 2e-3])
def test_min_kernel_integrals_match_adaptive_quadrature(min_kernel, named_targets, quadrature, lam):
    design = sample_design(8, 0.1, seed=5)
    target = named_targets["cos2pi"]
    solution = conditional_mean_solution(min_kernel, design, target, lam)
    _, L = factorize(min_kernel, design, lam)
    points = sorted(design.X.tolist())

    def gap(x):
        return float(predict(min_kernel, solution, [x])[0]) - evaluate_target(target, x)

    def spread(x):
        column = cross_gram(min_kernel, [x], design.X).T.contiguous()
        return float(torch.sum(torch.cholesky_solve(column, L) ** 2))

    options = dict(points=points, limit=200, epsabs=1e-14, epsrel=1e-12)
    bias = integrate.quad(lambda x: gap(x) ** 2, 0.0, 1.0, **options)[0]
    variance = integrate.quad(spread, 0.0, 1.0, **options)[0]
    breakdown = excess_risk(min_kernel, design, target, lam, 0.1, quadrature)
    assert breakdown.bias2 == pytest.approx(bias, rel=1e-8)
    assert breakdown.variance == pytest.approx(0.1 * variance, rel=1e-9)
    assert breakdown.residual <= 1e-10


def test_interpolation_bias_is_the_linear_interpolation_error(min_kernel, named_targets, quadrature):
    design = sample_design(12, 0.0, seed=9)
    target = named_targets["sin2pi"]
    xs = np.sort(design.X.numpy())
    labels = np.sin(2.0 * np.pi * xs)
    knots = np.concatenate([[0.0], xs, [1.0]])
    values = np.concatenate([[0.0], labels, labels[-1:]])
    expected = sum(
        integrate.quad(lambda x: (np.interp(x, knots, values) - np.sin(2.0 * np.pi * x)) ** 2, a, b,
                       epsabs=1e-15, epsrel=1e-12)[0]
        for a, b in zip(knots[:-1], knots[1:])
    )
    assert bias_squared(min_kernel, design, target, 0.0, quadrature) == pytest.approx(expected, rel=1e-8)


def test_exact_rows_record_the_solver_residual(min_kernel, named_targets):
    design = sample_design(2000, 0.05, seed=4)
    for lam in (0.0, 0.005 * 2000 ** -3.0):
        breakdown = excess_risk(min_kernel, design, named_targets["sin3pi2"], lam, 0.05, default_quadrature(2000))
        assert 0.0 <= breakdown.residual <= 1e-10


@seed(5)
@settings(max_examples=5, deadline=None)
@given(
    n=st.integers(min_value=20, max_value=200),
    log_lam=st.floats(min_value=-5.0, max_value=-1.0),
    sigma2=st.floats(min_value=0.01, max_value=1.0),
    name=st.sampled_from(["cos2pi", "sin2pi", "sin3pi2"]),
)
def test_exact_risk_agrees_with_monte_carlo(min_kernel, named_targets, quadrature, n, log_lam, sigma2, name):
    design = sample_design(n, sigma2, seed=n)
    target = named_targets[name]
    lam = 10.0 ** log_lam
    exact = excess_risk(min_kernel, design, target, lam, sigma2, quadrature)
    mc = monte_carlo_risk(min_kernel, design, target, lam, sigma2, 2000, quadrature, seed=[n, 99])
    assert mc.method == MONTE_CARLO
    assert abs(exact.excess - mc.excess) <= 3 * mc.se
    assert abs(exact.variance - mc.variance) <= 3 * mc.variance_se
    assert abs(exact.bias2 - mc.bias2) <= 3 * math.hypot(mc.se, mc.variance_se)


def test_single_noiseless_draw_is_exact(min_kernel, named_targets, quadrature):
    design = sample_design(40, 0.0, seed=3)
    target = named_targets["sin2pi"]
    exact = excess_risk(min_kernel, design, target, 1e-3, 0.0, quadrature)
    mc = monte_carlo_risk(min_kernel, design, target, 1e-3, 0.0, 1, quadrature, seed=0)
    assert mc.excess == pytest.approx(exact.excess, rel=1e-12)
    assert mc.bias2 == pytest.approx(exact.bias2, rel=1e-12)
    assert mc.variance == 0.0 and mc.se == 0.0


def test_monte_carlo_is_reproducible(min_kernel, named_targets, quadrature):
    design = sample_design(30, 0.2, seed=3)
    target = named_targets["cos2pi"]
    a = monte_carlo_risk(min_kernel, design, target, 1e-3, 0.2, 50, quadrature, seed=[1, 2, 3])
    b = monte_carlo_risk(min_kernel, design, target, 1e-3, 0.2, 50, quadrature, seed=[1, 2, 3])
    assert a == b
    with pytest.raises(DomainError):
        monte_carlo_risk(min_kernel, design, target, 1e-3, 0.2, 0, quadrature, seed=0)


@pytest.mark.parametrize("s, gamma", [(1.5, 0.0), (1.0, 0.5)])
def test_population_bias_follows_the_approximation_law(power_law, s, gamma):
    target = synthesize_target(power_law, s)
    lams = np.array([1e-2, 1e-3, 1e-4])
    law = approximation_error_law(s, gamma, lams)
    ratios = np.array([population_bias(target, lam, gamma) for lam in lams]) / law.values
    assert ratios.max() / ratios.min() < 2.0
    with pytest.raises(DomainError):
        population_bias(target, 0.0)
