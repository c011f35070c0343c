from typing import NamedTuple

import torch

from utils.error_utils import DomainError
from utils.general_utils import DTYPE

DEFAULT_MIN_NODES = 8193
DEFAULT_NODES_PER_SAMPLE = 4
DEFAULT_PANELS_PER_GAP = 8


class QuadratureRule(NamedTuple):
    kind: str
    nodes: torch.Tensor
    weights: torch.Tensor
    panels_per_gap: int = DEFAULT_PANELS_PER_GAP

    @property
    def size(self):
        return self.nodes.shape[0]

    def integrate(self, values):
        # fixed-order accumulation along the node axis
        return torch.sum(self.weights * values, dim=-1)


class PiecewiseRule(NamedTuple):
    """Composite Simpson nodes laid out gap by gap between sorted breakpoints."""
    nodes: torch.Tensor
    weights: torch.Tensor
    left: torch.Tensor       # index of the breakpoint opening the gap of each node
    fraction: torch.Tensor   # relative position of each node inside its gap

    @property
    def size(self):
        return self.nodes.shape[0]

    def chunk(self, start, stop):
        return PiecewiseRule(*(field[start:stop] for field in self))

    def interpolate(self, values):
        """Linear interpolant through ``values`` (one row per breakpoint), evaluated at the nodes."""
        t = self.fraction.reshape(-1, *([1] * (values.dim() - 1)))
        return (1.0 - t) * values[self.left] + t * values[self.left + 1]


def simpson_rule(num_nodes, panels_per_gap=DEFAULT_PANELS_PER_GAP):
    """
    Composite Simpson rule on [0, 1] with an odd number of equispaced nodes.
    Weights h/3 * (1, 4, 2, 4, ..., 2, 4, 1); they sum to one.
    ``panels_per_gap`` is the minimum panel count per gap once the rule is split at a design.
    """
    if num_nodes < 3 or num_nodes % 2 == 0:
        raise DomainError(f"Simpson rule needs an odd node count >= 3, got {num_nodes}")
    h = 1.0 / (num_nodes - 1)
    nodes = torch.linspace(0.0, 1.0, num_nodes, dtype=DTYPE)
    weights = torch.full((num_nodes,), 2.0, dtype=DTYPE)
    weights[1::2] = 4.0
    weights[0] = 1.0
    weights[-1] = 1.0
    weights = weights * (h / 3.0)
    return QuadratureRule("simpson", nodes, weights, int(panels_per_gap))


def breakpoint_rule(breakpoints, base_intervals, panels_per_gap=DEFAULT_PANELS_PER_GAP):
    """
    Composite Simpson on every gap between consecutive breakpoints. Each gap gets an even
    panel count, at least ``panels_per_gap`` and enough that no panel is wider than
    1 / base_intervals. Integrands that are smooth between breakpoints keep the Simpson
    rate even when they have kinks at the breakpoints themselves.
    """
    breakpoints = torch.as_tensor(breakpoints, dtype=DTYPE).reshape(-1)
    if breakpoints.shape[0] < 2:
        raise DomainError("need at least two breakpoints")
    widths = torch.diff(breakpoints)
    if bool((widths < 0).any()):
        raise DomainError("breakpoints must be sorted")
    if panels_per_gap < 2 or panels_per_gap % 2:
        raise DomainError(f"panels per gap must be even and >= 2, got {panels_per_gap}")
    if base_intervals < 1:
        raise DomainError(f"base interval count must be >= 1, got {base_intervals}")

    panels = torch.clamp(torch.ceil(widths * int(base_intervals)).to(torch.long), min=int(panels_per_gap))
    panels = panels + panels % 2
    counts = panels + 1
    gaps = torch.arange(widths.shape[0])
    left = torch.repeat_interleave(gaps, counts)
    starts = torch.cumsum(counts, 0) - counts
    local = torch.arange(int(counts.sum())) - torch.repeat_interleave(starts, counts)
    per_node_panels = panels[left]
    fraction = local.to(DTYPE) / per_node_panels.to(DTYPE)
    nodes = torch.minimum(breakpoints[left] + fraction * widths[left], breakpoints[left + 1])

    coefficients = torch.full(local.shape, 2.0, dtype=DTYPE)
    coefficients[local % 2 == 1] = 4.0
    coefficients[(local == 0) | (local == per_node_panels)] = 1.0
    weights = coefficients * widths[left] / (3.0 * per_node_panels.to(DTYPE))
    return PiecewiseRule(nodes, weights, left, fraction)


def default_node_count(n, min_nodes=DEFAULT_MIN_NODES, per_sample=DEFAULT_NODES_PER_SAMPLE):
    num_nodes = max(int(min_nodes), per_sample * int(n) + 1)
    if num_nodes % 2 == 0:
        num_nodes += 1
    return num_nodes


def default_quadrature(n, min_nodes=DEFAULT_MIN_NODES, per_sample=DEFAULT_NODES_PER_SAMPLE,
                       panels_per_gap=DEFAULT_PANELS_PER_GAP):
    return simpson_rule(default_node_count(n, min_nodes, per_sample), panels_per_gap)


def refined(quadrature):
    """The same rule with every panel halved: 2N - 1 nodes and twice the panels per gap."""
    return simpson_rule(2 * quadrature.size - 1, 2 * quadrature.panels_per_gap)


def check_quadrature(quadrature, n):
    if quadrature.size < 4 * n + 1:
        raise DomainError(
            f"quadrature has {quadrature.size} nodes, at least 4n+1 = {4 * n + 1} are required"
        )
