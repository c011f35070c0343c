import math
from typing import NamedTuple, List

import numpy as np
import pandas as pd

from theory.rates import predict_rates, crossover_tau, noisy
from utils.error_utils import DomainError

S_PANEL = "s"
TAU_PANEL = "tau"


class PhaseCell(NamedTuple):
    theta: float
    axis_value: float            # s on the (theta, s) panel, tau on the (theta, tau) panel
    regime: str
    exponent: float
    flags: str
    crossover_tau: float         # NaN off the (theta, tau) panel or for theta >= beta


class PhaseDiagram(NamedTuple):
    panel: str
    beta: float
    cells: List[PhaseCell]


def _grid(value_range, resolution, name, allow_zero=False):
    low, high = float(value_range[0]), float(value_range[1])
    if low < 0 or (low == 0 and not allow_zero) or not low < high:
        raise DomainError(f"{name} range must satisfy 0 < low < high, got {value_range}")
    return np.linspace(low, high, int(resolution))


def _flags(prediction):
    flags = []
    if prediction.boundary:
        flags.append("boundary")
    if prediction.upper_bound:
        flags.append("upper_bound")
    if prediction.unknown_upper:
        flags.append("unknown_upper")
    if not prediction.covered:
        flags.append("not_covered")
    return "|".join(flags)


def phase_diagram(theta_range, beta, resolution, s_range=None, tau_range=None, s=1.5):
    """
    Raster of predict_rates over (theta, s) with constant noise, or over (theta, tau)
    at fixed ``s`` when ``tau_range`` is given.
    """
    if int(resolution) < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    if (s_range is None) == (tau_range is None):
        raise DomainError("give exactly one of s_range and tau_range")
    if not beta > 1:
        raise DomainError(f"decay beta must exceed 1, got {beta}")
    thetas = _grid(theta_range, resolution, "theta")

    cells = []
    if s_range is not None:
        for value in _grid(s_range, resolution, "s"):
            for theta in thetas:
                prediction = predict_rates(value, beta, theta, noisy(0.0))
                cells.append(PhaseCell(float(theta), float(value), prediction.regime,
                                       prediction.risk_exponent, _flags(prediction), math.nan))
        return PhaseDiagram(S_PANEL, float(beta), cells)

    # tau = 0 (constant noise) is a valid panel edge
    for tau in _grid(tau_range, resolution, "tau", allow_zero=True):
        for theta in thetas:
            prediction = predict_rates(s, beta, theta, noisy(tau))
            switch = crossover_tau(s, beta, theta) if theta < beta else math.nan
            cells.append(PhaseCell(float(theta), float(tau), prediction.regime,
                                   prediction.risk_exponent, _flags(prediction), switch))
    return PhaseDiagram(TAU_PANEL, float(beta), cells)


def phase_frame(diagram):
    frame = pd.DataFrame(
        [(c.theta, c.axis_value, c.regime, c.exponent, c.flags, c.crossover_tau) for c in diagram.cells],
        columns=["theta", diagram.panel, "regime", "exponent", "flags", "crossover_tau"],
    )
    if diagram.panel == S_PANEL:
        frame = frame.drop(columns=["crossover_tau"])
    return frame


def write_phase_csv(diagram, path):
    phase_frame(diagram).to_csv(path, index=False, float_format="%.6g")
