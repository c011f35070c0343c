import json
import logging
import os

from texttable import Texttable

from theory import (
    NOISE_FREE,
    noisy,
    optimal_theta,
    phase_diagram as build_phase_diagram,
    phase_frame,
    predict_rates,
    write_phase_csv,
)
from utils.error_utils import ConfigError
from utils.system_utils import mkdir_p


def _fmt(value):
    return "-" if value is None else f"{value:.4g}"


def theory(cfg):
    """Closed-form exponents for one (s, beta, theta, noise) setting; optionally theta_op."""
    opts = cfg.theory
    mkdir_p(cfg.output_path)
    report = {}
    if opts.optimal:
        theta_op, rate_op = optimal_theta(float(opts.s), float(opts.beta))
        report["optimal"] = {"theta": theta_op, "rate": rate_op}
        logging.info("theta_op = {:.4g}, optimal rate = {:.4g}".format(theta_op, rate_op))
    if opts.theta is not None or not opts.optimal:
        theta = None if opts.theta is None or float(opts.theta) == 0 else float(opts.theta)
        noise = NOISE_FREE if opts.noiseless else noisy(float(opts.tau))
        prediction = predict_rates(float(opts.s), float(opts.beta), theta, noise)
        report["prediction"] = prediction._asdict()
        t = Texttable()
        t.add_rows([
            ["bias", "variance", "risk", "regime", "floor", "flags"],
            [_fmt(prediction.bias_exponent), _fmt(prediction.variance_exponent),
             _fmt(prediction.risk_exponent), prediction.regime, prediction.floor,
             " ".join(name for name in ("log_factor", "upper_bound", "unknown_upper", "boundary")
                      if getattr(prediction, name)) + ("" if prediction.covered else " not_covered")],
        ])
        logging.info("\n" + t.draw())
    with open(os.path.join(cfg.output_path, "theory.json"), "w") as f:
        json.dump(report, f, indent=2, default=str)
    return 0


def phase_diagram(cfg):
    """Raster CSV over the (theta, s) or (theta, tau) panel."""
    opts = cfg.phase
    if opts.panel == "s":
        diagram = build_phase_diagram(opts.theta_range, float(opts.beta), int(opts.resolution),
                                      s_range=opts.s_range)
    elif opts.panel == "tau":
        diagram = build_phase_diagram(opts.theta_range, float(opts.beta), int(opts.resolution),
                                      tau_range=opts.tau_range, s=float(opts.s))
    else:
        raise ConfigError(f"phase.panel: expected 's' or 'tau', got {opts.panel!r}")
    mkdir_p(cfg.output_path)
    path = os.path.join(cfg.output_path, f"phase_{opts.panel}.csv")
    write_phase_csv(diagram, path)
    counts = phase_frame(diagram)["regime"].value_counts().to_dict()
    logging.info("phase raster ({} cells) written to {}: {}".format(len(diagram.cells), path, counts))
    return 0
