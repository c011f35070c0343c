import logging
import math
import os

import numpy as np
from texttable import Texttable

from experiment.sweep import RateCheck, exit_code, full_exponent, run_sweep, write_outputs
from theory import noisy, optimal_theta, predict_rates


def _fmt(empirical, predicted, best=False):
    theory = "-" if predicted is None else f"{predicted:.2f}"
    cell = f"{empirical:.2f} ({theory})"
    return f"*{cell}" if best else cell


def optimal_theta_checks(table, targets, thetas, beta):
    """Best empirical risk rate over the theta grid must sit at the grid point nearest theta_op."""
    checks = []
    for target in targets:
        risks = np.array([table[(target.name, theta)]["excess"][0] for theta in thetas])
        if np.all(np.isnan(risks)):
            continue
        best = thetas[int(np.nanargmax(risks))]
        theta_op, _ = optimal_theta(target.nominal_s, beta)
        nearest = thetas[int(np.argmin([abs(theta - theta_op) for theta in thetas]))]
        checks.append(RateCheck(f"{target.name}/optimal_theta", best, nearest, 0.0, best == nearest))
    return checks


def render_table1(table, targets, thetas):
    best = {}
    for target in targets:
        risks = [table[(target.name, theta)]["excess"][0] for theta in thetas]
        best[target.name] = thetas[int(np.nanargmax(risks))] if not np.all(np.isnan(risks)) else None

    header = ["theta", "Variance"]
    for target in targets:
        s = "inf" if math.isinf(target.nominal_s) else f"{target.nominal_s:g}"
        header += [f"{target.name} (s={s}) Bias", "Risk"]
    t = Texttable(max_width=0)
    t.set_cols_align(["r"] * len(header))
    rows = [header]
    for theta in thetas:
        variances = [table[(target.name, theta)]["variance"] for target in targets]
        row = [f"{theta:g}", _fmt(np.nanmean([v[0] for v in variances]), variances[0][1])]
        for target in targets:
            entry = table[(target.name, theta)]
            row.append(_fmt(*entry["bias2"]))
            row.append(_fmt(*entry["excess"], best=best[target.name] == theta))
        rows.append(row)
    t.add_rows(rows)
    return t.draw()


def table1(cfg):
    """Bias, variance and risk exponents per theta and target, each as 'empirical (theory)'."""
    result = run_sweep(cfg, "table1")
    write_outputs(result, cfg)

    beta = result.beta
    sigma2 = float(cfg.sigma2_list[0])
    cells = [cell for cell in result.cells if cell.sigma2 == sigma2 and cell.theta is not None]
    thetas = [cell.theta for cell in cells]
    table = {}
    for cell in cells:
        for target in result.targets:
            label = f"{target.name}/{cell.key}"
            prediction = predict_rates(target.nominal_s, beta, cell.theta, noisy(cell.sigma2_tau))
            table[(target.name, cell.theta)] = {
                "variance": (full_exponent(result.rates, label, "variance"), prediction.variance_exponent),
                "bias2": (full_exponent(result.rates, label, "bias2"), prediction.bias_exponent),
                "excess": (full_exponent(result.rates, label, "excess"), prediction.risk_exponent),
            }

    rendered = render_table1(table, result.targets, thetas)
    logging.info("\n" + rendered)
    with open(os.path.join(cfg.output_path, "table1.txt"), "w") as f:
        f.write(rendered + "\n")

    checks = list(result.checks) + optimal_theta_checks(table, result.targets, thetas, beta)
    return exit_code(checks)
