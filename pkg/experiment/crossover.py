import logging
import math
import os

import numpy as np
import pandas as pd
from texttable import Texttable

from experiment.sweep import (
    FLOAT_FORMAT,
    RateCheck,
    cell_curve,
    exit_code,
    run_sweep,
    write_outputs,
)
from theory import NOISE_FREE, noisy, predict_rates
from utils.error_utils import ConfigError, RateFitError
from utils.rate_utils import fit_rate, upper_half_window


def crossover_n(n_values, bias, variance):
    """First grid n where the mean variance reaches the mean bias; None if it never does."""
    reached = np.nonzero(np.asarray(variance) >= np.asarray(bias))[0]
    return int(n_values[reached[0]]) if reached.size else None


def theory_overlay(n_values, values, exponent):
    """Reference line c n^{-exponent} anchored at the last grid point of the curve."""
    n_values = np.asarray(n_values, dtype=np.float64)
    return values[-1] * (n_values / n_values[-1]) ** (-exponent)


def _slopes(target, cell, beta):
    noiseless = predict_rates(target.nominal_s, beta, cell.theta, NOISE_FREE).risk_exponent
    noisy_rate = predict_rates(target.nominal_s, beta, cell.theta, noisy(cell.sigma2_tau)).risk_exponent
    return noiseless, noisy_rate


def crossover_frame(result, reducer="mean"):
    records = []
    for cell in result.cells:
        for target in result.targets:
            label = f"{target.name}/{cell.key}"
            bias = cell_curve(result.rows, label, "bias2", reducer)
            variance = cell_curve(result.rows, label, "variance", reducer)
            excess = cell_curve(result.rows, label, "excess", reducer)
            noiseless, noisy_rate = _slopes(target, cell, result.beta)
            switch = crossover_n(bias.n, bias.value, variance.value) if cell.sigma2 > 0 else None
            overlay_noiseless = theory_overlay(excess.n, excess.value, noiseless) \
                if noiseless is not None else np.full(excess.n.shape, np.nan)
            overlay_noisy = theory_overlay(excess.n, excess.value, noisy_rate)
            for i, n in enumerate(excess.n):
                records.append({
                    "cell": label,
                    "target": target.name,
                    "theta": "" if cell.theta is None else f"{cell.theta:g}",
                    "sigma2": cell.sigma2,
                    "n": int(n),
                    "bias2_mean": bias.value[i],
                    "variance_mean": variance.value[i],
                    "excess_mean": excess.value[i],
                    "excess_std": excess.std[i],
                    "noiseless_slope": math.nan if noiseless is None else noiseless,
                    "noisy_slope": noisy_rate,
                    "overlay_noiseless": overlay_noiseless[i],
                    "overlay_noisy": overlay_noisy[i],
                    "crossover_n": math.nan if switch is None else switch,
                })
    return pd.DataFrame(records)


def crossover_checks(frame, beta, tolerance, smoothness=None):
    checks = []
    # noiseless curves follow the noiseless slope on the upper half of the grid
    for label, curve in frame[frame["sigma2"] == 0].groupby("cell", sort=False):
        slope = float(curve["noiseless_slope"].iloc[0])
        theta = curve["theta"].iloc[0]
        # only the theta < beta noiseless rate is sharp
        if math.isnan(slope) or theta == "" or float(theta) >= beta:
            continue
        points = np.column_stack([curve["n"].to_numpy(np.float64), curve["excess_mean"].to_numpy(np.float64)])
        try:
            fit = fit_rate(points, upper_half_window(points[:, 0]))
        except RateFitError as exc:
            logging.warning("no upper-window rate for {}: {}".format(label, exc))
            continue
        checks.append(RateCheck(f"{label}/noiseless_slope", fit.exponent, slope, tolerance,
                                abs(fit.exponent - slope) <= tolerance))

    # larger noise crosses over earlier
    noisy_rows = frame[frame["sigma2"] > 0].drop_duplicates(["cell"])
    for (target, theta), group in noisy_rows.groupby(["target", "theta"], sort=False):
        group = group.sort_values("sigma2")
        switches = group["crossover_n"].fillna(np.inf).to_numpy()
        monotone = bool(np.all(np.diff(switches) <= 0))
        name = "{}/{}/crossover_monotone".format(target, f"theta={theta}" if theta else "lambda=0")
        checks.append(RateCheck(name, float(monotone), 1.0, 0.0, monotone))

    # smoother targets cross over earlier
    if smoothness:
        checks += smoothness_order_checks(noisy_rows, smoothness)
    return checks


def smoothness_order_checks(summary, smoothness):
    """crossover_n must not increase with the target smoothness at fixed (sigma2, theta)."""
    checks = []
    for (sigma2, theta), group in summary.groupby(["sigma2", "theta"], sort=False):
        if group["target"].nunique() < 2:
            continue
        group = group.assign(s=group["target"].map(smoothness)).sort_values("s", kind="mergesort")
        switches = group["crossover_n"].fillna(np.inf).to_numpy()
        ordered = bool(np.all(np.diff(switches) <= 0))
        name = "sigma2={:g}/{}/crossover_by_smoothness".format(
            sigma2, f"theta={theta}" if theta else "lambda=0")
        checks.append(RateCheck(name, float(ordered), 1.0, 0.0, ordered))
    return checks


def crossover_table(frame):
    summary = frame.drop_duplicates(["cell"])
    t = Texttable(max_width=0)
    t.add_rows([["cell", "noiseless slope", "noisy slope", "crossover n"]] + [
        [r.cell, "-" if math.isnan(r.noiseless_slope) else f"{r.noiseless_slope:.2f}",
         f"{r.noisy_slope:.2f}", "-" if math.isnan(r.crossover_n) else int(r.crossover_n)]
        for r in summary.itertuples()
    ])
    return t.draw()


def crossover(cfg):
    """Learning curves across noise levels at theta in {1, 2} and lambda = 0, with theory overlays."""
    positive = [s for s in cfg.sigma2_list if float(s) > 0]
    if 0 not in [float(s) for s in cfg.sigma2_list] or len(positive) < 2:
        raise ConfigError("sigma2_list: crossover needs 0 and at least two positive noise levels")
    result = run_sweep(cfg, "crossover")
    result.metadata["conventions"]["crossover_sigma2"] = {
        "values": [float(s) for s in cfg.sigma2_list],
        "source": "chosen by this project",
    }
    result.metadata["conventions"]["crossover_n"] = "first grid n with mean variance >= mean bias"
    write_outputs(result, cfg)

    frame = crossover_frame(result, cfg.reducer)
    frame.to_csv(os.path.join(cfg.output_path, "crossover.csv"), index=False,
                 float_format=FLOAT_FORMAT, na_rep="nan")
    logging.info("\n" + crossover_table(frame))

    tolerance = float(cfg.tolerance.bias2) * float(cfg.tolerance_scale)
    smoothness = {target.name: target.nominal_s for target in result.targets}
    checks = list(result.checks) + crossover_checks(frame, result.beta, tolerance, smoothness)
    return exit_code(checks)
