import json
import math
import os

import pandas as pd
import pytest

import run
from experiment import build_cells, check_config, load_config, resolve_n_grid, resolve_workers
from experiment.config import BASE_CONFIG
from experiment.crossover import crossover_n, smoothness_order_checks, theory_overlay
from experiment.selftest import oracle_cells, refinement_check, residual_check, sum_checks
from experiment.sweep import RESULT_COLUMNS, fit_rates, full_exponent, run_sweep, sweep, theta_monotone_checks
from utils.error_utils import ConfigError

CONFIG_DIR = os.path.dirname(BASE_CONFIG)


def _tiny(out_dir, *extra):
    return load_config(dotlist=[
        "n_grid=[[20,60,20]]",
        "trials=2",
        "quadrature.min_nodes=257",
        "theta_list=[0.5,0]",
        "targets=[sin2pi,cos2pi]",
        "tensorboard=false",
        "check_rates=false",
        f"output_path={out_dir}",
        *extra,
    ])


def _results(out_dir):
    return pd.read_csv(os.path.join(out_dir, "results.csv"), dtype=str, keep_default_na=False)


def _bytes(out_dir, name="results.csv"):
    with open(os.path.join(out_dir, name), "rb") as f:
        return f.read()


def test_sweep_writes_one_row_per_cell_target_size_and_trial(tmp_path):
    sweep(_tiny(tmp_path))
    frame = _results(tmp_path)
    assert list(frame.columns) == RESULT_COLUMNS
    assert len(frame) == 2 * 2 * 3 * 2
    interpolation = frame[frame["cell"].str.contains("lambda=0")]
    assert len(interpolation) == 12
    assert set(interpolation["theta"]) == {""}
    assert set(interpolation["lambda"]) == {"0"}
    assert set(frame["experiment"]) == {"sweep"}
    # targets share designs, so both appear under every cell key
    assert set(frame["cell"]) == {
        "sin2pi/theta=0.5/sigma2=0.05", "cos2pi/theta=0.5/sigma2=0.05",
        "sin2pi/lambda=0/sigma2=0.05", "cos2pi/lambda=0/sigma2=0.05",
    }

    metadata = json.loads(_bytes(tmp_path, "metadata.json"))
    assert metadata["n_grid"] == [20, 40, 60]
    assert metadata["master_seed"] == 0
    assert len(metadata["config_hash"]) == 64
    assert metadata["max_residual"] <= 1e-10
    assert os.path.exists(tmp_path / "rates.csv")


def test_results_are_byte_identical_across_runs_and_workers(tmp_path):
    runs = []
    for name, workers in (("a", 1), ("b", 1), ("c", 3)):
        out_dir = tmp_path / name
        sweep(_tiny(out_dir, f"workers={workers}"))
        runs.append(_bytes(out_dir))
    assert runs[0] == runs[1] == runs[2]


def test_cells_do_not_depend_on_each_other(tmp_path):
    sweep(_tiny(tmp_path / "both"))
    sweep(_tiny(tmp_path / "one", "theta_list=[0.5]"))
    both = _results(tmp_path / "both")
    one = _results(tmp_path / "one")
    both = both[both["cell"].str.contains("theta=0.5")].reset_index(drop=True)
    pd.testing.assert_frame_equal(both, one)


def test_seed_changes_the_draws(tmp_path):
    sweep(_tiny(tmp_path / "a"))
    sweep(_tiny(tmp_path / "b", "seed=1"))
    assert _bytes(tmp_path / "a") != _bytes(tmp_path / "b")


def test_oracle_rows_follow_their_exact_row(tmp_path):
    sweep(_tiny(tmp_path, "oracle.trials=1", "oracle.draws=20"))
    frame = _results(tmp_path)
    oracle = frame[frame["method"] == "monte_carlo"]
    assert len(oracle) == 2 * 2 * 3
    assert set(oracle["trial"]) == {"0"}
    for index in oracle.index:
        previous = frame.loc[index - 1]
        assert previous["method"] in ("exact", "failed")
        assert (previous["cell"], previous["n"], previous["trial"]) == tuple(frame.loc[index, ["cell", "n", "trial"]])


def test_cell_keys_and_decaying_noise():
    cfg = load_config(dotlist=["theta_list=[0.5,2,0]", "sigma2_list=[0,0.05]", "sigma2_tau=0.5"])
    cells = build_cells(cfg)
    assert [cell.key for cell in cells] == [
        "theta=0.5/sigma2=0/tau=0.5", "theta=0.5/sigma2=0.05/tau=0.5",
        "theta=2/sigma2=0/tau=0.5", "theta=2/sigma2=0.05/tau=0.5",
        "lambda=0/sigma2=0/tau=0.5", "lambda=0/sigma2=0.05/tau=0.5",
    ]
    assert cells[-1].theta is None
    assert cells[1].noise_at(100) == pytest.approx(0.005)
    assert cells[0].noise_at(100) == 0.0


@pytest.mark.parametrize("override", [
    "theta_list=[-0.5]",
    "c=0",
    "sigma2_list=[-0.1]",
    "sigma2_list=[]",
    "trials=0",
    "n_grid=[30,20]",
    "n_grid=[[100,50,10]]",
    "n_grid=[[10,50]]",
    "sigma2_list=[0.05,0.05]",
    "reducer=trimmed",
    "targets=[]",
    "workers=0",
    "floor_window=[0.1,-0.1]",
    "quadrature.panels_per_gap=3",
])
def test_check_config_rejects(override):
    with pytest.raises(ConfigError):
        check_config(load_config(dotlist=[override]))


def test_presets():
    crossover = load_config(os.path.join(CONFIG_DIR, "crossover.yaml"))
    assert len(check_config(crossover)) == 95
    assert list(crossover.targets) == ["cos2pi", "sin2pi", "sin3pi2"]
    assert crossover.trials == 100
    assert load_config(os.path.join(CONFIG_DIR, "crossover.yaml"), dotlist=["fast=true"]).trials == 20
    table1 = load_config(os.path.join(CONFIG_DIR, "table1.yaml"))
    assert check_config(table1) == list(range(1000, 5001, 100))
    assert len(build_cells(table1)) == 6


def test_fast_profile():
    cfg = load_config(os.path.join(CONFIG_DIR, "table1.yaml"), dotlist=["fast=true"])
    assert cfg.trials == 20
    assert cfg.tolerance_scale == 1.5
    assert resolve_n_grid(cfg) == list(range(1000, 3001, 100))


def test_workers_default_to_every_cpu():
    assert resolve_workers(load_config()) == (os.cpu_count() or 1)
    assert resolve_workers(load_config(dotlist=["workers=3"])) == 3


def test_missing_preset_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.yaml"))


def test_crossover_helpers():
    assert crossover_n([10, 20, 30], [1.0, 0.5, 0.1], [0.1, 0.5, 0.6]) == 20
    assert crossover_n([10, 20], [1.0, 1.0], [0.1, 0.2]) is None
    overlay = theory_overlay([10, 100], [5.0, 2.0], 1.0)
    assert overlay.tolist() == pytest.approx([20.0, 2.0])


def test_main_theory(tmp_path):
    code = run.main(["theory", "--s", "1.5", "--beta", "2", "--theta", "0.5", "--out", str(tmp_path)])
    assert code == run.EXIT_OK
    with open(tmp_path / "theory.json") as f:
        report = json.load(f)
    assert report["prediction"]["risk_exponent"] == pytest.approx(0.75)
    assert os.path.exists(tmp_path / "config.yaml")


def test_main_theory_optimal(tmp_path):
    assert run.main(["theory", "--s", "1.5", "--beta", "2", "--optimal", "--out", str(tmp_path)]) == run.EXIT_OK
    with open(tmp_path / "theory.json") as f:
        report = json.load(f)
    assert report["optimal"]["theta"] == pytest.approx(0.5)


def test_main_phase_diagram(tmp_path):
    code = run.main(["theory", "--phase", "tau", "--out", str(tmp_path), "phase.resolution=10"])
    assert code == run.EXIT_OK
    frame = pd.read_csv(tmp_path / "phase_tau.csv")
    assert list(frame.columns) == ["theta", "tau", "regime", "exponent", "flags", "crossover_tau"]
    assert len(frame) == 100


def test_main_config_errors(tmp_path):
    assert run.main(["sweep", "c=-1", "--out", str(tmp_path / "a")]) == run.EXIT_CONFIG_ERROR
    assert run.main(["sweep", "--config", str(tmp_path / "nope.yaml")]) == run.EXIT_CONFIG_ERROR
    assert run.main(["theory", "--s", "0", "--out", str(tmp_path / "b")]) == run.EXIT_CONFIG_ERROR


@pytest.mark.slow
def test_main_table1_fast(tmp_path):
    code = run.main(["table1", "--fast", "--out", str(tmp_path), "tensorboard=false"])
    assert code == run.EXIT_OK
    with open(tmp_path / "table1.txt") as f:
        table = f.read()
    assert "sin2pi (s=1.5) Bias" in table
    assert "*" in table


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["noiseless.yaml", "interpolation.yaml"])
def test_presets_pass_on_the_fast_profile(tmp_path, preset):
    code = run.main(["sweep", "--config", os.path.join(CONFIG_DIR, preset), "--fast",
                     "--out", str(tmp_path), "tensorboard=false"])
    assert code == run.EXIT_OK
    rates = pd.read_csv(tmp_path / "rates.csv")
    full = rates[rates["window"] == "full"]
    if preset == "interpolation.yaml":
        floor = full[full["cell"].str.contains("lambda=0") & (full["quantity"] == "excess")]
        assert len(floor) == 3
        assert floor["exponent"].between(-0.05 * 1.5, 0.15 * 1.5).all()


@pytest.mark.slow
def test_sweep_reproduces_the_sin2pi_row_at_theta_half(tmp_path):
    cfg = load_config(os.path.join(CONFIG_DIR, "table1.yaml"), dotlist=[
        "targets=[sin2pi]", "theta_list=[0.5]", "fast=true", "tensorboard=false", f"output_path={tmp_path}",
    ])
    result = run_sweep(cfg)
    label = "sin2pi/theta=0.5/sigma2=0.05"
    assert full_exponent(result.rates, label, "variance") == pytest.approx(0.75, abs=0.15)
    assert full_exponent(result.rates, label, "bias2") == pytest.approx(0.84, abs=0.45)
    assert full_exponent(result.rates, label, "excess") == pytest.approx(0.79, abs=0.15)
    assert result.passed


@pytest.mark.slow
def test_single_noiseless_trial_of_cos2pi(tmp_path):
    cfg = load_config(dotlist=[
        "targets=[cos2pi]", "theta_list=[0.2]", "sigma2_list=[0]", "trials=1",
        "tensorboard=false", f"output_path={tmp_path}",
    ])
    result = run_sweep(cfg)
    assert 0.05 <= full_exponent(result.rates, "cos2pi/theta=0.2/sigma2=0", "bias2") <= 0.20


def _rate_rows(label, bias_exponent, excess_exponent, n_values=range(1000, 3001, 200)):
    rows = []
    for n in n_values:
        rows.append({
            "experiment": "sweep", "cell": label, "theta": "", "lambda": 0.0, "sigma2": 0.05, "n": n,
            "trial": 0, "bias2": float(n) ** -bias_exponent, "variance": 0.033,
            "excess": 0.034 * float(n) ** -excess_exponent, "method": "exact", "se": 0.0,
        })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


@pytest.mark.parametrize("excess_exponent, passed", [(0.1, True), (-0.03, True), (-0.1, False), (0.2, False)])
def test_noise_floor_is_a_window(named_targets, excess_exponent, passed):
    cfg = load_config(dotlist=["theta_list=[0]", "targets=[sin2pi]"])
    cells = build_cells(cfg)
    rows = _rate_rows("sin2pi/lambda=0/sigma2=0.05", 3.0, excess_exponent)
    rates, checks = fit_rates(cfg, rows, [named_targets["sin2pi"]], cells, 2.0)
    floor = [check for check in checks if check.name.endswith("/excess")]
    assert len(floor) == 1
    assert floor[0].passed == passed
    assert floor[0].predicted == 0.0
    assert all(check.passed for check in checks if not check.name.endswith("/excess"))


def test_noiseless_bias_exponents_must_grow_with_theta(named_targets):
    cells = build_cells(load_config(dotlist=["theta_list=[0.5,1,2]", "sigma2_list=[0]"]))
    targets = [named_targets["sin2pi"], named_targets["sin3pi2"]]
    exponents = {"sin2pi": [0.75, 1.5, 3.1], "sin3pi2": [1.0, 2.0, 1.8]}
    rates = pd.DataFrame([
        {"cell": f"{name}/{cell.key}", "quantity": "bias2", "window": "full", "exponent": value}
        for name, values in exponents.items() for cell, value in zip(cells, values)
    ])
    checks = {check.name.split("/")[0]: check for check in theta_monotone_checks(rates, targets, cells, 0.05)}
    assert checks["sin2pi"].passed
    assert not checks["sin3pi2"].passed
    assert checks["sin3pi2"].empirical == pytest.approx(0.2)
    assert theta_monotone_checks(rates, targets, cells[:1], 0.05) == []


def test_smoother_targets_cross_over_earlier():
    smoothness = {"cos2pi": 0.5, "sin2pi": 1.5, "sin3pi2": math.inf}
    summary = pd.DataFrame([
        {"target": "cos2pi", "sigma2": 0.01, "theta": "1", "crossover_n": math.nan},
        {"target": "sin2pi", "sigma2": 0.01, "theta": "1", "crossover_n": 300.0},
        {"target": "sin3pi2", "sigma2": 0.01, "theta": "1", "crossover_n": 120.0},
        {"target": "cos2pi", "sigma2": 0.01, "theta": "", "crossover_n": 10.0},
        {"target": "sin2pi", "sigma2": 0.01, "theta": "", "crossover_n": 20.0},
        {"target": "sin3pi2", "sigma2": 0.01, "theta": "", "crossover_n": 10.0},
    ])
    checks = smoothness_order_checks(summary, smoothness)
    assert [check.name for check in checks] == [
        "sigma2=0.01/theta=1/crossover_by_smoothness", "sigma2=0.01/lambda=0/crossover_by_smoothness",
    ]
    assert [check.passed for check in checks] == [True, False]


def test_selftest_pieces(min_kernel, named_targets):
    cells = oracle_cells(0, 20, list(named_targets.values()))
    assert len(cells) == 20
    for _, n, lam, sigma2, _ in cells:
        assert 20 <= n <= 200 and 1e-5 <= lam <= 1e-1 and 0.01 <= sigma2 <= 1.0
    assert cells == oracle_cells(0, 20, list(named_targets.values()))
    assert all(check.passed for check in sum_checks())
    residuals = residual_check(min_kernel, named_targets["sin2pi"], 0, sizes=(200, 1000))
    assert len(residuals) == 3 + 3 + 3
    assert all(check.passed for check in residuals)
    refinement = refinement_check(min_kernel, named_targets["cos2pi"], 0, cells=((400, 0.0), (400, 1e-9)))
    assert len(refinement) == 6
    assert all(check.passed for check in refinement)
