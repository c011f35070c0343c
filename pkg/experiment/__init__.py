from experiment.config import (
    ExperimentCell,
    load_config,
    check_config,
    resolve_n_grid,
    resolve_workers,
    build_cells,
)
from experiment.sweep import SweepResult, RateCheck, RESULT_COLUMNS, run_sweep, sweep
from experiment.table1 import table1
from experiment.crossover import crossover
from experiment.theory_cli import theory, phase_diagram
from experiment.selftest import selftest
from utils.error_utils import ConfigError

experimentTypeCallbacks = {
    "sweep": sweep,
    "table1": table1,
    "crossover": crossover,
    "theory": theory,
    "phase-diagram": phase_diagram,
    "selftest": selftest,
}


def get_experiment(name):
    if name not in experimentTypeCallbacks:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {sorted(experimentTypeCallbacks)}")
    return experimentTypeCallbacks[name]
