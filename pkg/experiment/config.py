import os
from typing import NamedTuple, Optional, List

from omegaconf import OmegaConf, DictConfig, ListConfig

from utils.error_utils import ConfigError

BASE_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "base.yaml")


class ExperimentCell(NamedTuple):
    key: str                   # stream key; independent of the target so targets share designs
    theta: Optional[float]     # None marks the lambda = 0 interpolation cell
    sigma2: float
    sigma2_tau: float

    def noise_at(self, n):
        # sigma^2 n^{-tau}; tau = 0 keeps the noise level constant
        return self.sigma2 * float(n) ** (-self.sigma2_tau) if self.sigma2_tau else self.sigma2


def load_config(config_path=None, base_path=BASE_CONFIG, overrides=None, dotlist=None):
    """
    base.yaml < preset (YAML or JSON) < explicit overrides < key=value dot-list.
    ``overrides`` holds the dedicated command-line flags that were actually given.
    """
    confs = [OmegaConf.load(base_path)]
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file {config_path} does not exist")
        confs.append(OmegaConf.load(config_path))
    if overrides:
        confs.append(OmegaConf.create({k: v for k, v in overrides.items() if v is not None}))
    if dotlist:
        confs.append(OmegaConf.from_dotlist(list(dotlist)))
    cfg = OmegaConf.merge(*confs)
    if cfg.fast:
        cfg = apply_fast_profile(cfg)
    return cfg


def apply_fast_profile(cfg):
    profile = cfg.fast_profile
    cfg.trials = min(int(cfg.trials), int(profile.trials))
    cfg.n_max = int(profile.n_max) if cfg.n_max is None else min(int(cfg.n_max), int(profile.n_max))
    cfg.tolerance_scale = float(profile.tolerance_scale)
    return cfg


def resolve_n_grid(cfg):
    """
    n_grid entries are either sample sizes or inclusive [start, stop, step] segments;
    the result is truncated at ``n_max`` when one is set.
    """
    values = []
    for entry in cfg.n_grid:
        if isinstance(entry, (list, tuple, ListConfig)):
            if len(entry) != 3:
                raise ConfigError(f"n_grid segment must be [start, stop, step], got {list(entry)}")
            start, stop, step = (int(v) for v in entry)
            if step <= 0:
                raise ConfigError(f"n_grid step must be positive, got {step}")
            values.extend(range(start, stop + 1, step))
        else:
            values.append(int(entry))
    if cfg.get("n_max") is not None:
        values = [n for n in values if n <= int(cfg.n_max)]
    return values


def resolve_workers(cfg):
    """``workers: null`` uses every CPU."""
    return int(cfg.workers) if cfg.workers is not None else (os.cpu_count() or 1)


def _format_number(value):
    return f"{float(value):g}"


def build_cells(cfg) -> List[ExperimentCell]:
    cells = []
    tau = float(cfg.sigma2_tau)
    for theta in cfg.theta_list:
        for sigma2 in cfg.sigma2_list:
            theta_part = "lambda=0" if float(theta) == 0 else f"theta={_format_number(theta)}"
            key = f"{theta_part}/sigma2={_format_number(sigma2)}"
            if tau:
                key += f"/tau={_format_number(tau)}"
            cells.append(ExperimentCell(key, None if float(theta) == 0 else float(theta), float(sigma2), tau))
    return cells


def check_config(cfg):
    """Raises ConfigError naming the first offending key."""
    for key in ("kernel", "targets", "theta_list", "sigma2_list", "n_grid", "trials", "c", "seed"):
        if OmegaConf.is_missing(cfg, key) or cfg.get(key) is None:
            raise ConfigError(f"missing config key {key!r}")
    if len(cfg.targets) == 0:
        raise ConfigError("targets: at least one target is required")
    if any(float(theta) < 0 for theta in cfg.theta_list):
        raise ConfigError("theta_list: every theta must be > 0, or exactly 0 for interpolation")
    if len(cfg.theta_list) == 0 or len(cfg.sigma2_list) == 0:
        raise ConfigError("theta_list and sigma2_list must be non-empty")
    if any(float(s2) < 0 for s2 in cfg.sigma2_list):
        raise ConfigError("sigma2_list: noise variances must be >= 0")
    if not float(cfg.c) > 0:
        raise ConfigError(f"c: lambda prefactor must be > 0, got {cfg.c}")
    if int(cfg.trials) < 1:
        raise ConfigError(f"trials: must be >= 1, got {cfg.trials}")
    if float(cfg.sigma2_tau) < 0:
        raise ConfigError(f"sigma2_tau: must be >= 0, got {cfg.sigma2_tau}")
    if cfg.workers is not None and int(cfg.workers) < 1:
        raise ConfigError(f"workers: must be >= 1, got {cfg.workers}")
    if cfg.reducer not in ("mean", "median"):
        raise ConfigError(f"reducer: expected mean or median, got {cfg.reducer!r}")
    if int(cfg.oracle.draws) < 1:
        raise ConfigError(f"oracle.draws: must be >= 1, got {cfg.oracle.draws}")

    n_values = resolve_n_grid(cfg)
    if len(n_values) == 0:
        raise ConfigError("n_grid: no sample sizes left")
    if any(n < 1 for n in n_values):
        raise ConfigError("n_grid: sample sizes must be >= 1")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ConfigError("n_grid: sample sizes must be strictly increasing")
    if cfg.fit_window is not None and len(cfg.fit_window) != 2:
        raise ConfigError("fit_window: expected [n_min, n_max] or null")
    if len(cfg.floor_window) != 2 or float(cfg.floor_window[0]) > float(cfg.floor_window[1]):
        raise ConfigError("floor_window: expected [low, high] with low <= high")
    panels = int(cfg.quadrature.panels_per_gap)
    if panels < 2 or panels % 2:
        raise ConfigError(f"quadrature.panels_per_gap: must be even and >= 2, got {panels}")

    keys = [cell.key for cell in build_cells(cfg)]
    if len(set(keys)) != len(keys):
        raise ConfigError("theta_list x sigma2_list contains duplicate cells")
    return n_values


def to_plain(cfg):
    return OmegaConf.to_container(cfg, resolve=True) if isinstance(cfg, (DictConfig, ListConfig)) else cfg
