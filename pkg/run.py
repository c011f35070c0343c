import os
import sys
import logging
from argparse import ArgumentParser
from pprint import pformat

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from experiment import experimentTypeCallbacks, get_experiment, load_config
from experiment.config import BASE_CONFIG
from utils.error_utils import ConfigError, DomainError
from utils.general_utils import init_logging, seed_everything
from utils.system_utils import mkdir_p

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def default_config(command):
    preset = os.path.join(CONFIG_DIR, f"{command.replace('-', '_')}.yaml")
    return preset if os.path.exists(preset) else None


def flag_overrides(args):
    overrides = {
        "seed": args.seed,
        "output_path": args.out,
        "workers": args.workers,
        "fast": True if args.fast else None,
        "debug": True if args.debug else None,
    }
    theory = {
        "s": args.s, "beta": args.beta, "theta": args.theta, "tau": args.tau,
        "noiseless": True if args.noiseless else None,
        "optimal": True if args.optimal else None,
    }
    theory = {k: v for k, v in theory.items() if v is not None}
    if theory:
        overrides["theory"] = theory
    if args.phase is not None:
        overrides["phase"] = {"panel": args.phase}
        if args.beta is not None:
            overrides["phase"]["beta"] = args.beta
        if args.s is not None:
            overrides["phase"]["s"] = args.s
    return overrides


def parse_args(argv=None):
    parser = ArgumentParser(description="Kernel ridge regression learning-curve experiments")
    parser.add_argument("command", choices=sorted(experimentTypeCallbacks))
    parser.add_argument("--config", type=str, default=None)
    parser.add_argument("--base_config", type=str, default=BASE_CONFIG)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--fast", action="store_true")
    parser.add_argument("--debug", action="store_true")
    # theory / phase-diagram shortcuts
    parser.add_argument("--s", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--theta", type=float, default=None)
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--noiseless", action="store_true")
    parser.add_argument("--optimal", action="store_true")
    parser.add_argument("--phase", type=str, choices=["s", "tau"], default=None)
    # anything else of the form key=value is an OmegaConf dot-list override
    args, unknown = parser.parse_known_args(argv)
    return args, [item for item in unknown if "=" in item]


def main(argv=None):
    args, dotlist = parse_args(argv)
    command = "phase-diagram" if args.command == "theory" and args.phase is not None else args.command
    try:
        config_path = args.config if args.config is not None else default_config(command)
        cfg = load_config(config_path, args.base_config, flag_overrides(args), dotlist)
        if cfg.output_path is None:
            cfg.output_path = os.path.join("output", command)
    except (ConfigError, OmegaConfBaseException, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    mkdir_p(cfg.output_path)
    init_logging(os.path.join(cfg.output_path, "run.log"), debug=cfg.debug)
    logging.info("PID:{}".format(os.getpid()))
    logging.info("Running {} into {}".format(command, cfg.output_path))
    logging.info('Configurations:\n {}'.format(pformat(OmegaConf.to_container(cfg, resolve=True))))
    # write config to yaml file
    OmegaConf.save(cfg, os.path.join(cfg.output_path, "config.yaml"))
    seed_everything(cfg.seed)

    try:
        code = get_experiment(command)(cfg)
    except ConfigError as exc:
        logging.error("configuration error: {}".format(exc))
        return EXIT_CONFIG_ERROR
    except DomainError as exc:
        logging.error("invalid parameters: {}".format(exc))
        return EXIT_CONFIG_ERROR

    # All done
    logging.info("{} complete ({}).".format(command, "all checks passed" if code == EXIT_OK else "checks failed"))
    return EXIT_OK if code == EXIT_OK else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
