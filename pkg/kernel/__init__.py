from kernel.eigensystem import (
    Eigensystem,
    min_kernel_eigensystem,
    power_law_eigensystem,
    eigenfunctions,
    eigenfunction,
    project_coefficients,
    DEFAULT_TRUNCATION,
)
from kernel.spectral_kernel import (
    KernelSpec,
    min_kernel,
    spectral_kernel,
    eval_kernel,
    cross_gram,
    gram,
    mercer_gap,
    verify_eigensystem,
    orthonormality_gap,
)
from utils.error_utils import DomainError


def _parse_options(option_string):
    options = {}
    if not option_string:
        return options
    for item in option_string.split(","):
        key, _, value = item.partition("=")
        if not value:
            raise DomainError(f"malformed kernel option {item!r}")
        options[key.strip()] = value.strip()
    return options


def _build_min(options):
    return min_kernel(min_kernel_eigensystem(int(options.get("M", DEFAULT_TRUNCATION))))


def _build_spectral(options):
    if "beta" not in options:
        raise DomainError("spectral kernel needs beta=<float>")
    eigensystem = power_law_eigensystem(float(options["beta"]), int(options.get("M", DEFAULT_TRUNCATION)))
    return spectral_kernel(eigensystem)


def _build_spectral_min(options):
    return spectral_kernel(min_kernel_eigensystem(int(options.get("M", DEFAULT_TRUNCATION))))


kernelTypeCallbacks = {
    "min": _build_min,
    "spectral": _build_spectral,
    "spectral-min": _build_spectral_min,
}


def get_kernel(name: str) -> KernelSpec:
    """'min' | 'spectral:beta=<float>,M=<int>' | 'spectral-min:M=<int>'"""
    kind, _, option_string = name.partition(":")
    if kind not in kernelTypeCallbacks:
        raise DomainError(f"unknown kernel {name!r}; expected one of {sorted(kernelTypeCallbacks)}")
    return kernelTypeCallbacks[kind](_parse_options(option_string))
