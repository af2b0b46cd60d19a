"""SMT encodings of piecewise-affine networks: exact inference, minimal
adversarial inputs and bias-only patches that force prescribed outputs."""

__version__ = "0.1.0"

from .network import (
    Affine,
    HardTanh,
    Network,
    ReLU,
    classify,
    forward,
    load_network,
    parse_network,
    quantize_network,
    render_network,
    save_network,
    validate_network,
)
from .solver import SolverConfig

__all__ = [
    "Affine",
    "HardTanh",
    "Network",
    "ReLU",
    "SolverConfig",
    "classify",
    "forward",
    "load_network",
    "parse_network",
    "quantize_network",
    "render_network",
    "save_network",
    "validate_network",
]
