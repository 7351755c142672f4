"""Disentangling quantum autoencoders: simulation, training and analysis."""

__version__ = "0.1.0"

from .circuits import (  # noqa: E402
    Circuit,
    Gate,
    build,
    build_fermion,
    build_he,
    build_ising,
    build_with_params,
    derivative_state,
    shift_rule_gradient,
)
from .state import (  # noqa: E402
    RngStream,
    fidelity,
    purity_bell_oracle,
    purity_single,
    reconstruction_fidelity,
)
from .training import (  # noqa: E402
    TrainConfig,
    cost_test,
    cost_train,
    generate_dataset,
    gradient,
    train,
)

__all__ = [
    "Circuit", "Gate", "RngStream", "TrainConfig", "build", "build_fermion", "build_he",
    "build_ising", "build_with_params", "cost_test", "cost_train", "derivative_state",
    "fidelity", "generate_dataset", "gradient", "purity_bell_oracle", "purity_single",
    "reconstruction_fidelity", "shift_rule_gradient", "train",
]
