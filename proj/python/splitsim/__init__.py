from splitsim._core import (
    ConfigError,
    TrainingConfig,
    break_even_epochs,
    closed_form_comm,
    dirichlet_partition,
    gradcheck,
    make_synthetic,
    run_config,
    run_protocol,
)

__all__ = [
    "ConfigError",
    "TrainingConfig",
    "break_even_epochs",
    "closed_form_comm",
    "dirichlet_partition",
    "gradcheck",
    "make_synthetic",
    "run_config",
    "run_protocol",
]
