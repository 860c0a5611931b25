"""Python bindings for the afcmem simulator."""

from ._core import (
    ConfigError,
    SimulationError,
    classical_bound,
    config_hash,
    default_config,
    fit_afc,
    fit_mims,
    fit_powerlaw,
    max_fidelity_from_purity,
    preset_config,
    preset_names,
    reproduce,
    simulate_afc,
    simulate_qubit,
    simulate_spinwave,
    stages,
    version,
    white_noise_fidelity,
)

__version__ = version().split()[-1]
