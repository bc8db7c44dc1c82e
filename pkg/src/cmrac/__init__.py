"""Combined model reference adaptive control under finite excitation.

Submodules
----------
linalg      small dense kernels (Lyapunov solve, Jacobi eigen bounds, LU)
plant       plant, reference model, control law and matching gains
excitation  filtered regressor and Gram-Schmidt parameter memory
adaptation  gradient and combined adaptation laws
sim         closed-loop integration, error metrics, decay-rate bound
harness     configuration files, Monte Carlo driver, CSV output
"""

from .plant import BasisDescriptor, ControllerGains, PlantModel, ReferenceModel, matching_gains
from .sim import Command, SimConfig, Trajectory, run_episode, theoretical_rate
from .harness import load_bundled, load_config, run_monte_carlo

__version__ = "0.1.0"
__all__ = [
    "BasisDescriptor", "ControllerGains", "PlantModel", "ReferenceModel", "matching_gains",
    "Command", "SimConfig", "Trajectory", "run_episode", "theoretical_rate",
    "load_bundled", "load_config", "run_monte_carlo",
]
