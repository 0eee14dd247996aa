"""Vibronic-coupling dynamics and their mapping onto mixed qudit-boson simulators."""

__version__ = "0.1.0"

from .closed import (  # noqa: E402
    TrotterPlan,
    Trajectory,
    compare_schemes,
    mqb_trotter_plan,
    propagate_exact,
    propagate_trotter,
    trotter_error_scan,
)
from .mapping import (  # noqa: E402
    HardwareSpec,
    map_to_mqb,
    resource_estimate,
    scale_factor_bounds,
    simulator_hamiltonian,
    solve_cooling_params,
)
from .models import VCModel, build_hamiltonian, load_model, pyrazine_model  # noqa: E402
from .open import BathSpec, propagate_lindblad, thermal_bath  # noqa: E402
from .operators import SpaceLayout, expm_apply  # noqa: E402

__all__ = [
    "BathSpec", "HardwareSpec", "SpaceLayout", "Trajectory", "TrotterPlan", "VCModel",
    "build_hamiltonian", "compare_schemes", "expm_apply", "load_model", "map_to_mqb",
    "mqb_trotter_plan", "propagate_exact", "propagate_lindblad", "propagate_trotter",
    "pyrazine_model", "resource_estimate", "scale_factor_bounds", "simulator_hamiltonian",
    "solve_cooling_params", "thermal_bath", "trotter_error_scan",
]
