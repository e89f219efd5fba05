"""C1-continuous Hermite time integrators for structural dynamics."""

from .analysis import (
    amplification,
    convergence_order,
    error_norms,
    max_stable_cfl,
    spectral_radius,
    stability_threshold,
    symplecticity_check,
)
from .core import (
    DimensionError,
    ElementInversion,
    NewtonDivergence,
    OscillatorModel,
    State,
    SystemModel,
    TimeGrid,
    oscillator_analytic,
    total_energy,
)
from .fe1d import BarMesh, BarProperties, ElementKind, make_bar_model, mode_initial_state
from .integrators import NewmarkParameters, NewtonSettings, Scheme, Trajectory, simulate, step
from .momenta import compute_momenta, momenta_tangents, momentum_balance_residual

__version__ = "0.1.0"

__all__ = [
    "BarMesh",
    "BarProperties",
    "DimensionError",
    "ElementInversion",
    "ElementKind",
    "NewmarkParameters",
    "NewtonDivergence",
    "NewtonSettings",
    "OscillatorModel",
    "Scheme",
    "State",
    "SystemModel",
    "TimeGrid",
    "Trajectory",
    "amplification",
    "compute_momenta",
    "convergence_order",
    "error_norms",
    "make_bar_model",
    "max_stable_cfl",
    "mode_initial_state",
    "momenta_tangents",
    "momentum_balance_residual",
    "oscillator_analytic",
    "simulate",
    "spectral_radius",
    "stability_threshold",
    "step",
    "symplecticity_check",
    "total_energy",
]
