"""Path-integral Monte Carlo and boundary-element solvers for electrode models on the unit ball."""

from .boundary_data import BoundaryData, Field, Polynomial
from .geometry import BoundaryRegion, DomainSpec, Electrode, default_domain, default_electrodes
from .stochastic import WalkParams, run_path, run_paths

__version__ = "0.1.0"

__all__ = [
    "BoundaryData",
    "BoundaryRegion",
    "DomainSpec",
    "Electrode",
    "Field",
    "Polynomial",
    "WalkParams",
    "default_domain",
    "default_electrodes",
    "run_path",
    "run_paths",
]
