"""Finite-volume simulation and regularity diagnostics for the saturated
aggregation-diffusion equation

    d_t rho = div( sigma(rho) grad rho + rho sigma(rho) grad(V + W * rho) ),

where the saturation sigma vanishes at the maximal density rho_max.
"""
from __future__ import annotations

from .errors import (ConfigError, ContractError, DomainError, GeometryError, SatDiffError,
                     ShapeError, SolverAbort, StepRejected)
from .mesh import DensityField, Grid, Trajectory, face_gradient, divergence, l1_distance, sup_distance
from .model import (EnergyDensity, Potential, PotentialSpec, Saturation, big_sigma, convolve,
                    dissipation, free_energy, sigma_eval)
from .solver import (EnergyLedger, InitialDatum, SimulationConfig, cfl_dt, drift_velocity,
                     face_flux, rhs, run, run_pair, stationary_residual, step, truncated_gibbs)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DomainError", "GeometryError", "SatDiffError",
    "ShapeError", "SolverAbort", "StepRejected",
    "DensityField", "Grid", "Trajectory", "face_gradient", "divergence", "l1_distance",
    "sup_distance",
    "EnergyDensity", "Potential", "PotentialSpec", "Saturation", "big_sigma", "convolve",
    "dissipation", "free_energy", "sigma_eval",
    "EnergyLedger", "InitialDatum", "SimulationConfig", "cfl_dt", "drift_velocity",
    "face_flux", "rhs", "run", "run_pair", "stationary_residual", "step", "truncated_gibbs",
]
