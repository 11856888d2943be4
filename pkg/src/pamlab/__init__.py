"""Numerical laboratory for the renormalised parabolic Anderson model on the two-dimensional lattice."""

__version__ = "0.1.0"

from .errors import BlowUpError, DegenerateMeasure, InvalidInput, PamLabError, SolverFailure, UnreliableEstimate
from .torus import GridSpec, LatticeField, ModeSet, SpectralField, WalkMeasure, validate_walk_measure
from .besov import DyadicPartition, build_partition
from .noise import EnhancedNoise, Potential, PotentialSpec, enhanced_noise, sample_potential
from .solver import InitialCondition, PamTrajectory, solve_pam

__all__ = [
    "BlowUpError",
    "DegenerateMeasure",
    "DyadicPartition",
    "EnhancedNoise",
    "GridSpec",
    "InitialCondition",
    "InvalidInput",
    "LatticeField",
    "ModeSet",
    "PamLabError",
    "PamTrajectory",
    "Potential",
    "PotentialSpec",
    "SolverFailure",
    "SpectralField",
    "UnreliableEstimate",
    "WalkMeasure",
    "build_partition",
    "enhanced_noise",
    "sample_potential",
    "solve_pam",
    "validate_walk_measure",
]
