"""Phase-field simulator for mean curvature flow with varifold diagnostics.

Evolves the scalar reaction-diffusion gradient flow of the quartic
double-well energy, reconstructs the associated measure-theoretic interface
data (mass density, normals, normal speed, generalized mean curvature),
and certifies the defining inequalities of the sharp-interface evolution:
the optimal energy-dissipation principle, the transport identity for the
phase volume, and calibration-based relative-entropy stability bounds
against classical shrinking spheres.
"""

from .allen_cahn import (
    SIGMA,
    DiffuseState,
    DoubleWell,
    StepScheme,
    auto_dt,
    double_well_eval,
    optimal_profile,
    step,
    well_prepared_init,
)
from .calibration import CalibrationFields, ClassicalSphere
from .errors import BlowUpError, ConfigurationError
from .grid import GridSpec, ScalarField, VectorField, gradient, integrate, laplacian
from .varifold import DiscreteVarifold, PhaseIndicator, build_varifold

__all__ = [
    "SIGMA",
    "BlowUpError",
    "CalibrationFields",
    "ClassicalSphere",
    "ConfigurationError",
    "DiffuseState",
    "DiscreteVarifold",
    "DoubleWell",
    "GridSpec",
    "PhaseIndicator",
    "ScalarField",
    "StepScheme",
    "VectorField",
    "auto_dt",
    "build_varifold",
    "double_well_eval",
    "gradient",
    "integrate",
    "laplacian",
    "optimal_profile",
    "step",
    "well_prepared_init",
]

__version__ = "0.1.0"
