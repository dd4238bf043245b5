"""Berry potentials, curvatures and Berry-Maxwell identities on parameter grids."""

__version__ = "0.1.0"

from .berry import (EigenBundle, GaugePotential, build_eigenbundle, chern_number,
                    connection_eigenstate, curvature_local, curvature_sum_over_states,
                    electric_curvature, electric_curvature_bilinear, gauge_transform_apply,
                    geometric_phase, magnetic_curvature, plaquette_curvature,
                    potentials_full_wavefunction, scalar_potential_eigenstate, wilson_loop_phase)
from .electro import BerryMaxwell, VerificationReport, run_verification_suite
from .grid import ParameterGrid, ScalarField, TimeAxis, VectorField
from .models import get_family, register_family

__all__ = [
    "BerryMaxwell", "EigenBundle", "GaugePotential", "ParameterGrid", "ScalarField", "TimeAxis",
    "VectorField", "VerificationReport", "build_eigenbundle", "chern_number",
    "connection_eigenstate", "curvature_local", "curvature_sum_over_states",
    "electric_curvature", "electric_curvature_bilinear", "gauge_transform_apply",
    "geometric_phase", "get_family", "magnetic_curvature", "plaquette_curvature",
    "potentials_full_wavefunction", "register_family", "run_verification_suite",
    "scalar_potential_eigenstate", "wilson_loop_phase",
]
