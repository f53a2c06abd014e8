"""Theta-method stability analysis for delay differential-algebraic equations."""

__version__ = "0.1.0"

from .builtins import BUILTINS, build_builtin, load_model
from .errors import *  # noqa: F401,F403
from .integrator import HistoryBuffer, SimulationResult, growth_rate, simulate, step
from .model import (
    DdaeSystem,
    DelaySpec,
    EquilibriumPoint,
    LinearDelayModel,
    find_equilibrium,
    linearize,
    reference_step,
)
from .pencil import (
    DeformationReport,
    DiscretePencil,
    EigenSpectrum,
    ThetaMatch,
    build_discrete_pencil,
    damping_ratio,
    deformation_report,
    deformed_spectrum,
    exact_spectrum,
    pencil_eigenvalues,
    stiffness_ratio,
    theta_match,
)
from .scalar import (
    GrowthMatrix,
    ScalarTestDde,
    StabilityRaster,
    ThetaParams,
    growth_function,
    growth_matrix,
    spectral_radius,
    stability_raster,
)
