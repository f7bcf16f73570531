"""Reversible mass-action reaction-diffusion networks on Neumann boxes."""

from .equilibria import (
    Equilibrium,
    NoEquilibriumError,
    StoichiometricClass,
    all_equilibria,
    boundary_equilibria,
    boundary_growth_rate,
    class_of,
    positive_equilibrium,
)
from .grid import BoxDomain, ScalarField, dct_forward, dct_inverse, laplacian_apply, laplacian_eigenvalue, norm
from .network import (
    IndexSets,
    NetworkSyntaxError,
    ReactionNetwork,
    ReversiblePair,
    Species,
    conservation_basis,
    format_network,
    mass_action_rate,
    parse_network,
    rate_jacobian,
)
from .simulator import (
    DiagnosticsSeries,
    FieldSet,
    NegativityBreach,
    NonFiniteError,
    SimConfig,
    SimulationError,
    Trajectory,
    simulate,
    simulate_linearized,
    step,
)

__version__ = "0.1.0"
