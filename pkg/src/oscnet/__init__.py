"""oscnet: certifiably stable coupled oscillator networks.

Simulation (exact closed-form oscillator splitting and classical steppers),
stability certification (Lyapunov + input-to-state gain), system
identification, and saturating setpoint control, with a benchmarking CLI.
"""

__version__ = "0.1.0"

from ._util import DivergenceError, NumericalError, ParameterError, make_rng
from .params import (
    ConParams,
    OriginalParams,
    materialize,
    materialized,
    load_params,
    random_con_params,
    save_params,
)
from .network import (
    field_original,
    field_w,
    original_view,
    potential_energy,
    potential_force,
    solve_equilibrium,
    to_w_coordinates,
    from_w_coordinates,
)
from .integrators import IntegratorSpec, Trajectory, rollout
from .closed_form import cfa_con_rollout, cfa_udcon_rollout
from .stability import StabilityCertificate, certify, iss_gain, lyapunov_value
from .plants import PLANT_KINDS, PlantModel, make_plant
from .pcc import PccParams, pcc_field, pcc_forward_kinematics

__all__ = [
    "__version__",
    "DivergenceError",
    "NumericalError",
    "ParameterError",
    "make_rng",
    "ConParams",
    "OriginalParams",
    "materialize",
    "materialized",
    "load_params",
    "random_con_params",
    "save_params",
    "field_original",
    "field_w",
    "original_view",
    "potential_energy",
    "potential_force",
    "solve_equilibrium",
    "to_w_coordinates",
    "from_w_coordinates",
    "IntegratorSpec",
    "Trajectory",
    "rollout",
    "cfa_con_rollout",
    "cfa_udcon_rollout",
    "StabilityCertificate",
    "certify",
    "iss_gain",
    "lyapunov_value",
    "PLANT_KINDS",
    "PlantModel",
    "make_plant",
    "PccParams",
    "pcc_field",
    "pcc_forward_kinematics",
]
