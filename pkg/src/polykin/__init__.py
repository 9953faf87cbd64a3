"""Nucleation, growth, decay and breakage kinetics of polymer ensembles.

Finite-volume and particle solvers for the closed-system size dynamics,
long-time rate estimators, and a steady-profile eigenproblem pipeline.
"""

__version__ = "0.1.0"

from .rates import (  # noqa: F401
    ConstantBreakage,
    Fragmentation,
    InverseDecayDepoly,
    LinearDepoly,
    NucleationSpec,
    RateModel,
    Regime,
    SaturatedPowerBreakage,
    UniformKernel,
    a_coefficient,
    eval_d,
    eval_d_inverse,
    kernel_partial_moment,
    validate_assumptions,
)
from .state import SizeGrid, SystemState, moment, number, total_mass  # noqa: F401
from .scenario import Scenario, load_scenario  # noqa: F401
