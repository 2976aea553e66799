"""Cooperative fare design for transit + mobility-on-demand alliances."""

from .model import (
    DiscountCategory,
    FareBounds,
    FareVector,
    Instance,
    ObjectiveWeights,
    Operator,
    PassengerType,
    Route,
    load,
    save,
    validate,
)
from .choice import welfare, operator_revenue
from .second_stage import solve_exact, solve_enumerate
from .descent import DescentConfig, sos2_cd, bf_cd, timed_sos2_cd
from .bayesopt import bo_loop
from .game import allocate, iterated_best_response, verify_ne
from .casegen import SyntheticConfig, generate

__all__ = [
    "DiscountCategory", "FareBounds", "FareVector", "Instance",
    "ObjectiveWeights", "Operator", "PassengerType", "Route",
    "load", "save", "validate", "welfare", "operator_revenue",
    "solve_exact", "solve_enumerate", "DescentConfig", "sos2_cd", "bf_cd",
    "timed_sos2_cd", "bo_loop", "allocate", "iterated_best_response",
    "verify_ne", "SyntheticConfig", "generate",
]

__version__ = "0.1.0"
