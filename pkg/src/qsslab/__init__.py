"""Simulation, quasi-steady-state reduction and validity analysis for zymogen activation kinetics."""

__version__ = "0.1.0"

from .errors import QSSLabError  # noqa: E402
from .model import (  # noqa: E402
    DerivedQuantities,
    InitialConditions,
    RateConstants,
    State,
    derived,
    simulate,
)

__all__ = [
    "QSSLabError",
    "RateConstants",
    "InitialConditions",
    "State",
    "DerivedQuantities",
    "derived",
    "simulate",
    "__version__",
]
