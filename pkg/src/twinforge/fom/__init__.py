"""Full-order porous-media cooking model."""

from .materials import (
    MaterialConstants,
    choi_okos_component_props,
    effective_props,
    evaporation_flux,
    saturation_pressure,
    swelling_pressure,
)
from .solver import (
    CuboidGrid,
    FieldState,
    FomSolver,
    SimResult,
    darcy_velocity,
    simulate,
    step_fields,
)

__all__ = [
    "MaterialConstants", "choi_okos_component_props", "effective_props", "evaporation_flux",
    "saturation_pressure", "swelling_pressure", "CuboidGrid", "FieldState", "FomSolver",
    "SimResult", "darcy_velocity", "simulate", "step_fields",
]
