from .burgers import (
    AugmentationPolicy,
    FluxConfig,
    IntegrationError,
    IntegratorConfig,
    SolveDiagnostics,
    augment_geometry,
    burgers_solve_nonuniform,
    burgers_solve_uniform,
    van_leer_limiter,
)
from .darcy import DarcySolveError, darcy_solve
from .lorenz import lorenz96_rhs, lorenz96_solve

__all__ = [
    "AugmentationPolicy",
    "FluxConfig",
    "IntegrationError",
    "IntegratorConfig",
    "SolveDiagnostics",
    "augment_geometry",
    "burgers_solve_nonuniform",
    "burgers_solve_uniform",
    "van_leer_limiter",
    "DarcySolveError",
    "darcy_solve",
    "lorenz96_rhs",
    "lorenz96_solve",
]
