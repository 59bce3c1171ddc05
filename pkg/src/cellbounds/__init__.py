"""Sharp bounds on counterfactual parameters in binary response models.

The package enumerates the response-type cells of a hyperplane arrangement
in latent space, projects joint latent/parameter cells onto the parameter
space to obtain representative points, and solves small linear programs to
bound counterfactual choice probabilities and treatment effects, with
plug-in estimation and bootstrap inference on top.
"""

from .geometry import (
    Arrangement,
    Cell,
    GeometryConfig,
    Hyperplane,
    cell_count_bound,
    enumerate_cells,
    enumerate_cells_bruteforce,
    interior_point,
)
from .simplex import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    LinearProgram,
    LpSolution,
    solve,
)

__all__ = [
    "Arrangement",
    "Cell",
    "GeometryConfig",
    "Hyperplane",
    "cell_count_bound",
    "enumerate_cells",
    "enumerate_cells_bruteforce",
    "interior_point",
    "LinearProgram",
    "LpSolution",
    "solve",
    "OPTIMAL",
    "INFEASIBLE",
    "NUMERICAL_FAILURE",
]
