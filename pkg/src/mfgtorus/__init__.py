"""Mean-field game equilibria on the flat torus.

The package solves the coupled HJB / Fokker-Planck system of a mean-field
game with quadratic control cost and density-dependent kernel costs on
``T^d`` (``d`` in 1, 2, 3), assembles the time-reversed Navier-Stokes-like
form of the equilibrium, and cross-checks every stage with Monte-Carlo
oracles.
"""

from .costs import KernelCost
from .fixed_point import Equilibrium, NonConvergenceError, apply_phi, exploitability, solve_equilibrium
from .grid import TorusGrid
from .measures import d1T, wasserstein1_torus
from .nse import assemble_nse_solution, time_reverse

__all__ = [
    "TorusGrid", "KernelCost", "Equilibrium", "NonConvergenceError", "apply_phi", "exploitability",
    "solve_equilibrium", "d1T", "wasserstein1_torus", "assemble_nse_solution", "time_reverse",
]
__version__ = "0.1.0"
