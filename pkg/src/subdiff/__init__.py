"""Nonuniform L1 and fractional Crank-Nicolson (Alikhanov) time stepping for
1-D linear reaction-subdiffusion problems, with the discrete kernel,
complementary kernel and bound machinery used to analyse them."""

from .special import SeriesDivergenceError, log_gamma, mittag_leffler, omega
from .mesh import TimeMesh, build_custom_mesh, build_graded_mesh, build_uniform_mesh, mesh_diagnostics, random_mesh
from .kernels import (
    KernelRow,
    ComplementaryRow,
    kernel_row,
    kernel_rows,
    complementary_row,
    complementary_rows,
    verify_kernel_assumptions,
)
from .spatial import SpaceGrid, build_grid, h1_seminorm
from .problems import ProblemSpec, example1, example2, custom_problem
from .solver import SchemeConfig, SolutionHistory, solve, step
from .analysis import ConvergenceReport, run_convergence, convergence_order, h1_error

__version__ = "0.1.0"
