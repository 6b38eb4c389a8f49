"""Projection-based prediction-correction methods for distributed consensus optimization."""
from .convex_sets import Ball, Box, Halfspace, NonnegOrthant, WholeSpace
from .graph import Topology, adjacency_uniform, algebraic_connectivity, apply_A, build_topology, laplacian
from .problems import ConsensusProblem, QuadraticObjective, generate_lsq, oracle_solve, toy_problem
from .runtime import SimulationConfig, simulate
from .vi_solver import PrimalDualPoint, SolverConfig, extragradient_solve, solve, vi_residual

__version__ = "0.1.0"
