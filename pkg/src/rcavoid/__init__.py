"""Collision-avoiding trajectories for multi-agent systems on Riemannian manifolds."""

from .boundary import BoundarySpec, Circle, Submanifold, Waypoint, boundary_residual
from .dynamics import AgentJet, ElParams, LieJet, SystemState, el_residual, lie_rhs, rhs_first_order
from .errors import (CollisionGuardError, ContinuationStallError, ContractError, IllPosedError,
                     InjectivityError, NonConvergenceError, ScenarioError, SingularChartError)
from .functional import Segment, Trajectory, VariationField, evaluate_J, fd_variation, first_variation
from .manifolds import (Euclidean, ManifoldPoint, SO3ExpChart, SO3Symmetric, Sphere2, TangentVector,
                        christoffel, curvature, distance_sq, exp_map, log_map, metric)
from .potential import PotentialSpec, f_prime, f_value, pair_force
from .scenario import Scenario, dump_scenario, load_scenario, read_trajectory, write_trajectory
from .solver import ResidualReport, SolverConfig, solve, verify

__version__ = "0.1.0"
