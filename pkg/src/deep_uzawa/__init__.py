"""Deep Uzawa multiplier schemes for Dirichlet conditions in Ritz and PINN solvers."""

from .autodiff import Jet2, NonFiniteGradient, backward, directional_jet, laplacian, spatial_gradient
from .network import MlpParams, forward, forward_hard_bc, init_params, silu
from .sampling import Domain, PointSet, sample_boundary, sample_interior
from .losses import PdeData, pinn_lagrangian, residual, ritz_lagrangian
from .problems import (Problem, boundary_layer_problem, highdim_problem, lshape_problem,
                       trace_constant_bound)
from .uzawa import Multiplier, RunHistory, UzawaConfig, adam_step, multiplier_update, run

__version__ = "0.1.0"
