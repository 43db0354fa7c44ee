"""Fixed-stress split solver for coupled poroelastoplastic flow and mechanics."""

from .config import ConfigError, ConfigValidationError, load_config, parse_config
from .coupling import (ContractionReport, Controls, CouplingError, Problem, SplitState,
                       contraction_report, convergence_criterion, fixed_stress_step,
                       iteration_difference, monolithic_residual, run_transient)
from .material import MaterialError, MaterialModel, Plasticity
from .mesh import HexMesh, build_dofmap, classify_boundary, generate_brick

__version__ = "0.1.0"
