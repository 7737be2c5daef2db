"""Robust MPC for unknown input-affine systems.

Pipeline: nonparametric local-linear estimation of the dynamics with
bootstrap percentile uncertainty, codomain-driven adaptive linearization
regions, cumulative error-tube propagation, and a shrinking-horizon
robust MPC, plus baseline controllers and an experiment harness.
"""

from .boxes import (Box, affine_image, box_subset, contains, intersect,
                    minkowski_sum, pontryagin_diff)
from .errors import EstimationError, SolverError, UsageError
from .estimator import (ConfidenceBand, KernelSpec, LocalFit, bootstrap_band,
                        default_bandwidth, estimate_at, estimation_error_set,
                        local_fit, point_estimate)
from .ftocp import (FtocpProblem, FtocpSolution, build_ftocp, mpc_policy,
                    solve_ftocp, stage_cost)
from .linearizer import (AffineModel, LinearizationResult, linearize_at,
                         linearize_trajectory)
from .loop import (ClosedLoopTrace, ControllerKind, LoopConfig,
                   draw_noise_sequence, run_controller, run_linear,
                   run_naive, run_proposed, run_unconstrained)
from .plant import (Dataset, DatasetPlan, NoiseSpec, TaskSpec, TrueSystem,
                    affine_system, collect_dataset, cuberoot_system,
                    sample_truncated_normal, step_true, substream)
from .tube import ErrorTube, propagate_tube, tighten_constraints

__version__ = "0.1.0"

__all__ = [
    "Box", "affine_image", "box_subset", "contains", "intersect",
    "minkowski_sum", "pontryagin_diff",
    "EstimationError", "SolverError", "UsageError",
    "ConfidenceBand", "KernelSpec", "LocalFit", "bootstrap_band",
    "default_bandwidth", "estimate_at", "estimation_error_set", "local_fit",
    "point_estimate",
    "FtocpProblem", "FtocpSolution", "build_ftocp", "mpc_policy",
    "solve_ftocp", "stage_cost",
    "AffineModel", "LinearizationResult", "linearize_at",
    "linearize_trajectory",
    "ClosedLoopTrace", "ControllerKind", "LoopConfig", "draw_noise_sequence",
    "run_controller", "run_linear", "run_naive", "run_proposed",
    "run_unconstrained",
    "Dataset", "DatasetPlan", "NoiseSpec", "TaskSpec", "TrueSystem",
    "affine_system", "collect_dataset", "cuberoot_system",
    "sample_truncated_normal", "step_true", "substream",
    "ErrorTube", "propagate_tube", "tighten_constraints",
    "__version__",
]
