"""Sparse multiple kernel learning over product (tensor) kernels.

Learns a nonnegative, l2-bounded combination of the exponentially many
elementwise products of per-variable base kernels, without ever enumerating
them: each iteration solves the inner ridge problem, draws one product kernel
with probability proportional to the magnitude of its gradient component, and
applies a projected single-coordinate update. Baselines over the explicitly
enumerated kernel set and a CLI benchmark harness are included.
"""

from .baselines import (
    EnumeratedIndexSet,
    FullGradResult,
    enumerate_index_set,
    full_gradient,
    run_full_gradient,
    run_ucd,
)
from .dataset import (
    Dataset,
    DatasetError,
    MultiIndex,
    StandardizerParams,
    SyntheticSpec,
    gen_synthetic,
    load_csv,
    split,
    standardize,
    synthetic_target,
)
from .dual import (
    DualSolveError,
    DualState,
    LossSpec,
    assemble_combined_gram,
    dual_objective,
    objective_J,
    predict,
    solve_alpha,
)
from .gradient import (
    GRAD_SCALE,
    DegreeMasses,
    GradSample,
    RhoSchedule,
    degree_masses,
    grad_component,
    importance_estimate,
    total_mass_C,
)
from .harness import MetricsOutput, RunConfig, parse_cli, run_experiment, run_scaling_study
from .kernels import (
    BaseKernelSet,
    GramMatrix,
    KernelError,
    build_base_kernels,
    count_index_set,
    hadamard_power,
    product_kernel_cross,
    product_kernel_matrix,
)
from .optimizer import (
    OptimizerState,
    RunRecord,
    RunResult,
    SparseTheta,
    average_theta,
    default_step_size,
    project_pos_l2ball,
    run,
    step,
)
from .sampler import SamplerError, SamplerWorkspace, brute_force_q, sample_multi_index

__version__ = "0.1.0"

__all__ = [
    "BaseKernelSet",
    "Dataset",
    "DatasetError",
    "DegreeMasses",
    "DualSolveError",
    "DualState",
    "EnumeratedIndexSet",
    "FullGradResult",
    "GRAD_SCALE",
    "GradSample",
    "GramMatrix",
    "KernelError",
    "LossSpec",
    "MetricsOutput",
    "MultiIndex",
    "OptimizerState",
    "RhoSchedule",
    "RunConfig",
    "RunRecord",
    "RunResult",
    "SamplerError",
    "SamplerWorkspace",
    "SparseTheta",
    "StandardizerParams",
    "SyntheticSpec",
    "assemble_combined_gram",
    "average_theta",
    "brute_force_q",
    "build_base_kernels",
    "count_index_set",
    "default_step_size",
    "degree_masses",
    "dual_objective",
    "enumerate_index_set",
    "full_gradient",
    "gen_synthetic",
    "grad_component",
    "hadamard_power",
    "importance_estimate",
    "load_csv",
    "objective_J",
    "parse_cli",
    "predict",
    "product_kernel_cross",
    "product_kernel_matrix",
    "project_pos_l2ball",
    "run",
    "run_experiment",
    "run_full_gradient",
    "run_scaling_study",
    "run_ucd",
    "sample_multi_index",
    "solve_alpha",
    "split",
    "standardize",
    "step",
    "synthetic_target",
    "total_mass_C",
]
