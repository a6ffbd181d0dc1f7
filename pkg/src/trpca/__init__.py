"""Tensor robust principal component analysis.

Separates an observed tensor into a low-multilinear-rank part and an
entrywise-sparse part by scaled gradient descent on a Tucker
factorization, with soft-shrinkage thresholds that decay geometrically.
"""

from .tensor_ops import (
    as_tensor,
    fro_norm,
    inf_norm,
    inner,
    kron,
    l1inf_norm,
    l2inf_norm,
    matricize,
    multilinear_mul,
    tensorize,
)
from .tucker import (
    SvdResult,
    TuckerFactors,
    breve_factor,
    hosvd,
    op_norm,
    reconstruct,
    thin_svd,
)
from .rpca import (
    DivergenceError,
    IterationTrace,
    Reference,
    SingularGramError,
    SolveResult,
    SolverConfig,
    SolverState,
    ThresholdSchedule,
    TraceRow,
    make_schedule,
    scaled_step,
    soft_shrink,
    solve,
    solve_orderN,
    spectral_init,
    update_sparse,
)
from .metrics import (
    AlignmentResult,
    ConditionNumbers,
    Diagnostics,
    ErrorReport,
    NormBoundsReport,
    align_factors,
    condition_numbers,
    error_report,
    incoherence,
    sparse_norm_bounds_check,
    sparsity_fraction,
    tensor_diagnostics,
)
from .synth import (
    GroundTruth,
    SweepCell,
    SweepSpec,
    gen_truth,
    run_sweep,
    sample_support,
)
from .fileio import (
    TensorFileError,
    SweepSpecError,
    parse_sweep_spec,
    read_tensor,
    write_report,
    write_sweep_csv,
    write_tensor,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "ConditionNumbers",
    "Diagnostics",
    "DivergenceError",
    "ErrorReport",
    "GroundTruth",
    "IterationTrace",
    "NormBoundsReport",
    "Reference",
    "SingularGramError",
    "SolveResult",
    "SolverConfig",
    "SolverState",
    "SvdResult",
    "SweepCell",
    "SweepSpec",
    "SweepSpecError",
    "TensorFileError",
    "ThresholdSchedule",
    "TraceRow",
    "TuckerFactors",
    "align_factors",
    "as_tensor",
    "breve_factor",
    "condition_numbers",
    "error_report",
    "fro_norm",
    "gen_truth",
    "hosvd",
    "incoherence",
    "inf_norm",
    "inner",
    "kron",
    "l1inf_norm",
    "l2inf_norm",
    "make_schedule",
    "matricize",
    "multilinear_mul",
    "op_norm",
    "parse_sweep_spec",
    "read_tensor",
    "reconstruct",
    "run_sweep",
    "sample_support",
    "scaled_step",
    "soft_shrink",
    "solve",
    "solve_orderN",
    "sparse_norm_bounds_check",
    "sparsity_fraction",
    "spectral_init",
    "tensor_diagnostics",
    "tensorize",
    "thin_svd",
    "update_sparse",
    "write_report",
    "write_sweep_csv",
    "write_tensor",
    "write_trace_csv",
    "__version__",
]
