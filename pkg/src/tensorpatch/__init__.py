"""tensorpatch: low-rank weight surgery for transformer checkpoints.

Stacks named weight matrices into 3-mode tensors, replaces them with CP or
Tucker reconstructions (or a per-matrix truncated-SVD baseline), and drives
patch-evaluate-restore sweeps against an external evaluation oracle.
"""

from .decomp import (
    CPModel,
    FitOptions,
    FitReport,
    TuckerModel,
    cp_als,
    cp_reconstruct,
    default_rank_triple,
    hosvd,
    relative_error,
    truncated_svd_matrix,
    tucker_hooi,
    tucker_reconstruct,
)
from .stacking import (
    ArchitecturePattern,
    Segment,
    SliceProvenance,
    StackedTensor,
    StackKind,
    WeightRole,
    build_global_tensor,
    build_layer_tensor,
    build_segment_tensor,
    segment_layer_range,
    unstack_and_patch,
)
from .sweep import (
    OracleError,
    OracleResult,
    ReportRow,
    SweepConfig,
    emit_report,
    evaluate_with_oracle,
    run_sweep,
)
from .tensor_ops import (
    DenseTensor,
    as_3mode,
    fold,
    frobenius_norm,
    khatri_rao,
    mode_n_product,
    stack_matrices,
    unfold,
    unstack,
)
from .weights_io import ContainerError, ModelWeights, WeightEntry, load_weights, save_weights

__version__ = "0.1.0"
