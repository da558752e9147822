"""Closed-form concept erasure for cross-attention K/V projection weights."""

__version__ = "0.1.0"

from .bounds import BoundReport, bound_chain
from .derivation import DerivationResult, derivation_gradient, derivation_objective, derive_embedding
from .driver import (
    EpochReport,
    EpochState,
    EraseSpec,
    FidelityReport,
    epoch_step,
    fidelity_report,
    iterative_erase,
)
from .edit import (
    closed_form_edit,
    drift,
    edit_coefficients,
    edit_layer_set,
    edit_objective,
    project_kv,
)
from .errors import (
    ConditioningWarning,
    DimensionMismatchError,
    KvEditError,
    LayerAlignmentError,
    MalformedHeaderError,
    OffsetRangeError,
    SelectionError,
    SingularMatrixError,
    TensorFileError,
    TruncatedFileError,
    UnsupportedDtypeError,
)
from .oracle import (
    CertificationSummary,
    CompareReport,
    OracleOutcome,
    certify_derivations,
    certify_edits,
    compare,
    oracle_derive,
    oracle_edit,
)
from .tensorfile import (
    ModelStats,
    SelectionPattern,
    TensorEntry,
    TensorFile,
    changed_payload_ranges,
    merge_back,
    model_stats,
    read_tensor_file,
    select_cross_attention,
    write_tensor_file,
)
from .types import (
    AttentionLayerSet,
    ConceptTask,
    EditConfig,
    Embedding,
    ProjectionMatrix,
)

__all__ = [
    "AttentionLayerSet",
    "BoundReport",
    "CertificationSummary",
    "CompareReport",
    "ConceptTask",
    "ConditioningWarning",
    "DerivationResult",
    "DimensionMismatchError",
    "EditConfig",
    "Embedding",
    "EpochReport",
    "EpochState",
    "EraseSpec",
    "FidelityReport",
    "KvEditError",
    "LayerAlignmentError",
    "MalformedHeaderError",
    "ModelStats",
    "OffsetRangeError",
    "OracleOutcome",
    "ProjectionMatrix",
    "SelectionError",
    "SelectionPattern",
    "SingularMatrixError",
    "TensorEntry",
    "TensorFile",
    "TruncatedFileError",
    "UnsupportedDtypeError",
    "bound_chain",
    "certify_derivations",
    "certify_edits",
    "changed_payload_ranges",
    "closed_form_edit",
    "compare",
    "derivation_gradient",
    "derivation_objective",
    "derive_embedding",
    "drift",
    "edit_coefficients",
    "edit_layer_set",
    "edit_objective",
    "epoch_step",
    "fidelity_report",
    "iterative_erase",
    "merge_back",
    "model_stats",
    "oracle_derive",
    "oracle_edit",
    "project_kv",
    "read_tensor_file",
    "select_cross_attention",
    "write_tensor_file",
]
