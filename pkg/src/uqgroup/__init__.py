"""Grouped ensemble propagation for adaptive sparse-grid collocation.

The package couples an adaptive hierarchical sparse-grid surrogate with an
ensemble PCG solver whose lanes share one sparsity pattern, and measures how
much iteration count a grouping strategy wastes when samples of unequal
difficulty share an ensemble.
"""

from .ensemble import (
    EnsembleCsrMatrix,
    EnsembleError,
    IdentityPreconditioner,
    JacobiPreconditioner,
    LaneSolveResult,
    NumericalBreakdownError,
    ensemble_pcg,
    jacobi_precond,
)
from .fem3d import AssembledEnsembleSystem, FemError, StructuredMesh, assemble, qoi
from .grouping import (
    GroupingError,
    GroupingPlan,
    compute_R,
    group_by_key,
    group_natural,
    group_oracle,
    predicted_speedup,
)
from .harness import (
    AnalyticConfig,
    ConfigurationError,
    FieldConfig,
    MeshConfig,
    RunConfig,
    RunReport,
    SolverConfig,
    adaptive_run,
    analytic_iters,
    analytic_qoi,
    config_from_dict,
    emit_reports,
    parse_manifest,
    preset_config,
    read_base_curve,
)
from .hier_grid import (
    GridError,
    HierGrid,
    IncompleteDataError,
    NodeId,
    RefinementPolicy,
    basis_eval,
    children,
    hat_eval,
)
from .random_field import (
    Eigenpair1D,
    FieldError,
    KLDiffusionField,
    anisotropy_indicator,
    build_field,
    eigenpairs_1d,
)

__version__ = "0.1.0"

__all__ = [
    "EnsembleCsrMatrix",
    "EnsembleError",
    "IdentityPreconditioner",
    "JacobiPreconditioner",
    "LaneSolveResult",
    "NumericalBreakdownError",
    "ensemble_pcg",
    "jacobi_precond",
    "AssembledEnsembleSystem",
    "FemError",
    "StructuredMesh",
    "assemble",
    "qoi",
    "GroupingError",
    "GroupingPlan",
    "compute_R",
    "group_by_key",
    "group_natural",
    "group_oracle",
    "predicted_speedup",
    "AnalyticConfig",
    "ConfigurationError",
    "FieldConfig",
    "MeshConfig",
    "RunConfig",
    "RunReport",
    "SolverConfig",
    "adaptive_run",
    "analytic_iters",
    "analytic_qoi",
    "config_from_dict",
    "emit_reports",
    "parse_manifest",
    "preset_config",
    "read_base_curve",
    "GridError",
    "HierGrid",
    "IncompleteDataError",
    "NodeId",
    "RefinementPolicy",
    "basis_eval",
    "children",
    "hat_eval",
    "FieldError",
    "Eigenpair1D",
    "KLDiffusionField",
    "anisotropy_indicator",
    "build_field",
    "eigenpairs_1d",
    "__version__",
]
