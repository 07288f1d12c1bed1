"""Polynomial-manifold dimension reduction for snapshot data.

Linear POD approximations ``s ~ c + V s_hat`` are enriched with elementwise
polynomial terms, ``s ~ c + V s_hat + Vbar Xi g(s_hat)``, where ``[V, Vbar]``
has orthonormal columns. Two learning routes are provided: a closed-form fit
on top of the POD modes (:func:`fit_pod_manifold`) and an alternating
minimization that also rotates the basis (:func:`fit_am`).
"""

from .errors import (
    DegenerateProblemError,
    FormatError,
    IllPosedError,
    InputError,
    InstabilityError,
    PolyManifoldError,
    TruncatedFileError,
)
from .snapshots import (
    CenteringVector,
    DatasetCatalog,
    SnapshotMatrix,
    center,
    export_csv,
    load_catalog,
    load_matrix,
    save_catalog,
    save_matrix,
    uncenter,
)
from .kdv import KdvConfig, build_catalog, discrete_mass, initial_condition, simulate
from .pod import PodBasis, compute_pod, project, rank_for_tolerance, truncation_error
from .polynomial import feature_matrix, poly_features, poly_jacobian
from .manifold import (
    ManifoldModel,
    decode,
    encode_pod,
    fit_pod_manifold,
    load_model,
    pod_model,
    regularized_objective,
    save_model,
    solve_coefficients,
)
from .alternating import (
    AmConfig,
    AmTrace,
    NlsSettings,
    coefficient_step,
    encode_am,
    fit_am,
    latent_step,
    procrustes_step,
)
from .evaluation import (
    ErrorSweepRecord,
    relative_errors,
    representation_error,
    run_sweep,
    space_time_field,
)

__version__ = "0.1.0"
