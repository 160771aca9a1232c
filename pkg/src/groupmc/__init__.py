"""Group-aware low-rank matrix completion.

Convex completion of a partially observed matrix with nuclear-norm penalties
on overlapping row-category submatrices, solved by a proximal-average
(accelerated) gradient iteration, plus masking regimes, penalty calibration,
a global SVT baseline and subspace-fidelity evaluation.
"""

__version__ = "0.1.0"

from .linalg import (ThinSVD, grassmann_distance, nuclear_norm,
                     principal_angles, procrustes_subspace_error,
                     soft_threshold_svd, svd_full, svd_truncated)
from .observation import (ObservationMask, load_mask_csv, mask_block_rows,
                          project_observed, sample_uniform_mask, save_mask_csv,
                          split_holdout)
from .groups import (CoverageError, GroupStructure, extract_rows, embed_rows,
                     lambda_heuristic, load_groups_csv, normalize_weights,
                     save_groups_csv, validate_cover, weights_from_lambdas)
from .solver import (CompletionResult, DivergenceError, SolverConfig,
                     clip_spikiness, objective, prox_average_step, prox_group,
                     solve_global_svt, solve_group_aware,
                     step_size_from_accuracy)
from .evalbench import (SyntheticSpec, adjusted_rand_index, frobenius_error,
                        generate_crossed_groups, kmeans,
                        normalized_mutual_information, per_group_grassmann,
                        per_group_subspace_error, rmse_on, select_lambda_scale)

__all__ = [
    "ThinSVD", "svd_full", "svd_truncated", "soft_threshold_svd",
    "nuclear_norm", "principal_angles", "grassmann_distance",
    "procrustes_subspace_error",
    "ObservationMask", "project_observed", "sample_uniform_mask",
    "mask_block_rows", "split_holdout", "save_mask_csv", "load_mask_csv",
    "GroupStructure", "CoverageError", "validate_cover", "extract_rows",
    "embed_rows", "normalize_weights", "lambda_heuristic",
    "weights_from_lambdas", "save_groups_csv", "load_groups_csv",
    "SolverConfig", "CompletionResult", "DivergenceError", "objective",
    "prox_group", "prox_average_step", "step_size_from_accuracy",
    "clip_spikiness", "solve_group_aware", "solve_global_svt",
    "SyntheticSpec", "generate_crossed_groups", "rmse_on", "frobenius_error",
    "per_group_subspace_error", "per_group_grassmann", "kmeans",
    "adjusted_rand_index", "normalized_mutual_information",
    "select_lambda_scale",
]
