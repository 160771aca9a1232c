"""Dense linear algebra kernels: SVD, singular value thresholding, subspace geometry.

Everything here operates on plain 2-D float64 ``numpy`` arrays. Inputs are
validated to be finite; orthonormality checks use :data:`ORTHO_TOL`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Orthonormality tolerance for subspace inputs (max abs deviation of Q^T Q from I).
ORTHO_TOL = 1e-6
# Singular values below RANK_REL_TOL * sigma_1 count as zero for rank decisions.
RANK_REL_TOL = 1e-12


class ThinSVD(NamedTuple):
    """Thin singular value decomposition A = U @ diag(S) @ V.T.

    U is n-by-k with orthonormal columns, S is the length-k nonincreasing
    vector of singular values, V is m-by-k with orthonormal columns.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T

    @property
    def rank(self) -> int:
        if self.S.size == 0 or self.S[0] <= 0.0:
            return 0
        return int(np.sum(self.S > RANK_REL_TOL * self.S[0]))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Resolve the per-column sign ambiguity of an SVD: make the
    # largest-magnitude entry of each left singular vector positive and flip
    # the matching right vector, so decompositions are reproducible.
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def svd_full(A) -> ThinSVD:
    """Exact thin SVD with k = min(n, m) and sign-fixed singular vectors."""
    A = as_matrix(A, "A")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = _fix_signs(U, Vt.T)
    return ThinSVD(U, s, V)


def svd_truncated(A, k: int, oversample: int = 10, power_iters: int = 2,
                  seed: int = 0) -> ThinSVD:
    """Randomized rank-k SVD (range finder + power iterations).

    Deterministic for a fixed `seed`: the Gaussian test matrix is drawn from
    a counter-based Philox generator. With `power_iters` subspace iterations
    the top-k singular values are accurate whenever the spectrum decays; when
    the sketch covers the full column space the result is exact.

    Parameters
    ----------
    A : array, n x m
    k : target rank, 1 <= k <= min(n, m)
    oversample : extra sketch columns beyond k
    power_iters : subspace iteration count (QR-stabilized)
    seed : seed for the Philox test matrix
    """
    A = as_matrix(A, "A")
    n, m = A.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"rank k={k} out of range [1, {min(n, m)}]")
    rng = np.random.Generator(np.random.Philox(seed))
    ell = min(k + oversample, min(n, m))
    G = rng.standard_normal((m, ell))
    Q, _ = np.linalg.qr(A @ G)
    for _ in range(power_iters):
        Q, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Q)
    B = Q.T @ A
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub
    U, V = _fix_signs(U[:, :k], Vt[:k].T)
    return ThinSVD(U, s[:k].copy(), V)


def nuclear_norm(A) -> float:
    """Sum of singular values."""
    A = as_matrix(A, "A")
    return float(np.linalg.svd(A, compute_uv=False).sum())


def soft_threshold_svd(A, tau: float) -> np.ndarray:
    """Singular value soft-thresholding: U @ diag(max(S - tau, 0)) @ V.T.

    This is the proximal operator of ``tau * ||.||_*`` (Cai, Candes & Shen,
    2010). ``tau = 0`` returns the input unchanged.
    """
    A = as_matrix(A, "A")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau == 0.0:
        return A.copy()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vt


def _check_orthonormal(Q: np.ndarray, name: str) -> None:
    gram = Q.T @ Q
    if np.max(np.abs(gram - np.eye(Q.shape[1]))) > ORTHO_TOL:
        raise ValueError(f"{name} does not have orthonormal columns")


def principal_angles(U, V) -> np.ndarray:
    """Principal angles (radians, nondecreasing) between span(U) and span(V).

    The cosines of the principal angles are the singular values of U.T @ V;
    each angle lies in [0, pi/2]. Small angles are recovered through their
    sines (the singular values of V - U @ (U.T @ V)), which keeps full
    precision where arccos alone would lose half of it (Knyazev &
    Argentati, 2002). Both inputs must be m-by-k with orthonormal columns.
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if U.shape != V.shape:
        raise ValueError(f"shape mismatch: {U.shape} vs {V.shape}")
    _check_orthonormal(U, "U")
    _check_orthonormal(V, "V")
    cross = U.T @ V
    cosines = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
    # Sines sorted ascending align with cosines sorted descending.
    sines = np.sort(np.clip(np.linalg.svd(V - U @ cross, compute_uv=False),
                            0.0, 1.0))
    theta = np.where(cosines ** 2 >= 0.5, np.arcsin(sines), np.arccos(cosines))
    return np.sort(theta)


def grassmann_distance(U, V, kind: str = "geodesic") -> float:
    """Distance between the subspaces spanned by U and V.

    kind="geodesic" gives the l2 norm of the principal-angle vector (the
    Grassmannian geodesic length); kind="chordal" gives the projection-metric
    variant ||sin(theta)||_2.
    """
    theta = principal_angles(U, V)
    if kind == "geodesic":
        return float(np.linalg.norm(theta))
    if kind == "chordal":
        return float(np.linalg.norm(np.sin(theta)))
    raise ValueError(f"unknown Grassmann distance kind: {kind!r}")


def procrustes_subspace_error(Qhat, Qstar) -> float:
    """min over orthogonal R of ||Qhat @ R - Qstar||_F.

    Equals the closed form sqrt(2r - 2 ||Qhat.T @ Qstar||_*) for orthonormal
    m-by-r inputs; evaluated through the optimal alignment R = P @ S.T from
    the SVD Qhat.T @ Qstar = P diag(.) S.T, which stays accurate when the
    subspaces (nearly) coincide.
    """
    Qhat = as_matrix(Qhat, "Qhat")
    Qstar = as_matrix(Qstar, "Qstar")
    if Qhat.shape != Qstar.shape:
        raise ValueError(f"shape mismatch: {Qhat.shape} vs {Qstar.shape}")
    _check_orthonormal(Qhat, "Qhat")
    _check_orthonormal(Qstar, "Qstar")
    P, _, St = np.linalg.svd(Qhat.T @ Qstar)
    return float(np.linalg.norm(Qhat @ (P @ St) - Qstar))
