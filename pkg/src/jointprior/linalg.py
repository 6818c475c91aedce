"""Dense symmetric-positive-definite linear algebra primitives.

All matrices are plain float64 ndarrays.  Factorisations raise instead of
regularising, so modelling errors (indefinite covariances, correlations at
or beyond +-1) surface at the call site rather than being silently clipped.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import get_lapack_funcs

# Symmetry is checked relative to the largest entry.
SYMMETRY_RTOL = 1e-12
# Strict contractions must satisfy sigma_max <= 1 - CONTRACTION_MARGIN.
CONTRACTION_MARGIN = 1e-12
# Eigenvalues below EIGENVALUE_FLOOR * lambda_max are treated as nonpositive.
EIGENVALUE_FLOOR = 1e-14


class FactorizationError(ValueError):
    """An SPD factorisation failed (input not positive definite)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ContractionError(ValueError):
    """A matrix required to be a strict contraction is not one."""

    def __init__(self, message, sigma_max=None):
        super().__init__(message)
        self.sigma_max = sigma_max


def check_symmetric(a, name="matrix", rtol=SYMMETRY_RTOL):
    """Return ``a`` as a float array after checking squareness and symmetry."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.size == 0:
        return a
    scale = float(np.abs(a).max())
    skew = float(np.abs(a - a.T).max())
    if skew > rtol * max(scale, 1.0e-300):
        raise ValueError(
            f"{name} is not symmetric: max|A - A^T| = {skew:.3e} "
            f"exceeds {rtol:g} * max|A| = {rtol * scale:.3e}"
        )
    return a


def cholesky_lower(a, name="matrix"):
    """Lower-triangular R with R @ R.T == a.

    Raises FactorizationError naming the failing pivot (0-based) when the
    input is not positive definite.
    """
    a = check_symmetric(a, name)
    if a.shape[0] == 0:
        return a.copy()
    (potrf,) = get_lapack_funcs(("potrf",), (a,))
    r, info = potrf(a, lower=True, clean=True, overwrite_a=False)
    if info > 0:
        raise FactorizationError(
            f"{name} is not positive definite: Cholesky broke down at pivot {info - 1}",
            pivot=info - 1,
        )
    if info < 0:
        raise ValueError(f"invalid argument {-info} passed to LAPACK potrf")
    return r


def sym_eig(a, name="matrix"):
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending
    and eigenvectors as orthonormal columns, so a = V @ diag(w) @ V.T.
    """
    a = check_symmetric(a, name)
    w, v = np.linalg.eigh(a)
    return np.ascontiguousarray(w[::-1]), np.ascontiguousarray(v[:, ::-1])


def _positive_eigenvalues(a, name):
    w, v = sym_eig(a, name)
    if a.shape[0] and w[0] > 0 and w[-1] > EIGENVALUE_FLOOR * w[0]:
        return w, v
    raise FactorizationError(
        f"{name} is not positive definite: eigenvalue range "
        f"[{w[-1] if a.shape[0] else float('nan'):.3e}, "
        f"{w[0] if a.shape[0] else float('nan'):.3e}]"
    )


def principal_sqrt(a, name="matrix"):
    """Unique SPD S with S @ S == a, via symmetric eigendecomposition."""
    w, v = _positive_eigenvalues(a, name)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def spectral_norm(c):
    """Largest singular value of a rectangular matrix."""
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        return 0.0
    return float(np.linalg.svd(c, compute_uv=False)[0])


def _is_diagonal(c):
    return c.shape[0] == c.shape[1] and np.count_nonzero(c - np.diag(np.diagonal(c))) == 0


def defect_factor(c):
    """Defect operator D (n2 x n2) of a strict contraction: D @ D.T == I - C.T @ C.

    Uses the symmetric choice D = (I - C.T C)^(1/2), which is deterministic;
    diagonal contractions take the closed-form diagonal path.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"contraction must be 2-D, got shape {c.shape}")
    sigma = spectral_norm(c)
    if sigma >= 1.0 - CONTRACTION_MARGIN:
        raise ContractionError(
            f"not a strict contraction: sigma_max = {sigma:.17g} >= 1 - {CONTRACTION_MARGIN:g}",
            sigma_max=sigma,
        )
    if _is_diagonal(c):
        return np.diag(np.sqrt(1.0 - np.diagonal(c) ** 2))
    gram = np.eye(c.shape[1]) - c.T @ c
    return principal_sqrt(0.5 * (gram + gram.T), "defect Gram matrix")


def logdet_spd(a, name="matrix"):
    """log det of an SPD matrix via Cholesky (2 * sum log R_ii)."""
    r = cholesky_lower(a, name)
    return 2.0 * float(np.sum(np.log(np.diagonal(r)))) if a.shape[0] else 0.0


def scale_rows(d, x):
    """diag(d) @ x for x of shape (n,) or (n, k)."""
    return (x.T * d).T
