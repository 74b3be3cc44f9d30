"""Dense primitives: Householder reflections, whitening factors, cosine.

A reflection through the hyperplane orthogonal to a nonzero vector v maps
x to x - (2 <v, x> / <v, v>) v. Its matrix H = I - (2 / <v, v>) v v^T is
symmetric, orthogonal, involutive and has determinant -1, so any product of
reflections is exactly orthogonal by construction regardless of the vectors'
values. Everything downstream (rotation stacks, the anonymizers) leans on
the O(d) application form here; the explicit matrix form exists for oracles,
export and small-scale checks.

Whitening: for a positive definite covariance C with Cholesky factor
A A^T = C (A lower triangular), the whitening map is L = A^{-1}; samples
with covariance C map to identity covariance, and L^{-1} L^{-T} = C.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatch,
    InvalidShape,
    NotPositiveDefinite,
    ZeroReflectionVector,
    ZeroVector,
)

# Reflections with a direction shorter than this are numerically undefined.
REFLECTION_NORM_FLOOR = 1e-8


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a 1-D float64 array.

    Args:
        x: Array-like expected to be one-dimensional.
        dim: If given, the required length.

    Raises:
        InvalidShape: ``x`` is not one-dimensional.
        DimensionMismatch: ``dim`` is given and does not match.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidShape(f"expected a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {arr.shape[0]}")
    return arr


def as_square(m) -> np.ndarray:
    """Validate and return ``m`` as a square 2-D float64 array."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidShape(f"expected a square matrix, got shape {arr.shape}")
    return arr


def householder_apply(v, x) -> np.ndarray:
    """Reflect ``x`` through the hyperplane orthogonal to ``v`` in O(d).

    Args:
        v: Reflection direction, length d, norm above REFLECTION_NORM_FLOOR.
        x: A single vector of length d, or an (n, d) array of row vectors.

    Returns:
        The reflected vector(s), same shape as ``x``.

    Raises:
        ZeroReflectionVector: ``v`` is (numerically) zero.
        DimensionMismatch: ``v`` and ``x`` disagree on d.
    """
    v = as_vector(v)
    beta = float(v @ v)
    if beta < REFLECTION_NORM_FLOOR**2:
        raise ZeroReflectionVector(
            f"reflection direction norm {np.sqrt(beta):.3e} is below the floor"
        )
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != v.shape[0]:
            raise DimensionMismatch(
                f"vector length {arr.shape[0]} != direction length {v.shape[0]}"
            )
        return arr - (2.0 * (v @ arr) / beta) * v
    if arr.ndim == 2:
        if arr.shape[1] != v.shape[0]:
            raise DimensionMismatch(
                f"row length {arr.shape[1]} != direction length {v.shape[0]}"
            )
        t = arr @ v
        return arr - np.outer(t, v) * (2.0 / beta)
    raise InvalidShape(f"expected a vector or row matrix, got shape {arr.shape}")


def householder_matrix(v) -> np.ndarray:
    """Return the explicit d x d reflection matrix for direction ``v``.

    Intended for oracles and export; prefer :func:`householder_apply` in
    compute paths.
    """
    v = as_vector(v)
    beta = float(v @ v)
    if beta < REFLECTION_NORM_FLOOR**2:
        raise ZeroReflectionVector(
            f"reflection direction norm {np.sqrt(beta):.3e} is below the floor"
        )
    return np.eye(v.shape[0]) - (2.0 / beta) * np.outer(v, v)


def cholesky_factor(cov) -> np.ndarray:
    """Lower-triangular A with A A^T = cov.

    Args:
        cov: Symmetric positive definite matrix. Mild asymmetry from
            accumulation is tolerated; the symmetric part is factored.

    Raises:
        NotPositiveDefinite: factorization fails; the exception's ``pivot``
            is the zero-based index of the first non-positive pivot.
    """
    c = as_square(cov)
    c = 0.5 * (c + c.T)
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        # Re-run a scalar factorization only to name the failing pivot.
        d = c.shape[0]
        a = np.zeros_like(c)
        for j in range(d):
            s = c[j, j] - a[j, :j] @ a[j, :j]
            if s <= 0.0 or not np.isfinite(s):
                raise NotPositiveDefinite(j) from None
            a[j, j] = np.sqrt(s)
            if j + 1 < d:
                a[j + 1 :, j] = (c[j + 1 :, j] - a[j + 1 :, :j] @ a[j, :j]) / a[j, j]
        raise NotPositiveDefinite(d - 1) from None


def cholesky_whitening(cov) -> np.ndarray:
    """Whitening matrix L = A^{-1} for the Cholesky factor A of ``cov``.

    Samples with covariance ``cov`` map under L to identity covariance,
    and L^{-1} L^{-T} reconstructs ``cov``.
    """
    a = cholesky_factor(cov)
    return solve_triangular(a, np.eye(a.shape[0]), lower=True)


def cosine(a, b) -> float:
    """Cosine similarity of two nonzero vectors, clipped to [-1, 1].

    Raises:
        ZeroVector: either input has zero norm.
        DimensionMismatch: lengths differ.
    """
    a = as_vector(a)
    b = as_vector(b, dim=a.shape[0])
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine is undefined for a zero vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def cosine_matrix(rows_a, rows_b) -> np.ndarray:
    """All-pairs cosine similarity between two stacks of row vectors.

    Args:
        rows_a: (n, d) array; every row must be nonzero.
        rows_b: (m, d) array; every row must be nonzero.

    Returns:
        (n, m) array with entry (i, j) = cosine(rows_a[i], rows_b[j]).
    """
    a = np.asarray(rows_a, dtype=np.float64)
    b = np.asarray(rows_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidShape("expected 2-D row stacks")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"row lengths differ: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ZeroVector("cosine is undefined for a zero row")
    sims = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(sims, -1.0, 1.0)
