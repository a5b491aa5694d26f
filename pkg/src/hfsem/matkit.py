"""Dense linear-algebra kernels used throughout the package.

Half-vectorization and its inverse, the duplication matrix, Moore-Penrose
pseudoinverse, Cholesky log-determinant/inverse, and numeric rank.  All
functions are pure and operate on plain ``numpy`` arrays.

Conventions
-----------
``vec`` stacks columns (Fortran order).  ``vech`` stacks the columns of the
lower triangle including the diagonal: (1,1),(2,1),...,(p,1),(2,2),... .
The duplication matrix is built for exactly these orderings, so
``duplication_matrix(p) @ vech(A) == vec(A)`` for symmetric ``A``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefiniteError

__all__ = [
    "vech",
    "unvech",
    "vech_indices",
    "duplication_matrix",
    "pinv",
    "chol_logdet",
    "numeric_rank",
    "check_symmetric",
]

_SYM_TOL = 1e-8


def check_symmetric(a: np.ndarray, tol: float = _SYM_TOL) -> np.ndarray:
    """Validate that ``a`` is square and symmetric; return the symmetrized copy.

    Raises ``ValueError`` on non-square input, asymmetry beyond ``tol``
    (relative to the largest entry), or non-finite entries.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def vech_indices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the lower triangle in vech order (column-major)."""
    rows = np.concatenate([np.arange(j, p) for j in range(p)])
    cols = np.repeat(np.arange(p), np.arange(p, 0, -1))
    return rows, cols


def vech(a: np.ndarray) -> np.ndarray:
    """Half-vectorize a symmetric matrix into a vector of length p(p+1)/2."""
    a = check_symmetric(a)
    rows, cols = vech_indices(a.shape[0])
    return a[rows, cols]


def unvech(v: np.ndarray, p: int | None = None) -> np.ndarray:
    """Rebuild the symmetric p x p matrix whose vech is ``v``."""
    v = np.asarray(v, dtype=float)
    if p is None:
        p = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if p * (p + 1) // 2 != v.size:
        raise ValueError(f"vector of length {v.size} is not a vech of order {p}")
    rows, cols = vech_indices(p)
    out = np.zeros((p, p))
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def duplication_matrix(p: int) -> np.ndarray:
    """The p^2 x p(p+1)/2 duplication matrix mapping vech(A) to vec(A).

    Each row holds a single 1.  Row ``i + j*p`` (the vec slot of entry
    (i, j)) points at the vech slot of (max(i,j), min(i,j)).
    """
    if p < 1:
        raise ValueError("order must be at least 1")
    pbar = p * (p + 1) // 2
    rows, cols = vech_indices(p)
    slot = np.zeros((p, p), dtype=int)
    slot[rows, cols] = np.arange(pbar)
    slot[cols, rows] = slot[rows, cols]
    d = np.zeros((p * p, pbar))
    i, j = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    d[(i + j * p).ravel(), slot.ravel()] = 1.0
    return d


def pinv(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD with a relative cutoff."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.pinv(a, rcond=rtol)


def chol_logdet(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Log-determinant and inverse of a symmetric positive definite matrix.

    Returns ``(logdet, inverse)`` computed from a single Cholesky
    factorization.  Raises :class:`NotPositiveDefiniteError` when the
    factorization fails; callers probing a parameter space treat that as
    an out-of-region signal.
    """
    a = check_symmetric(a)
    try:
        c, low = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    inv = scipy.linalg.cho_solve((c, low), np.eye(a.shape[0]), check_finite=False)
    return logdet, 0.5 * (inv + inv.T)


def numeric_rank(a: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Number of singular values above ``rel_tol`` times the largest one."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))
