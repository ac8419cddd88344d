"""Rank, pseudo-inverse and null-space helpers sharing one rank policy.

Every decomposition here is a single SVD, and the same :class:`RankPolicy`
decides which singular values count, so feasibility and rank verdicts made
in different places of an experiment agree with each other.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np


class NumericalError(RuntimeError):
    """The SVD did not converge or the input was not finite."""


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class RankPolicy:
    """Threshold rule for deciding which singular values are nonzero.

    ``relative``: threshold = tolerance * s_max, with tolerance defaulting to
    ``max(rows, cols) * eps``. ``absolute``: threshold = tolerance.
    """

    mode: Literal["relative", "absolute"] = "relative"
    tolerance: float | None = None

    def __post_init__(self):
        if self.mode not in ("relative", "absolute"):
            raise ValueError(f"unknown rank mode {self.mode!r}")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.mode == "absolute" and self.tolerance is None:
            raise ValueError("absolute mode needs an explicit tolerance")

    def threshold(self, s: np.ndarray, shape: tuple[int, int],
                  scale: float | None = None) -> float:
        """``scale`` replaces s_max as the reference magnitude when given."""
        if self.mode == "absolute":
            return float(self.tolerance)
        smax = float(s[0]) if s.size else 0.0
        if scale is not None:
            smax = float(scale)
        tol = self.tolerance
        if tol is None:
            tol = max(shape) * np.finfo(float).eps
        return tol * smax


DEFAULT_POLICY = RankPolicy()


def _svd(M: np.ndarray, full: bool = False):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix contains NaN or Inf")
    try:
        return np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for {M.shape} matrix: {exc}") from exc


def singular_values(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for {M.shape} matrix: {exc}") from exc


def rank_of(M: np.ndarray, policy: RankPolicy = DEFAULT_POLICY) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise DimensionError("rank of an empty matrix is undefined here")
    s = singular_values(M)
    return int(np.sum(s > policy.threshold(s, M.shape)))


def null_space(M: np.ndarray, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis (columns) of the right null space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _, s, Vt = _svd(M, full=True)
    r = int(np.sum(s > policy.threshold(s, M.shape)))
    return Vt[r:].T.copy()


def left_null_space(M: np.ndarray, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis (rows) of the left null space: ``N @ M ≈ 0``."""
    return null_space(np.atleast_2d(M).T, policy).T


def column_compress(M: np.ndarray, policy: RankPolicy = DEFAULT_POLICY,
                    scale: float | None = None) -> np.ndarray:
    """Orthonormal columns spanning range(M), one per retained singular value."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0 or M.shape[0] == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = _svd(M)
    r = int(np.sum(s > policy.threshold(s, M.shape, scale)))
    return U[:, :r].copy()


@dataclass(frozen=True, eq=False)
class AffineSolutionSet:
    """``{offset + basis @ z}``; ``feasible`` is False when no exact solution exists.

    For an infeasible system ``offset`` still holds the least-squares point and
    ``residual`` its 2-norm misfit.
    """

    offset: np.ndarray
    basis: np.ndarray
    residual: float = 0.0
    feasible: bool = True
    rank: int | None = None
    # s_max / s_min over the retained singular values of the solved matrix.
    condition: float = 1.0

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[1])

    def point(self, z=None) -> np.ndarray:
        if z is None:
            return self.offset.copy()
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.dimension:
            raise DimensionError(f"z has {z.size} entries, set has dimension {self.dimension}")
        return self.offset + self.basis @ z


def feasibility_threshold(b: np.ndarray, tol_abs: float = 1e-8,
                          tol_rel: float = 1e-10) -> float:
    return tol_abs + tol_rel * float(np.linalg.norm(b))


def solve_affine(A: np.ndarray, b: np.ndarray, policy: RankPolicy = DEFAULT_POLICY,
                 tol_abs: float = 1e-8, tol_rel: float = 1e-10) -> AffineSolutionSet:
    """All solutions of ``A g = b`` as ``pinv(A) b + N z``.

    The residual of the minimum-norm least-squares point decides feasibility:
    above ``tol_abs + tol_rel * ||b||`` the set is reported as infeasible
    rather than raising.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.size:
        raise DimensionError(f"A has {A.shape[0]} rows, b has {b.size} entries")
    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains NaN or Inf")
    # Economy SVD suffices for tall matrices: Vt is then already square.
    U, s, Vt = _svd(A, full=A.shape[0] < A.shape[1])
    r = int(np.sum(s > policy.threshold(s, A.shape)))
    coef = (U[:, :r].T @ b) / s[:r]
    offset = Vt[:r].T @ coef
    basis = Vt[r:].T.copy()
    residual = float(np.linalg.norm(A @ offset - b))
    feasible = residual <= feasibility_threshold(b, tol_abs, tol_rel)
    cond = float(s[0] / s[r - 1]) if r else 1.0
    return AffineSolutionSet(offset, basis, residual, feasible, r, cond)


def parameterize_image(U: np.ndarray, sol: AffineSolutionSet,
                       policy: RankPolicy = DEFAULT_POLICY) -> AffineSolutionSet:
    """Minimal description of ``{U g | g in sol}``.

    The returned basis has orthonormal columns spanning range(U N), so its
    dimension is rank(U N), the fewest parameters that describe the image.
    Relative thresholds are taken against ||U|| times the condition number
    of the solved system: a computed null-space basis is rotated by up to
    eps * cond, and ``U @ N`` inherits that error.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != sol.offset.size:
        raise DimensionError(f"U has {U.shape[1]} columns, solutions have {sol.offset.size} entries")
    offset = U @ sol.offset
    if sol.dimension == 0:
        basis = np.zeros((U.shape[0], 0))
    else:
        s_u = singular_values(U)
        scale = (float(s_u[0]) if s_u.size else 0.0) * max(sol.condition, 1.0)
        basis = column_compress(U @ sol.basis, policy, scale)
    return AffineSolutionSet(offset, basis, sol.residual, sol.feasible, sol.rank, sol.condition)


def in_span(B: np.ndarray, X: np.ndarray) -> float:
    """Largest residual of projecting the columns of ``X`` onto range(B).

    ``B`` must have orthonormal columns.
    """
    X = np.atleast_2d(X)
    if X.size == 0:
        return 0.0
    R = X - B @ (B.T @ X)
    return float(np.max(np.abs(R)))
