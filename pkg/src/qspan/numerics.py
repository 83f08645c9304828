"""Dense complex linear algebra shared by every other module.

Vectors are 1-d ``numpy`` arrays and matrices are 2-d arrays; the
``SubspaceBasis`` and ``EigenSystem`` containers wrap the two shapes that
carry extra invariants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

RANK_TOL = 1e-10
UNITARY_TOL = 1e-8


class DimensionError(ValueError):
    pass


class NotUnitaryError(ValueError):
    pass


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning a subspace of C^ambient_dim."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=complex)
        if cols.ndim != 2:
            raise DimensionError("basis columns must form a 2-d array")
        object.__setattr__(self, "columns", cols)

    @property
    def ambient_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def empty(cls, ambient_dim: int) -> "SubspaceBasis":
        return cls(np.zeros((ambient_dim, 0), dtype=complex))

    @classmethod
    def full(cls, ambient_dim: int) -> "SubspaceBasis":
        return cls(np.eye(ambient_dim, dtype=complex))

    @classmethod
    def coordinates(cls, ambient_dim: int, indices: Sequence[int]) -> "SubspaceBasis":
        cols = np.zeros((ambient_dim, len(indices)), dtype=complex)
        for c, i in enumerate(indices):
            cols[i, c] = 1.0
        return cls(cols)

    def is_orthonormal(self, tol: float = RANK_TOL) -> bool:
        gram = self.columns.conj().T @ self.columns
        return bool(np.max(np.abs(gram - np.eye(self.dim)), initial=0.0) <= tol)


@dataclass(frozen=True)
class EigenSystem:
    phases: np.ndarray   # eigenphases in (-pi, pi]
    vectors: np.ndarray  # unitary matrix, eigenvectors as columns

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * np.exp(1j * self.phases)) @ self.vectors.conj().T

    def low_phase_projector(self, theta: float) -> np.ndarray:
        """Projector onto eigenvectors with |phase| <= theta."""
        keep = np.abs(self.phases) <= theta
        v = self.vectors[:, keep]
        return v @ v.conj().T


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return vectors.astype(complex, copy=False)
    vecs = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    if not vecs:
        raise DimensionError("cannot infer ambient dimension from an empty list")
    dims = {v.shape[0] for v in vecs}
    if len(dims) != 1:
        raise DimensionError(f"vectors have mismatched dimensions {sorted(dims)}")
    return np.stack(vecs, axis=1)


def orthonormalize(vectors, ambient_dim: int | None = None) -> SubspaceBasis:
    """Orthonormal basis for the span of ``vectors``.

    ``vectors`` is a list of 1-d arrays or a matrix whose columns are the
    vectors. Directions with singular value below ``RANK_TOL`` times the
    largest one are dropped.
    """
    if ambient_dim is not None and not len(vectors):
        return SubspaceBasis.empty(ambient_dim)
    mat = _as_matrix(vectors)
    if ambient_dim is not None and mat.shape[0] != ambient_dim:
        raise DimensionError(f"expected ambient dimension {ambient_dim}, got {mat.shape[0]}")
    if mat.shape[1] == 0:
        return SubspaceBasis.empty(mat.shape[0])
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return SubspaceBasis.empty(mat.shape[0])
    rank = int(np.sum(s > RANK_TOL * s[0]))
    return SubspaceBasis(u[:, :rank])


def projector_onto(basis: SubspaceBasis) -> np.ndarray:
    c = basis.columns
    return c @ c.conj().T


def orthogonal_complement(basis: SubspaceBasis) -> SubspaceBasis:
    """Basis of the orthogonal complement of span(basis) in the ambient space."""
    n = basis.ambient_dim
    if basis.dim == 0:
        return SubspaceBasis.full(n)
    return SubspaceBasis(sla.null_space(basis.columns.conj().T, rcond=RANK_TOL))


def null_space(m: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal columns spanning ``ker m``, dropping singular values at or below ``tol``."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


def intersect_with_complement(outer: SubspaceBasis, inner: SubspaceBasis) -> SubspaceBasis:
    """Basis of span(outer) intersected with span(inner)^perp."""
    if outer.dim == 0:
        return SubspaceBasis.empty(outer.ambient_dim)
    if inner.dim == 0:
        return outer
    # coordinates c with inner^H (outer c) = 0; singular values are cosines, so the cut is absolute
    coeff = null_space(inner.columns.conj().T @ outer.columns, RANK_TOL)
    if coeff.shape[1] == 0:
        return SubspaceBasis.empty(outer.ambient_dim)
    return orthonormalize(outer.columns @ coeff)


def kernel_projector(a: np.ndarray) -> np.ndarray:
    """Projector onto the null space of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    n = a.shape[1]
    if a.size == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(n, dtype=complex)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    null = vh[rank:].conj().T
    return null @ null.conj().T


def min_norm_solution(a: np.ndarray, target: np.ndarray, restriction: SubspaceBasis):
    """Least-norm ``w`` in span(restriction) minimising ``||a w - target||``.

    Returns ``(w, residual)``. A residual below about 1e-8 means ``a w = target``
    is solvable inside the restriction.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    target = np.asarray(target, dtype=complex).ravel()
    if a.shape[0] != target.shape[0] or a.shape[1] != restriction.ambient_dim:
        raise DimensionError(
            f"shapes A{a.shape}, target({target.shape[0]}), restriction({restriction.ambient_dim})"
        )
    q = restriction.columns
    if q.shape[1] == 0:
        return np.zeros(a.shape[1], dtype=complex), float(np.linalg.norm(target))
    b = a @ q
    # cut relative to the full operator so a restriction to a near-null direction stays null
    scale = float(np.linalg.norm(a, 2)) if a.size else 0.0
    u, s, vh = np.linalg.svd(b, full_matrices=False)
    keep = s > RANK_TOL * max(scale, 1e-300)
    z = vh[keep].conj().T @ ((u[:, keep].conj().T @ target) / s[keep])
    w = q @ z
    return w, float(np.linalg.norm(a @ w - target))


def _principal_phase(z: np.ndarray) -> np.ndarray:
    ph = np.angle(z)
    ph[ph <= -np.pi + 1e-15] = np.pi
    return ph


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> None:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NotUnitaryError(f"expected a square matrix, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0)
    if err > tol:
        raise NotUnitaryError(f"||U^H U - I||_max = {err:.3e} exceeds {tol:g}")


def unitary_eigensystem(u: np.ndarray) -> EigenSystem:
    """Eigendecomposition of a unitary via the complex Schur form.

    For a normal matrix the Schur factor is diagonal, so the Schur vectors
    are an orthonormal eigenbasis even inside degenerate eigenspaces.
    """
    u = np.asarray(u, dtype=complex)
    check_unitary(u)
    t, z = sla.schur(u, output="complex")
    return EigenSystem(_principal_phase(np.diag(t).copy()), z)


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a), initial=0.0))
