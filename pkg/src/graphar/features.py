"""Linear feature maps on adjacency matrices and the stacked design matrices.

A feature map sends an ``n x n`` matrix to an ``m x d`` feature block. Features
propagate as row blocks, ``F(A_{t+1}) ~ F(A_t) @ W`` with ``W`` of shape
``d x d``. Vector-valued maps (explicit basis, degrees) are the ``m = 1`` case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import compute_svd

KINDS = ("explicit-basis", "degree", "svd-projection", "projection")


@dataclass(frozen=True)
class FeatureMap:
    """A linear map ``A -> F(A)`` together with its adjoint.

    ``kind`` selects the representation:

    * ``explicit-basis``: ``basis`` holds ``d`` matrices, ``F(A)_i = <basis_i, A>``.
    * ``degree``: row sums, ``F(A) = (A 1)^T`` with ``d = n``.
    * ``svd-projection``: ``F(A) = A @ projection`` with orthonormal columns.
    * ``projection``: same as above with an arbitrary ``n x d`` matrix, e.g. the
      pseudo-inverse of a known right factor.
    """

    kind: str
    n: int
    basis: Optional[np.ndarray] = None
    projection: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "explicit-basis":
            if self.basis is None or self.basis.ndim != 3:
                raise ValueError("explicit-basis needs a (d, n, n) basis array")
            if self.basis.shape[1:] != (self.n, self.n):
                raise ValueError("basis matrices must be n x n")
        if self.kind in ("svd-projection", "projection"):
            if self.projection is None or self.projection.shape[0] != self.n:
                raise ValueError("projection must have n rows")
        if self.kind == "svd-projection":
            P = self.projection
            if not np.allclose(P.T @ P, np.eye(P.shape[1]), atol=1e-10):
                raise ValueError("svd-projection columns must be orthonormal")

    @property
    def m(self) -> int:
        return self.n if self.kind in ("svd-projection", "projection") else 1

    @property
    def d(self) -> int:
        if self.kind == "explicit-basis":
            return self.basis.shape[0]
        if self.kind == "degree":
            return self.n
        return self.projection.shape[1]

    @property
    def shape(self):
        return (self.m, self.d)

    def apply(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {A.shape}")
        if self.kind == "explicit-basis":
            return np.tensordot(self.basis, A, axes=([1, 2], [0, 1]))[None, :]
        if self.kind == "degree":
            return A.sum(axis=1)[None, :]
        return A @ self.projection

    def adjoint(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if F.shape != self.shape:
            raise ValueError(f"expected features of shape {self.shape}, got {F.shape}")
        if self.kind == "explicit-basis":
            return np.tensordot(F[0], self.basis, axes=(0, 0))
        if self.kind == "degree":
            return np.repeat(F[0][:, None], self.n, axis=1)
        return F @ self.projection.T


def explicit_basis(basis: Sequence) -> FeatureMap:
    B = np.asarray(basis, dtype=float)
    return FeatureMap("explicit-basis", B.shape[1], basis=B)


def degree_map(n: int) -> FeatureMap:
    return FeatureMap("degree", n)


def degree_basis(n: int) -> FeatureMap:
    """The degree map written as an explicit basis ``Omega_i = e_i 1^T``."""
    B = np.zeros((n, n, n))
    for i in range(n):
        B[i, i, :] = 1.0
    return explicit_basis(B)


def projection_map(P) -> FeatureMap:
    P = np.asarray(P, dtype=float)
    return FeatureMap("projection", P.shape[0], projection=P)


def fit_svd_projection(cumulative, d: int) -> FeatureMap:
    """Project onto the top-``d`` right singular vectors of ``cumulative``."""
    cumulative = np.asarray(cumulative, dtype=float)
    n = cumulative.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"feature dimension d={d} must lie in [1, {n}]")
    V = compute_svd(cumulative).V[:, :d]
    return FeatureMap("svd-projection", n, projection=np.ascontiguousarray(V))


def build_design(seq: Sequence, fmap: FeatureMap):
    """Stack feature blocks of ``A_0..A_{T-1}`` and ``A_1..A_T``.

    Returns ``(X_prev, X_next)``, each of shape ``(T*m, d)``.
    """
    if len(seq) < 2:
        raise ValueError("need at least two snapshots to build a design")
    blocks = [fmap.apply(A) for A in seq]
    return np.vstack(blocks[:-1]), np.vstack(blocks[1:])
