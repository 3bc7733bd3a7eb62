"""Dense matrix primitives used by the solvers.

Proximal operators for the l1 and trace norms, an SVD wrapper with a fixed
sign convention, power iteration for operator norms and the tangent-space
projections associated with a reference matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

RANK_RTOL = 1e-8


class SVDConvergenceError(RuntimeError):
    pass


class PowerIterationError(RuntimeError):
    """Power iteration ran out of iterations.

    The last estimate is kept on ``estimate`` so callers can decide whether it
    is good enough.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T

    def rank(self, rtol: float = RANK_RTOL) -> int:
        if self.s.size == 0 or self.s[0] == 0:
            return 0
        return int(np.sum(self.s > rtol * self.s[0]))


def soft_threshold(Z, gamma):
    """Entrywise ``sign(z) * max(|z| - gamma, 0)``; prox of ``gamma * ||.||_1``."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    Z = np.asarray(Z, dtype=float)
    return np.sign(Z) * np.maximum(np.abs(Z) - gamma, 0.0)


def compute_svd(Z) -> SvdFactors:
    """Thin SVD ``Z = U diag(s) V^T`` with ``k = min(rows, cols)`` components.

    Each pair of singular vectors is flipped so the largest-magnitude entry of
    the right vector is positive, which makes the factors reproducible.
    """
    Z = np.asarray(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise ValueError("SVD input contains non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SVDConvergenceError(str(exc)) from exc
    V = Vt.T
    if V.size:
        idx = np.argmax(np.abs(V), axis=0)
        signs = np.sign(V[idx, np.arange(V.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
        V = V * signs
    return SvdFactors(U, s, V)


def svd_shrink(Z, tau):
    """Singular value shrinkage, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    Z = np.asarray(Z, dtype=float)
    if tau == 0:
        return Z.copy()
    f = compute_svd(Z)
    s = np.maximum(f.s - tau, 0.0)
    keep = s > 0
    return (f.U[:, keep] * s[keep]) @ f.V[:, keep].T


def truncated_svd(Z, r: int) -> SvdFactors:
    f = compute_svd(Z)
    if not 1 <= r <= f.s.size:
        raise ValueError(f"rank {r} outside [1, {f.s.size}]")
    return SvdFactors(f.U[:, :r], f.s[:r], f.V[:, :r])


def numerical_rank(Z, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(Z, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def operator_norm(
    apply: Callable,
    adjoint: Callable,
    x0,
    max_iters: int = 1000,
    tol: float = 1e-6,
) -> float:
    """Largest singular value of a linear map by power iteration on ``A^* A``.

    Parameters
    ----------
    apply, adjoint : callable
        The map and its adjoint. Both act on (tuples of) ndarrays; the domain
        is whatever structure ``x0`` has.
    x0 : ndarray or tuple of ndarray
        Start vector, typically drawn from a seeded RNG by the caller.
    max_iters : int
        Iteration budget.
    tol : float
        Relative change of the estimate below which iteration stops.

    Raises
    ------
    PowerIterationError
        If the estimate has not stabilised after ``max_iters`` iterations.
    """
    x = _as_tuple(x0)
    nrm = _norm(x)
    if nrm == 0:
        raise ValueError("start vector is zero")
    x = tuple(p / nrm for p in x)
    est = 0.0
    for _ in range(max_iters):
        y = _as_tuple(apply(*x))
        z = _as_tuple(adjoint(*y))
        nz = _norm(z)
        if nz == 0:
            return 0.0
        new = np.sqrt(nz)
        x = tuple(p / nz for p in z)
        if est > 0 and abs(new - est) <= tol * new:
            return float(new)
        est = new
    raise PowerIterationError(
        f"power iteration did not converge in {max_iters} iterations", float(est)
    )


def _as_tuple(x):
    return tuple(x) if isinstance(x, (tuple, list)) else (x,)


def _norm(parts) -> float:
    return float(np.sqrt(sum(np.vdot(p, p).real for p in parts)))


def _projectors(B: np.ndarray, factors: SvdFactors, rtol: float = RANK_RTOL):
    n, m = B.shape
    if factors.U.shape[0] != n or factors.V.shape[0] != m:
        raise ValueError(
            f"matrix of shape {B.shape} does not match factors "
            f"({factors.U.shape[0]}, {factors.V.shape[0]})"
        )
    r = factors.rank(rtol)
    U, V = factors.U[:, :r], factors.V[:, :r]
    PU, PV = U @ U.T, V @ V.T
    return PU, np.eye(n) - PU, PV, np.eye(m) - PV


def project_tangent(B, factors: SvdFactors) -> np.ndarray:
    """``B - P_{U_perp} B P_{V_perp}`` for the singular subspaces in ``factors``.

    Only singular vectors with nonzero singular values (at the numerical rank
    threshold) span the subspaces.
    """
    B = np.asarray(B, dtype=float)
    _, PUp, _, PVp = _projectors(B, factors)
    return B - PUp @ B @ PVp


def four_block_decomposition(B, factors: SvdFactors):
    """Split ``B`` into four pairwise orthogonal pieces.

    Returns ``(P_Up B P_Vp, P_U B P_V, P_U B P_Vp, P_Up B P_V)`` where ``p``
    marks the orthogonal complement. The pieces sum to ``B``.
    """
    B = np.asarray(B, dtype=float)
    PU, PUp, PV, PVp = _projectors(B, factors)
    return PUp @ B @ PVp, PU @ B @ PV, PU @ B @ PVp, PUp @ B @ PV
