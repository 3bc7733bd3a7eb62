"""Joint regression objectives over ``(S, W)`` and their smooth-part gradients.

The convex objective is

    L(S, W) = (1/d) ||X_prev W - X_next||^2 + (1/d) ||F_T W - F(S)||^2
              + tau ||S||_* + gamma ||S||_1 + kappa ||W||_1

and the factorized one replaces ``S`` by ``U V^T`` and the two ``S``
penalties by ``gamma (||U||_1 + ||V||_1)``. All squared norms are Frobenius.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import FeatureMap, build_design
from .kernels import operator_norm


@dataclass(frozen=True)
class Hyperparams:
    tau: float = 0.0
    gamma: float = 0.0
    kappa: float = 0.0
    alpha: float = 0.5
    rank: Optional[int] = None

    def __post_init__(self):
        for name in ("tau", "gamma", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be positive")


@dataclass(frozen=True)
class ProblemData:
    X_prev: np.ndarray
    X_next: np.ndarray
    F_T: np.ndarray
    fmap: FeatureMap
    cumulative: Optional[np.ndarray] = None  # sum of observed snapshots

    def __post_init__(self):
        if self.X_prev.shape != self.X_next.shape:
            raise ValueError("X_prev and X_next must have the same shape")
        if self.F_T.shape != self.fmap.shape:
            raise ValueError("F_T does not match the feature map shape")

    @property
    def n(self) -> int:
        return self.fmap.n

    @property
    def d(self) -> int:
        return self.fmap.d

    @property
    def T(self) -> int:
        return self.X_prev.shape[0] // self.fmap.m


def make_problem(seq: Sequence, fmap: FeatureMap) -> ProblemData:
    """Problem data for observed snapshots ``A_0..A_T``."""
    X_prev, X_next = build_design(seq, fmap)
    cumulative = np.sum([np.asarray(A, float) for A in seq], axis=0)
    return ProblemData(X_prev, X_next, X_next[-fmap.m:].copy(), fmap, cumulative)


def _check(data: ProblemData, S=None, W=None):
    if S is not None and S.shape != (data.n, data.n):
        raise ValueError(f"S must be {data.n}x{data.n}, got {S.shape}")
    if W is not None and W.shape != (data.d, data.d):
        raise ValueError(f"W must be {data.d}x{data.d}, got {W.shape}")


def phi(data: ProblemData, S, W):
    """The joint linear map ``(S, W) -> (X_prev W, F(S) - F_T W)``."""
    S, W = np.asarray(S, float), np.asarray(W, float)
    _check(data, S, W)
    return data.X_prev @ W, data.fmap.apply(S) - data.F_T @ W


def phi_adjoint(data: ProblemData, B1, B2):
    return data.fmap.adjoint(B2), data.X_prev.T @ B1 - data.F_T.T @ B2


def phi_norm(
    data: ProblemData,
    seed: int = 0,
    tol: float = 1e-6,
    weights: tuple = (1.0, 1.0),
) -> float:
    """Operator norm of ``phi``, optionally of ``phi(sqrt(w_S) S, sqrt(w_W) W)``."""
    rng = np.random.default_rng(seed)
    x0 = (rng.standard_normal((data.n, data.n)), rng.standard_normal((data.d, data.d)))
    a, b = np.sqrt(weights[0]), np.sqrt(weights[1])

    def fwd(S, W):
        return phi(data, a * S, b * W)

    def adj(B1, B2):
        G_S, G_W = phi_adjoint(data, B1, B2)
        return a * G_S, b * G_W

    return operator_norm(fwd, adj, x0, max_iters=10000, tol=tol)


def _residuals(data, S, W):
    B1, B2 = phi(data, S, W)
    return B1 - data.X_next, B2


def smooth_L(data: ProblemData, S, W) -> float:
    R1, R2 = _residuals(data, S, W)
    return (np.sum(R1**2) + np.sum(R2**2)) / data.d


def loss_L(data: ProblemData, params: Hyperparams, S, W) -> float:
    S, W = np.asarray(S, float), np.asarray(W, float)
    pen = (
        params.tau * np.linalg.norm(S, "nuc")
        + params.gamma * np.abs(S).sum()
        + params.kappa * np.abs(W).sum()
    )
    return float(smooth_L(data, S, W) + pen)


def grad_smooth_L(data: ProblemData, S, W):
    """Gradient of the quadratic part of ``L``; returns ``(G_S, G_W)``."""
    R1, R2 = _residuals(data, np.asarray(S, float), np.asarray(W, float))
    G_S, G_W = phi_adjoint(data, R1, R2)
    c = 2.0 / data.d
    return c * G_S, c * G_W


def loss_J(data: ProblemData, params: Hyperparams, U, V, W) -> float:
    U, V, W = (np.asarray(x, float) for x in (U, V, W))
    if U.shape != V.shape:
        raise ValueError("U and V must share the same shape")
    pen = params.gamma * (np.abs(U).sum() + np.abs(V).sum()) + params.kappa * np.abs(W).sum()
    return float(smooth_L(data, U @ V.T, W) + pen)


def grad_smooth_J(data: ProblemData, U, V, W):
    """Chain-rule gradient of the quadratic part of ``J`` in ``(U, V, W)``."""
    U, V = np.asarray(U, float), np.asarray(V, float)
    if U.shape != V.shape:
        raise ValueError("U and V must share the same shape")
    G_S, G_W = grad_smooth_L(data, U @ V.T, W)
    return G_S @ V, G_S.T @ U, G_W


@dataclass(frozen=True)
class DualCertificates:
    delta: np.ndarray
    epsilon: np.ndarray
    M: np.ndarray
    Xi: np.ndarray
    tau0: float
    gamma0: float
    kappa0: float


def dual_certificates(data: ProblemData, W0, A_next, alpha: float = 0.5) -> DualCertificates:
    """Noise residuals of the ground truth and the regularization levels they imply.

    ``(delta, epsilon) = (X_next, 0) - phi(A_next, W0)``; ``M`` and ``Xi`` are
    their images under the adjoint, so that
    ``<(delta, epsilon), phi(S, W)> = <(M, Xi), (S, W)>``.
    The suggested levels are ``tau0 = 2 alpha ||M||_op / d``,
    ``gamma0 = 2 (1 - alpha) ||M||_inf / d`` and ``kappa0 = 2 ||Xi||_inf``.
    """
    W0, A_next = np.asarray(W0, float), np.asarray(A_next, float)
    _check(data, A_next, W0)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly between 0 and 1")
    B1, B2 = phi(data, A_next, W0)
    delta = data.X_next - B1
    epsilon = -B2
    M, Xi = phi_adjoint(data, delta, epsilon)
    d = data.d
    return DualCertificates(
        delta=delta,
        epsilon=epsilon,
        M=M,
        Xi=Xi,
        tau0=2 * alpha * np.linalg.norm(M, 2) / d,
        gamma0=2 * (1 - alpha) * np.abs(M).max() / d,
        kappa0=2 * np.abs(Xi).max(),
    )
