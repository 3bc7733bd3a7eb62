"""Proximal solvers for the joint ``(S, W)`` problem.

``solve_gfb`` minimizes the convex objective by generalized forward-backward
splitting with two auxiliary variables (one per non-smooth penalty on ``S``).
``solve_factorized`` runs proximal gradient steps on the non-convex
objective in ``(U, V, W)`` with ``S = U V^T``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .kernels import operator_norm, soft_threshold, svd_shrink, truncated_svd
from .objectives import (
    Hyperparams,
    ProblemData,
    grad_smooth_J,
    grad_smooth_L,
    loss_J,
    loss_L,
    phi_norm,
)

logger = logging.getLogger(__name__)


class SolverDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    step: Union[float, str] = "auto"
    max_iters: int = 20000
    rel_tol: float = 1e-7
    q: int = 2
    seed: int = 0
    precondition: bool = False  # per-block steps for S and W, see block_steps

    def __post_init__(self):
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ValueError("step must be 'auto' or a positive number")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.q != 2:
            raise ValueError("q is fixed at 2")


@dataclass
class SolverResult:
    S_hat: np.ndarray
    W_hat: np.ndarray
    objective_trace: List[float]
    iterations: int
    converged: bool
    step: float
    U_hat: Optional[np.ndarray] = None
    V_hat: Optional[np.ndarray] = None
    fixed_point_residual: float = field(default=float("nan"))

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def auto_step(data: ProblemData, seed: int = 0) -> float:
    """``0.9 d / ||Phi||_op^2``, i.e. 1.8 over the smooth part's Lipschitz constant."""
    L = phi_norm(data, seed=seed, tol=1e-6)
    if L == 0:
        # purely penalized problem, any step works
        return 1.0
    return 0.9 * data.d / L**2


def block_steps(data: ProblemData, seed: int = 0):
    """Separate steps ``(theta_S, theta_W)`` for the two variable blocks.

    Runs forward-backward in the metric ``diag(w_S, w_W)`` with
    ``w = 1 / ||phi restricted to the block||^2``. Every penalty acts on a single
    block, so the fixed points are those of the single-step scheme; the gain is
    that ``S`` is no longer throttled by the much larger design norm of ``W``.
    """
    rng = np.random.default_rng(seed)
    fmap = data.fmap
    nS = operator_norm(fmap.apply, fmap.adjoint, rng.standard_normal((data.n, data.n)))
    nW = np.linalg.norm(np.vstack([data.X_prev, data.F_T]), 2)
    w = (1.0 / nS**2 if nS > 0 else 1.0, 1.0 / nW**2 if nW > 0 else 1.0)
    L = phi_norm(data, seed=seed, tol=1e-6, weights=w)
    base = 0.9 * data.d / L**2 if L > 0 else 1.0
    return base * w[0], base * w[1]


def _steps(data: ProblemData, config: SolverConfig):
    if config.step != "auto":
        return float(config.step), float(config.step)
    if config.precondition:
        return block_steps(data, config.seed)
    theta = auto_step(data, config.seed)
    return theta, theta


def _converged(prev: float, cur: float, rel_tol: float) -> bool:
    return abs(cur - prev) / max(1.0, abs(prev)) < rel_tol


def solve_gfb(
    data: ProblemData,
    params: Hyperparams,
    config: SolverConfig = SolverConfig(),
    init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> SolverResult:
    """Generalized forward-backward minimization of the convex objective.

    Each iteration, with ``G = grad`` of the quadratic part at ``(S, W)``::

        Z1 += svd_shrink(2S - Z1 - theta G_S, q theta tau) - S
        Z2 += soft_threshold(2S - Z2 - theta G_S, q theta gamma) - S
        S   = (Z1 + Z2) / q
        W   = soft_threshold(W - theta G_W, theta kappa)

    Starts from zero unless ``init = (S, W)`` is given. With
    ``config.precondition`` the ``W`` update uses its own step.
    """
    theta, theta_W = _steps(data, config)
    q = config.q
    if init is None:
        S = np.zeros((data.n, data.n))
        W = np.zeros((data.d, data.d))
    else:
        S, W = (np.array(x, dtype=float) for x in init)
    Z1, Z2 = S.copy(), S.copy()

    trace = [loss_L(data, params, S, W)]
    converged = False
    residual = float("nan")
    it = 0
    for it in range(1, config.max_iters + 1):
        G_S, G_W = grad_smooth_L(data, S, W)
        fwd = 2 * S - theta * G_S
        dZ1 = svd_shrink(fwd - Z1, q * theta * params.tau) - S
        dZ2 = soft_threshold(fwd - Z2, q * theta * params.gamma) - S
        Z1 += dZ1
        Z2 += dZ2
        S = (Z1 + Z2) / q
        W_new = soft_threshold(W - theta_W * G_W, theta_W * params.kappa)
        dW = W_new - W
        W = W_new

        obj = loss_L(data, params, S, W)
        if not np.isfinite(obj):
            raise SolverDivergenceError(f"objective became non-finite at iteration {it}")
        trace.append(obj)
        residual = float(np.linalg.norm(dZ1) + np.linalg.norm(dZ2) + np.linalg.norm(dW))
        if _converged(trace[-2], obj, config.rel_tol):
            converged = True
            break

    logger.debug("gfb: %d iterations, objective %.6g, converged=%s", it, trace[-1], converged)
    return SolverResult(
        S_hat=S,
        W_hat=W,
        objective_trace=trace,
        iterations=it,
        converged=converged,
        step=theta,
        fixed_point_residual=residual,
    )


def spectral_init(data: ProblemData, r: int):
    """``U = U_r sqrt(s_r)``, ``V = V_r sqrt(s_r)`` from the cumulative graph; ``W = 0``."""
    if data.cumulative is None:
        raise ValueError("problem data carries no cumulative matrix; pass init explicitly")
    f = truncated_svd(data.cumulative, r)
    root = np.sqrt(f.s)
    return f.U * root, f.V * root, np.zeros((data.d, data.d))


def solve_factorized(
    data: ProblemData,
    params: Hyperparams,
    r: int,
    config: SolverConfig = SolverConfig(),
    init: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
) -> SolverResult:
    """Proximal gradient descent on the factorized objective.

    All three blocks take a step from the same gradient evaluation. The base
    step ``auto_step / max(1, ||U0||^2 + ||V0||^2)`` accounts for the factor
    scaling; with ``config.precondition`` the ``U`` and ``V`` steps are the
    ``S`` block step divided by ``||V0||^2`` and ``||U0||^2``. A step that
    raises the objective is rejected and all steps are halved, so the
    objective trace never increases.
    """
    if not 1 <= r <= data.n:
        raise ValueError(f"rank r={r} must lie in [1, {data.n}]")
    if init is None:
        U, V, W = spectral_init(data, r)
    else:
        U, V, W = (np.array(x, dtype=float) for x in init)
        if U.shape != (data.n, r) or V.shape != (data.n, r):
            raise ValueError("init factors must be n x r")

    theta_S, theta_W = _steps(data, config)
    if config.step == "auto":
        nU, nV = np.linalg.norm(U, 2) ** 2, np.linalg.norm(V, 2) ** 2
        if config.precondition:
            theta_U, theta_V = theta_S / max(nV, 1e-12), theta_S / max(nU, 1e-12)
        else:
            theta_U = theta_V = theta_W = theta_S / max(1.0, nU + nV)
    else:
        theta_U = theta_V = theta_S
    shrink = 1.0

    obj = loss_J(data, params, U, V, W)
    if not np.isfinite(obj):
        raise SolverDivergenceError("objective is non-finite at the starting point")
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        G_U, G_V, G_W = grad_smooth_J(data, U, V, W)
        while True:
            tU, tV, tW = shrink * theta_U, shrink * theta_V, shrink * theta_W
            U_new = soft_threshold(U - tU * G_U, tU * params.gamma)
            V_new = soft_threshold(V - tV * G_V, tV * params.gamma)
            W_new = soft_threshold(W - tW * G_W, tW * params.kappa)
            new = loss_J(data, params, U_new, V_new, W_new)
            if np.isfinite(new) and new <= obj:
                break
            shrink *= 0.5
            if shrink < 1e-30:
                raise SolverDivergenceError(f"no descent step found at iteration {it}")
        U, V, W = U_new, V_new, W_new
        prev, obj = obj, new
        trace.append(obj)
        if _converged(prev, obj, config.rel_tol):
            converged = True
            break

    logger.debug("factorized: %d iterations, objective %.6g", it, obj)
    return SolverResult(
        S_hat=U @ V.T,
        W_hat=W,
        objective_trace=trace,
        iterations=it,
        converged=converged,
        step=shrink * theta_U,
        U_hat=U,
        V_hat=V,
    )
