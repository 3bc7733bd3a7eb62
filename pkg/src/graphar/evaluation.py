"""Link-prediction baselines, ROC-AUC scoring and grid search by cross-validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .features import FeatureMap, fit_svd_projection
from .kernels import truncated_svd
from .objectives import Hyperparams, make_problem
from .solvers import SolverConfig, solve_factorized, solve_gfb

logger = logging.getLogger(__name__)

METHODS = ("nn", "shrink", "gfb", "factorized")


class UndefinedAUCError(ValueError):
    """The evaluated pairs contain only positives or only negatives."""


@dataclass(frozen=True)
class ScoreMatrix:
    values: np.ndarray
    mask: Optional[np.ndarray] = None  # boolean n x n; None means off-diagonal pairs

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scores must be finite")
        if self.mask is not None and not self.mask.any():
            raise ValueError("mask selects no pairs")

    def pair_mask(self) -> np.ndarray:
        if self.mask is not None:
            return self.mask
        return off_diagonal(self.values.shape[0])


@dataclass(frozen=True)
class EvalReport:
    auc: float
    method: str
    n_pairs: int
    seed: Optional[int] = None


def off_diagonal(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def nn_scores(cumulative) -> ScoreMatrix:
    """Common-neighbour counts, the square of the cumulative adjacency."""
    A = np.asarray(cumulative, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("cumulative matrix must be square")
    return ScoreMatrix(A @ A)


def shrink_scores(cumulative, r: int) -> ScoreMatrix:
    """Best rank-``r`` approximation of the cumulative adjacency."""
    A = np.asarray(cumulative, dtype=float)
    if not 1 <= r <= A.shape[0]:
        raise ValueError(f"rank r={r} must lie in [1, {A.shape[0]}]")
    return ScoreMatrix(truncated_svd(A, r).reconstruct())


def auc(
    scores: ScoreMatrix,
    truth,
    positive_threshold: float = 0.0,
    method: str = "",
    seed: Optional[int] = None,
) -> EvalReport:
    """Mann-Whitney AUC of ``scores`` against ``truth > positive_threshold``.

    Ties between a positive and a negative count one half.
    """
    mask = scores.pair_mask()
    s = scores.values[mask]
    y = np.asarray(truth)[mask] > positive_threshold
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(
            f"AUC undefined with {n_pos} positives and {n_neg} negatives"
        )
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return EvalReport(float(u / (n_pos * n_neg)), method, int(y.size), seed)


def predict(
    method: str,
    observed: Sequence[np.ndarray],
    params: Hyperparams = Hyperparams(),
    d: int = 10,
    config: SolverConfig = SolverConfig(),
    fmap: Optional[FeatureMap] = None,
):
    """Fit ``method`` on ``observed`` snapshots and score the next one.

    Returns ``(score_matrix, solver_result)``; the second item is ``None`` for
    the baselines. Solvers use the top-``d`` SVD projection of the cumulative
    graph unless ``fmap`` is given.
    """
    cumulative = np.sum(observed, axis=0)
    if method == "nn":
        return nn_scores(cumulative), None
    if method == "shrink":
        return shrink_scores(cumulative, params.rank or d), None
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if fmap is None:
        fmap = fit_svd_projection(cumulative, d)
    data = make_problem(observed, fmap)
    if method == "gfb":
        res = solve_gfb(data, params, config)
    else:
        res = solve_factorized(data, params, params.rank or d, config)
    return ScoreMatrix(res.S_hat), res


def _tie_key(p: Hyperparams):
    return (p.tau, p.gamma, p.kappa, p.rank or 0)


def grid_scores(
    seq: Sequence[np.ndarray],
    grid: Sequence[Hyperparams],
    method: str,
    folds: int = 10,
    seed: int = 0,
    d: int = 10,
    config: SolverConfig = SolverConfig(),
    positive_threshold: float = 0.0,
    fmap_factory: Optional[Callable[[Sequence[np.ndarray]], FeatureMap]] = None,
    keep_fraction: float = 0.9,
) -> list:
    """Mean validation AUC of every grid point, ``nan`` where a point failed.

    The last snapshot of ``seq`` is held out and predicted from the ones
    before it. Each fold scores a different random ``keep_fraction`` subset of
    off-diagonal pairs; all grid points see the same subsets.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if len(seq) < 3:
        raise ValueError("need at least three snapshots to cross-validate")
    if folds < 1:
        raise ValueError("folds must be positive")
    train, target = list(seq[:-1]), seq[-1]
    n = target.shape[0]
    rng = np.random.default_rng(seed)
    base = off_diagonal(n)
    if folds == 1:
        masks = [base]
    else:
        masks = [base & (rng.random((n, n)) < keep_fraction) for _ in range(folds)]

    out = []
    for p in grid:
        fmap = fmap_factory(train) if fmap_factory is not None else None
        try:
            scores, _ = predict(method, train, p, d, config, fmap)
            vals = [
                auc(ScoreMatrix(scores.values, m), target, positive_threshold).auc
                for m in masks
            ]
            out.append(float(np.mean(vals)))
        except (UndefinedAUCError, RuntimeError, ValueError) as exc:
            logger.warning("grid point %s failed: %s", p, exc)
            out.append(float("nan"))
    return out


def select_best(grid: Sequence[Hyperparams], scores: Sequence[float]) -> Hyperparams:
    """Argmax of ``scores``; ties go to the larger ``(tau, gamma, kappa, rank)``."""
    best, best_score = None, -np.inf
    for p, score in zip(grid, scores):
        if np.isnan(score):
            continue
        if score > best_score or (score == best_score and _tie_key(p) > _tie_key(best)):
            best, best_score = p, score
    if best is None:
        raise RuntimeError("every grid point failed during cross-validation")
    return best


def cross_validate(seq, grid, method, folds=10, seed=0, **kwargs) -> Hyperparams:
    """Pick the grid point with the best mean validation AUC.

    Keyword arguments are passed on to ``grid_scores``.
    """
    scores = grid_scores(seq, grid, method, folds, seed, **kwargs)
    best = select_best(grid, scores)
    logger.info("%s: selected %s (validation AUC %.4f)", method, best, max(
        s for s in scores if not np.isnan(s)))
    return best


def make_grid(method: str, **values) -> list:
    """Cartesian product of per-parameter value lists into ``Hyperparams``.

    ``values`` may carry ``tau``, ``gamma``, ``kappa`` and ``rank`` lists;
    parameters a method does not use are dropped.
    """
    used = {
        "nn": (),
        "shrink": ("rank",),
        "gfb": ("tau", "gamma", "kappa"),
        "factorized": ("gamma", "kappa", "rank"),
    }[method]
    points = [Hyperparams()]
    for name in used:
        vals = values.get(name)
        if not vals:
            continue
        points = [replace(p, **{name: v}) for p in points for v in vals]
    return points
