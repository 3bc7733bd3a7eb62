"""Experiment orchestration: configs, per-replication evaluation and aggregation.

A replication draws (or loads) one synthetic sequence ``A_0..A_{T+1}``, fits
every requested method on ``A_0..A_T`` and scores ``A_{T+1}``. Solver and
Shrink hyperparameters come from cross-validation unless given explicitly.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .evaluation import METHODS, auc, cross_validate, make_grid, predict
from .features import degree_map, fit_svd_projection, projection_map
from .generator import GeneratorParams, generate
from .objectives import Hyperparams
from .solvers import SolverConfig

logger = logging.getLogger(__name__)

FEATURE_MAPS = ("svd-projection", "degree", "oracle-pseudoinverse")
PARAM_NAMES = ("tau", "gamma", "kappa", "rank")

# Compact grids sized so ten paper-scale replications finish in a few minutes
# on one core. Values are absolute; the convex penalties matter at very
# different scales (tau, gamma ~ 1e-2, kappa ~ 1).
DEFAULT_GRID: Dict[str, Dict[str, list]] = {
    "shrink": {"rank": list(range(1, 11))},
    "gfb": {"tau": [0.0, 0.01, 0.1], "gamma": [0.0, 1e-4, 1e-3], "kappa": [0.0, 1.0, 10.0]},
    "factorized": {"gamma": [0.0, 1e-5, 1e-4], "kappa": [0.0, 1.0], "rank": [3, 5, 10]},
}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    methods: tuple = METHODS
    grid: Dict[str, Dict[str, list]] = field(default_factory=lambda: DEFAULT_GRID)
    replications: int = 10
    output_dir: str = "."
    feature_map: str = "svd-projection"
    feature_dim: Optional[int] = None  # None means min(10, n)
    folds: int = 10
    jobs: int = 1
    max_iters: int = 3000
    rel_tol: float = 1e-7
    positive_threshold: float = 0.0
    # explicit values skip cross-validation for the parameters they set
    hyperparams: Dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.feature_map not in FEATURE_MAPS:
            raise ConfigError(f"feature_map must be one of {list(FEATURE_MAPS)}")
        if self.feature_dim is not None and not 1 <= self.feature_dim <= self.generator.n:
            raise ConfigError("feature_dim must lie in [1, n]")
        if self.folds < 1 or self.jobs < 1 or self.max_iters < 1:
            raise ConfigError("folds, jobs and max_iters must be positive")
        unknown = set(self.hyperparams) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"unknown hyperparameters {sorted(unknown)}")
        for method, values in self.grid.items():
            if method not in METHODS:
                raise ConfigError(f"grid names unknown method {method!r}")
            for name, vals in values.items():
                if name not in PARAM_NAMES or not isinstance(vals, (list, tuple)) or not vals:
                    raise ConfigError(f"grid entry {method}.{name} must be a nonempty list")

    @property
    def dim(self) -> int:
        if self.feature_dim is not None:
            return self.feature_dim
        return min(10, self.generator.n)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol, precondition=True)

    def seeds(self) -> List[int]:
        return [self.generator.seed + i for i in range(self.replications)]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Build from a plain mapping (config file contents); unknown keys are errors."""
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            if "generator" in raw:
                gen = raw["generator"]
                if isinstance(gen, dict):
                    raw["generator"] = GeneratorParams(**gen)
            if "methods" in raw:
                raw["methods"] = tuple(raw["methods"])
            if "grid" in raw:
                grid = {k: dict(v) for k, v in DEFAULT_GRID.items()}
                for k, v in raw["grid"].items():
                    grid[k] = dict(v)
                raw["grid"] = grid
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out


@dataclass
class ResultRecord:
    method: str
    seed: int
    hyperparams: Dict[str, Optional[float]]
    auc: Optional[float]
    iterations: int
    wall_time_ms: int
    objective_final: Optional[float] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, row: dict) -> "ResultRecord":
        validate_record(row)
        return cls(**{f.name: row.get(f.name) for f in fields(cls)})


_REQUIRED = {
    "method": str,
    "seed": int,
    "hyperparams": dict,
    "iterations": int,
    "wall_time_ms": int,
}


def validate_record(row: dict) -> None:
    """Raise ``ValueError`` unless ``row`` follows the result-record schema."""
    if not isinstance(row, dict):
        raise ValueError("record must be a JSON object")
    for key, typ in _REQUIRED.items():
        if key not in row:
            raise ValueError(f"record is missing {key!r}")
        if not isinstance(row[key], typ) or isinstance(row[key], bool):
            raise ValueError(f"record field {key!r} must be {typ.__name__}")
    if row["method"] not in METHODS:
        raise ValueError(f"unknown method {row['method']!r}")
    if row.get("error") is None:
        a = row.get("auc")
        if not isinstance(a, (int, float)) or not 0.0 <= a <= 1.0:
            raise ValueError("auc must be a number in [0, 1]")
    obj = row.get("objective_final")
    if obj is not None and not isinstance(obj, (int, float)):
        raise ValueError("objective_final must be a number or null")
    extra = set(row) - {f.name for f in fields(ResultRecord)}
    if extra:
        raise ValueError(f"unexpected record fields {sorted(extra)}")


def feature_map_factory(kind: str, d: int, V0=None):
    """Callable mapping training snapshots to a ``FeatureMap``."""
    if kind == "svd-projection":
        return lambda train: fit_svd_projection(np.sum(train, axis=0), d)
    if kind == "degree":
        return lambda train: degree_map(train[0].shape[0])
    if kind == "oracle-pseudoinverse":
        if V0 is None:
            raise ConfigError("oracle-pseudoinverse needs the generating V0")
        P = np.linalg.pinv(np.asarray(V0).T)
        return lambda train: projection_map(P)
    raise ConfigError(f"unknown feature map {kind!r}")


def _explicit(config: ExperimentConfig, method: str) -> Optional[Hyperparams]:
    used = {"shrink": ("rank",), "gfb": ("tau", "gamma", "kappa"),
            "factorized": ("gamma", "kappa", "rank")}.get(method, ())
    given = {k: v for k, v in config.hyperparams.items() if k in used and v is not None}
    if not given:
        return None
    if "rank" in given:
        given["rank"] = int(given["rank"])
    return Hyperparams(**given)


def _resolved(p: Hyperparams, method: str, d: int) -> dict:
    if method == "nn":
        return {}
    if method == "shrink":
        return {"rank": p.rank or d}
    if method == "gfb":
        return {"tau": float(p.tau), "gamma": float(p.gamma), "kappa": float(p.kappa)}
    return {"gamma": float(p.gamma), "kappa": float(p.kappa), "rank": p.rank or d}


def evaluate_method(method: str, sequence: Sequence[np.ndarray], seed: int,
                    config: ExperimentConfig, V0=None) -> ResultRecord:
    """Fit ``method`` on all but the last snapshot and score the last one."""
    start = time.perf_counter()
    observed, target = list(sequence[:-1]), sequence[-1]
    d = config.dim
    params = Hyperparams()
    try:
        factory = feature_map_factory(config.feature_map, d, V0)
        if method != "nn":
            params = _explicit(config, method)
            if params is None:
                grid = make_grid(method, **config.grid.get(method, {}))
                params = cross_validate(
                    observed, grid, method, folds=config.folds, seed=seed, d=d,
                    config=config.solver_config,
                    positive_threshold=config.positive_threshold,
                    fmap_factory=factory,
                )
        fmap = factory(observed) if method in ("gfb", "factorized") else None
        scores, res = predict(method, observed, params, d, config.solver_config, fmap)
        report = auc(scores, target, config.positive_threshold, method, seed)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        logger.warning("%s seed %d failed: %s", method, seed, exc)
        return ResultRecord(method, seed, _resolved(params or Hyperparams(), method, d),
                            None, 0, _ms(start), None, f"{type(exc).__name__}: {exc}")
    return ResultRecord(
        method=method,
        seed=seed,
        hyperparams=_resolved(params, method, d),
        auc=report.auc,
        iterations=0 if res is None else int(res.iterations),
        wall_time_ms=_ms(start),
        objective_final=None if res is None else float(res.objective),
    )


def _ms(start: float) -> int:
    return int(round(1000 * (time.perf_counter() - start)))


def run_replication(config: ExperimentConfig, seed: int, sequence=None, V0=None) -> List[ResultRecord]:
    if sequence is None:
        inst = generate(replace(config.generator, seed=seed))
        sequence, V0 = inst.sequence, inst.V0
    return [evaluate_method(m, sequence, seed, config, V0) for m in config.methods]


def _task(args):
    config, seed, data_dir, snapshots = args
    if data_dir is None:
        return run_replication(config, seed)
    from .storage import read_instance

    try:
        seq, V0, _ = read_instance(data_dir, seed, snapshots)
    except (OSError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return [ResultRecord(m, seed, {}, None, 0, 0, None, msg) for m in config.methods]
    return run_replication(config, seed, seq, V0)


def run_experiment(config: ExperimentConfig, data_dir=None, seeds=None,
                   snapshots: Optional[int] = None) -> List[ResultRecord]:
    """Run every replication, ``config.jobs`` at a time.

    Without ``data_dir`` each replication generates its own instance with seed
    ``generator.seed + index``. Records are ordered by method, then seed.
    """
    seeds = config.seeds() if seeds is None else list(seeds)
    tasks = [(config, s, data_dir, snapshots) for s in seeds]
    if config.jobs == 1 or len(tasks) == 1:
        chunks = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(_task, tasks))
    records = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(METHODS)}
    records.sort(key=lambda r: (order[r.method], r.seed))
    return records


@dataclass(frozen=True)
class AggregateRow:
    method: str
    count: int
    failed: int
    mean_auc: float
    std_auc: float  # sample standard deviation, 0 for a single run


def aggregate(records: Sequence[ResultRecord]) -> List[AggregateRow]:
    """Per-method mean and sample standard deviation of AUC, in canonical method order."""
    if not records:
        raise ValueError("no result records to aggregate")
    rows = []
    for method in METHODS:
        mine = [r for r in records if r.method == method]
        if not mine:
            continue
        vals = sorted(r.auc for r in mine if r.error is None)
        failed = len(mine) - len(vals)
        if vals:
            mean = math.fsum(vals) / len(vals)
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        else:
            mean = std = float("nan")
        rows.append(AggregateRow(method, len(vals), failed, mean, std))
    return rows


def sweep_replication(config: ExperimentConfig, seed: int, sequence=None, V0=None) -> List[dict]:
    """Validation AUC of every grid point, one row per (method, grid point)."""
    from .evaluation import grid_scores, select_best

    if sequence is None:
        inst = generate(replace(config.generator, seed=seed))
        sequence, V0 = inst.sequence, inst.V0
    observed = list(sequence[:-1])
    d = config.dim
    factory = feature_map_factory(config.feature_map, d, V0)
    rows = []
    for method in config.methods:
        if method == "nn":
            continue
        grid = make_grid(method, **config.grid.get(method, {}))
        scores = grid_scores(
            observed, grid, method, folds=config.folds, seed=seed, d=d,
            config=config.solver_config,
            positive_threshold=config.positive_threshold, fmap_factory=factory,
        )
        try:
            best = select_best(grid, scores)
        except RuntimeError:
            best = None
        for p, s in zip(grid, scores):
            rows.append({
                "method": method,
                "seed": seed,
                "hyperparams": _resolved(p, method, d),
                "cv_auc": None if math.isnan(s) else s,
                "selected": p == best,
            })
    return rows
