"""Command-line harness: ``generate``, ``run``, ``sweep`` and ``report``.

Settings resolve as built-in defaults, then an optional ``--config`` file
(YAML or JSON), then command-line flags. Output paths default to the
directory named by ``GRAPHAR_OUTPUT_DIR`` (or the working directory).

Exit codes: 0 success, 1 partial failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import yaml

from . import storage
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    aggregate,
    run_experiment,
    sweep_replication,
)
from .generator import GeneratorParams, generate

OUTPUT_ENV = "GRAPHAR_OUTPUT_DIR"
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("graphar")

# flag dest -> generator field
_GEN_FLAGS = {
    "n": "n", "t": "T", "r": "r", "sigma": "sigma", "seed": "seed",
    "sparsity": "sparsity", "noise_threshold": "noise_threshold",
    "spectral_target": "spectral_target",
}
_RUN_FLAGS = ("replications", "feature_map", "feature_dim", "folds", "jobs",
              "max_iters", "rel_tol", "positive_threshold")
_HYPER_FLAGS = ("tau", "gamma", "kappa", "rank")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or ".")


def load_structured(path) -> dict:
    """Read a YAML or JSON mapping (JSON is a subset of YAML)."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping")
    return raw


def build_config(args, base: Optional[dict] = None) -> ExperimentConfig:
    """Merge defaults, config file contents and flags into an ``ExperimentConfig``."""
    raw = dict(base or {})
    if getattr(args, "config", None):
        file_raw = load_structured(args.config)
        gen = {**raw.get("generator", {}), **file_raw.pop("generator", {})}
        raw.update(file_raw)
        raw["generator"] = gen
    gen = dict(raw.get("generator", {}))
    for flag, name in _GEN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            gen[name] = v
    raw["generator"] = gen
    for flag in _RUN_FLAGS:
        v = getattr(args, flag, None)
        if v is not None:
            raw[flag] = v
    if getattr(args, "methods", None):
        raw["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "grid", None):
        raw["grid"] = load_structured(args.grid)
    hyper = dict(raw.get("hyperparams", {}))
    for flag in _HYPER_FLAGS:
        v = getattr(args, flag, None)
        if v is not None:
            hyper[flag] = v
    raw["hyperparams"] = hyper
    if getattr(args, "out", None) is not None:
        raw["output_dir"] = str(args.out)
    raw.setdefault("output_dir", str(default_output_dir()))
    return ExperimentConfig.from_dict(raw)


def _add_generator_flags(p):
    p.add_argument("--n", type=int, help="node count")
    p.add_argument("--t", type=int, help="number of observed transitions T")
    p.add_argument("--r", type=int, help="latent rank")
    p.add_argument("--sigma", type=float, help="noise standard deviation")
    p.add_argument("--seed", type=int, help="base seed; replication i uses seed + i")
    p.add_argument("--sparsity", type=float)
    p.add_argument("--noise-threshold", type=float)
    p.add_argument("--spectral-target", type=float)
    p.add_argument("--replications", type=int)


def _add_run_flags(p):
    p.add_argument("--methods", help="comma-separated subset of nn,shrink,gfb,factorized")
    p.add_argument("--data", help="dataset directory written by 'generate'")
    p.add_argument("--grid", help="YAML/JSON file with per-method hyperparameter lists")
    p.add_argument("--folds", type=int)
    p.add_argument("--feature-map", choices=("svd-projection", "degree", "oracle-pseudoinverse"))
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--jobs", type=int, help="replications run concurrently")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--positive-threshold", type=float)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphar", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic sequences and a manifest")
    g.add_argument("--config")
    _add_generator_flags(g)
    g.add_argument("--out", help="output directory")

    r = sub.add_parser("run", help="fit methods and write JSON-lines result records")
    r.add_argument("--config")
    _add_generator_flags(r)
    _add_run_flags(r)
    r.add_argument("--tau", type=float)
    r.add_argument("--gamma", type=float)
    r.add_argument("--kappa", type=float)
    r.add_argument("--rank", type=int)
    r.add_argument("--out", help="results file (JSON lines)")

    s = sub.add_parser("sweep", help="cross-validation scores for every grid point")
    s.add_argument("--config")
    _add_generator_flags(s)
    _add_run_flags(s)
    s.add_argument("--out", help="sweep file (JSON lines)")

    rep = sub.add_parser("report", help="aggregate result files into mean and std AUC")
    rep.add_argument("files", nargs="+")
    rep.add_argument("--out", help="CSV output path")
    return parser


def cmd_generate(args) -> int:
    config = build_config(args)
    out = Path(config.output_dir)
    params = config.generator
    try:
        for seed in config.seeds():
            storage.write_instance(out, generate(replace(params, seed=seed)))
        gen = params.to_dict()
        gen.pop("seed")
        storage.write_manifest(out, gen, config.seeds(), params.T + 2)
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {config.replications} replication(s) to {out}")
    return EXIT_OK


def _dataset(args, config: ExperimentConfig):
    """Resolve ``(config, seeds, snapshots)``, reading the manifest if ``--data`` is set."""
    if not args.data:
        return config, config.seeds(), None
    try:
        manifest = storage.read_manifest(args.data)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    seeds = manifest["seeds"]
    try:
        gen = GeneratorParams(**{**manifest["generator"], "seed": seeds[0]})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"manifest generator block is invalid: {exc}") from exc
    config = replace(config, generator=gen, replications=len(seeds))
    return config, seeds, manifest["snapshots"]


def _output_file(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    return default_output_dir() / default_name


def cmd_run(args) -> int:
    out = _output_file(args, "results.jsonl")
    args.out = None  # a file path here, not the config's output directory
    config, seeds, snapshots = _dataset(args, build_config(args))
    records = run_experiment(config, args.data, seeds, snapshots)
    storage.write_jsonl(out, [r.to_dict() for r in records])
    failed = [r for r in records if r.error is not None]
    for r in failed:
        print(f"error: {r.method} seed {r.seed}: {r.error}", file=sys.stderr)
    print(f"wrote {len(records)} record(s) to {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_sweep(args) -> int:
    out = _output_file(args, "sweep.jsonl")
    args.out = None
    config, seeds, snapshots = _dataset(args, build_config(args))
    if args.grid:
        # only sweep the methods the grid file names, unless --methods says otherwise
        named = list(load_structured(args.grid))
        if not args.methods:
            config = replace(config, methods=tuple(m for m in config.methods if m in named))
    rows: List[dict] = []
    failed = 0
    for seed in seeds:
        seq = V0 = None
        if args.data:
            seq, V0, _ = storage.read_instance(args.data, seed, snapshots)
        try:
            rows.extend(sweep_replication(config, seed, seq, V0))
        except (ValueError, RuntimeError) as exc:
            print(f"error: seed {seed}: {exc}", file=sys.stderr)
            failed += 1
    storage.write_jsonl(out, rows)
    print(f"wrote {len(rows)} grid score(s) to {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def format_table(rows) -> str:
    lines = [f"{'method':<12}{'runs':>6}{'failed':>8}{'mean AUC':>11}{'std':>9}"]
    for row in rows:
        lines.append(f"{row.method:<12}{row.count:>6}{row.failed:>8}"
                     f"{row.mean_auc:>11.4f}{row.std_auc:>9.4f}")
    return "\n".join(lines)


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "runs", "failed", "mean_auc", "std_auc"])
    for row in rows:
        w.writerow([row.method, row.count, row.failed, repr(row.mean_auc), repr(row.std_auc)])
    return buf.getvalue()


def cmd_report(args) -> int:
    records = []
    for path in args.files:
        try:
            rows = storage.read_jsonl(path)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        try:
            records.extend(ResultRecord.from_dict(r) for r in rows)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not records:
        raise ConfigError("no result records in the given files")
    table = aggregate(records)
    print(format_table(table))
    out = _output_file(args, "report.csv")
    storage.atomic_write_text(out, report_csv(table))
    return EXIT_PARTIAL if any(r.failed for r in table) else EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
