"""On-disk formats: MatrixMarket matrices, a JSON dataset manifest and
JSON-lines result records.

Every writer goes through a temporary file in the target directory followed by
``os.replace``, so readers never observe partial files.

Dataset layout::

    DIR/manifest.json
    DIR/seed_<s>/A_<t>.mtx   t = 0 .. T+1
    DIR/seed_<s>/V0.mtx
    DIR/seed_<s>/W0.mtx
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List

import numpy as np
import scipy.io

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_matrix(path, A) -> None:
    """Dense MatrixMarket ``array`` file; float64 values round-trip exactly."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("only 2-d arrays can be written")
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, A)
    atomic_write_bytes(path, buf.getvalue())


def read_matrix(path) -> np.ndarray:
    A = scipy.io.mmread(str(path))
    if hasattr(A, "toarray"):
        A = A.toarray()
    return np.asarray(A, dtype=float)


def seed_dir(root, seed: int) -> Path:
    return Path(root) / f"seed_{seed}"


def write_instance(root, instance) -> List[str]:
    """Write one ``SyntheticInstance``; returns the file names relative to ``root``."""
    d = seed_dir(root, instance.params.seed)
    names = []
    for t, A in enumerate(instance.sequence):
        write_matrix(d / f"A_{t}.mtx", A)
        names.append(f"A_{t}.mtx")
    write_matrix(d / "V0.mtx", instance.V0)
    write_matrix(d / "W0.mtx", instance.W0)
    return names + ["V0.mtx", "W0.mtx"]


def write_manifest(root, generator: dict, seeds: Iterable[int], snapshots: int) -> dict:
    manifest = {
        "format_version": FORMAT_VERSION,
        "generator": generator,
        "seeds": [int(s) for s in seeds],
        "snapshots": int(snapshots),
    }
    atomic_write_text(Path(root) / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {root}")
    manifest = json.loads(path.read_text())
    for key in ("generator", "seeds", "snapshots"):
        if key not in manifest:
            raise ValueError(f"manifest is missing {key!r}")
    if manifest["snapshots"] < 3:
        raise ValueError("manifest lists fewer than three snapshots")
    return manifest


def read_instance(root, seed: int, snapshots: int):
    """Load ``(sequence, V0, W0)`` written by ``write_instance``."""
    d = seed_dir(root, seed)
    seq = [read_matrix(d / f"A_{t}.mtx") for t in range(snapshots)]
    return seq, read_matrix(d / "V0.mtx"), read_matrix(d / "W0.mtx")


def write_jsonl(path, rows: Iterable[dict]) -> None:
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    atomic_write_text(path, text)


def read_jsonl(path) -> List[dict]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return rows
