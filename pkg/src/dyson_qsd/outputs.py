"""Byte-stable output files and the run manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    """17-significant-digit decimal; integers and non-finite values spelled plainly."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them as strings
        return v if math.isfinite(v) else fmt(v)
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n").encode()


class OutputSet:
    """Collects files for one run and records their checksums."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.checksums: dict[str, str] = {}

    def write(self, name: str, data: bytes) -> Path:
        path = self.dir / name
        atomic_write(path, data)
        self.checksums[name] = hashlib.sha256(data).hexdigest()
        return path

    def csv(self, name, header, rows) -> Path:
        return self.write(name, csv_bytes(header, rows))

    def json(self, name, obj) -> Path:
        return self.write(name, json_bytes(obj))

    def manifest(self, config_echo: dict, version: str, seed: int, wall_clock: float) -> Path:
        body = {
            "artifact_version": version,
            "config": config_echo,
            "seed": seed,
            "wall_clock_seconds": wall_clock,
            "outputs": dict(sorted(self.checksums.items())),
        }
        path = self.dir / "manifest.json"
        atomic_write(path, json_bytes(body))
        return path
