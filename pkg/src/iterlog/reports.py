"""Serialization helpers: canonical JSON, config hashing and long-form CSV."""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else repr(val)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def canonical_json(obj) -> str:
    """Stable JSON text: insertion-ordered keys, repr floats, trailing newline."""
    return json.dumps(_plain(obj), indent=2, allow_nan=False) + "\n"


def config_hash(cfg: dict) -> str:
    text = json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def ensure_writable(directory) -> Path:
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def write_once(path: Path, text: str) -> Path:
    """Create ``path``; refuses to overwrite an existing artifact."""
    try:
        with open(path, "x", newline="") as fh:
            fh.write(text)
    except FileExistsError:
        raise OSError(f"{path} already exists; outputs are write-once per run directory") from None
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def csv_text(columns, rows) -> str:
    """Header plus one line per row; rows are dicts keyed by column or sequences."""
    lines = [",".join(columns)]
    for row in rows:
        values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        lines.append(",".join(_cell(v) for v in values))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
