"""Versioned checkpoint files: every array, optimizer moment, RNG state and
normalizer statistic round-trips bit-exactly.

A checkpoint is a single .npz: arrays are stored under opaque keys and the
nested payload structure (with arrays replaced by references) is stored as
JSON. Python's json round-trips floats and arbitrarily large ints exactly,
which covers Adam scalars and PCG64 state.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError

CHECKPOINT_VERSION = 1
_ARRAY_REF = "__ndarray__"


def _encode(obj, arrays: dict):
    if isinstance(obj, np.ndarray):
        key = f"a{len(arrays)}"
        arrays[key] = obj
        return {_ARRAY_REF: key}
    if isinstance(obj, dict):
        return {str(k): _encode(v, arrays) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v, arrays) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise CheckpointError(f"cannot serialize object of type {type(obj).__name__}")


def _decode(obj, archive):
    if isinstance(obj, dict):
        if set(obj) == {_ARRAY_REF}:
            return archive[obj[_ARRAY_REF]].copy()
        return {k: _decode(v, archive) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v, archive) for v in obj]
    return obj


def save_checkpoint(path: str | Path, meta: dict, state: dict) -> Path:
    """Write {meta, state} to path; meta must be plain JSON-able scalars."""
    path = Path(path)
    payload = {"version": CHECKPOINT_VERSION, "meta": meta, "state": state}
    arrays: dict[str, np.ndarray] = {}
    tree = _encode(payload, arrays)
    arrays["__tree__"] = np.frombuffer(json.dumps(tree).encode("utf-8"), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Read (meta, state) back; wrong version or corrupt file raises CheckpointError."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as archive:
            tree = json.loads(bytes(archive["__tree__"]).decode("utf-8"))
            payload = _decode(tree, archive)
    except (zipfile.BadZipFile, KeyError, ValueError, OSError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} != supported {CHECKPOINT_VERSION}: {path}")
    return payload["meta"], payload["state"]
