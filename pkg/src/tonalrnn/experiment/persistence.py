"""
Checkpoints and run manifests.

A checkpoint is a single file: a magic line, one line of JSON header
(format version, cell kind, dimensions, array table) and the raw
little-endian float64 array bytes. No timestamps are written, so equal
parameters give byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..rnn import CellParams

__all__ = ["CHECKPOINT_VERSION", "Checkpoint", "save_checkpoint", "load_checkpoint",
           "file_sha256", "write_manifest", "read_manifest", "find_manifests"]

CHECKPOINT_VERSION = 1
_MAGIC = b"TONALRNN-CHECKPOINT\n"


@dataclass
class Checkpoint:
    params: CellParams
    optimizer: Optional[dict[str, np.ndarray]] = None
    manifest: str = ""
    version: int = CHECKPOINT_VERSION


def _table(arrays: dict[str, np.ndarray], prefix: str, offset: int, blobs: list):
    entries = []
    for name, a in arrays.items():
        data = np.ascontiguousarray(a, dtype="<f8").tobytes()
        entries.append({"name": prefix + name, "shape": list(a.shape), "offset": offset,
                        "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    return entries, offset


def save_checkpoint(path, params: CellParams, optimizer: Optional[dict] = None,
                    manifest: str = "") -> Path:
    path = Path(path)
    blobs: list[bytes] = []
    arrays, offset = _table(params.arrays, "", 0, blobs)
    opt_entries = None
    if optimizer is not None:
        opt_entries, offset = _table(optimizer, "", offset, blobs)
    header = {"version": CHECKPOINT_VERSION, "kind": params.kind, "n_in": params.n_in,
              "n_hidden": params.n_hidden, "dtype": "<f8", "arrays": arrays,
              "optimizer": opt_entries, "manifest": manifest}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    end = raw.index(b"\n", len(_MAGIC))
    header = json.loads(raw[len(_MAGIC):end])
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    body = memoryview(raw)[end + 1:]

    def read(entries):
        out = {}
        for e in entries:
            chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
            out[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).astype(np.float64)
        return out

    params = CellParams(header["kind"], header["n_in"], header["n_hidden"], read(header["arrays"]))
    optimizer = read(header["optimizer"]) if header.get("optimizer") else None
    return Checkpoint(params, optimizer, header.get("manifest", ""), header["version"])


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def find_manifests(directory) -> list[Path]:
    return sorted(Path(directory).rglob("*.manifest.json"))
