"""Checkpoint container: one JSON header line, then raw little-endian f64 data.

The header records a config payload plus, per array, its shape and byte
offset into the data section, so files are self-describing and loadable
without knowing the writing config in advance.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = "autocl-checkpoint"


def save_arrays(path: str | Path, kind: str, config: dict, arrays: dict[str, np.ndarray]) -> None:
    header_arrays = {}
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        header_arrays[name] = {"shape": list(arr.shape), "offset": offset}
        blobs.append(blob)
        offset += len(blob)
    header = {"magic": MAGIC, "kind": kind, "config": config, "arrays": header_arrays}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_arrays(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            header_line = fh.readline()
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"bad checkpoint header in {path}") from exc
    if header.get("magic") != MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    if kind is not None and header.get("kind") != kind:
        raise DataError(f"expected a {kind} checkpoint, found {header.get('kind')!r}")
    arrays = {}
    for name, meta in header["arrays"].items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        stop = start + count * 8
        if stop > len(data):
            raise DataError(f"checkpoint {path} truncated at array {name!r}")
        arrays[name] = np.frombuffer(data[start:stop], dtype="<f8").reshape(shape).copy()
    return header["config"], arrays
