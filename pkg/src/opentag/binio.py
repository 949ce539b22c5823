"""Flat binary container for feature vectors and model tensors.

Layout of a ``.bin`` file::

    magic    8 bytes   b"OTAGBANK"
    version  uint32 LE
    dim      uint32 LE  (row width; 1 for flat tensor files)
    rows     uint64 LE
    body     rows * dim float32 LE

Every ``.bin`` has a JSON sidecar at ``<path>.json`` carrying the index:
for feature banks a clip-id -> row mapping with labels/polyphony/slots,
for tensor files the tensor names, shapes, and offsets.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"OTAGBANK"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


def sidecar_path(path):
    return Path(str(path) + ".json")


def write_bank(path, matrix, index):
    """Write a (rows, dim) float32 matrix and its JSON sidecar."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError("bank body must be 2-D (rows, dim)")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[1], matrix.shape[0]))
        fh.write(matrix.tobytes())
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True)
        fh.write("\n")


def read_bank(path):
    """Read a bank file; returns (matrix, sidecar_index)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, dim, rows = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a bank file (bad magic)")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        body = np.frombuffer(fh.read(rows * dim * 4), dtype="<f4")
    if body.size != rows * dim:
        raise ValueError(f"{path}: truncated body")
    with open(sidecar_path(path), encoding="utf-8") as fh:
        index = json.load(fh)
    return body.reshape(rows, dim), index


def write_tensors(path, arrays, extra=None):
    """Write named float tensors as one flat bank plus a shape sidecar.

    ``arrays`` maps name -> ndarray; iteration order fixes the layout.
    """
    names, shapes, flats, offset, offsets = [], [], [], 0, []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f4")
        names.append(name)
        shapes.append(list(arr.shape))
        offsets.append(offset)
        offset += arr.size
        flats.append(arr.reshape(-1))
    body = np.concatenate(flats) if flats else np.zeros(0, dtype="<f4")
    index = {
        "tensors": [
            {"name": n, "shape": s, "offset": o}
            for n, s, o in zip(names, shapes, offsets)
        ]
    }
    if extra:
        index.update(extra)
    write_bank(path, body.reshape(-1, 1), index)


def read_tensors(path):
    """Inverse of write_tensors; returns (dict name -> ndarray, sidecar)."""
    body, index = read_bank(path)
    flat = body.reshape(-1)
    out = {}
    for entry in index["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = flat[entry["offset"]:entry["offset"] + size]
        out[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float64)
    return out, index
