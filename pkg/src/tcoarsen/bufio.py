"""Buffer container: one raw little-endian data file plus a JSON manifest.

The data file is the arrays concatenated in manifest order with no padding.
Each manifest entry gives ``name``, ``dtype`` (``int32``, ``uint32`` or
``float32``), ``length`` in elements and ``offset`` in bytes. Scalars are
stored in the manifest itself.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .interp import BufferSet

FORMAT = "tcoarsen-buffers/1"
_DTYPES = {"int32": "<i4", "uint32": "<u4", "float32": "<f4"}


def _dtype_name(a):
    for name, code in _DTYPES.items():
        if np.dtype(a.dtype) == np.dtype(code):
            return name
    raise ValueError(f"unsupported buffer dtype {a.dtype}")


def write_buffers(buffers: BufferSet, manifest_path, data_path=None) -> dict:
    """Write ``buffers``; the data file defaults to the manifest path with ``.bin``."""
    manifest_path = Path(manifest_path)
    data_path = Path(data_path) if data_path else manifest_path.with_suffix(".bin")
    entries = []
    offset = 0
    with open(data_path, "wb") as f:
        for name in sorted(buffers.arrays):
            a = np.asarray(buffers.arrays[name])
            dtype = _dtype_name(a)
            raw = a.astype(_DTYPES[dtype], copy=False).tobytes()
            f.write(raw)
            entries.append({"name": name, "dtype": dtype, "length": int(a.size),
                            "offset": offset})
            offset += len(raw)
    manifest = {
        "format": FORMAT,
        "data_file": data_path.name,
        "arrays": entries,
        "scalars": {k: _scalar(v) for k, v in sorted(buffers.scalars.items())},
        "local_sizes": {k: int(v) for k, v in sorted(buffers.local_sizes.items())},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _scalar(v):
    return np.asarray(v).item()


def read_buffers(manifest_path) -> BufferSet:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{manifest_path}: not a {FORMAT} manifest")
    raw = (manifest_path.parent / manifest["data_file"]).read_bytes()
    arrays = {}
    for e in manifest["arrays"]:
        code = _DTYPES[e["dtype"]]
        size = np.dtype(code).itemsize * e["length"]
        chunk = raw[e["offset"]:e["offset"] + size]
        if len(chunk) != size:
            raise ValueError(f"{manifest_path}: array '{e['name']}' runs past the data file")
        arrays[e["name"]] = np.frombuffer(chunk, dtype=code).astype(
            np.dtype(code).newbyteorder("="))
    return BufferSet(arrays, dict(manifest.get("scalars", {})),
                     dict(manifest.get("local_sizes", {})))
