"""Self-describing checkpoints: named float64 arrays plus a JSON metadata blob.

The container is a standard .npz (readable with np.load), but written by hand
so the bytes are deterministic: entries are sorted, stored uncompressed, and
carry a fixed zip timestamp instead of the wall clock. Writes go to a temp
file in the same directory and are renamed into place, so a crash never
leaves a readable half-written checkpoint behind.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from typing import Any

import numpy as np
from numpy.lib import format as npformat

from ..errors import CheckpointError

FORMAT_VERSION = 1

_META_KEY = "__meta__"
_ARRAY_PREFIX = "a::"
_EPOCH = (1980, 1, 1, 0, 0, 0)  # earliest zip timestamp; fixed for reproducible bytes


def save_arrays(path: str, arrays: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> None:
    header = json.dumps({"format_version": FORMAT_VERSION, "meta": meta or {}}, sort_keys=True)
    payload: dict[str, np.ndarray] = {_META_KEY: np.array(header)}
    for name, arr in arrays.items():
        if name == _META_KEY:
            raise CheckpointError(f"array name {name!r} is reserved")
        payload[_ARRAY_PREFIX + name] = np.asarray(arr)
    tmp = path + ".tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED, allowZip64=True) as zf:
        for name in sorted(payload):
            buf = io.BytesIO()
            npformat.write_array(buf, payload[name], allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)


def load_arrays(path: str) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with np.load(path, allow_pickle=False) as z:
        if _META_KEY not in z:
            raise CheckpointError(f"{path} is not a recognized checkpoint (missing metadata)")
        header = json.loads(str(z[_META_KEY][()]))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format version {version!r} (expected {FORMAT_VERSION})")
        arrays = {k[len(_ARRAY_PREFIX):]: z[k] for k in z.files if k.startswith(_ARRAY_PREFIX)}
    return arrays, header["meta"]
