"""Single-file checkpoint container: header, JSON manifest, raw tensor bytes.

Layout: 8-byte magic, little-endian uint64 manifest length, UTF-8 JSON
manifest, then each tensor's bytes in manifest order. Tensors are stored
in their native dtype so a round trip is bit-exact.
"""

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"SGDKCKPT"
FORMAT_VERSION = 1

_DTYPES = {
    torch.float32: "<f4", torch.float64: "<f8", torch.float16: "<f2", torch.int64: "<i8",
    torch.int32: "<i4", torch.uint8: "|u1", torch.bool: "|b1",
}
_TORCH = {v: k for k, v in _DTYPES.items()}


def save_checkpoint(path, tensors: dict, meta: dict) -> str:
    """Write atomically; returns the sha256 of the file contents."""
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        if t.dtype not in _DTYPES:
            raise TypeError(f"unsupported dtype {t.dtype} for {name}")
        raw = t.numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": FORMAT_VERSION, "meta": meta, "tensors": entries},
                          sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    h = hashlib.sha256()
    with tmp.open("wb") as fh:
        for chunk in (MAGIC, struct.pack("<Q", len(manifest)), manifest, *blobs):
            fh.write(chunk)
            h.update(chunk)
    os.replace(tmp, path)
    return h.hexdigest()


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (mlen,) = struct.unpack("<Q", data[8:16])
    manifest = json.loads(data[16:16 + mlen])
    if manifest["version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest['version']}")
    base = 16 + mlen
    tensors = {}
    for e in manifest["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(data, dtype=e["dtype"], count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=start).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.copy())
    return tensors, manifest["meta"]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
