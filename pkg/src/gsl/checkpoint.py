"""Binary checkpoint files for parameter vectors and optimizer state.

Layout (all integers little-endian):

    8 bytes   magic "GSLCKPT1"
    4 bytes   u32 header length
    N bytes   UTF-8 JSON header: {"manifest": [[name, rows, cols], ...],
              "has_opt": bool, "opt_step": int, "meta": {...}}
    params    float64 little-endian, manifest order
    opt m/v   two more float64 runs when has_opt
    4 bytes   u32 CRC32 of everything above

Round-trips are bit-exact; a CRC or structure mismatch raises CheckpointError.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nets import ParamVector
from .optim import AdamState

MAGIC = b"GSLCKPT1"


def _f64_bytes(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_checkpoint(path, params, opt_state=None, meta=None):
    header = {
        "manifest": [[n, r, c] for n, r, c in params.manifest],
        "has_opt": opt_state is not None,
        "opt_step": int(opt_state.step) if opt_state is not None else 0,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(hbytes)) + hbytes
    body += _f64_bytes(params.values)
    if opt_state is not None:
        body += _f64_bytes(opt_state.m) + _f64_bytes(opt_state.v)
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(body)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns (ParamVector, AdamState or None, meta dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: bad header ({e})") from None

    manifest = [(n, int(r), int(c)) for n, r, c in header["manifest"]]
    n_params = sum(r * c for _, r, c in manifest)
    off = 12 + hlen
    runs = 3 if header["has_opt"] else 1
    expected = off + runs * n_params * 8 + 4
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")

    def f64(o):
        return np.frombuffer(raw, dtype="<f8", count=n_params, offset=o).astype(np.float64)

    params = ParamVector(f64(off), manifest)
    opt = None
    if header["has_opt"]:
        opt = AdamState(n_params, m=f64(off + 8 * n_params), v=f64(off + 16 * n_params),
                        step=header["opt_step"])
    return params, opt, header.get("meta", {})
