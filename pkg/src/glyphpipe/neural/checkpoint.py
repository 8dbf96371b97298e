"""Bit-exact parameter serialization.

Layout: bytes ``HGTC1``, u32-LE version, u32-LE manifest byte length, the
UTF-8 JSON manifest, then a little-endian float32 blob. The manifest lists
(name, shape, dtype, offset) per parameter with unique names and ascending,
non-overlapping byte offsets, so ``load(save(params))`` round-trips every
array bitwise.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import GlyphPipeError
from .tensor import Tensor

MAGIC = b"HGTC1"
VERSION = 1


class BadMagic(GlyphPipeError):
    """File does not start with the checkpoint magic."""


class VersionMismatch(GlyphPipeError):
    """Checkpoint was written by an incompatible format version."""


class CorruptManifest(GlyphPipeError):
    """Manifest JSON or the blob it describes is inconsistent."""


def save_checkpoint(params: dict[str, "Tensor | np.ndarray"], path) -> None:
    """Write parameters in canonical (name-sorted) order; values stored as f32 LE."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(params):
        data = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
        arr = np.ascontiguousarray(data, dtype="<f4")
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset}
        )
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = json.dumps({"params": entries}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    head_end = len(MAGIC) + 8
    if len(raw) < head_end:
        raise CorruptManifest(f"{path}: truncated header")
    version, manifest_len = struct.unpack("<II", raw[len(MAGIC) : head_end])
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, supported {VERSION}")
    manifest_raw = raw[head_end : head_end + manifest_len]
    if len(manifest_raw) < manifest_len:
        raise CorruptManifest(f"{path}: truncated manifest")
    try:
        manifest = json.loads(manifest_raw.decode("utf-8"))
        entries = manifest["params"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptManifest(f"{path}: bad manifest: {exc}") from exc
    blob = raw[head_end + manifest_len :]
    params: dict[str, np.ndarray] = {}
    prev_end = 0
    for entry in entries:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            dtype = entry["dtype"]
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptManifest(f"{path}: bad manifest entry {entry!r}") from exc
        if dtype != "f32":
            raise CorruptManifest(f"{path}: unsupported dtype {dtype!r}")
        if name in params:
            raise CorruptManifest(f"{path}: duplicate parameter {name!r}")
        if offset < prev_end:
            raise CorruptManifest(f"{path}: overlapping or unordered offset for {name!r}")
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        if offset + nbytes > len(blob):
            raise CorruptManifest(f"{path}: blob truncated at parameter {name!r}")
        params[name] = (
            np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset)
            .reshape(shape)
            .copy()
        )
        prev_end = offset + nbytes
    return params
