"""Binary model container: named float64 tensors plus a metadata text block.

Layout (all integers little-endian):

    magic        8 bytes, b"DCRF0001"
    meta_len     uint32, byte length of the metadata block
    metadata     UTF-8 text, "key=value" lines sorted by key
    n_tensors    uint32
    manifest     per tensor: name_len uint32, name UTF-8, rank uint32,
                 dims rank*uint64, offset uint64 (into the payload)
    payload      concatenated row-major float64 data

Tensors are written sorted by name with contiguous offsets, so saving is
canonical and load-then-save reproduces the file byte for byte.  The magic
tag is checked before anything else is read.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DCRF0001"


class ContainerError(ValueError):
    pass


def write_container(path, tensors: dict[str, np.ndarray], metadata: dict[str, str]) -> None:
    for key, value in metadata.items():
        if "=" in key or "\n" in key or "\n" in value:
            raise ContainerError(f"metadata key/value not representable: {key!r}")
    meta_text = "".join(f"{k}={metadata[k]}\n" for k in sorted(metadata))
    meta_bytes = meta_text.encode("utf-8")

    names = sorted(tensors)
    manifest = bytearray()
    payload = bytearray()
    offset = 0
    for name in names:
        arr = np.asarray(tensors[name], dtype="<f8")
        raw = arr.tobytes()  # serializes in C order regardless of memory layout
        name_b = name.encode("utf-8")
        manifest += struct.pack("<I", len(name_b)) + name_b
        manifest += struct.pack("<I", arr.ndim)
        manifest += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        manifest += struct.pack("<Q", offset)
        payload += raw
        offset += len(raw)

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(names)))
        fh.write(manifest)
        fh.write(payload)


def read_container(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ContainerError(f"unknown magic tag {magic!r}, expected {MAGIC!r}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        metadata = {}
        for line in _read_exact(fh, meta_len).decode("utf-8").splitlines():
            if line:
                key, _, value = line.partition("=")
                metadata[key] = value
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4))
        entries = []
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank)) if rank else ()
            (offset,) = struct.unpack("<Q", _read_exact(fh, 8))
            entries.append((name, dims, offset))
        payload = fh.read()
    tensors = {}
    for name, dims, offset in entries:
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        end = offset + 8 * count
        if end > len(payload):
            raise ContainerError(f"tensor {name!r} extends past end of payload")
        tensors[name] = np.frombuffer(payload[offset:end], dtype="<f8").reshape(dims).copy()
    return tensors, metadata


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ContainerError("truncated container file")
    return data
