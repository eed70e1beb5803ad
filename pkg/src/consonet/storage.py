"""Directory-based artifact storage: one JSON manifest plus raw arrays.

Binary files are contiguous little-endian arrays, row-major, with no
headers; the manifest carries the dtype tag ("f32le" or "f64le"),
per-file byte lengths and CRC32C checksums, and a format marker that
acts as the magic for the container.  Datasets and model files share
this layout.

CRC32C (Castagnoli polynomial) is table-driven here because no wheel
for it is available in this environment; throughput is adequate for the
file sizes this toolkit writes.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import StorageError

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"

_DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}


def _build_crc32c_table() -> list[int]:
    poly = 0x82F63B78  # reflected Castagnoli polynomial
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _build_crc32c_table()


def crc32c(data) -> int:
    """CRC32C of a bytes-like object."""
    crc = 0xFFFFFFFF
    table = _CRC_TABLE
    for b in memoryview(data).cast("B"):
        crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


def crc32c_hex(data) -> str:
    return f"{crc32c(data):08x}"


def dtype_for_tag(tag: str) -> np.dtype:
    if tag not in _DTYPES:
        raise StorageError(f"unknown dtype tag {tag!r}; expected one of {sorted(_DTYPES)}")
    return _DTYPES[tag]


def write_array(dirpath: Path, name: str, arr: np.ndarray, tag: str) -> dict:
    """Write a raw array file; returns its manifest entry."""
    data = np.ascontiguousarray(arr, dtype=dtype_for_tag(tag)).tobytes()
    path = Path(dirpath) / name
    with open(path, "wb") as fh:
        fh.write(data)
    return {"bytes": len(data), "crc32c": crc32c_hex(data)}


def read_array(
    dirpath: Path, name: str, entry: dict, tag: str, shape: tuple[int, ...]
) -> np.ndarray:
    """Read and verify a raw array file against its manifest entry."""
    path = Path(dirpath) / name
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {name}: {exc}") from exc
    expected = int(np.prod(shape, dtype=np.int64)) * dtype_for_tag(tag).itemsize
    if entry["bytes"] != expected:
        raise StorageError(
            f"manifest count mismatch for {name}: {entry['bytes']} bytes declared, "
            f"{expected} implied by counts"
        )
    if len(data) != expected:
        raise StorageError(
            f"truncated file {name}: {len(data)} bytes on disk, {expected} expected"
        )
    if crc32c_hex(data) != entry["crc32c"]:
        raise StorageError(f"checksum mismatch for {name}")
    return np.frombuffer(data, dtype=dtype_for_tag(tag)).reshape(shape).astype(float)


def save_manifest(dirpath: Path, manifest: dict) -> None:
    path = Path(dirpath) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(dirpath: Path, expected_format: str) -> dict:
    path = Path(dirpath) / MANIFEST_NAME
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise StorageError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StorageError(f"manifest is not valid JSON: {exc}") from exc
    fmt = manifest.get("format")
    if fmt != expected_format:
        raise StorageError(f"bad format marker {fmt!r}; expected {expected_format!r}")
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise StorageError(
            f"schema_version {version!r} not supported (this build reads {SCHEMA_VERSION})"
        )
    return manifest


def ensure_dir(dirpath) -> Path:
    path = Path(dirpath)
    os.makedirs(path, exist_ok=True)
    return path
