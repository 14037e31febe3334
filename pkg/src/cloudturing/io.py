"""Field files (text and binary), graymap dumps, digests and the run manifest.

Text field file::

    # n=<n> dims=<d> L=<length> time=<t> species=<qc|qr>
    <one value per line, row-major, repr precision>

Binary field file (little-endian)::

    magic  b"CTFB"      4 bytes
    version            uint8 (= 1)
    dims               uint8
    n per dim          uint32 x dims
    values             float64 x n^dims, row-major
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CTFB"
VERSION = 1


def write_field_text(path: Path, arr: np.ndarray, length: float, time: float, species: str) -> Path:
    header = f"# n={arr.shape[0]} dims={arr.ndim} L={length!r} time={time!r} species={species}\n"
    body = "\n".join(repr(float(v)) for v in arr.ravel())
    path.write_text(header + body + "\n")
    return path


def read_field_text(path: Path) -> tuple[dict, np.ndarray]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        values = np.array([float(line) for line in fh if line.strip()])
    n, dims = int(meta["n"]), int(meta["dims"])
    if values.size != n**dims:
        raise ValueError(f"{path}: expected {n**dims} values, found {values.size}")
    meta = {"n": n, "dims": dims, "L": float(meta["L"]), "time": float(meta["time"]), "species": meta["species"]}
    return meta, values.reshape((n,) * dims)


def write_field_binary(path: Path, arr: np.ndarray) -> Path:
    head = MAGIC + struct.pack("<BB", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    path.write_bytes(head + np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_field_binary(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic bytes")
    version, dims = struct.unpack_from("<BB", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    shape = struct.unpack_from(f"<{dims}I", raw, 6)
    offset = 6 + 4 * dims
    count = int(np.prod(shape))
    if len(raw) - offset != 8 * count:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)


def write_pgm(path: Path, arr: np.ndarray) -> dict:
    """8-bit binary graymap scaled from the field's own min (black) to max (white)."""
    if arr.ndim != 2:
        raise ValueError("graymap needs a 2D field")
    lo, hi = float(arr.min()), float(arr.max())
    span = hi - lo
    pix = np.zeros(arr.shape, dtype=np.uint8) if span == 0 else np.rint((arr - lo) / span * 255).astype(np.uint8)
    rows, cols = arr.shape
    path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode() + pix.tobytes())
    return {"min": lo, "max": hi}


def read_pgm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


def inventory(out_dir: Path, files: list[Path]) -> list[dict]:
    return [
        {"path": str(Path(f).relative_to(out_dir)), "bytes": Path(f).stat().st_size, "sha256": sha256_file(f)}
        for f in files
    ]
