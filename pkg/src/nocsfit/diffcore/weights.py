"""Binary weight container.

Layout (little-endian): magic ``NFW1``, then per parameter: identifier
length (u32), identifier UTF-8 bytes, rows (u32), cols (u32), row-major
float64 payload. Entries repeat until end of file.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError, ShapeMismatch
from .tensor import Parameter

MAGIC = b"NFW1"


def save_weights(path, params: list[Parameter]) -> None:
    """Write parameters sorted by identifier (canonical, diff-friendly)."""
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("parameter identifiers must be unique")
    with open(path, "wb") as f:
        f.write(MAGIC)
        for p in sorted(params, key=lambda q: q.name):
            name = p.name.encode("utf-8")
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<II", p.shape[0], p.shape[1]))
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated weight file: wanted {n} bytes, got {len(buf)}")
    return buf


def load_weights(path, params: list[Parameter]) -> None:
    """Load values in place; every stored identifier must match a parameter.

    Raises FormatError for bad magic, truncation, identifiers unknown to
    the model, or identifiers missing from the file; ShapeMismatch when a
    stored shape disagrees with the parameter.
    """
    by_name = {p.name: p for p in params}
    seen: set[str] = set()
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise FormatError("not a weight container (bad magic)")
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError("truncated weight file in entry header")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(f, name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(f, 8))
            payload = _read_exact(f, rows * cols * 8)
            if name not in by_name:
                raise FormatError(f"unknown parameter identifier {name!r}")
            p = by_name[name]
            if p.shape != (rows, cols):
                raise ShapeMismatch(
                    f"{name}: stored shape {(rows, cols)} vs model {p.shape}"
                )
            p.value[...] = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
            seen.add(name)
    missing = sorted(set(by_name) - seen)
    if missing:
        raise FormatError(f"weight file lacks parameters: {', '.join(missing)}")
