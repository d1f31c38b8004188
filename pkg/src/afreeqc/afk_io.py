"""Binary field files (AFK1 format) and CSV export.

Layout, all little-endian:

    bytes 0..3    magic b"AFK1"
    bytes 4..7    uint32 format version (1)
    bytes 8..15   reserved (zero)
    uint32        n  (space dimension)
    uint32        m  (components)
    n x uint32    N per axis
    2n x float64  box extents lo_0, hi_0, ..., lo_{n-1}, hi_{n-1}
    uint8         mask flag (1 = masked domain field, 0 = periodic field)
    [N^n x uint8] mask bytes, row-major (present iff mask flag)
    N^n x m f64   values, row-major, component index fastest

Fields carrying generation metadata (domain descriptor, singular-cap
annotation) get a JSON sidecar at ``<path>.json`` so that reloaded fields keep
their quadrature rules.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .fields import DomainField, GridSpec, PeriodicField

MAGIC = b"AFK1"
VERSION = 1


def _atomic_write(path, data: bytes):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_field(path, field) -> None:
    """Write a periodic or domain field; metadata goes to a JSON sidecar."""
    grid = field.grid
    is_domain = isinstance(field, DomainField)
    parts = [MAGIC, struct.pack("<I", VERSION), b"\x00" * 8]
    parts.append(struct.pack("<II", grid.n, field.m))
    parts.append(struct.pack(f"<{grid.n}I", *([grid.N] * grid.n)))
    box_flat = [v for pair in grid.box for v in pair]
    parts.append(struct.pack(f"<{2 * grid.n}d", *box_flat))
    parts.append(struct.pack("<B", 1 if is_domain else 0))
    if is_domain:
        parts.append(field.mask.astype(np.uint8).tobytes(order="C"))
    parts.append(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    _atomic_write(path, b"".join(parts))

    sidecar = {}
    if is_domain:
        sidecar["descriptor"] = field.descriptor
        cap = getattr(field, "singular_cap", None)
        if cap is not None:
            sidecar["singular_cap"] = cap.to_json()
    if sidecar:
        atomic_write_text(f"{path}.json", json.dumps(sidecar, sort_keys=True))
    elif os.path.exists(f"{path}.json"):
        os.remove(f"{path}.json")


def load_field(path):
    """Read an AFK1 file back into a PeriodicField or DomainField."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an AFK1 file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported AFK version {version}")
    off = 16
    n, m = struct.unpack_from("<II", raw, off)
    off += 8
    Ns = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    if len(set(Ns)) != 1:
        raise ValueError("per-axis point counts must agree")
    N = Ns[0]
    box_flat = struct.unpack_from(f"<{2 * n}d", raw, off)
    off += 16 * n
    (mask_flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    grid = GridSpec(n=n, N=N, box=tuple((box_flat[2 * i], box_flat[2 * i + 1]) for i in range(n)))
    shape = (N,) * n
    count = N ** n
    mask = None
    if mask_flag:
        mask = np.frombuffer(raw, dtype=np.uint8, count=count, offset=off).reshape(shape).astype(bool)
        off += count
    values = np.frombuffer(raw, dtype="<f8", count=count * m, offset=off)
    values = values.reshape(shape + (m,)).astype(float)

    if not mask_flag:
        return PeriodicField(grid, values)

    descriptor = None
    cap = None
    sidecar_path = f"{path}.json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        descriptor = sidecar.get("descriptor")
        cap_doc = sidecar.get("singular_cap")
        if cap_doc is not None:
            from .capquad import SingularCap

            cap = SingularCap.from_json(cap_doc)
    return DomainField(grid, mask, values, descriptor=descriptor, singular_cap=cap)


def export_magnitude_csv(path, field) -> None:
    """Per-node magnitude table (coordinates then |u|), for external plotting."""
    grid = field.grid
    pts = grid.nodes().reshape(-1, grid.n)
    mag = np.sqrt((field.values ** 2).sum(axis=-1)).reshape(-1)
    header = ",".join([f"x{i}" for i in range(grid.n)] + ["magnitude"])
    rows = [header]
    for p, v in zip(pts, mag):
        rows.append(",".join(repr(float(c)) for c in p) + f",{v!r}")
    atomic_write_text(path, "\n".join(rows) + "\n")
