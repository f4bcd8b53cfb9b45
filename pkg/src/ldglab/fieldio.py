"""Field persistence: a small binary format and a VTK legacy export.

Binary layout (little endian)::

    b"LDGF"  magic
    u32      format version
    u32      n (nodes per axis)
    f64 x4   R_dom, t, h_plus, Lbar
    f64      n*n*n*5 component values, C order, zero outside interior and shell
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import qtensor as qt
from .field import QField, build_grid
from .material import ReducedParams

MAGIC = b"LDGF"
VERSION = 1
_HEADER = struct.Struct("<4sII4d")


class FormatError(ValueError):
    pass


def export_field(F: QField, path) -> Path:
    path = Path(path)
    g = F.grid
    vals = np.where(g.active[..., None], F.values, 0.0)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.n, g.R, F.params.t, F.params.h_plus, F.params.Lbar))
        fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, R, t, hp, Lbar = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (expected {VERSION})")
    return {"n": n, "R": R, "t": t, "h_plus": hp, "Lbar": Lbar}


def import_field(path) -> QField:
    hdr = read_header(path)
    n = hdr["n"]
    count = n**3 * 5
    data = Path(path).read_bytes()[_HEADER.size:]
    if len(data) != 8 * count:
        raise FormatError(f"{path}: expected {8 * count} payload bytes, found {len(data)}")
    vals = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(n, n, n, 5)
    rp = ReducedParams.from_t(hdr["t"], Lbar=hdr["Lbar"])
    if abs(rp.h_plus - hdr["h_plus"]) > 1e-12 * rp.h_plus:
        raise FormatError(f"{path}: h_plus {hdr['h_plus']} inconsistent with t {hdr['t']}")
    return QField(grid=build_grid(n, hdr["R"]), values=vals, params=rp)


def export_vtk(F: QField, path, title: str = "ldg field") -> Path:
    """VTK legacy structured points (ASCII) with |Q|, beta^2, top eigenvalue and director."""
    path = Path(path)
    g = F.grid
    act = g.active
    nrm = np.where(act, F.norm, 0.0)
    b2 = np.zeros(act.shape)
    lam = np.zeros(act.shape)
    dirs = np.zeros(act.shape + (3,))
    es = qt.eigen(F.values[act])
    b2[act] = np.nan_to_num(qt.biaxiality(F.values[act], floor=1e-6), nan=0.0)
    lam[act] = es.values[:, 0]
    dirs[act] = es.vectors[:, :, 0]

    # VTK wants x fastest; arrays are indexed (i, j, k) with i along x
    def flat(a):
        return np.moveaxis(a, (0, 1, 2), (2, 1, 0)).reshape(-1, *a.shape[3:])

    lines = [
        "# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.n} {g.n} {g.n}", f"ORIGIN {-g.R} {-g.R} {-g.R}", f"SPACING {g.h} {g.h} {g.h}",
        f"POINT_DATA {g.n**3}",
    ]
    for name, arr in (("norm", nrm), ("beta2", b2), ("lambda_max", lam)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.10g}" for v in flat(arr)]
    lines.append("VECTORS director double")
    lines += [f"{a:.10g} {b:.10g} {c:.10g}" for a, b, c in flat(dirs)]
    path.write_text("\n".join(lines) + "\n")
    return path
