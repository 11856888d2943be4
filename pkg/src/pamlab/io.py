"""Field files, CSV tables and JSON sidecars.

Binary field layout (little endian)::

    magic  b"PAMF"
    version u32 = 1
    side    u32   lattice side N, or box side L when bit 1 of flags is set
    flags   u32   bit 0: spectral coefficients; bit 1: wide coefficient box
    payload side*side pairs (re, im) of float64, row-major over the centred box

A wide box stores an unfolded product of extensions; its file records the
box side and the lattice side ``N`` is written as a trailing u32.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .besov import besov_norm
from .errors import InvalidInput
from .torus import GridSpec, LatticeField, SpectralField

MAGIC = b"PAMF"
VERSION = 1
FLAG_SPECTRAL = 1
FLAG_WIDE = 2
_HEADER = struct.Struct("<4sIII")


def _payload(arr):
    a = np.ascontiguousarray(arr, dtype=np.complex128)
    return a.reshape(-1).view("<f8").tobytes()


def write_field(path, fld):
    """Write a :class:`LatticeField` or :class:`SpectralField`."""
    if isinstance(fld, SpectralField):
        wide = fld.size != fld.grid.N
        flags = FLAG_SPECTRAL | (FLAG_WIDE if wide else 0)
        side = fld.size
        data = fld.coeffs
    elif isinstance(fld, LatticeField):
        flags, side, data, wide = 0, fld.grid.N, fld.values, False
    else:
        raise InvalidInput(f"cannot serialise {type(fld).__name__}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, side, flags))
        fh.write(_payload(data))
        if wide:
            fh.write(struct.pack("<I", fld.grid.N))


def read_field(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidInput("file too short for a field header")
    magic, version, side, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidInput(f"bad magic {magic!r}")
    if version != VERSION:
        raise InvalidInput(f"unsupported field file version {version}")
    n = side * side * 16
    body = raw[_HEADER.size:_HEADER.size + n]
    if len(body) != n:
        raise InvalidInput("truncated field payload")
    data = np.frombuffer(body, dtype="<f8").view(np.complex128).reshape(side, side).copy()
    if flags & FLAG_WIDE:
        (N,) = struct.unpack_from("<I", raw, _HEADER.size + n)
    else:
        N = side
    grid = GridSpec(int(N))
    if flags & FLAG_SPECTRAL:
        return SpectralField(grid, data)
    return LatticeField(grid, data)


def write_field_csv(path, fld):
    """CSV with columns ``l1, l2, re, im`` (sites or modes, row-major)."""
    data = fld.coeffs if isinstance(fld, SpectralField) else fld.values
    L = data.shape[0]
    h = (L - 1) // 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l1", "l2", "re", "im"])
        for i in range(L):
            for j in range(L):
                z = data[i, j]
                w.writerow([i - h, j - h, repr(float(z.real)), repr(float(z.imag))])


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_enhanced_noise(directory, en, stem="noise"):
    """Three field files plus a JSON sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("xi", "X", "area"):
        write_field(d / f"{stem}_{name}.pamf", getattr(en, name))
    write_json(d / f"{stem}.json", en.sidecar())


def write_trajectory(directory, traj, stem="traj"):
    """One spectral field file per saved time plus a JSON manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(len(traj.times)):
        name = f"{stem}_{i:04d}.pamf"
        write_field(d / name, traj.state(i))
        files.append(name)
    write_json(d / f"{stem}.json", {**traj.manifest(), "files": files})


def norm_table_rows(fields, alphas, pqs, partition=None):
    """Rows ``(field_id, alpha, p, q, norm)`` for a dict of spectral fields."""
    rows = []
    for fid, f in fields.items():
        for a in alphas:
            for p, q in pqs:
                rows.append((fid, a, p, q, besov_norm(f, a, p, q, partition)))
    return rows
