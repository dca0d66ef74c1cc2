"""File formats for grid fields, masks and boundary rings.

Binary grid-field format (extension ``.lhf``): magic ``LHF1``, then
little-endian u64 n, u64 m, f64 k, u8 kind (0 scalar / 1 complex / 2 vec3),
then the payload as little-endian f64 in row-major node order (i fastest):
complex nodes as (re, im), vec3 nodes as (x, y, z).

CSV export: header ``i,j,u,v,<components>`` with floats printed to 17
significant digits, rows in the same node order.

Masks are ASCII PGM (P2), maxval 255, pixel value 0 = known and
255 = occluded; image row r holds grid row j = r.

Boundary-ring files (extension ``.lhb``): magic ``LHB1``, u64 n, u64 m,
f64 k, u8 ring widths (phi, frame, mu), then phi on the outer 2 rings
(vec3), frame U (complex 3-vector) and W (vec3) on the outer ring, and mu
(complex) on the outer ring, each in row-major filtered node order.

Validity margins are not persisted: every field reads back with margin 0,
so pipelines should write boundary-extended fields.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .grid import ComplexField, HoleMask, ParamGrid, ScalarField, Vec3Field

_FIELD_MAGIC = b"LHF1"
_BOUNDARY_MAGIC = b"LHB1"
_HEADER = struct.Struct("<QQdB")
_BHEADER = struct.Struct("<QQdBBB")

_KIND_CODE = {ScalarField: 0, ComplexField: 1, Vec3Field: 2}
_KIND_CLASS = {0: ScalarField, 1: ComplexField, 2: Vec3Field}
_KIND_WIDTH = {0: 1, 1: 2, 2: 3}


def _payload(values: np.ndarray) -> bytes:
    if values.dtype.kind == "c":
        values = np.ascontiguousarray(values).view(np.float64)
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def write_field(path, field) -> None:
    """Write a scalar/complex/vec3 field in the binary grid-field format."""
    code = _KIND_CODE.get(type(field))
    if code is None:
        raise FormatError(f"cannot serialize field kind {field.kind!r}")
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(_HEADER.pack(field.grid.n, field.grid.m, field.grid.k, code))
        fh.write(_payload(field.values))


def read_field(path):
    """Read a binary grid-field file; the result carries margin 0."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 + _HEADER.size or raw[:4] != _FIELD_MAGIC:
        raise FormatError(f"{path}: not a grid-field file (bad magic)")
    n, m, k, code = _HEADER.unpack_from(raw, 4)
    if code not in _KIND_CLASS:
        raise FormatError(f"{path}: unknown field kind code {code}")
    try:
        grid = ParamGrid(int(n), float(k))
    except Exception as exc:
        raise FormatError(f"{path}: invalid grid header ({exc})") from exc
    if grid.m != int(m):
        raise FormatError(f"{path}: header m={m} inconsistent with k={k}, n={n} (expect {grid.m})")
    width = _KIND_WIDTH[code]
    count = grid.node_count * width
    body = raw[4 + _HEADER.size :]
    if len(body) != count * 8:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {count * 8}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{path}: payload contains non-finite values")
    cls = _KIND_CLASS[code]
    if code == 0:
        vals = flat.reshape(grid.shape)
    elif code == 1:
        vals = flat.view(np.complex128).reshape(grid.shape)
    else:
        vals = flat.reshape(grid.shape + (3,))
    return cls(grid, vals, margin=0)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, field) -> None:
    """Export a field as CSV with header ``i,j,u,v,<components>``."""
    code = _KIND_CODE.get(type(field))
    if code is None:
        raise FormatError(f"cannot export field kind {field.kind!r}")
    header = {0: "i,j,u,v,value", 1: "i,j,u,v,re,im", 2: "i,j,u,v,x,y,z"}[code]
    grid = field.grid
    h = grid.h
    vals = field.values
    lines = [header]
    for j in range(grid.m + 1):
        for i in range(grid.n + 1):
            prefix = f"{i},{j},{_fmt(i * h)},{_fmt(j * h)}"
            if code == 0:
                lines.append(f"{prefix},{_fmt(vals[j, i])}")
            elif code == 1:
                z = vals[j, i]
                lines.append(f"{prefix},{_fmt(z.real)},{_fmt(z.imag)}")
            else:
                x, y, zz = vals[j, i]
                lines.append(f"{prefix},{_fmt(x)},{_fmt(y)},{_fmt(zz)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mask(path, mask: HoleMask) -> None:
    """Write a hole mask as ASCII PGM (P2), 0 = known, 255 = occluded."""
    grid = mask.grid
    rows = []
    for j in range(grid.m + 1):
        rows.append(" ".join("255" if mask.occluded[j, i] else "0" for i in range(grid.n + 1)))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"P2\n{grid.n + 1} {grid.m + 1}\n255\n")
        fh.write("\n".join(rows) + "\n")


def read_mask(path, grid: ParamGrid) -> HoleMask:
    """Read an ASCII PGM mask and bind it to ``grid``."""
    with open(path, "r") as fh:
        text = fh.read()
    tokens = []
    for line in text.splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens or tokens[0] != "P2":
        raise FormatError(f"{path}: expected ASCII PGM magic P2")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        pixels = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PGM content") from exc
    if maxval != 255:
        raise FormatError(f"{path}: mask PGM must use maxval 255, got {maxval}")
    if (width, height) != (grid.n + 1, grid.m + 1):
        raise FormatError(
            f"{path}: mask is {width}x{height}, grid wants {grid.n + 1}x{grid.m + 1}"
        )
    if pixels.size != width * height:
        raise FormatError(f"{path}: expected {width * height} pixels, got {pixels.size}")
    bad = ~np.isin(pixels, (0, 255))
    if np.any(bad):
        raise FormatError(f"{path}: mask pixels must be 0 or 255")
    occ = (pixels == 255).reshape(height, width)
    return HoleMask(grid, occ)


def _ring_nodes(grid: ParamGrid, width: int) -> np.ndarray:
    return grid.ring_index() < width


def write_boundary(path, bd) -> None:
    """Serialize BoundaryData (see lhsurf.reconstruct) as an .lhb file."""
    grid = bd.grid
    sel_phi = _ring_nodes(grid, bd.PHI_RING)
    sel_one = _ring_nodes(grid, bd.FRAME_RING)
    with open(path, "wb") as fh:
        fh.write(_BOUNDARY_MAGIC)
        fh.write(_BHEADER.pack(grid.n, grid.m, grid.k, bd.PHI_RING, bd.FRAME_RING, bd.MU_RING))
        fh.write(_payload(bd.phi[sel_phi]))
        fh.write(_payload(bd.frame_u[sel_one]))
        fh.write(_payload(bd.frame_w[sel_one]))
        fh.write(_payload(bd.mu[sel_one]))


def read_boundary(path):
    """Read an .lhb boundary-ring file back into BoundaryData."""
    from .reconstruct import BoundaryData

    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 + _BHEADER.size or raw[:4] != _BOUNDARY_MAGIC:
        raise FormatError(f"{path}: not a boundary-ring file (bad magic)")
    n, m, k, w_phi, w_frame, w_mu = _BHEADER.unpack_from(raw, 4)
    if (w_phi, w_frame, w_mu) != (BoundaryData.PHI_RING, BoundaryData.FRAME_RING, BoundaryData.MU_RING):
        raise FormatError(f"{path}: unsupported ring widths {(w_phi, w_frame, w_mu)}")
    try:
        grid = ParamGrid(int(n), float(k))
    except Exception as exc:
        raise FormatError(f"{path}: invalid grid header ({exc})") from exc
    if grid.m != int(m):
        raise FormatError(f"{path}: header m={m} inconsistent with k={k}, n={n}")
    sel_phi = _ring_nodes(grid, w_phi)
    sel_one = _ring_nodes(grid, w_frame)
    n_phi, n_one = int(sel_phi.sum()), int(sel_one.sum())
    need = (n_phi * 3 + n_one * 6 + n_one * 3 + n_one * 2) * 8
    body = raw[4 + _BHEADER.size :]
    if len(body) != need:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {need}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{path}: payload contains non-finite values")
    pos = 0

    def take(cnt):
        nonlocal pos
        out = flat[pos : pos + cnt]
        pos += cnt
        return out

    phi = np.zeros(grid.shape + (3,))
    phi[sel_phi] = take(n_phi * 3).reshape(n_phi, 3)
    frame_u = np.zeros(grid.shape + (3,), dtype=np.complex128)
    frame_u[sel_one] = take(n_one * 6).view(np.complex128).reshape(n_one, 3)
    frame_w = np.zeros(grid.shape + (3,))
    frame_w[sel_one] = take(n_one * 3).reshape(n_one, 3)
    mu = np.zeros(grid.shape, dtype=np.complex128)
    mu[sel_one] = take(n_one * 2).view(np.complex128)
    return BoundaryData(grid, phi, frame_u, frame_w, mu)
