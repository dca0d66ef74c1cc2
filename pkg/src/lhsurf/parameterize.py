"""Flatten a disk-type triangle mesh to [0,1] x [0,K] and resample it.

The chart is a piecewise-linear harmonic map: cotangent-weighted Laplace
systems per coordinate with the boundary loop mapped to the rectangle
perimeter by arc length and the four corners pinned.  The weights are
clamped below at 1e-6, which keeps them convex-combination weights, so a
convex (rectangular) boundary cannot produce flipped triangles.  The
rectangle aspect K is found by a golden-section search minimizing the
mesh's conformality residual.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CoverageError,
    FlatteningError,
    FormatError,
    InputError,
    SearchWarning,
    SolverError,
    TopologyError,
)
from .geometry import SurfacePatch, check_immersion
from .grid import ParamGrid, Vec3Field

_WEIGHT_CLAMP = 1e-6
_DEGENERATE_AREA_REL = 1e-12
_SNAP = 1e-9


def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Read vertices and triangles from a Wavefront OBJ (other records ignored).

    Faces with more than three vertices are fan-triangulated.
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        val = int(head)
                    except ValueError as exc:
                        raise FormatError(f"{path}:{lineno}: bad face index {tok!r}") from exc
                    if val <= 0:
                        raise FormatError(f"{path}:{lineno}: only positive OBJ indices are supported")
                    idx.append(val - 1)
                if len(idx) < 3:
                    raise FormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                for t in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[t], idx[t + 1]])
    if not verts or not faces:
        raise FormatError(f"{path}: no usable v/f records found")
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def save_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        for x, y, z in np.asarray(vertices, dtype=np.float64):
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in np.asarray(faces, dtype=np.int64):
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def _boundary_loop(n_verts: int, faces: np.ndarray) -> np.ndarray:
    """Ordered boundary vertex loop in face orientation; validates disk topology."""
    directed: set[tuple[int, int]] = set()
    for a, b, c in faces:
        for e in ((int(a), int(b)), (int(b), int(c)), (int(c), int(a))):
            if e[0] == e[1]:
                raise TopologyError(f"degenerate edge on vertex {e[0]}")
            if e in directed:
                raise TopologyError(f"edge {e} appears twice with the same orientation (non-manifold)")
            directed.add(e)
    boundary = [e for e in directed if (e[1], e[0]) not in directed]
    if not boundary:
        raise TopologyError("mesh has no boundary (closed surface, not a disk)")
    nxt: dict[int, int] = {}
    for a, b in boundary:
        if a in nxt:
            raise TopologyError(f"boundary branches at vertex {a} (non-manifold boundary)")
        nxt[a] = b
    start = min(e[0] for e in boundary)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        if len(loop) > len(boundary):
            raise TopologyError("boundary does not close into a single loop")
        if cur not in nxt:
            raise TopologyError("boundary chain is broken")
        cur = nxt[cur]
    if len(loop) != len(boundary):
        raise TopologyError("mesh has more than one boundary loop (not a disk)")
    n_edges = (3 * len(faces) + len(boundary)) // 2
    if n_verts - n_edges + len(faces) != 1:
        raise TopologyError("Euler characteristic is not that of a disk")
    return np.asarray(loop, dtype=np.int64)


def auto_corners(vertices: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Deterministic farthest-point corner pick on the boundary loop.

    Seed with the lexicographically smallest boundary vertex, then greedily
    add the vertex maximizing the minimum distance to those already chosen;
    the four picks are returned in loop (counterclockwise) order.
    """
    pts = vertices[loop]
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    chosen = [int(order[0])]
    for _ in range(3):
        dmin = np.full(len(loop), np.inf)
        for c in chosen:
            dmin = np.minimum(dmin, np.linalg.norm(pts - pts[c], axis=1))
        dmin[chosen] = -np.inf
        chosen.append(int(np.argmax(dmin)))
    chosen.sort()
    return loop[chosen]


@dataclass(frozen=True)
class TriMesh:
    """Disk-type triangle mesh with four marked rectangle corners (ccw)."""

    vertices: np.ndarray
    faces: np.ndarray
    corner_ids: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        c = np.asarray(self.corner_ids, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3 or c.shape != (4,):
            raise InputError("TriMesh expects (V,3) vertices, (F,3) faces, 4 corner ids")
        if f.min() < 0 or f.max() >= len(v):
            raise InputError("face indices out of range")
        scale = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
        areas = 0.5 * np.linalg.norm(
            np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
        )
        if np.any(areas <= _DEGENERATE_AREA_REL * scale**2):
            raise TopologyError(f"{int(np.sum(areas <= _DEGENERATE_AREA_REL * scale**2))} degenerate faces")
        loop = _boundary_loop(len(v), f)
        pos = {int(vid): idx for idx, vid in enumerate(loop)}
        try:
            cpos = [pos[int(x)] for x in c]
        except KeyError as exc:
            raise TopologyError(f"corner vertex {exc} is not on the boundary loop") from exc
        if len(set(cpos)) != 4:
            raise TopologyError("corner vertices must be distinct")
        rolled = cpos[cpos.index(min(cpos)):] + cpos[: cpos.index(min(cpos))]
        if not (rolled[0] < rolled[1] < rolled[2] < rolled[3]):
            raise TopologyError("corners must appear in counterclockwise boundary order")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "corner_ids", c)
        object.__setattr__(self, "_loop", loop)

    @classmethod
    def from_obj(cls, path, corners="auto") -> "TriMesh":
        vertices, faces = load_obj(path)
        loop = _boundary_loop(len(vertices), faces)
        if isinstance(corners, str) and corners == "auto":
            cids = auto_corners(vertices, loop)
        else:
            cids = np.asarray([int(x) for x in corners], dtype=np.int64)
        return cls(vertices, faces, cids)

    @property
    def boundary(self) -> np.ndarray:
        return self._loop

    @property
    def scale(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


@dataclass(frozen=True)
class UvChart:
    """Flattened coordinates: one (u, v) per vertex, target rectangle [0,1]x[0,k]."""

    uv: np.ndarray
    k: float


def _cot_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    v, f = mesh.vertices, mesh.faces
    ii, jj, ww = [], [], []
    for local in range(3):
        a = f[:, local]
        b = f[:, (local + 1) % 3]
        opp = f[:, (local + 2) % 3]
        ea = v[a] - v[opp]
        eb = v[b] - v[opp]
        cross = np.linalg.norm(np.cross(ea, eb), axis=1)
        cot = np.einsum("fc,fc->f", ea, eb) / np.maximum(cross, 1e-300)
        ii.append(a)
        jj.append(b)
        ww.append(0.5 * cot)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    w = np.concatenate(ww)
    n = len(v)
    wmat = sp.coo_matrix((w, (i, j)), shape=(n, n))
    wmat = wmat + wmat.T
    wmat.data = np.maximum(wmat.data, _WEIGHT_CLAMP)
    deg = np.asarray(wmat.sum(axis=1)).ravel()
    return (sp.diags(deg) - wmat).tocsr()


def _perimeter_uv(mesh: TriMesh, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Boundary vertex ids and their uv targets (arc length per side, corners pinned)."""
    loop = mesh.boundary
    pos = {int(vid): idx for idx, vid in enumerate(loop)}
    cpos = sorted(pos[int(c)] for c in mesh.corner_ids)
    nloop = len(loop)
    corners_uv = [(0.0, 0.0), (1.0, 0.0), (1.0, k), (0.0, k)]
    uv_b = np.zeros((nloop, 2))
    pts = mesh.vertices[loop]
    seg = np.linalg.norm(pts[(np.arange(nloop) + 1) % nloop] - pts, axis=1)
    for side in range(4):
        a = cpos[side]
        b = cpos[(side + 1) % 4]
        idxs = np.arange(a, b + 1) if b > a else np.concatenate([np.arange(a, nloop), np.arange(0, b + 1)])
        lengths = seg[idxs[:-1]]
        total = float(lengths.sum())
        if total <= 0:
            raise TopologyError("zero-length boundary side between corners")
        t = np.concatenate([[0.0], np.cumsum(lengths)]) / total
        p0 = np.asarray(corners_uv[side])
        p1 = np.asarray(corners_uv[(side + 1) % 4])
        uv_b[idxs] = p0 + t[:, None] * (p1 - p0)
    return loop, uv_b


def harmonic_param(mesh: TriMesh, k: float) -> UvChart:
    """Harmonic map of the mesh onto [0,1] x [0,k] with arclength boundary.

    Raises FlatteningError (with the count) when any uv triangle comes out
    non-positively oriented, and SolverError when the Laplace residual
    exceeds 1e-8 relative.
    """
    if k <= 0:
        raise InputError("aspect ratio k must be positive")
    lap = _cot_laplacian(mesh)
    loop, uv_b = _perimeter_uv(mesh, k)
    n = len(mesh.vertices)
    is_b = np.zeros(n, dtype=bool)
    is_b[loop] = True
    inner = np.nonzero(~is_b)[0]
    uv = np.zeros((n, 2))
    uv[loop] = uv_b
    if inner.size:
        a_ii = lap[inner][:, inner].tocsc()
        a_ib = lap[inner][:, loop]
        rhs = -a_ib @ uv_b
        try:
            lu = spla.splu(a_ii)
        except RuntimeError as exc:
            raise SolverError(f"harmonic system could not be factorized: {exc}") from exc
        for c in range(2):
            x = lu.solve(rhs[:, c])
            resid = float(np.linalg.norm(a_ii @ x - rhs[:, c]))
            if resid > 1e-8 * max(float(np.linalg.norm(rhs[:, c])), 1e-300):
                raise SolverError("harmonic map residual exceeds 1e-8 relative")
            uv[inner, c] = x
    flipped = _signed_uv_areas(uv, mesh.faces) <= 0
    if np.any(flipped):
        raise FlatteningError(f"flattening produced {int(flipped.sum())} flipped triangles")
    return UvChart(uv, float(k))


def _signed_uv_areas(uv: np.ndarray, faces: np.ndarray) -> np.ndarray:
    d1 = uv[faces[:, 1]] - uv[faces[:, 0]]
    d2 = uv[faces[:, 2]] - uv[faces[:, 0]]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def mesh_conformality(mesh: TriMesh, chart: UvChart) -> float:
    """Area-weighted mean normalized conformality residual of the chart.

    Per triangle the affine map uv -> position has metric (E, F, G); the
    residual sqrt(F^2 + ((E-G)/2)^2) is averaged with uv-area weights and
    normalized by the average of (E+G)/2.
    """
    v, f = mesh.vertices, mesh.faces
    uv = chart.uv
    p = np.stack([uv[f[:, 1]] - uv[f[:, 0]], uv[f[:, 2]] - uv[f[:, 0]]], axis=-1)
    q = np.stack([v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]], axis=-1)
    det = p[:, 0, 0] * p[:, 1, 1] - p[:, 0, 1] * p[:, 1, 0]
    inv = np.empty_like(p)
    inv[:, 0, 0] = p[:, 1, 1]
    inv[:, 0, 1] = -p[:, 0, 1]
    inv[:, 1, 0] = -p[:, 1, 0]
    inv[:, 1, 1] = p[:, 0, 0]
    det_safe = np.where(np.abs(det) < 1e-300, 1e-300, det)
    inv /= det_safe[:, None, None]
    jac = q @ inv
    e = np.einsum("fc,fc->f", jac[:, :, 0], jac[:, :, 0])
    g = np.einsum("fc,fc->f", jac[:, :, 1], jac[:, :, 1])
    ff = np.einsum("fc,fc->f", jac[:, :, 0], jac[:, :, 1])
    w = np.abs(det) / 2.0
    wsum = float(w.sum())
    norm = float(np.sum(w * (e + g) / 2.0)) / wsum
    resid = float(np.sum(w * np.hypot(ff, (e - g) / 2.0))) / wsum
    return resid / norm


def optimal_aspect(mesh: TriMesh, k_low: float = 0.1, k_high: float = 10.0, max_iters: int = 40) -> float:
    """Golden-section search on log k for the most conformal rectangle aspect.

    Unimodality of the residual in log k is assumed; if the minimum sits at
    a search edge a SearchWarning fires and the best sampled k is returned.
    """
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = np.log(k_low), np.log(k_high)
    evals: dict[float, float] = {}

    def obj(x):
        if x not in evals:
            evals[x] = mesh_conformality(mesh, harmonic_param(mesh, float(np.exp(x))))
        return evals[x]

    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = obj(x1), obj(x2)
    for _ in range(max_iters):
        if hi - lo < 1e-3:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = obj(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = obj(x2)
    best_x = min(evals, key=lambda x: (evals[x], x))
    k_best = float(np.exp(best_x))
    if k_best < k_low * 1.05 or k_best > k_high / 1.05:
        warnings.warn(
            f"aspect search hit the bound at k = {k_best:.4g}; returning the best sampled value",
            SearchWarning,
            stacklevel=2,
        )
        return k_best
    return float(np.exp((lo + hi) / 2.0))


def snap_aspect(k: float, n: int) -> float:
    """Closest aspect representable on an n-interval grid (m/n with m = round(k n))."""
    return int(np.floor(k * n + 0.5)) / n


def resample_to_grid(mesh: TriMesh, chart: UvChart, n: int) -> SurfacePatch:
    """Barycentric resampling of vertex positions at the grid nodes.

    The chart aspect must be grid-compatible (k = m/n, see ``snap_aspect``);
    nodes not covered by any uv triangle (beyond a 1e-9 snap) raise a
    CoverageError listing them.
    """
    grid = ParamGrid(n, chart.k)
    vmax = grid.m * grid.h
    if vmax > chart.k + _SNAP:
        raise CoverageError(
            f"grid top row v = {vmax} lies outside the chart (k = {chart.k}); "
            "snap the aspect with snap_aspect(k, n) before parameterizing"
        )
    uv = chart.uv
    faces = mesh.faces
    tri_uv = uv[faces]
    lo = tri_uv.min(axis=1)
    hi = tri_uv.max(axis=1)

    nbins = max(1, min(128, int(np.sqrt(len(faces)))))
    bu = np.clip((lo[:, 0] * nbins / 1.0).astype(int), 0, nbins - 1)
    bu2 = np.clip((hi[:, 0] * nbins / 1.0).astype(int), 0, nbins - 1)
    bv = np.clip((lo[:, 1] * nbins / chart.k).astype(int), 0, nbins - 1)
    bv2 = np.clip((hi[:, 1] * nbins / chart.k).astype(int), 0, nbins - 1)
    bins: dict[tuple[int, int], list[int]] = {}
    for t in range(len(faces)):
        for a in range(bu[t], bu2[t] + 1):
            for b in range(bv[t], bv2[t] + 1):
                bins.setdefault((a, b), []).append(t)

    u_ax, v_ax = grid.axis_u(), grid.axis_v()
    phi = np.zeros(grid.shape + (3,))
    missing = []
    verts = mesh.vertices
    for j in range(grid.m + 1):
        bvj = min(nbins - 1, int(v_ax[j] * nbins / chart.k))
        for i in range(grid.n + 1):
            bui = min(nbins - 1, int(u_ax[i] * nbins / 1.0))
            found = False
            cands = bins.get((bui, bvj), ())
            for t in sorted(cands):
                p0, p1, p2 = tri_uv[t]
                det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
                if abs(det) < 1e-300:
                    continue
                du, dv = u_ax[i] - p0[0], v_ax[j] - p0[1]
                w1 = ((p2[1] - p0[1]) * du - (p2[0] - p0[0]) * dv) / det
                w2 = (-(p1[1] - p0[1]) * du + (p1[0] - p0[0]) * dv) / det
                w0 = 1.0 - w1 - w2
                if w0 >= -_SNAP and w1 >= -_SNAP and w2 >= -_SNAP:
                    a, b, c = faces[t]
                    phi[j, i] = w0 * verts[a] + w1 * verts[b] + w2 * verts[c]
                    found = True
                    break
            if not found:
                missing.append((i, j))
    if missing:
        shown = ", ".join(f"({i},{j})" for i, j in missing[:8])
        more = f" and {len(missing) - 8} more" if len(missing) > 8 else ""
        raise CoverageError(f"{len(missing)} grid nodes not covered by the chart: {shown}{more}")
    patch = SurfacePatch(grid, Vec3Field(grid, phi))
    check_immersion(patch)
    return patch
