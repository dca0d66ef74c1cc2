"""Rectangular parameter grid, field containers and finite-difference operators.

The parameter domain is the rectangle [0,1] x [0,K] sampled with the same
spacing h = 1/n on both axes, so the v extent is matched by m = round(K*n)
intervals (|v_m - K| <= h/2).  Nodes are indexed (i, j) with u_i = i*h and
v_j = j*h; storage is row-major with i fastest.

Fields are immutable after construction and carry a validity ``margin``:
nodes closer than ``margin`` to the grid boundary hold zeros and must not
be read.  Every operator returns a field whose margin grew by the width of
its stencil (1 for the Laplacian and the complex derivatives, 2 for the
bilaplacian) and is only defined where the full stencil fits.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError, MaskError, SizeError

_MIN_N = 8
_MIN_NODES_PER_AXIS = 5


@dataclass(frozen=True)
class ParamGrid:
    """Uniform grid on [0,1] x [0,K].

    Parameters
    ----------
    n : int
        Number of intervals along u (at least 8); the spacing is h = 1/n.
    k : float
        Aspect ratio of the domain.  The v axis carries m = round(k*n)
        intervals of the same spacing h, so v_m approximates K to h/2.
    """

    n: int
    k: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < _MIN_N:
            raise SizeError(f"grid needs n >= {_MIN_N} intervals along u, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", float(self.k))
        if not np.isfinite(self.k) or self.k <= 0.0:
            raise SizeError(f"aspect ratio must be a positive real, got {self.k!r}")
        if self.m + 1 < _MIN_NODES_PER_AXIS:
            raise SizeError(
                f"aspect ratio {self.k} gives only {self.m + 1} nodes along v; "
                f"at least {_MIN_NODES_PER_AXIS} are needed for the stencils"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def m(self) -> int:
        # round-half-up keeps |v_m - k| <= h/2 and is platform independent
        return int(np.floor(self.k * self.n + 0.5))

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (m+1, n+1): axis 0 is j (v), axis 1 is i (u)."""
        return (self.m + 1, self.n + 1)

    @property
    def node_count(self) -> int:
        return (self.n + 1) * (self.m + 1)

    def axis_u(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    def axis_v(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.h

    def nodes_uv(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays (u, v), each of shape (m+1, n+1)."""
        u = np.broadcast_to(self.axis_u()[None, :], self.shape)
        v = np.broadcast_to(self.axis_v()[:, None], self.shape)
        return u, v

    def ring_index(self) -> np.ndarray:
        """Distance of every node to the grid boundary, in node counts."""
        return _ring_index(self.n, self.m)

    def interior(self, margin: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least ``margin`` nodes from the boundary."""
        return self.ring_index() >= margin


@functools.lru_cache(maxsize=128)
def _ring_index(n: int, m: int) -> np.ndarray:
    i = np.arange(n + 1)
    j = np.arange(m + 1)
    ri = np.minimum(i, n - i)[None, :]
    rj = np.minimum(j, m - j)[:, None]
    out = np.minimum(ri, rj).astype(np.int64)
    out.setflags(write=False)
    return out


class _Field:
    """Common behaviour of all per-node fields."""

    __slots__ = ("grid", "values", "margin")

    _dtype: np.dtype
    _extra_shape: tuple[int, ...] = ()
    kind = "abstract"

    def __init__(self, grid: ParamGrid, values, margin: int = 0):
        arr = np.array(values, dtype=self._dtype, order="C", copy=True)
        want = grid.shape + self._extra_shape
        if arr.shape != want:
            raise SizeError(f"{self.kind} field expects shape {want}, got {arr.shape}")
        margin = int(margin)
        if margin < 0:
            raise SizeError("margin must be non-negative")
        if not _has_valid_region(grid, margin):
            raise SizeError(f"margin {margin} leaves no valid nodes on an {grid.n}x{grid.m} grid")
        if not np.all(np.isfinite(arr.view(np.float64) if arr.dtype.kind == "c" else arr)):
            raise InvariantError(f"{self.kind} field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "margin", margin)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def valid_mask(self) -> np.ndarray:
        return self.grid.ring_index() >= self.margin

    def valid_values(self) -> np.ndarray:
        """Values restricted to the valid region (1-D over valid nodes)."""
        return self.values[self.valid_mask()]

    @classmethod
    def sample(cls, grid: ParamGrid, fn, margin: int = 0):
        """Build a field by evaluating a vectorized ``fn(u, v)`` at every node.

        Vector fields accept a tuple of per-component arrays.
        """
        u, v = grid.nodes_uv()
        out = fn(u, v)
        if isinstance(out, (tuple, list)):
            parts = [np.broadcast_to(np.asarray(p, dtype=cls._dtype), grid.shape) for p in out]
            vals = np.stack(parts, axis=-1)
        else:
            vals = np.broadcast_to(np.asarray(out, dtype=cls._dtype), grid.shape + cls._extra_shape)
        return cls(grid, vals, margin=margin)

    def _like(self, values, margin):
        return type(self)(self.grid, values, margin=margin)


class ScalarField(_Field):
    _dtype = np.dtype(np.float64)
    kind = "scalar"


class ComplexField(_Field):
    _dtype = np.dtype(np.complex128)
    kind = "complex"


class Vec3Field(_Field):
    _dtype = np.dtype(np.float64)
    _extra_shape = (3,)
    kind = "vec3"


class ComplexVec3Field(_Field):
    _dtype = np.dtype(np.complex128)
    _extra_shape = (3,)
    kind = "cvec3"


def _has_valid_region(grid: ParamGrid, margin: int) -> bool:
    return (grid.n + 1 - 2 * margin) > 0 and (grid.m + 1 - 2 * margin) > 0


def _require_room(f: _Field, widen: int, op: str) -> int:
    margin = f.margin + widen
    if not _has_valid_region(f.grid, margin):
        raise SizeError(
            f"{op}: stencil needs margin {margin} but grid is only "
            f"{f.grid.n}x{f.grid.m} intervals"
        )
    return margin


def _zero_invalid(values: np.ndarray, grid: ParamGrid, margin: int) -> np.ndarray:
    invalid = grid.ring_index() < margin
    values[invalid] = 0
    return values


def laplacian(f: _Field) -> _Field:
    """Five-point Laplacian (f_E + f_W - 4 f_P + f_N + f_S) / h^2.

    Exact for polynomials of total degree <= 3; second-order accurate
    otherwise.  The result is valid one node further from the boundary
    than the input; invalid nodes are zeroed.
    """
    margin = _require_room(f, 1, "laplacian")
    a = f.values
    h2 = f.grid.h * f.grid.h
    out = np.zeros_like(a)
    out[1:-1, 1:-1] = (
        a[1:-1, 2:] + a[1:-1, :-2] - 4.0 * a[1:-1, 1:-1] + a[2:, 1:-1] + a[:-2, 1:-1]
    ) / h2
    return f._like(_zero_invalid(out, f.grid, margin), margin)


def bilaplacian(f: _Field) -> _Field:
    """Discrete bilaplacian, defined as the composition laplacian(laplacian(f))."""
    _require_room(f, 2, "bilaplacian")
    return laplacian(laplacian(f))


_COMPLEX_OF = {
    ScalarField: ComplexField,
    ComplexField: ComplexField,
    Vec3Field: ComplexVec3Field,
    ComplexVec3Field: ComplexVec3Field,
}


def _dz_like(f: _Field, sign: float, op: str):
    margin = _require_room(f, 1, op)
    a = f.values.astype(np.complex128, copy=False)
    inv4h = 1.0 / (4.0 * f.grid.h)
    out = np.zeros(a.shape, dtype=np.complex128)
    du = (a[1:-1, 2:] - a[1:-1, :-2]) * inv4h
    dv = (a[2:, 1:-1] - a[:-2, 1:-1]) * inv4h
    out[1:-1, 1:-1] = du + (sign * 1j) * dv
    cls = _COMPLEX_OF[type(f)]
    return cls(f.grid, _zero_invalid(out, f.grid, margin), margin=margin)


def d_z(f: _Field):
    """Central-difference d/dz = (d/du - i d/dv) / 2 as a complex field."""
    return _dz_like(f, -1.0, "d_z")


def d_zbar(f: _Field):
    """Central-difference d/dz̄ = (d/du + i d/dv) / 2; conjugate-dual of d_z."""
    return _dz_like(f, +1.0, "d_zbar")


class HoleMask:
    """Boolean per-node mask of the occluded region.

    Every occluded node must sit at least two nodes inside the grid so the
    inpainting stencils only ever read known values.
    """

    __slots__ = ("grid", "occluded")

    def __init__(self, grid: ParamGrid, occluded):
        arr = np.array(occluded, dtype=bool, copy=True)
        if arr.shape != grid.shape:
            raise SizeError(f"mask expects shape {grid.shape}, got {arr.shape}")
        if np.any(arr & (grid.ring_index() < 2)):
            raise MaskError("occluded nodes must be at least 2 nodes away from the grid boundary")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "occluded", arr)

    def __setattr__(self, name, value):
        raise AttributeError("HoleMask is immutable")

    @property
    def count(self) -> int:
        return int(self.occluded.sum())

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(j, i) index arrays of occluded nodes in row-major order."""
        jj, ii = np.nonzero(self.occluded)
        return jj.astype(np.int64), ii.astype(np.int64)

    def dilated(self, steps: int = 1) -> np.ndarray:
        """Mask grown by ``steps`` applications of the 5-point neighbourhood."""
        out = self.occluded.copy()
        for _ in range(steps):
            grown = out.copy()
            grown[1:, :] |= out[:-1, :]
            grown[:-1, :] |= out[1:, :]
            grown[:, 1:] |= out[:, :-1]
            grown[:, :-1] |= out[:, 1:]
            out = grown
        return out

    @classmethod
    def from_rect(cls, grid: ParamGrid, u0: float, u1: float, v0: float, v1: float) -> "HoleMask":
        """Mask of all nodes with u0 <= u <= u1 and v0 <= v <= v1."""
        u, v = grid.nodes_uv()
        occ = (u >= u0) & (u <= u1) & (v >= v0) & (v <= v1)
        return cls(grid, occ)
