"""Rigid alignment, field error metrics and convergence-order estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InvariantError
from .geometry import SurfacePatch
from .grid import ScalarField, Vec3Field

_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class RigidMotion:
    """Proper rigid motion x -> R x + t (det R = +1)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvariantError("RigidMotion expects a 3x3 rotation and a 3-vector")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise InvariantError("rotation is not orthogonal within 1e-10")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise InvariantError("rotation must have determinant +1 (no reflections)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to an array of 3-vectors (last axis 3)."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def apply_to_patch(self, patch: SurfacePatch) -> SurfacePatch:
        moved = self.apply(patch.phi.values)
        return SurfacePatch(patch.grid, Vec3Field(patch.grid, moved))


def best_rigid_align(a: SurfacePatch, b: SurfacePatch) -> tuple[RigidMotion, float]:
    """Closed-form orthogonal Procrustes over corresponding grid nodes.

    Returns the proper rigid motion minimizing sum ||R a + t - b||^2 and
    the root-mean-square distance after applying it.  Reflections are
    excluded by flipping the smallest singular direction when needed.
    """
    if a.grid != b.grid:
        raise InvariantError("patches must share a grid for node-wise alignment")
    pa = a.phi.values.reshape(-1, 3)
    pb = b.phi.values.reshape(-1, 3)
    ca = pa.mean(axis=0)
    cb = pb.mean(axis=0)
    qa = pa - ca
    qb = pb - cb
    cov = qb.T @ qa
    u, s, vt = np.linalg.svd(cov)
    if s[0] <= 0 or s[1] <= _ORTHO_TOL * s[0]:
        raise AlignmentError("points too degenerate (collinear) for a unique alignment")
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        raise AlignmentError("singular covariance in rigid alignment")
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    trans = cb - rot @ ca
    moved = qa @ rot.T
    rmsd = float(np.sqrt(np.mean(np.sum((moved - qb) ** 2, axis=1))))
    return RigidMotion(rot, trans), rmsd


@dataclass(frozen=True)
class FieldError:
    max: float
    rms: float
    relative: float


def field_error(f: ScalarField, reference, region: np.ndarray | None = None) -> FieldError:
    """Max/RMS/relative deviation of a field from a reference on a region.

    ``reference`` is a ScalarField or an array on the same grid; the region
    defaults to the field's valid interior (intersected with the
    reference's when it carries one) and may exclude extra nodes, e.g. a
    hole mask.  ``relative`` is max error over max |reference|.
    """
    ref_vals = reference.values if isinstance(reference, ScalarField) else np.asarray(reference)
    if ref_vals.shape != f.grid.shape:
        raise InvariantError("reference shape does not match the grid")
    sel = f.valid_mask()
    if isinstance(reference, ScalarField):
        sel = sel & reference.valid_mask()
    if region is not None:
        sel = sel & region
    if not np.any(sel):
        raise InvariantError("field_error region is empty")
    diff = np.abs(f.values[sel] - ref_vals[sel])
    mx = float(diff.max())
    rms = float(np.sqrt(np.mean(diff**2)))
    denom = float(np.max(np.abs(ref_vals[sel])))
    rel = mx / denom if denom > 0 else np.inf if mx > 0 else 0.0
    return FieldError(max=mx, rms=rms, relative=rel)


def convergence_order(errors) -> float:
    """Estimated order p from errors at successively halved spacings.

    p is the mean of log2(e_i / e_{i+1}); returns inf when a later error
    underflows to zero (already at the roundoff floor).
    """
    e = [float(x) for x in errors]
    if len(e) < 2:
        raise InvariantError("need at least two errors to estimate an order")
    if any(x < 0 for x in e):
        raise InvariantError("errors must be non-negative")
    orders = []
    for a, b in zip(e, e[1:]):
        if b == 0.0:
            return np.inf
        orders.append(np.log2(a / b))
    return float(np.mean(orders))
