"""Forward direction of the lambda-H representation.

Given a position field phi sampled on the parameter grid, these
operations compute the first fundamental form, the conformal factor
lambda (lambda^2 = (E+G)/2), the unit normal, the mean curvature
H = sign(<lap phi, n>) |lap phi| / (2 lambda^2), the Gaussian curvature
K = -(1/lambda^2) lap(log lambda), the complex quantity mu = <phi_zz, n>
and conformality diagnostics.  All derivatives are central differences;
results carry the validity margin of their widest stencil.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ImmersionError, InvariantError
from .grid import (
    ComplexField,
    ParamGrid,
    ScalarField,
    Vec3Field,
    d_z,
    laplacian,
)

_DEGENERACY_REL = 1e-12
CONFORMALITY_THRESHOLD = 0.05


@dataclass(frozen=True)
class SurfacePatch:
    """Position field phi(u, v) in R^3 sampled on a ParamGrid."""

    grid: ParamGrid
    phi: Vec3Field

    def __post_init__(self):
        if self.phi.grid != self.grid:
            raise InvariantError("patch grid and position-field grid differ")

    @classmethod
    def from_function(cls, grid: ParamGrid, fn) -> "SurfacePatch":
        """Sample a vectorized map fn(u, v) -> (x, y, z) arrays."""
        u, v = grid.nodes_uv()
        x, y, z = fn(u, v)
        vals = np.stack(np.broadcast_arrays(x, y, z), axis=-1).astype(np.float64)
        return cls(grid, Vec3Field(grid, vals))

    @property
    def scale(self) -> float:
        """Bounding-box diagonal; the length unit for relative tolerances."""
        p = self.phi.values.reshape(-1, 3)
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def _central_tangents(phi_values: np.ndarray, h: float):
    """Central-difference tangents on the 1-margin interior, zero elsewhere."""
    tu = np.zeros_like(phi_values)
    tv = np.zeros_like(phi_values)
    tu[1:-1, 1:-1] = (phi_values[1:-1, 2:] - phi_values[1:-1, :-2]) / (2.0 * h)
    tv[1:-1, 1:-1] = (phi_values[2:, 1:-1] - phi_values[:-2, 1:-1]) / (2.0 * h)
    return tu, tv


def _ext_d1(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """First derivative: central inside, 3-point one-sided on the edges (O(h^2))."""
    out = np.empty_like(a)
    s = np.moveaxis(a, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (s[2:] - s[:-2]) / (2.0 * h)
    o[0] = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h)
    o[-1] = (3.0 * s[-1] - 4.0 * s[-2] + s[-3]) / (2.0 * h)
    return out


def _ext_d2(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second derivative: central inside, 4-point one-sided on the edges (O(h^2))."""
    out = np.empty_like(a)
    s = np.moveaxis(a, axis, 0)
    o = np.moveaxis(out, axis, 0)
    h2 = h * h
    o[1:-1] = (s[2:] - 2.0 * s[1:-1] + s[:-2]) / h2
    o[0] = (2.0 * s[0] - 5.0 * s[1] + 4.0 * s[2] - s[3]) / h2
    o[-1] = (2.0 * s[-1] - 5.0 * s[-2] + 4.0 * s[-3] - s[-4]) / h2
    return out


def _extended_derivs(phi_values: np.ndarray, h: float):
    """(f_u, f_v, f_uu, f_vv, f_uv) on the full grid, one-sided at the edges."""
    fu = _ext_d1(phi_values, h, axis=1)
    fv = _ext_d1(phi_values, h, axis=0)
    fuu = _ext_d2(phi_values, h, axis=1)
    fvv = _ext_d2(phi_values, h, axis=0)
    fuv = _ext_d1(fu, h, axis=0)
    return fu, fv, fuu, fvv, fuv


def check_immersion(patch: SurfacePatch, where: np.ndarray | None = None) -> None:
    """Raise ImmersionError if the central-difference tangents degenerate.

    Checks the 1-margin interior (optionally restricted by ``where``):
    both tangents non-zero and not parallel, cross-product norm above
    1e-12 * scale^2.
    """
    grid = patch.grid
    tu, tv = _central_tangents(patch.phi.values, grid.h)
    cross = np.cross(tu, tv)
    norm = np.linalg.norm(cross, axis=-1)
    region = grid.interior(1)
    if where is not None:
        region = region & where
    bad = region & (norm <= _DEGENERACY_REL * patch.scale**2)
    if np.any(bad):
        jj, ii = np.nonzero(bad)
        raise ImmersionError(
            f"degenerate tangents at node (i={ii[0]}, j={jj[0]}) "
            f"and {bad.sum() - 1} more"
        )


@dataclass(frozen=True)
class FirstFundamentalForm:
    """Metric coefficients E, F, G of ds^2 on the 1-margin interior."""

    e: ScalarField
    f: ScalarField
    g: ScalarField


def _metric_arrays(patch: SurfacePatch):
    tu, tv = _central_tangents(patch.phi.values, patch.grid.h)
    e = np.einsum("jic,jic->ji", tu, tu)
    f = np.einsum("jic,jic->ji", tu, tv)
    g = np.einsum("jic,jic->ji", tv, tv)
    return e, f, g


def first_fundamental_form(patch: SurfacePatch) -> FirstFundamentalForm:
    """E = <phi_u, phi_u>, F = <phi_u, phi_v>, G = <phi_v, phi_v> (central)."""
    check_immersion(patch)
    grid = patch.grid
    e, f, g = _metric_arrays(patch)
    valid = grid.interior(1)
    det = e * g - f * f
    bad = valid & ((e <= 0) | (g <= 0) | (det <= 0))
    if np.any(bad):
        jj, ii = np.nonzero(bad)
        raise ImmersionError(f"metric not positive definite at node (i={ii[0]}, j={jj[0]})")
    return FirstFundamentalForm(
        ScalarField(grid, np.where(valid, e, 0.0), margin=1),
        ScalarField(grid, np.where(valid, f, 0.0), margin=1),
        ScalarField(grid, np.where(valid, g, 0.0), margin=1),
    )


def conformal_factor(patch: SurfacePatch) -> ScalarField:
    """lambda with lambda^2 = (E + G) / 2, the isotropic average of Eq-metric."""
    check_immersion(patch)
    grid = patch.grid
    e, _, g = _metric_arrays(patch)
    lam2 = (e + g) / 2.0
    valid = grid.interior(1)
    if np.any(valid & (lam2 <= 0)):
        raise InvariantError("non-positive conformal-factor radicand on an immersion")
    return ScalarField(grid, np.where(valid, np.sqrt(np.maximum(lam2, 0.0)), 0.0), margin=1)


def surface_normal(patch: SurfacePatch) -> Vec3Field:
    """Unit normal from the cross product of the central-difference tangents."""
    grid = patch.grid
    tu, tv = _central_tangents(patch.phi.values, grid.h)
    cross = np.cross(tu, tv)
    norm = np.linalg.norm(cross, axis=-1)
    valid = grid.interior(1)
    bad = valid & (norm <= _DEGENERACY_REL * patch.scale**2)
    if np.any(bad):
        jj, ii = np.nonzero(bad)
        raise ImmersionError(f"degenerate cross product at node (i={ii[0]}, j={jj[0]})")
    out = np.zeros_like(cross)
    out[valid] = cross[valid] / norm[valid][:, None]
    return Vec3Field(grid, out, margin=1)


def mean_curvature(patch: SurfacePatch) -> ScalarField:
    """Signed mean curvature H = sign(<lap phi, n>) |lap phi| / (2 lambda^2).

    The sign convention ties H to the normal from ``surface_normal``;
    nodes where |lap phi| vanishes (below 1e-12 * scale) get H = 0.
    """
    grid = patch.grid
    lam = conformal_factor(patch)
    nrm = surface_normal(patch)
    lap_phi = laplacian(patch.phi)
    mag = np.linalg.norm(lap_phi.values, axis=-1)
    dot = np.einsum("jic,jic->ji", lap_phi.values, nrm.values)
    valid = grid.interior(1)
    out = np.zeros(grid.shape)
    ok = valid & (mag > _DEGENERACY_REL * patch.scale)
    out[ok] = np.sign(dot[ok]) * mag[ok] / (2.0 * lam.values[ok] ** 2)
    return ScalarField(grid, out, margin=1)


def gaussian_curvature(lam: ScalarField) -> ScalarField:
    """Intrinsic curvature K = -(1/lambda^2) lap(log lambda).

    Written with the metric coefficient lambda^2 this is
    K = -(1/(2 lambda^2)) lap(log lambda^2); on a radius-R sphere chart it
    converges to 1/R^2.
    """
    grid = lam.grid
    valid = lam.valid_mask()
    vals = lam.values
    if np.any(valid & (vals <= 0)):
        raise DomainError("gaussian_curvature requires lambda > 0 on its valid region")
    safe = np.where(valid, vals, 1.0)
    log_lam = ScalarField(grid, np.where(valid, np.log(safe), 0.0), margin=lam.margin)
    lap_log = laplacian(log_lam)
    out_valid = lap_log.valid_mask()
    out = np.zeros(grid.shape)
    out[out_valid] = -lap_log.values[out_valid] / vals[out_valid] ** 2
    return ScalarField(grid, out, margin=lap_log.margin)


def mu_from_surface(patch: SurfacePatch) -> ComplexField:
    """mu = <phi_zz, n> with phi_zz = d_z(d_z(phi)) applied per component.

    The inner product is bilinear (no conjugation); mu vanishes on umbilic
    surfaces.  Valid two nodes from the boundary.
    """
    grid = patch.grid
    phizz = d_z(d_z(patch.phi))
    nrm = surface_normal(patch)
    mu = np.einsum("jic,jic->ji", phizz.values, nrm.values.astype(np.complex128))
    valid = grid.interior(phizz.margin)
    mu = np.where(valid, mu, 0.0)
    return ComplexField(grid, mu, margin=phizz.margin)


@dataclass(frozen=True)
class ConformalityReport:
    """Normalized conformality statistics of a chart.

    All residuals are normalized by the mean of (E+G)/2 over the checked
    region; ``accepted`` applies the 0.05 threshold to the max statistics.
    """

    max_f: float
    max_eg: float
    mean: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    normalizer: float
    accepted: bool


def conformality_residual(patch: SurfacePatch, region: np.ndarray | None = None) -> ConformalityReport:
    """Measure |F| and |E - G| against the conformal conditions F = 0, E = G."""
    check_immersion(patch, where=region)
    grid = patch.grid
    e, f, g = _metric_arrays(patch)
    sel = grid.interior(1)
    if region is not None:
        sel = sel & region
    if not np.any(sel):
        raise InvariantError("conformality check has an empty region")
    normalizer = float(np.mean((e[sel] + g[sel]) / 2.0))
    nf = f[sel] / normalizer
    neg = (e[sel] - g[sel]) / normalizer
    max_f = float(np.max(np.abs(nf)))
    max_eg = float(np.max(np.abs(neg)))
    mean = float(np.mean(np.hypot(nf, neg)))
    span = max(max_f, 1e-30)
    counts, edges = np.histogram(nf, bins=32, range=(-span, span))
    return ConformalityReport(
        max_f=max_f,
        max_eg=max_eg,
        mean=mean,
        hist_counts=counts,
        hist_edges=edges,
        normalizer=normalizer,
        accepted=max(max_f, max_eg) <= CONFORMALITY_THRESHOLD,
    )


@dataclass(frozen=True)
class LambdaH:
    """The lambda-H representation: paired conformal factor and mean curvature."""

    grid: ParamGrid
    lam: ScalarField
    h_mean: ScalarField

    def __post_init__(self):
        if self.lam.grid != self.grid or self.h_mean.grid != self.grid:
            raise InvariantError("LambdaH fields must share the grid")
        valid = self.lam.valid_mask()
        if np.any(valid & (self.lam.values <= 0)):
            raise DomainError("lambda must be strictly positive on its valid region")


def extract_lambda_h(patch: SurfacePatch) -> LambdaH:
    """Boundary-extended (lambda, H) extraction for the reconstruction pipeline.

    Interior nodes reproduce ``conformal_factor`` / ``mean_curvature``
    exactly; edge nodes use second-order one-sided stencils so both fields
    are defined on the full grid (margin 0).
    """
    grid = patch.grid
    fu, fv, fuu, fvv, fuv = _extended_derivs(patch.phi.values, grid.h)
    e = np.einsum("jic,jic->ji", fu, fu)
    g = np.einsum("jic,jic->ji", fv, fv)
    lam2 = (e + g) / 2.0
    if np.any(lam2 <= 0):
        raise ImmersionError("degenerate tangents in boundary-extended extraction")
    lam = np.sqrt(lam2)
    cross = np.cross(fu, fv)
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(norm <= _DEGENERACY_REL * patch.scale**2):
        raise ImmersionError("degenerate cross product in boundary-extended extraction")
    nrm = cross / norm[..., None]
    lap_phi = fuu + fvv
    mag = np.linalg.norm(lap_phi, axis=-1)
    dot = np.einsum("jic,jic->ji", lap_phi, nrm)
    h = np.zeros(grid.shape)
    ok = mag > _DEGENERACY_REL * patch.scale
    h[ok] = np.sign(dot[ok]) * mag[ok] / (2.0 * lam2[ok])
    return LambdaH(grid, ScalarField(grid, lam), ScalarField(grid, h))
