"""Analytic test surfaces sampled on parameter grids.

Each generator returns the sampled patch plus closed-form reference
fields (conformal factor, mean curvature, Gaussian curvature) where they
exist.  Chart parameters (offsets and scales mapping [0,1] x [0,K] into
the analytic chart) are fixed, documented defaults so outputs are fully
deterministic.

Sign convention: reference mean curvatures are signed against the normal
n = phi_u x phi_v / |...| of the stated chart orientations (sphere cap:
+1/R, cylinder: -1/(2R)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OptionError
from .geometry import SurfacePatch
from .grid import ParamGrid, ScalarField, Vec3Field

KINDS = (
    "plane",
    "tilted-plane",
    "sphere-cap",
    "catenoid",
    "cylinder",
    "ridge",
    "snowman",
    "sine-graph",
)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic surface.

    kind is one of KINDS; n the grid resolution; k the requested aspect
    ratio (the snowman derives its own).  radius, amp, angle and scale are
    interpreted per kind and ignored elsewhere.
    """

    kind: str
    n: int
    k: float = 1.0
    radius: float = 1.0
    amp: float = 0.2
    angle: float = 90.0
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise OptionError(f"unknown surface kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.radius <= 0:
            raise OptionError("radius must be positive")


@dataclass(frozen=True)
class SynthResult:
    patch: SurfacePatch
    lam_ref: ScalarField | None = None
    h_ref: ScalarField | None = None
    gauss_ref: ScalarField | None = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> ParamGrid:
        return self.patch.grid


def synth(spec: SynthSpec) -> SynthResult:
    """Build the surface described by ``spec``."""
    return _MAKERS[spec.kind](spec)


def _const(grid, value):
    return ScalarField(grid, np.full(grid.shape, float(value)))


def _make_plane(spec):
    grid = ParamGrid(spec.n, spec.k)
    patch = SurfacePatch.from_function(grid, lambda u, v: (u, v, np.zeros_like(u)))
    return SynthResult(patch, _const(grid, 1.0), _const(grid, 0.0), _const(grid, 0.0),
                       meta={"kind": "plane"})


def _make_tilted_plane(spec):
    grid = ParamGrid(spec.n, spec.k)
    alpha = np.deg2rad(30.0 if spec.scale is None else spec.scale)
    ca, sa = np.cos(alpha), np.sin(alpha)
    patch = SurfacePatch.from_function(grid, lambda u, v: (u * ca, v, u * sa))
    return SynthResult(patch, _const(grid, 1.0), _const(grid, 0.0), _const(grid, 0.0),
                       meta={"kind": "tilted-plane", "tilt_rad": float(alpha)})


def _make_sphere_cap(spec):
    """Stereographic chart of a radius-R sphere, centered on the chart.

    a = s (u - 1/2), b = s (v - v_max/2);
    phi = R (2a, 2b, a^2 + b^2 - 1) / (1 + a^2 + b^2).
    lambda = 2 R s / (1 + a^2 + b^2); H = +1/R; K = 1/R^2.
    """
    grid = ParamGrid(spec.n, spec.k)
    r = spec.radius
    s = 1.0 if spec.scale is None else float(spec.scale)
    vmid = grid.m * grid.h / 2.0

    def chart(u, v):
        a = s * (u - 0.5)
        b = s * (v - vmid)
        w = 1.0 + a * a + b * b
        return r * 2.0 * a / w, r * 2.0 * b / w, r * (a * a + b * b - 1.0) / w

    patch = SurfacePatch.from_function(grid, chart)
    u, v = grid.nodes_uv()
    a = s * (u - 0.5)
    b = s * (v - vmid)
    lam = 2.0 * r * s / (1.0 + a * a + b * b)
    return SynthResult(
        patch,
        ScalarField(grid, lam),
        _const(grid, 1.0 / r),
        _const(grid, 1.0 / r**2),
        meta={"kind": "sphere-cap", "radius": r, "chart_scale": s},
    )


def _make_catenoid(spec):
    """Catenoid chart w1 = s u, w2 = s (v - v_max/2), neck radius = radius.

    phi = radius (cosh w2 cos w1, cosh w2 sin w1, w2); lambda =
    radius s cosh w2, H = 0 (minimal), K = -1 / (radius^2 cosh^4 w2).
    """
    grid = ParamGrid(spec.n, spec.k)
    r = spec.radius
    s = 2.0 if spec.scale is None else float(spec.scale)
    vmid = grid.m * grid.h / 2.0

    def chart(u, v):
        w1 = s * u
        w2 = s * (v - vmid)
        return r * np.cosh(w2) * np.cos(w1), r * np.cosh(w2) * np.sin(w1), r * w2

    patch = SurfacePatch.from_function(grid, chart)
    u, v = grid.nodes_uv()
    w2 = s * (v - vmid)
    lam = r * s * np.cosh(w2)
    gauss = -1.0 / (r**2 * np.cosh(w2) ** 4)
    return SynthResult(
        patch,
        ScalarField(grid, np.ascontiguousarray(lam)),
        _const(grid, 0.0),
        ScalarField(grid, np.ascontiguousarray(gauss)),
        meta={"kind": "catenoid", "radius": r, "chart_scale": s},
    )


def _make_cylinder(spec):
    """Cylinder of radius R: phi = (R cos(s u / R), R sin(s u / R), s (v - v_max/2)).

    lambda = s, H = -1/(2R) against the outward normal, K = 0.
    """
    grid = ParamGrid(spec.n, spec.k)
    r = spec.radius
    s = np.pi * r if spec.scale is None else float(spec.scale)
    vmid = grid.m * grid.h / 2.0

    def chart(u, v):
        th = s * u / r
        return r * np.cos(th), r * np.sin(th), s * (v - vmid)

    patch = SurfacePatch.from_function(grid, chart)
    return SynthResult(
        patch,
        _const(grid, s),
        _const(grid, -1.0 / (2.0 * r)),
        _const(grid, 0.0),
        meta={"kind": "cylinder", "radius": r, "chart_scale": s},
    )


def _make_ridge(spec):
    """Two half-planes meeting along v = v_max/2 at the given dihedral angle.

    Both halves are unit-speed charts (lambda = 1); H and K vanish away
    from the crease where they are distributional.  The reference fields
    are valid off-crease only (meta carries the crease row).
    """
    grid = ParamGrid(spec.n, spec.k)
    if not 0.0 < spec.angle < 180.0:
        raise OptionError("ridge dihedral angle must be in (0, 180) degrees")
    gamma = np.pi - np.deg2rad(spec.angle)
    vc = grid.m * grid.h / 2.0
    cg, sg = np.cos(gamma), np.sin(gamma)

    def chart(u, v):
        up = np.maximum(v - vc, 0.0)
        y = np.minimum(v, vc) + up * cg
        z = up * sg
        return u, y, z

    patch = SurfacePatch.from_function(grid, chart)
    return SynthResult(
        patch,
        _const(grid, 1.0),
        _const(grid, 0.0),
        _const(grid, 0.0),
        meta={
            "kind": "ridge",
            "dihedral_deg": float(spec.angle),
            "crease_v": float(vc),
            "crease_j": grid.m // 2,
            "refs_valid_off_crease_only": True,
        },
    )


def _snowman_profile(radius):
    """Arc-length profile (rho, z) of two blended spheres, as sample tables."""
    r1 = radius
    r2 = 0.65 * radius
    d = 1.25 * radius
    zj = (r1**2 + d**2 - r2**2) / (2.0 * d)
    th_j = np.arccos(np.clip(-zj / r1, -1.0, 1.0))
    th0 = 0.6
    psi_j = np.arccos(np.clip((d - zj) / r2, -1.0, 1.0))
    psi_end = 0.35
    n1, n2 = 1024, 1024
    th = np.linspace(th0, th_j, n1)
    psi = np.linspace(psi_j, psi_end, n2)
    rho = np.concatenate([r1 * np.sin(th), r2 * np.sin(psi)])
    z = np.concatenate([-r1 * np.cos(th), d - r2 * np.cos(psi)])
    t1 = r1 * (th - th0)
    t2 = t1[-1] + r2 * (psi_j - psi)
    t = np.concatenate([t1, t2])
    return t, rho, z


def _make_snowman(spec):
    """Surface of revolution of a two-sphere profile in isothermal coordinates.

    The azimuth spans pi; the v extent follows from the isothermal
    coordinate of the profile, so the grid aspect is derived, not taken
    from the spec.  lambda = c rho is exact up to the profile tabulation;
    H/K references are omitted (piecewise values with a crease).
    """
    t, rho, z = _snowman_profile(spec.radius)
    # isothermal coordinate: dv_hat/dt = 1/rho, trapezoid on the fine table
    inv = 1.0 / rho
    vhat = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(t))])
    vspan = float(vhat[-1])
    c0 = np.pi
    k_nat = vspan / c0
    grid = ParamGrid(spec.n, k_nat)
    vmax = grid.m * grid.h
    c = vspan / vmax

    u, v = grid.nodes_uv()
    vh = v * c
    rho_v = np.interp(vh, vhat, rho)
    z_v = np.interp(vh, vhat, z)
    theta = c * u
    vals = np.stack([rho_v * np.cos(theta), rho_v * np.sin(theta), np.broadcast_to(z_v, u.shape)], axis=-1)
    patch = SurfacePatch(grid, Vec3Field(grid, vals))
    lam = ScalarField(grid, np.ascontiguousarray(c * rho_v))
    return SynthResult(
        patch,
        lam,
        None,
        None,
        meta={"kind": "snowman", "radius": spec.radius, "azimuth_span": float(c), "k": k_nat},
    )


def _make_sine_graph(spec):
    """Graph z = amp sin(2 pi u) sin(2 pi v); not a conformal chart, no refs."""
    grid = ParamGrid(spec.n, spec.k)
    amp = spec.amp

    def chart(u, v):
        return u, v, amp * np.sin(2 * np.pi * u) * np.sin(2 * np.pi * v)

    patch = SurfacePatch.from_function(grid, chart)
    return SynthResult(patch, None, None, None,
                       meta={"kind": "sine-graph", "amp": float(amp), "conformal": False})


_MAKERS = {
    "plane": _make_plane,
    "tilted-plane": _make_tilted_plane,
    "sphere-cap": _make_sphere_cap,
    "catenoid": _make_catenoid,
    "cylinder": _make_cylinder,
    "ridge": _make_ridge,
    "snowman": _make_snowman,
    "sine-graph": _make_sine_graph,
}
