"""Surface reconstruction from (lambda, H) and boundary data.

Pipeline: the Codazzi equation mu_zbar = (lambda^2/2) H_z is differentiated
once more and solved as a Poisson problem for mu; the natural frame
(phi_z, phi_zbar, n) then satisfies a first-order linear system with
coefficients (lambda, H, mu) that is discretized with central differences
and solved in least squares; finally the positions are integrated from
phi_u = U + V, phi_v = i (U - V) with a two-ring Dirichlet boundary.

phi_zbar is eliminated as conj(phi_z) before assembly and the normal keeps
independent real unknowns, so the frame system is overdetermined and is
solved through its normal equations.  A tiny Laplacian smoothing block
(relative weight 1e-5) removes the checkerboard null modes central
differences admit on degenerate (flat) data; it does not perturb smooth
solutions beyond roundoff.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConsistencyWarning,
    IntegrabilityWarning,
    InputError,
    InvariantError,
    LhsurfError,
    SolverError,
)
from .geometry import LambdaH, SurfacePatch, _extended_derivs
from .grid import (
    ComplexField,
    ComplexVec3Field,
    ParamGrid,
    ScalarField,
    Vec3Field,
    d_z,
    d_zbar,
    laplacian,
)

_SMOOTH_REL = 1e-5
_RESIDUAL_TOL = 1e-8
_FRAME_WARN = 1e-4
_CURL_WARN = 1e-4
_RING_CONSISTENCY = 0.05
_DEGENERACY_REL = 1e-12
_W_VANISH_ABS = 1e-6
_W_VANISH_FRACTION = 0.05
_SPIKE_FACTOR = 4.0


@dataclass(frozen=True)
class NaturalFrame:
    """Per-node frame (phi_z, phi_zbar, n).

    v_field is conj(u_field) by construction; w_field is unit length.
    """

    u_field: ComplexVec3Field
    v_field: ComplexVec3Field
    w_field: Vec3Field

    def __post_init__(self):
        g = self.u_field.grid
        if self.v_field.grid != g or self.w_field.grid != g:
            raise InvariantError("frame fields must share the grid")

    @property
    def grid(self) -> ParamGrid:
        return self.u_field.grid

    @classmethod
    def from_u_w(cls, grid: ParamGrid, u_values, w_values, margin: int = 0) -> "NaturalFrame":
        u = ComplexVec3Field(grid, u_values, margin=margin)
        v = ComplexVec3Field(grid, np.conj(u.values), margin=margin)
        w = Vec3Field(grid, w_values, margin=margin)
        return cls(u, v, w)

    def conformal_violation(self, lam: ScalarField) -> float:
        """Worst relative violation of <u,u> = 0 and 2<u, conj u> = lambda^2."""
        sel = self.u_field.valid_mask() & lam.valid_mask()
        u = self.u_field.values[sel]
        lam2 = lam.values[sel] ** 2
        uu = np.abs(np.einsum("pc,pc->p", u, u))
        norm2 = 2.0 * np.einsum("pc,pc->p", u, np.conj(u)).real
        denom = max(float(np.max(lam2)), 1e-300)
        v1 = float(np.max(uu)) * 2.0 / denom
        v2 = float(np.max(np.abs(norm2 - lam2))) / denom
        return max(v1, v2)


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data for reconstruction: phi on the outer 2 node rings,
    frame (U, W) and mu on the outer ring.  Arrays are full-grid with
    zeros outside their rings."""

    grid: ParamGrid
    phi: np.ndarray
    frame_u: np.ndarray
    frame_w: np.ndarray
    mu: np.ndarray

    PHI_RING = 2
    FRAME_RING = 1
    MU_RING = 1

    def __post_init__(self):
        shp = self.grid.shape
        if (
            self.phi.shape != shp + (3,)
            or self.frame_u.shape != shp + (3,)
            or self.frame_w.shape != shp + (3,)
            or self.mu.shape != shp
        ):
            raise InvariantError("boundary arrays have wrong shapes")
        self.validate()

    def validate(self) -> None:
        ring = self.grid.ring_index()
        on_phi = ring < self.PHI_RING
        on_one = ring < self.FRAME_RING
        for arr, sel in ((self.phi, on_phi), (self.frame_u, on_one), (self.frame_w, on_one), (self.mu, on_one)):
            vals = arr[sel]
            if vals.dtype.kind == "c":
                vals = vals.view(np.float64)
            if not np.all(np.isfinite(vals)):
                raise InvariantError("boundary data contains non-finite values")
        wn = np.linalg.norm(self.frame_w[on_one], axis=-1)
        if np.any(np.abs(wn - 1.0) > 1e-8):
            raise InvariantError("boundary normals must be unit length within 1e-8")
        u = self.frame_u[on_one]
        uu = np.abs(np.einsum("pc,pc->p", u, u))
        norm2 = 2.0 * np.einsum("pc,pc->p", u, np.conj(u)).real
        viol = 2.0 * uu / np.maximum(norm2, 1e-300)
        # isolated nodes may sit on sharp feature lines; only a pervasive
        # violation means the ring cannot come from an immersion
        if float(np.mean(viol > _RING_CONSISTENCY)) > 0.05:
            raise InvariantError(
                "boundary frame violates the conformal conditions beyond "
                f"{_RING_CONSISTENCY} on more than 5% of ring nodes: "
                "not consistent with a conformal immersion"
            )

    @property
    def scale(self) -> float:
        sel = self.grid.ring_index() < self.PHI_RING
        p = self.phi[sel]
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def transformed(self, motion) -> "BoundaryData":
        """Boundary data after a rigid motion (mu and ring layout unchanged)."""
        ring = self.grid.ring_index()
        phi = np.where((ring < self.PHI_RING)[..., None], motion.apply(self.phi), 0.0)
        rot_t = motion.rotation.T
        sel = (ring < self.FRAME_RING)[..., None]
        frame_u = np.where(sel, self.frame_u @ rot_t, 0.0)
        frame_w = np.where(sel, self.frame_w @ rot_t, 0.0)
        return BoundaryData(self.grid, phi, frame_u, frame_w, self.mu.copy())


def extract_boundary_data(patch: SurfacePatch) -> BoundaryData:
    """Read boundary rings off a patch with second-order one-sided stencils."""
    grid = patch.grid
    fu, fv, fuu, fvv, fuv = _extended_derivs(patch.phi.values, grid.h)
    cross = np.cross(fu, fv)
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(norm <= _DEGENERACY_REL * patch.scale**2):
        raise InvariantError("degenerate tangents on the boundary rings")
    w = cross / norm[..., None]
    u_frame = 0.5 * (fu - 1j * fv)
    phizz = 0.25 * (fuu - fvv - 2j * fuv)
    mu = np.einsum("jic,jic->ji", phizz, w.astype(np.complex128))

    ring = grid.ring_index()
    phi = np.where((ring < BoundaryData.PHI_RING)[..., None], patch.phi.values, 0.0)
    sel1 = ring < BoundaryData.FRAME_RING
    u_frame = np.where(sel1[..., None], u_frame, 0.0)
    w = np.where(sel1[..., None], w, 0.0)
    mu = np.where(sel1, mu, 0.0)
    return BoundaryData(grid, phi, u_frame, w, mu)


def codazzi_rhs(lam: ScalarField, h_mean: ScalarField) -> ComplexField:
    """Right-hand side of the Poisson form of the Codazzi equation.

    Differentiating mu_zbar = (lambda^2/2) H_z once in z and using
    lap = 4 d_z d_zbar gives lap mu = 2 lambda (2 lambda_z H_z + lambda H_zz).
    H_zz is evaluated with the compact one-node stencils
    (H_uu - H_vv - 2i H_uv)/4 so the result is valid one node from the
    boundary when the inputs cover the full grid.
    """
    if lam.grid != h_mean.grid:
        raise InvariantError("lambda and H must share the grid")
    grid = lam.grid
    margin = max(lam.margin, h_mean.margin) + 1
    lam_z = d_z(lam)
    h_z = d_z(h_mean)

    h2 = grid.h * grid.h
    hv = h_mean.values
    h_uu = np.zeros(grid.shape)
    h_vv = np.zeros(grid.shape)
    h_uv = np.zeros(grid.shape)
    h_uu[1:-1, 1:-1] = (hv[1:-1, 2:] - 2.0 * hv[1:-1, 1:-1] + hv[1:-1, :-2]) / h2
    h_vv[1:-1, 1:-1] = (hv[2:, 1:-1] - 2.0 * hv[1:-1, 1:-1] + hv[:-2, 1:-1]) / h2
    h_uv[1:-1, 1:-1] = (hv[2:, 2:] - hv[2:, :-2] - hv[:-2, 2:] + hv[:-2, :-2]) / (4.0 * h2)
    h_zz = 0.25 * (h_uu - h_vv - 2j * h_uv)

    rhs = 2.0 * lam.values * (2.0 * lam_z.values * h_z.values + lam.values * h_zz)
    valid = grid.ring_index() >= margin
    return ComplexField(grid, np.where(valid, rhs, 0.0), margin=margin)


def _interior_indexing(grid: ParamGrid, margin: int):
    sel = grid.ring_index() >= margin
    jj, ii = np.nonzero(sel)
    tmap = np.full(grid.shape, -1, dtype=np.int64)
    tmap[jj, ii] = np.arange(jj.size)
    return jj.astype(np.int64), ii.astype(np.int64), tmap


def _check_residual(mat, x, b, what):
    r = mat @ x - b
    denom = max(float(np.linalg.norm(b)), 1e-300)
    rel = float(np.linalg.norm(r)) / denom
    if rel > _RESIDUAL_TOL:
        raise SolverError(f"{what}: relative residual {rel:.3e} exceeds {_RESIDUAL_TOL:.0e} "
                          "(system singular or severely ill-conditioned)")


def solve_mu(rhs: ComplexField, boundary_mu, *, check: bool = True) -> ComplexField:
    """Solve lap mu = rhs on the interior with Dirichlet ring values.

    ``boundary_mu`` is a BoundaryData or a full-grid complex array whose
    outermost ring holds the Dirichlet values.  The returned field carries
    the ring values plus the interior solution (margin 0).
    """
    grid = rhs.grid
    if rhs.margin > 1:
        raise InputError("solve_mu needs a right-hand side valid one node from the boundary")
    mu_b = boundary_mu.mu if isinstance(boundary_mu, BoundaryData) else np.asarray(boundary_mu, dtype=np.complex128)
    if mu_b.shape != grid.shape:
        raise InputError("boundary mu has the wrong shape")

    jj, ii, tmap = _interior_indexing(grid, 1)
    n_unk = jj.size
    h2 = grid.h * grid.h
    rows, cols, vals = [], [], []
    b = rhs.values[jj, ii].astype(np.complex128)
    eq = np.arange(n_unk)
    rows.append(eq)
    cols.append(eq)
    vals.append(np.full(n_unk, -4.0 / h2))
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nt = tmap[jj + dj, ii + di]
        inb = nt >= 0
        rows.append(eq[inb])
        cols.append(nt[inb])
        vals.append(np.full(int(inb.sum()), 1.0 / h2))
        out = ~inb
        b[eq[out]] -= mu_b[jj[out] + dj, ii[out] + di] / h2
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unk, n_unk),
    )
    try:
        lu = spla.splu(mat.tocsc())
        x = lu.solve(b.real) + 1j * lu.solve(b.imag)
    except RuntimeError as exc:
        raise SolverError(f"solve_mu factorization failed: {exc}") from exc
    _check_residual(mat, x, b, "solve_mu")

    out_vals = np.where(grid.ring_index() < 1, mu_b, 0.0).astype(np.complex128)
    out_vals[jj, ii] = x
    field = ComplexField(grid, out_vals, margin=0)
    if check:
        lap = laplacian(field)
        sel = grid.interior(max(rhs.margin, 1))
        err = float(np.max(np.abs(lap.values[sel] - rhs.values[sel])))
        # the absolute floor carries the f64 noise of evaluating lap mu itself
        fp_floor = 16.0 * np.finfo(np.float64).eps * float(np.max(np.abs(out_vals))) / h2
        bound = _RESIDUAL_TOL * float(np.max(np.abs(rhs.values[sel]))) + max(1e-12, fp_floor)
        if err > bound:
            raise SolverError(f"solve_mu: ||lap mu - rhs||_inf = {err:.3e} exceeds contract {bound:.3e}")
    return field


_DZ_DIRS = (
    ((0, 1), 0.25),
    ((0, -1), -0.25),
    ((1, 0), -0.25j),
    ((-1, 0), 0.25j),
)
_DZBAR_DIRS = (
    ((0, 1), 0.25),
    ((0, -1), -0.25),
    ((1, 0), 0.25j),
    ((-1, 0), -0.25j),
)


class _ComplexSystem:
    """Collects complex-coefficient equations over real unknown slots."""

    def __init__(self, n_eq_complex, n_real_rows_extra, n_cols, n_rhs):
        self.rows = []
        self.cols = []
        self.vals = []
        self.r_rows = []
        self.r_cols = []
        self.r_vals = []
        self.n_eq = n_eq_complex
        self.n_extra = n_real_rows_extra
        self.n_cols = n_cols
        self.b = [np.zeros(n_eq_complex, dtype=np.complex128) for _ in range(n_rhs)]
        self.b_extra = [np.zeros(n_real_rows_extra) for _ in range(n_rhs)]

    def add(self, eq, col, coef):
        self.rows.append(np.asarray(eq))
        self.cols.append(np.asarray(col))
        self.vals.append(np.broadcast_to(np.asarray(coef, dtype=np.complex128), np.shape(eq)).ravel())

    def add_real(self, row, col, coef):
        self.r_rows.append(np.asarray(row))
        self.r_cols.append(np.asarray(col))
        self.r_vals.append(np.broadcast_to(np.asarray(coef, dtype=np.float64), np.shape(row)).ravel())

    def matrix(self):
        """Assemble the real split matrix, equilibrated per complex equation.

        Every complex equation is scaled to unit row norm so no single row
        dominates the least squares.  Rows whose coefficients spike far
        above the median (curvature concentrations on feature lines, where
        the central differences are inconsistent at O(1) anyway) are
        further down-weighted; on smooth data all rows have comparable
        norms and this reduces to plain equilibration.
        """
        e = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        z = np.concatenate(self.vals)
        norm2 = np.zeros(self.n_eq)
        np.add.at(norm2, e, np.abs(z) ** 2)
        norm = np.sqrt(np.maximum(norm2, 1e-300))
        med = float(np.median(norm))
        robust = np.minimum(1.0, _SPIKE_FACTOR * med / norm)
        self.row_scale = robust / norm
        z = z * self.row_scale[e]
        rows = np.concatenate([2 * e, 2 * e + 1, 2 * self.n_eq + np.concatenate(self.r_rows)])
        cols = np.concatenate([c, c, np.concatenate(self.r_cols)])
        vals = np.concatenate([z.real, z.imag, np.concatenate(self.r_vals)])
        shape = (2 * self.n_eq + self.n_extra, self.n_cols)
        return sp.csr_matrix((vals, (rows, cols)), shape=shape)

    def rhs(self, which):
        zb = self.b[which] * self.row_scale
        out = np.empty(2 * self.n_eq + self.n_extra)
        out[0 : 2 * self.n_eq : 2] = zb.real
        out[1 : 2 * self.n_eq : 2] = zb.imag
        out[2 * self.n_eq :] = self.b_extra[which]
        return out


def solve_frame(
    lam: ScalarField,
    h_mean: ScalarField,
    mu: ComplexField,
    boundary: BoundaryData,
) -> NaturalFrame:
    """Solve the natural-frame system for U = phi_z and W = n.

    Per interior node and coordinate the central-difference rows are
    d_z U = (2/lambda) lambda_z U + mu W,
    d_zbar U = (lambda^2/2) H W        (the phi_zbar row with V = conj U),
    d_z W = -H U - (2 mu / lambda^2) conj U,
    with the Dirichlet ring from ``boundary``.  The three coordinates share
    one normal-equation factorization.  W is normalized afterwards and a
    ConsistencyWarning fires if the frame invariants are violated beyond
    1e-4 (inputs not integrable).
    """
    grid = lam.grid
    if h_mean.grid != grid or mu.grid != grid or boundary.grid != grid:
        raise InvariantError("solve_frame inputs must share the grid")
    if lam.margin != 0 or h_mean.margin != 0 or mu.margin != 0:
        raise InputError("solve_frame needs boundary-extended lambda, H and mu (margin 0)")
    if np.any(lam.values <= 0):
        raise InvariantError("lambda must be strictly positive everywhere")

    jj, ii, tmap = _interior_indexing(grid, 1)
    n_nodes = jj.size
    eq = np.arange(n_nodes)

    lam_c = lam.values[jj, ii]
    h_c = h_mean.values[jj, ii]
    mu_c = mu.values[jj, ii]
    lam_z = d_z(lam).values[jj, ii]

    # complex equations per node: 0 = frame row for U (d_z), 1 = conj row
    # (d_zbar), 2 = row for W; smoothing adds 3 real rows per node
    sysm = _ComplexSystem(3 * n_nodes, 3 * n_nodes, 3 * n_nodes, 3)
    eq_a, eq_b, eq_c = 3 * eq, 3 * eq + 1, 3 * eq + 2
    col_re, col_im, col_w = 3 * eq, 3 * eq + 1, 3 * eq + 2

    def scatter_stencil(eq_ids, dirs, slot, bvals):
        for (dj, di), coef in dirs:
            cz = coef / grid.h
            nt = tmap[jj + dj, ii + di]
            inb = nt >= 0
            if slot == "u":
                sysm.add(eq_ids[inb], 3 * nt[inb], cz)
                sysm.add(eq_ids[inb], 3 * nt[inb] + 1, 1j * cz)
            else:
                sysm.add(eq_ids[inb], 3 * nt[inb] + 2, cz)
            out = ~inb
            if np.any(out):
                knw = bvals[jj[out] + dj, ii[out] + di]
                for c in range(3):
                    sysm.b[c][eq_ids[out]] -= cz * knw[..., c]

    # d_z U  - (2/lam) lam_z U - mu W = 0
    scatter_stencil(eq_a, _DZ_DIRS, "u", boundary.frame_u)
    coef_u = -2.0 * lam_z / lam_c
    sysm.add(eq_a, col_re, coef_u)
    sysm.add(eq_a, col_im, 1j * coef_u)
    sysm.add(eq_a, col_w, -mu_c)

    # d_zbar U - (lam^2/2) H W = 0
    scatter_stencil(eq_b, _DZBAR_DIRS, "u", boundary.frame_u)
    sysm.add(eq_b, col_w, -(0.5 * lam_c**2 * h_c).astype(np.complex128))

    # d_z W + H U + (2 mu / lam^2) conj(U) = 0
    scatter_stencil(eq_c, _DZ_DIRS, "w", boundary.frame_w)
    g = 2.0 * mu_c / lam_c**2
    sysm.add(eq_c, col_re, h_c + g)
    sysm.add(eq_c, col_im, 1j * h_c - 1j * g)

    # smoothing rows: w0 * (sum of neighbours - 4 center) per slot; the
    # main rows are equilibrated to unit norm, so w0 is the relative weight
    w0 = _SMOOTH_REL
    for slot in range(3):
        srow = 3 * eq + slot
        sysm.add_real(srow, 3 * eq + slot, -4.0 * w0)
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nt = tmap[jj + dj, ii + di]
            inb = nt >= 0
            sysm.add_real(srow[inb], 3 * nt[inb] + slot, w0)
            out = ~inb
            if np.any(out):
                oj, oi = jj[out] + dj, ii[out] + di
                for c in range(3):
                    if slot == 0:
                        kn = boundary.frame_u[oj, oi, c].real
                    elif slot == 1:
                        kn = boundary.frame_u[oj, oi, c].imag
                    else:
                        kn = boundary.frame_w[oj, oi, c]
                    sysm.b_extra[c][srow[out]] -= w0 * kn

    amat = sysm.matrix()
    gram = (amat.T @ amat).tocsc()
    try:
        lu = spla.splu(gram, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"frame normal equations could not be factorized: {exc}") from exc

    u_vals = np.array(boundary.frame_u, dtype=np.complex128)
    w_vals = np.array(boundary.frame_w, dtype=np.float64)
    for c in range(3):
        b = sysm.rhs(c)
        atb = amat.T @ b
        x = lu.solve(atb)
        _check_residual(gram, x, atb, "solve_frame")
        u_vals[jj, ii, c] = x[0::3] + 1j * x[1::3]
        w_vals[jj, ii, c] = x[2::3]

    norms = np.linalg.norm(w_vals, axis=-1)
    ring0 = grid.ring_index() < 1
    interior = ~ring0
    # at sharp folds the solved normal may pass through (near) zero on
    # isolated nodes; those keep their small raw value instead of being
    # blown up to a fabricated unit direction
    degenerate = interior & (norms <= _W_VANISH_ABS)
    if float(np.mean(degenerate[interior])) > _W_VANISH_FRACTION:
        raise SolverError(
            f"frame solve produced vanishing normals on more than "
            f"{_W_VANISH_FRACTION:.0%} of nodes"
        )
    ok = interior & ~degenerate
    w_vals[ok] /= norms[ok][..., None]

    frame = NaturalFrame.from_u_w(grid, u_vals, w_vals)
    viol = frame.conformal_violation(lam)
    if viol > _FRAME_WARN:
        warnings.warn(
            f"frame invariants violated by {viol:.3e} (> {_FRAME_WARN:.0e}): "
            "inputs lambda, H, mu may not be integrable",
            ConsistencyWarning,
            stacklevel=2,
        )
    return frame


def integrate_position(
    frame: NaturalFrame,
    boundary_phi: np.ndarray,
    lap_target: np.ndarray | None = None,
    lap_weight: float = 0.5,
    anchors: tuple[np.ndarray, np.ndarray] | None = None,
    anchor_weight: float = 1.0,
) -> SurfacePatch:
    """Least-squares integration of phi from the natural frame.

    Solves the central-difference gradient prescription
    (phi_E - phi_W)/2h = U + V, (phi_N - phi_S)/2h = i (U - V) with the
    outer two node rings clamped to ``boundary_phi``.  A non-zero discrete
    curl of the prescribed gradient (beyond 1e-4 relative) emits an
    IntegrabilityWarning; the least-squares result is returned regardless.

    The wide central stencils alone leave the node parities weakly coupled,
    which shows up as a grid-scale ripple in the error (harmless for
    positions, ruinous for re-extracted curvatures).  When ``lap_target``
    holds the Laplace identity values 2 lambda^2 H n, compact rows
    lap phi = lap_target are blended in with relative weight ``lap_weight``
    to pin the parities; both row families agree to O(h^2).

    ``anchors = (selector, values)`` softly pins selected nodes to known
    positions (used by the inpainting pipeline, whose off-hole surface is
    exact data); ``anchor_weight`` is relative to the gradient rows.
    """
    grid = frame.grid
    boundary_phi = np.asarray(boundary_phi, dtype=np.float64)
    if boundary_phi.shape != grid.shape + (3,):
        raise InputError("boundary_phi must be a full-grid (.., 3) array")
    if lap_target is not None and lap_target.shape != grid.shape + (3,):
        raise InputError("lap_target must be a full-grid (.., 3) array")

    gu_c = frame.u_field.values + frame.v_field.values
    gv_c = 1j * (frame.u_field.values - frame.v_field.values)
    ring = grid.ring_index()
    sel_phi = ring < BoundaryData.PHI_RING
    scale = float(
        np.linalg.norm(boundary_phi[sel_phi].max(axis=0) - boundary_phi[sel_phi].min(axis=0))
    )
    resid_im = max(float(np.max(np.abs(gu_c.imag))), float(np.max(np.abs(gv_c.imag))))
    if resid_im > 1e-8 * max(scale, 1e-300):
        raise InvariantError(
            f"imaginary residue {resid_im:.3e} of the prescribed gradients exceeds 1e-8*scale"
        )
    gu = gu_c.real
    gv = gv_c.real

    # discrete curl check on the prescribed gradient field
    interior2 = grid.interior(2)
    if np.any(interior2):
        curl = np.zeros(grid.shape + (3,))
        curl[1:-1, 1:-1] = (gu[2:, 1:-1] - gu[:-2, 1:-1] - gv[1:-1, 2:] + gv[1:-1, :-2]) / (
            2.0 * grid.h
        )
        gmax = max(float(np.max(np.abs(gu))), float(np.max(np.abs(gv))), 1e-300)
        cmax = float(np.max(np.linalg.norm(curl[interior2], axis=-1)))
        if cmax / gmax > _CURL_WARN:
            warnings.warn(
                f"prescribed gradients have discrete curl {cmax / gmax:.3e} (> {_CURL_WARN:.0e}); "
                "returning the least-squares integration",
                IntegrabilityWarning,
                stacklevel=2,
            )

    jj, ii, tmap = _interior_indexing(grid, 2)
    ej, ei, _ = _interior_indexing(grid, 1)
    n_eq = ej.size
    eq = np.arange(n_eq)
    n_rows = 2 * n_eq if lap_target is None else 3 * n_eq
    anchor_t = anchor_vals = None
    if anchors is not None:
        sel_a, vals_a = anchors
        if sel_a.shape != grid.shape or vals_a.shape != grid.shape + (3,):
            raise InputError("anchors must be a full-grid selector and (.., 3) values")
        anchor_t = tmap[sel_a]
        anchor_t = anchor_t[anchor_t >= 0]
        anchor_vals = vals_a[sel_a & (tmap >= 0)]
        n_rows += anchor_t.size

    rows, cols, vals = [], [], []
    b = np.zeros((n_rows, 3))
    inv2h = 1.0 / (2.0 * grid.h)
    for eq_off, (dj, di, sign), gvals in (
        (0, (0, 1, +1.0), gu),
        (0, (0, -1, -1.0), gu),
        (n_eq, (1, 0, +1.0), gv),
        (n_eq, (-1, 0, -1.0), gv),
    ):
        nt = tmap[ej + dj, ei + di]
        inb = nt >= 0
        rows.append(eq[inb] + eq_off)
        cols.append(nt[inb])
        vals.append(np.full(int(inb.sum()), sign * inv2h))
        out = ~inb
        if np.any(out):
            b[eq[out] + eq_off] -= sign * inv2h * boundary_phi[ej[out] + dj, ei[out] + di]
    b[:n_eq] += gu[ej, ei]
    b[n_eq:2 * n_eq] += gv[ej, ei]

    if lap_target is not None:
        wl = lap_weight / grid.h
        off = 2 * n_eq
        ct = tmap[ej, ei]
        cin = ct >= 0
        rows.append(eq[cin] + off)
        cols.append(ct[cin])
        vals.append(np.full(int(cin.sum()), -4.0 * wl))
        cout = ~cin
        if np.any(cout):
            b[eq[cout] + off] += 4.0 * wl * boundary_phi[ej[cout], ei[cout]]
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nt = tmap[ej + dj, ei + di]
            inb = nt >= 0
            rows.append(eq[inb] + off)
            cols.append(nt[inb])
            vals.append(np.full(int(inb.sum()), wl))
            out = ~inb
            if np.any(out):
                b[eq[out] + off] -= wl * boundary_phi[ej[out] + dj, ei[out] + di]
        b[off : off + n_eq] += wl * grid.h**2 * lap_target[ej, ei]

    if anchor_t is not None and anchor_t.size:
        wa = anchor_weight / grid.h
        off_a = n_rows - anchor_t.size
        rows.append(off_a + np.arange(anchor_t.size))
        cols.append(anchor_t)
        vals.append(np.full(anchor_t.size, wa))
        b[off_a:] = wa * anchor_vals

    amat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, jj.size),
    )
    gram = (amat.T @ amat).tocsc()
    try:
        lu = spla.splu(gram, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"position normal equations could not be factorized: {exc}") from exc

    phi = np.where(sel_phi[..., None], boundary_phi, 0.0)
    for c in range(3):
        atb = amat.T @ b[:, c]
        x = lu.solve(atb)
        _check_residual(gram, x, atb, "integrate_position")
        phi[jj, ii, c] = x
    return SurfacePatch(grid, Vec3Field(grid, phi))


def reconstruct_surface(
    lh: LambdaH,
    bd: BoundaryData,
    anchors: tuple[np.ndarray, np.ndarray] | None = None,
) -> SurfacePatch:
    """Full pipeline: Codazzi rhs -> mu -> natural frame -> positions.

    Propagated errors are tagged with the stage that raised them.
    ``anchors`` optionally pins known positions during the integration
    stage (see ``integrate_position``).
    """
    if lh.grid != bd.grid:
        raise InputError("lambda-H data and boundary data use different grids")
    if lh.lam.margin != 0 or lh.h_mean.margin != 0:
        raise InputError("reconstruction needs boundary-extended lambda and H (margin 0)")

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LhsurfError as exc:
            raise type(exc)(f"{name}: {exc}") from exc

    # curvature concentrations (sharp feature lines) cannot be carried
    # through the differentiated-Codazzi / frame path: their second
    # derivatives poison mu over a wide band.  The frame sees a winsorized
    # H (a no-op for smooth data, cap = 8 x the 75th percentile); the raw
    # H still reaches the positions through the Laplace-identity target.
    h_frame = ScalarField(lh.grid, _winsorize(lh.h_mean.values), margin=lh.h_mean.margin)

    rhs = stage("codazzi_rhs", codazzi_rhs, lh.lam, h_frame)
    mu = stage("solve_mu", solve_mu, rhs, bd)
    frame = stage("solve_frame", solve_frame, lh.lam, h_frame, mu, bd)
    lap_target = (2.0 * lh.lam.values**2 * lh.h_mean.values)[..., None] * frame.w_field.values
    return stage(
        "integrate_position", integrate_position, frame, bd.phi, lap_target, anchors=anchors
    )


def _winsorize(values: np.ndarray, factor: float = 8.0) -> np.ndarray:
    cap = factor * float(np.percentile(np.abs(values), 75.0))
    return np.clip(values, -cap, cap)


def codazzi_residual(mu: ComplexField, lam: ScalarField, h_mean: ScalarField) -> float:
    """Max norm of the first-order Codazzi residual mu_zbar - (lambda^2/2) H_z."""
    r = d_zbar(mu).values - 0.5 * lam.values**2 * d_z(h_mean).values
    sel = mu.grid.interior(max(mu.margin, lam.margin, h_mean.margin) + 1)
    return float(np.max(np.abs(r[sel])))
