import numpy as np
import pytest

from lhsurf.errors import DomainError, ImmersionError
from lhsurf.geometry import (
    check_immersion,
    conformal_factor,
    conformality_residual,
    extract_lambda_h,
    first_fundamental_form,
    gaussian_curvature,
    mean_curvature,
    mu_from_surface,
    surface_normal,
    SurfacePatch,
)
from lhsurf.grid import ParamGrid, ScalarField, Vec3Field, d_z, d_zbar
from lhsurf.synth import SynthSpec, synth


def flat_patch(n=16, k=1.0):
    return synth(SynthSpec("plane", n, k=k)).patch


class TestFirstFundamentalForm:
    def test_flat_identity_chart(self):
        fff = first_fundamental_form(flat_patch())
        sel = fff.e.valid_mask()
        assert np.allclose(fff.e.values[sel], 1.0, atol=1e-13)
        assert np.allclose(fff.g.values[sel], 1.0, atol=1e-13)
        assert np.max(np.abs(fff.f.values[sel])) < 1e-13

    def test_uniform_scale(self):
        g = ParamGrid(16, 1.0)
        patch = SurfacePatch.from_function(g, lambda u, v: (2 * u, 2 * v, np.zeros_like(u)))
        fff = first_fundamental_form(patch)
        sel = fff.e.valid_mask()
        assert np.allclose(fff.e.values[sel], 4.0, atol=1e-12)
        assert np.allclose(fff.g.values[sel], 4.0, atol=1e-12)

    def test_catenoid_analytic_metric(self):
        res = synth(SynthSpec("catenoid", 32))
        fff = first_fundamental_form(res.patch)
        lam2 = res.lam_ref.values**2
        sel = fff.e.valid_mask()
        scale2 = np.max(lam2)
        assert np.max(np.abs(fff.e.values[sel] - lam2[sel])) / scale2 < 2e-3
        assert np.max(np.abs(fff.g.values[sel] - lam2[sel])) / scale2 < 2e-3
        assert np.max(np.abs(fff.f.values[sel])) / scale2 < 2e-3

    def test_degenerate_rejected(self):
        g = ParamGrid(8, 1.0)
        patch = SurfacePatch.from_function(g, lambda u, v: (u, 0 * v, 0 * u))
        with pytest.raises(ImmersionError):
            first_fundamental_form(patch)


class TestConformalFactor:
    def test_flat(self):
        lam = conformal_factor(flat_patch())
        assert np.allclose(lam.values[lam.valid_mask()], 1.0, atol=1e-13)

    def test_sphere_stereographic(self):
        res = synth(SynthSpec("sphere-cap", 64))
        lam = conformal_factor(res.patch)
        sel = lam.valid_mask()
        err = np.max(np.abs(lam.values[sel] - res.lam_ref.values[sel]))
        assert err < 1e-3

    def test_catenoid(self):
        res = synth(SynthSpec("catenoid", 64))
        lam = conformal_factor(res.patch)
        sel = lam.valid_mask()
        assert np.max(np.abs(lam.values[sel] - res.lam_ref.values[sel])) < 5e-4

    def test_squared_equals_metric_average(self):
        res = synth(SynthSpec("sphere-cap", 24))
        lam = conformal_factor(res.patch)
        fff = first_fundamental_form(res.patch)
        sel = lam.valid_mask()
        lhs = lam.values[sel] ** 2
        rhs = (fff.e.values[sel] + fff.g.values[sel]) / 2.0
        assert np.array_equal(lhs, np.asarray(np.sqrt(rhs) ** 2))  # same construction
        assert np.max(np.abs(lhs - rhs)) < 1e-15


class TestSurfaceNormal:
    def test_flat(self):
        nrm = surface_normal(flat_patch())
        sel = nrm.valid_mask()
        assert np.allclose(nrm.values[sel], [0.0, 0.0, 1.0], atol=1e-13)

    def test_tilted_plane_frozen_normal(self):
        g = ParamGrid(16, 1.0)
        patch = SurfacePatch.from_function(g, lambda u, v: (u, v, u))
        nrm = surface_normal(patch)
        sel = nrm.valid_mask()
        expect = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0)
        assert np.allclose(nrm.values[sel], expect, atol=1e-12)

    def test_sphere_radial(self):
        res = synth(SynthSpec("sphere-cap", 48))
        nrm = surface_normal(res.patch)
        sel = res.grid.interior(1)
        radial = res.patch.phi.values / 1.0
        dots = np.einsum("pc,pc->p", nrm.values[sel], radial[sel])
        # all normals aligned (same sign) and radial to O(h^2)
        assert np.all(dots > 0) or np.all(dots < 0)
        assert np.max(np.abs(np.abs(dots) - 1.0)) < 1e-3

    def test_unit_length(self):
        res = synth(SynthSpec("catenoid", 24))
        nrm = surface_normal(res.patch)
        sel = nrm.valid_mask()
        assert np.max(np.abs(np.linalg.norm(nrm.values[sel], axis=-1) - 1.0)) < 1e-12


class TestMeanCurvature:
    def test_flat_zero(self):
        h = mean_curvature(flat_patch())
        assert np.max(np.abs(h.values[h.valid_mask()])) < 1e-12

    def test_catenoid_minimal(self):
        res = synth(SynthSpec("catenoid", 128))
        h = mean_curvature(res.patch)
        sel = h.valid_mask()
        assert np.max(np.abs(h.values[sel])) * res.patch.scale <= 1e-2

    def test_sphere_curvature(self):
        res = synth(SynthSpec("sphere-cap", 128))
        h = mean_curvature(res.patch)
        sel = h.valid_mask()
        rel = np.max(np.abs(h.values[sel] - 1.0))
        assert rel <= 0.02
        assert np.all(h.values[sel] > 0)  # uniform sign

    def test_cylinder_signed_value(self):
        res = synth(SynthSpec("cylinder", 64, radius=1.0))
        h = mean_curvature(res.patch)
        sel = h.valid_mask()
        assert np.max(np.abs(h.values[sel] - (-0.5))) < 5e-3

    def test_orientation_flip_negates(self):
        res = synth(SynthSpec("sphere-cap", 32))
        g = res.grid
        flipped = SurfacePatch(g, Vec3Field(g, res.patch.phi.values[:, ::-1]))
        h0 = mean_curvature(res.patch).values
        h1 = mean_curvature(flipped).values
        lam0 = conformal_factor(res.patch).values
        lam1 = conformal_factor(flipped).values
        sel = g.interior(1)
        assert np.allclose(h1[sel], -h0[:, ::-1][sel], atol=1e-10)
        assert np.allclose(lam1[sel], lam0[:, ::-1][sel], atol=1e-12)


class TestGaussianCurvature:
    def test_constant_factor_flat(self):
        g = ParamGrid(16, 1.0)
        lam = ScalarField.sample(g, lambda u, v: np.full_like(u, 2.5))
        k = gaussian_curvature(lam)
        assert np.max(np.abs(k.values[k.valid_mask()])) < 1e-12

    def test_sphere(self):
        res = synth(SynthSpec("sphere-cap", 128))
        k = gaussian_curvature(conformal_factor(res.patch))
        sel = k.valid_mask()
        assert np.max(np.abs(k.values[sel] - 1.0)) <= 0.02

    def test_catenoid_analytic(self):
        res = synth(SynthSpec("catenoid", 64))
        k = gaussian_curvature(conformal_factor(res.patch))
        sel = k.valid_mask()
        assert np.max(np.abs(k.values[sel] - res.gauss_ref.values[sel])) < 1e-3

    def test_nonpositive_lambda_rejected(self):
        g = ParamGrid(8, 1.0)
        with pytest.raises(DomainError):
            gaussian_curvature(ScalarField.sample(g, lambda u, v: u - 0.5))


class TestMu:
    def test_plane_zero(self):
        mu = mu_from_surface(flat_patch())
        assert np.max(np.abs(mu.values[mu.valid_mask()])) < 1e-12

    def test_sphere_umbilic(self):
        errs = []
        for n in (32, 64):
            res = synth(SynthSpec("sphere-cap", n))
            mu = mu_from_surface(res.patch)
            errs.append(np.max(np.abs(mu.values[mu.valid_mask()])))
        assert errs[0] < 5e-3
        assert errs[0] / errs[1] > 3.0  # O(h^2)

    def test_catenoid_constant(self):
        res = synth(SynthSpec("catenoid", 64))
        mu = mu_from_surface(res.patch)
        sel = mu.valid_mask()
        # chart scale s = 2 gives mu = -s^2/2 = -2
        assert np.max(np.abs(mu.values[sel] + 2.0)) < 2e-3


class TestCodazziResidual:
    @pytest.mark.parametrize("kind", ["sphere-cap", "catenoid"])
    def test_residual_decays_order_two(self, kind):
        resids = []
        for n in (32, 64, 128):
            res = synth(SynthSpec(kind, n))
            lh = extract_lambda_h(res.patch)
            mu = mu_from_surface(res.patch)
            r = d_zbar(mu).values - 0.5 * lh.lam.values**2 * d_z(lh.h_mean).values
            sel = res.grid.interior(3)
            resids.append(np.max(np.abs(r[sel])))
        orders = [np.log2(a / b) for a, b in zip(resids, resids[1:])]
        assert all(o >= 1.5 for o in orders)


class TestConformality:
    def test_flat_zero(self):
        report = conformality_residual(flat_patch())
        assert report.max_f == 0.0
        assert report.max_eg == 0.0
        assert report.accepted

    def test_anisotropic_flagged(self):
        g = ParamGrid(16, 1.0)
        patch = SurfacePatch.from_function(g, lambda u, v: (2 * u, v, np.zeros_like(u)))
        report = conformality_residual(patch)
        # E = 4, G = 1: |E - G| / ((E + G)/2) = 6/5
        assert report.max_eg == pytest.approx(1.2, abs=1e-12)
        assert not report.accepted

    def test_sphere_accepted_and_decaying(self):
        maxes = []
        for n in (32, 64):
            res = synth(SynthSpec("sphere-cap", n))
            report = conformality_residual(res.patch)
            assert report.accepted
            maxes.append(max(report.max_f, report.max_eg))
        assert maxes[0] / maxes[1] > 3.0

    def test_histogram_covers_all_nodes(self):
        res = synth(SynthSpec("sphere-cap", 24))
        report = conformality_residual(res.patch)
        n_valid = int(res.grid.interior(1).sum())
        assert report.hist_counts.sum() == n_valid
        assert report.hist_edges.size == report.hist_counts.size + 1
        # concentration at zero for a conformal chart: the whole histogram
        # support is tiny relative to the metric scale
        assert report.hist_edges[-1] < 0.05
        assert report.hist_edges[0] > -0.05

    def test_metric_determinant_identity(self):
        res = synth(SynthSpec("sphere-cap", 48))
        fff = first_fundamental_form(res.patch)
        lam = conformal_factor(res.patch)
        sel = lam.valid_mask()
        det = fff.e.values[sel] * fff.g.values[sel] - fff.f.values[sel] ** 2
        lam4 = lam.values[sel] ** 4
        assert np.max(np.abs(det - lam4)) / np.max(lam4) < 1e-3


class TestCurvatureConvergence:
    def test_mean_and_gauss_order_two(self):
        h_errs, k_errs = [], []
        for n in (32, 64):
            res = synth(SynthSpec("sphere-cap", n))
            h = mean_curvature(res.patch)
            k = gaussian_curvature(conformal_factor(res.patch))
            h_errs.append(np.max(np.abs(h.values[h.valid_mask()] - 1.0)))
            k_errs.append(np.max(np.abs(k.values[k.valid_mask()] - 1.0)))
        assert 3.5 <= h_errs[0] / h_errs[1] <= 4.5
        assert 3.5 <= k_errs[0] / k_errs[1] <= 4.5


class TestExtraction:
    def test_extended_matches_interior_ops(self):
        res = synth(SynthSpec("catenoid", 32))
        lh = extract_lambda_h(res.patch)
        lam = conformal_factor(res.patch)
        h = mean_curvature(res.patch)
        sel = res.grid.interior(1)
        assert np.allclose(lh.lam.values[sel], lam.values[sel], atol=1e-13)
        assert np.allclose(lh.h_mean.values[sel], h.values[sel], atol=1e-10)

    def test_edge_values_second_order(self):
        errs = []
        for n in (32, 64):
            res = synth(SynthSpec("sphere-cap", n))
            lh = extract_lambda_h(res.patch)
            ring0 = res.grid.ring_index() == 0
            errs.append(np.max(np.abs(lh.lam.values[ring0] - res.lam_ref.values[ring0])))
        assert errs[0] / errs[1] > 3.0

    def test_immersion_check_names_node(self):
        g = ParamGrid(8, 1.0)
        vals = np.zeros(g.shape + (3,))
        vals[..., 0] = g.nodes_uv()[0]
        vals[..., 1] = g.nodes_uv()[1]
        vals[3:6, 3:6] = 0.42  # flatten a blob to kill the tangents
        patch = SurfacePatch(g, Vec3Field(g, vals))
        with pytest.raises(ImmersionError, match=r"\(i="):
            check_immersion(patch)
