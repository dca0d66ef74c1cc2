import numpy as np
import pytest

from lhsurf.errors import ConsistencyWarning, InputError, InvariantError
from lhsurf.geometry import extract_lambda_h
from lhsurf.grid import ComplexField, ParamGrid, ScalarField, d_z, d_zbar, laplacian
from lhsurf.reconstruct import (
    BoundaryData,
    codazzi_rhs,
    extract_boundary_data,
    integrate_position,
    reconstruct_surface,
    solve_frame,
    solve_mu,
)
from lhsurf.synth import SynthSpec, synth
from lhsurf.validate import RigidMotion, best_rigid_align


def rotation(axis, angle):
    axis = np.asarray(axis, float)
    axis /= np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


class TestCodazziRhs:
    def test_constant_h_vanishes(self):
        g = ParamGrid(12, 1.0)
        lam = ScalarField.sample(g, lambda u, v: 1.0 + 0.4 * u + 0.1 * v)
        hm = ScalarField.sample(g, lambda u, v: np.full_like(u, 0.8))
        rhs = codazzi_rhs(lam, hm)
        assert np.max(np.abs(rhs.values[rhs.valid_mask()])) < 1e-12

    def test_flat_lambda_linear_h(self):
        g = ParamGrid(12, 1.0)
        lam = ScalarField.sample(g, lambda u, v: np.ones_like(u))
        hm = ScalarField.sample(g, lambda u, v: u)
        rhs = codazzi_rhs(lam, hm)
        assert np.max(np.abs(rhs.values[rhs.valid_mask()])) < 1e-12

    def test_manufactured_value(self):
        # lambda = 1 + 0.3 v, H = u: lambda_z = -0.15i, H_z = 1/2, H_zz = 0,
        # so lap mu = 2 lambda (2 lambda_z H_z) = -0.3i (1 + 0.3 v)
        g = ParamGrid(16, 1.0)
        lam = ScalarField.sample(g, lambda u, v: 1.0 + 0.3 * v)
        hm = ScalarField.sample(g, lambda u, v: u)
        rhs = codazzi_rhs(lam, hm)
        u, v = g.nodes_uv()
        expect = -0.3j * (1.0 + 0.3 * v)
        sel = rhs.valid_mask()
        assert np.max(np.abs(rhs.values[sel] - expect[sel])) < 1e-13


class TestSolveMu:
    def test_zero_data_zero_solution(self):
        g = ParamGrid(12, 1.0)
        rhs = ComplexField.sample(g, lambda u, v: np.zeros_like(u), margin=1)
        mu = solve_mu(rhs, np.zeros(g.shape, complex))
        assert np.max(np.abs(mu.values)) < 1e-14

    def test_harmonic_extension(self):
        g = ParamGrid(16, 1.0)
        u, v = g.nodes_uv()
        harmonic = (u**2 - v**2) + 1j * (2 * u * v)
        rhs = ComplexField.sample(g, lambda uu, vv: np.zeros_like(uu), margin=1)
        boundary = np.where(g.ring_index() < 1, harmonic, 0)
        mu = solve_mu(rhs, boundary)
        assert np.max(np.abs(mu.values - harmonic)) < 1e-11

    def test_manufactured_cubic_recovery(self):
        # with lambda = 1 + 0.3 v and H = u the Codazzi mu is the cubic
        # -(i/1.8)(1 + 0.3 v)^3, on which the solve is exact
        g = ParamGrid(16, 1.0)
        lam = ScalarField.sample(g, lambda u, v: 1.0 + 0.3 * v)
        hm = ScalarField.sample(g, lambda u, v: u)
        u, v = g.nodes_uv()
        mu_true = -1j / 1.8 * (1.0 + 0.3 * v) ** 3
        boundary = np.where(g.ring_index() < 1, mu_true, 0)
        mu = solve_mu(codazzi_rhs(lam, hm), boundary)
        assert np.max(np.abs(mu.values - mu_true)) < 1e-12

    def test_catenoid_forward_oracle(self):
        from lhsurf.geometry import mu_from_surface

        errs = []
        for n in (32, 64):
            res = synth(SynthSpec("catenoid", n))
            lh = extract_lambda_h(res.patch)
            bd = extract_boundary_data(res.patch)
            mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
            fw = mu_from_surface(res.patch)
            sel = res.grid.interior(2)
            errs.append(np.max(np.abs(mu.values[sel] - fw.values[sel])))
        assert errs[0] / errs[1] > 2.8

    def test_poisson_contract(self):
        g = ParamGrid(16, 1.0)
        rhs = ComplexField.sample(g, lambda u, v: np.sin(u) + 1j * v, margin=1)
        mu = solve_mu(rhs, np.zeros(g.shape, complex))
        lap = laplacian(mu)
        sel = g.interior(1)
        err = np.max(np.abs(lap.values[sel] - rhs.values[sel]))
        assert err <= 1e-8 * np.max(np.abs(rhs.values[sel])) + 1e-10

    def test_codazzi_first_order_residual_on_analytic_inputs(self):
        # exact recovery cases: the first-order residual is pure stencil
        # truncation, second order in h
        resids = []
        for n in (16, 32):
            g = ParamGrid(n, 1.0)
            lam = ScalarField.sample(g, lambda u, v: 1.0 + 0.3 * v)
            hm = ScalarField.sample(g, lambda u, v: u)
            u, v = g.nodes_uv()
            mu_true = -1j / 1.8 * (1.0 + 0.3 * v) ** 3
            boundary = np.where(g.ring_index() < 1, mu_true, 0)
            mu = solve_mu(codazzi_rhs(lam, hm), boundary)
            r = d_zbar(mu).values - 0.5 * lam.values**2 * d_z(hm).values
            sel = g.interior(1)
            resids.append(np.max(np.abs(r[sel])))
        assert resids[0] / resids[1] > 3.0


class TestSolveFrame:
    def test_flat_constant_frame(self):
        res = synth(SynthSpec("plane", 16))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)
        mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
        frame = solve_frame(lh.lam, lh.h_mean, mu, bd)
        sel = res.grid.interior(1)
        assert np.max(np.abs(frame.u_field.values[sel] - np.array([0.5, -0.5j, 0.0]))) < 1e-6
        assert np.max(np.abs(frame.w_field.values[sel] - np.array([0.0, 0.0, 1.0]))) < 1e-6
        assert frame.conformal_violation(lh.lam) < 1e-6

    @pytest.mark.parametrize("kind", ["sphere-cap", "catenoid"])
    def test_forward_extraction_oracle(self, kind):
        errs = []
        for n in (32, 64):
            res = synth(SynthSpec(kind, n))
            g = res.grid
            lh = extract_lambda_h(res.patch)
            bd = extract_boundary_data(res.patch)
            mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
            frame = solve_frame(lh.lam, lh.h_mean, mu, bd)
            phi = res.patch.phi.values
            tu = np.zeros_like(phi)
            tv = np.zeros_like(phi)
            tu[1:-1, 1:-1] = (phi[1:-1, 2:] - phi[1:-1, :-2]) / (2 * g.h)
            tv[1:-1, 1:-1] = (phi[2:, 1:-1] - phi[:-2, 1:-1]) / (2 * g.h)
            u_true = 0.5 * (tu - 1j * tv)
            sel = g.interior(1)
            err = np.max(np.abs(frame.u_field.values[sel] - u_true[sel]))
            errs.append(err / np.max(np.abs(u_true[sel])))
        assert errs[0] / errs[1] > 2.8
        assert errs[1] < 5e-3

    def test_frame_invariants_after_solve(self):
        res = synth(SynthSpec("sphere-cap", 32))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)
        mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
        frame = solve_frame(lh.lam, lh.h_mean, mu, bd)
        assert np.array_equal(frame.v_field.values, np.conj(frame.u_field.values))
        sel = res.grid.interior(1)
        norms = np.linalg.norm(frame.w_field.values[sel], axis=-1)
        assert np.max(np.abs(norms - 1.0)) < 1e-8

    def test_warns_on_inconsistent_inputs(self):
        res = synth(SynthSpec("sphere-cap", 16))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)
        mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
        broken = ScalarField(res.grid, lh.h_mean.values + 3.0)  # wrong H level
        with pytest.warns(ConsistencyWarning):
            solve_frame(lh.lam, broken, mu, bd)


class TestIntegratePosition:
    def test_flat_exact(self):
        res = synth(SynthSpec("plane", 16))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)
        mu = solve_mu(codazzi_rhs(lh.lam, lh.h_mean), bd)
        frame = solve_frame(lh.lam, lh.h_mean, mu, bd)
        rec = integrate_position(frame, bd.phi)
        assert np.max(np.abs(rec.phi.values - res.patch.phi.values)) < 1e-9

    def test_imaginary_residue_guard(self):
        from lhsurf.reconstruct import NaturalFrame
        from lhsurf.grid import ComplexVec3Field, Vec3Field

        g = ParamGrid(8, 1.0)
        u_vals = np.full(g.shape + (3,), 0.5 + 0.0j)
        u_vals[..., 1] = -0.5j
        u_vals[..., 2] = 0.0
        w_vals = np.zeros(g.shape + (3,))
        w_vals[..., 2] = 1.0
        frame = NaturalFrame(
            ComplexVec3Field(g, u_vals),
            ComplexVec3Field(g, u_vals),  # not conjugated: residue appears
            Vec3Field(g, w_vals),
        )
        phi = np.zeros(g.shape + (3,))
        with pytest.raises(InvariantError):
            integrate_position(frame, phi)


class TestReconstructSurface:
    def test_plane_exact(self):
        res = synth(SynthSpec("plane", 32))
        rec = reconstruct_surface(extract_lambda_h(res.patch), extract_boundary_data(res.patch))
        _, rmsd = best_rigid_align(rec, res.patch)
        assert rmsd <= 1e-10 * res.patch.scale

    @pytest.mark.parametrize("kind", ["sphere-cap", "catenoid"])
    def test_round_trip_order(self, kind):
        errs = []
        for n in (32, 64):
            res = synth(SynthSpec(kind, n))
            rec = reconstruct_surface(
                extract_lambda_h(res.patch), extract_boundary_data(res.patch)
            )
            _, rmsd = best_rigid_align(rec, res.patch)
            errs.append(rmsd / res.patch.scale)
        assert errs[1] < 1e-4
        assert errs[0] / errs[1] >= 2.8

    def test_round_trip_lambda_h_match(self):
        res = synth(SynthSpec("sphere-cap", 64))
        lh = extract_lambda_h(res.patch)
        rec = reconstruct_surface(lh, extract_boundary_data(res.patch))
        lh_rec = extract_lambda_h(rec)
        sel = res.grid.interior(2)
        lam_rel = np.max(np.abs(lh_rec.lam.values[sel] - lh.lam.values[sel])) / np.max(
            lh.lam.values[sel]
        )
        h_rel = np.max(np.abs(lh_rec.h_mean.values[sel] - lh.h_mean.values[sel]))
        assert lam_rel < 1e-3
        assert h_rel < 5e-3

    def test_rigid_motion_covariance(self):
        res = synth(SynthSpec("sphere-cap", 32))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)
        motion = RigidMotion(rotation([0.2, 1.0, -0.5], 0.8), np.array([0.3, -2.0, 1.1]))
        rec_then_move = motion.apply(reconstruct_surface(lh, bd).phi.values)
        move_then_rec = reconstruct_surface(lh, bd.transformed(motion)).phi.values
        err = np.max(np.linalg.norm(rec_then_move - move_then_rec, axis=-1))
        assert err <= 1e-8 * res.patch.scale

    def test_grid_mismatch_rejected(self):
        res = synth(SynthSpec("plane", 16))
        other = synth(SynthSpec("plane", 24))
        with pytest.raises(InputError):
            reconstruct_surface(extract_lambda_h(res.patch), extract_boundary_data(other.patch))

    def test_stage_tagging(self, monkeypatch):
        import lhsurf.reconstruct as rec_mod
        from lhsurf.errors import SolverError

        res = synth(SynthSpec("plane", 16))
        lh = extract_lambda_h(res.patch)
        bd = extract_boundary_data(res.patch)

        def boom(*args, **kwargs):
            raise SolverError("forced failure")

        monkeypatch.setattr(rec_mod, "solve_mu", boom)
        with pytest.raises(SolverError, match="solve_mu: forced failure"):
            reconstruct_surface(lh, bd)

    def test_boundary_shape_rejected(self):
        res = synth(SynthSpec("plane", 16))
        bd = extract_boundary_data(res.patch)
        with pytest.raises(InvariantError):
            BoundaryData(res.grid, bd.phi[:, :-1], bd.frame_u, bd.frame_w, bd.mu)


class TestBoundaryData:
    def test_extraction_is_second_order(self):
        errs = []
        for n in (32, 64):
            res = synth(SynthSpec("catenoid", n))
            bd = extract_boundary_data(res.patch)
            ring = res.grid.ring_index() < 1
            # analytic mu is the constant -2 for the default chart
            errs.append(np.max(np.abs(bd.mu[ring] + 2.0)))
        assert errs[0] / errs[1] > 3.0

    def test_unit_ring_normals(self):
        res = synth(SynthSpec("sphere-cap", 24))
        bd = extract_boundary_data(res.patch)
        ring = res.grid.ring_index() < 1
        norms = np.linalg.norm(bd.frame_w[ring], axis=-1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12

    def test_serialization_roundtrip(self, tmp_path):
        from lhsurf.fileio import read_boundary, write_boundary

        res = synth(SynthSpec("catenoid", 16))
        bd = extract_boundary_data(res.patch)
        path = tmp_path / "b.lhb"
        write_boundary(path, bd)
        back = read_boundary(path)
        assert back.grid == bd.grid
        assert np.array_equal(back.phi, bd.phi)
        assert np.array_equal(back.frame_u, bd.frame_u)
        assert np.array_equal(back.frame_w, bd.frame_w)
        assert np.array_equal(back.mu, bd.mu)
