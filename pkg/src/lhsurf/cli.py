"""Command-line driver.

Subcommands: synth (analytic test surfaces), analyze (forward lambda-H
extraction), param (OBJ mesh -> grid patch), reconstruct (lambda-H ->
surface), inpaint (hole filling) and roundtrip (extract/reconstruct/align
report).  Patches and fields travel as .lhf binaries, boundary rings as
.lhb, masks as ASCII PGM; every command is deterministic byte-for-byte.

Exit codes: 0 success, 2 input/format error, 3 numerical/solver error,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fileio, inpaint, parameterize
from .errors import InputError, LhsurfError
from .synth import KINDS, SynthSpec, synth
from .geometry import (
    LambdaH,
    conformality_residual,
    extract_lambda_h,
    gaussian_curvature,
    mu_from_surface,
    SurfacePatch,
)
from .grid import HoleMask, ScalarField
from .reconstruct import extract_boundary_data, reconstruct_surface
from .validate import best_rigid_align, field_error


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _apply_thread_cap() -> None:
    cap = os.environ.get("LH_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = cap


def _write_meta(path, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_hole(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise InputError("--hole expects u0,u1,v0,v1")
    return tuple(float(p) for p in parts)


def cmd_synth(args) -> int:
    spec = SynthSpec(
        kind=args.kind,
        n=args.n,
        k=args.k,
        radius=args.radius,
        amp=args.amp,
        angle=args.angle,
        scale=args.chart_scale,
    )
    res = synth(spec)
    os.makedirs(args.outdir, exist_ok=True)
    fileio.write_field(os.path.join(args.outdir, "patch.lhf"), res.patch.phi)
    for name, ref in (("lambda_ref", res.lam_ref), ("h_ref", res.h_ref), ("gauss_ref", res.gauss_ref)):
        if ref is not None:
            fileio.write_field(os.path.join(args.outdir, f"{name}.lhf"), ref)
    if args.hole:
        u0, u1, v0, v1 = _parse_hole(args.hole)
        mask = HoleMask.from_rect(res.grid, u0, u1, v0, v1)
        fileio.write_mask(os.path.join(args.outdir, "mask.pgm"), mask)
    meta = dict(res.meta)
    meta.update({"n": res.grid.n, "k": res.grid.k, "m": res.grid.m})
    _write_meta(os.path.join(args.outdir, "meta.json"), meta)
    print(f"wrote {args.kind} patch ({res.grid.n}x{res.grid.m}) to {args.outdir}")
    return 0


def _load_patch(path) -> SurfacePatch:
    field = fileio.read_field(path)
    if field.kind != "vec3":
        raise InputError(f"{path}: expected a vec3 position field, got {field.kind}")
    return SurfacePatch(field.grid, field)


def cmd_analyze(args) -> int:
    patch = _load_patch(args.patch)
    os.makedirs(args.outdir, exist_ok=True)
    lh = extract_lambda_h(patch)
    gauss = gaussian_curvature(lh.lam)
    mu = mu_from_surface(patch)
    report = conformality_residual(patch)
    bd = extract_boundary_data(patch)

    fileio.write_field(os.path.join(args.outdir, "lambda.lhf"), lh.lam)
    fileio.write_field(os.path.join(args.outdir, "h.lhf"), lh.h_mean)
    fileio.write_field(os.path.join(args.outdir, "gauss.lhf"), gauss)
    fileio.write_field(os.path.join(args.outdir, "mu.lhf"), mu)
    fileio.write_boundary(os.path.join(args.outdir, "boundary.lhb"), bd)
    if args.csv:
        fileio.write_csv(os.path.join(args.outdir, "lambda.csv"), lh.lam)
        fileio.write_csv(os.path.join(args.outdir, "h.csv"), lh.h_mean)
    lines = [
        f"max_f_normalized,{_fmt(report.max_f)}",
        f"max_eg_normalized,{_fmt(report.max_eg)}",
        f"mean_residual,{_fmt(report.mean)}",
        f"normalizer,{_fmt(report.normalizer)}",
        f"accepted,{int(report.accepted)}",
        "hist_bin_lo,hist_bin_hi,count",
    ]
    for lo, hi, cnt in zip(report.hist_edges[:-1], report.hist_edges[1:], report.hist_counts):
        lines.append(f"{_fmt(lo)},{_fmt(hi)},{int(cnt)}")
    with open(os.path.join(args.outdir, "conformality.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    status = "conformal" if report.accepted else "NOT conformal"
    print(f"analyzed {args.patch}: chart {status} "
          f"(max|F| {report.max_f:.3g}, max|E-G| {report.max_eg:.3g})")
    return 0


def cmd_param(args) -> int:
    corners = "auto" if args.corners == "auto" else [int(x) for x in args.corners.split(",")]
    if corners != "auto" and len(corners) != 4:
        raise InputError("--corners expects four vertex indices or 'auto'")
    mesh = parameterize.TriMesh.from_obj(args.mesh, corners=corners)
    if args.k == "auto":
        k = parameterize.optimal_aspect(mesh)
    else:
        k = float(args.k)
        if k <= 0:
            raise InputError("--k must be positive")
    k_snap = parameterize.snap_aspect(k, args.n)
    chart = parameterize.harmonic_param(mesh, k_snap)
    patch = parameterize.resample_to_grid(mesh, chart, args.n)
    fileio.write_field(args.output, patch.phi)
    residual = parameterize.mesh_conformality(mesh, chart)
    print(f"flattened {args.mesh}: k = {_fmt(k)} (snapped {_fmt(k_snap)}), "
          f"mesh residual {residual:.3g}; wrote {args.output}")
    return 0


def cmd_reconstruct(args) -> int:
    lam = fileio.read_field(args.lam)
    h = fileio.read_field(args.h)
    if lam.kind != "scalar" or h.kind != "scalar":
        raise InputError("lambda and H files must hold scalar fields")
    bd = fileio.read_boundary(args.boundary)
    if lam.grid != bd.grid or h.grid != bd.grid:
        raise InputError("field and boundary grids differ")
    patch = reconstruct_surface(LambdaH(lam.grid, lam, h), bd)
    fileio.write_field(args.output, patch.phi)
    print(f"reconstructed surface to {args.output}")
    return 0


def cmd_inpaint(args) -> int:
    patch = _load_patch(args.patch)
    mask = fileio.read_mask(args.mask, patch.grid)
    opt = inpaint.InpaintOptions(
        dt=args.dt,
        max_iters=args.iters,
        tol=args.tol,
        method=args.method,
    )
    run = inpaint.inpaint_surface_run(patch, mask, opt)
    fileio.write_field(args.output, run.patch.phi)
    if args.energy_log:
        inpaint.write_energy_log(args.energy_log, run.energies_lam, run.energies_h)
    print(f"inpainted {mask.count} nodes; wrote {args.output}")
    return 0


def run_roundtrip(patch: SurfacePatch) -> dict:
    """Extract (lambda, H), reconstruct, rigidly align and collect errors."""
    lh = extract_lambda_h(patch)
    bd = extract_boundary_data(patch)
    rec = reconstruct_surface(lh, bd)
    motion, rmsd = best_rigid_align(rec, patch)
    aligned = motion.apply_to_patch(rec)
    lh_rec = extract_lambda_h(aligned)
    interior = patch.grid.interior(1)
    lam_err = field_error(ScalarField(patch.grid, lh_rec.lam.values, margin=1),
                          lh.lam.values, region=interior)
    h_err = field_error(ScalarField(patch.grid, lh_rec.h_mean.values, margin=1),
                        lh.h_mean.values, region=interior)
    scale = patch.scale
    return {
        "rmsd": rmsd,
        "scale": scale,
        "rmsd_over_scale": rmsd / scale if scale > 0 else np.inf,
        "lambda_max_err": lam_err.max,
        "lambda_rel_err": lam_err.relative,
        "h_max_err": h_err.max,
        "h_rel_err": h_err.relative,
    }


def cmd_roundtrip(args) -> int:
    patch = _load_patch(args.patch)
    stats = run_roundtrip(patch)
    order = ["rmsd", "scale", "rmsd_over_scale", "lambda_max_err",
             "lambda_rel_err", "h_max_err", "h_rel_err"]
    for key in order:
        print(f"{key} = {_fmt(stats[key])}")
    if args.output:
        with open(args.output, "w", newline="\n") as fh:
            fh.write("metric,value\n")
            for key in order:
                fh.write(f"{key},{_fmt(stats[key])}\n")
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lhsurf", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate an analytic test surface")
    ps.add_argument("kind", choices=KINDS)
    ps.add_argument("-n", type=int, required=True, help="grid intervals along u")
    ps.add_argument("--k", type=float, default=1.0, help="aspect ratio (ignored by snowman)")
    ps.add_argument("--radius", type=float, default=1.0)
    ps.add_argument("--amp", type=float, default=0.2, help="sine-graph amplitude")
    ps.add_argument("--angle", type=float, default=90.0, help="ridge dihedral angle in degrees")
    ps.add_argument("--chart-scale", type=float, default=None, help="chart scale override")
    ps.add_argument("--hole", default=None, help="also write mask.pgm for the box u0,u1,v0,v1")
    ps.add_argument("-o", "--outdir", required=True)
    ps.set_defaults(func=cmd_synth)

    pa = sub.add_parser("analyze", help="extract lambda, H, K, mu and a conformality report")
    pa.add_argument("patch")
    pa.add_argument("-o", "--outdir", required=True)
    pa.add_argument("--csv", action="store_true", help="also export lambda/H as CSV")
    pa.set_defaults(func=cmd_analyze)

    pp = sub.add_parser("param", help="flatten a disk OBJ mesh and resample onto a grid")
    pp.add_argument("mesh")
    pp.add_argument("--corners", default="auto", help="four boundary vertex ids (ccw) or 'auto'")
    pp.add_argument("-n", type=int, default=64)
    pp.add_argument("--k", default="auto", help="aspect ratio or 'auto'")
    pp.add_argument("-o", "--output", required=True)
    pp.set_defaults(func=cmd_param)

    pr = sub.add_parser("reconstruct", help="rebuild a surface from lambda, H and boundary data")
    pr.add_argument("lam", metavar="lambda.lhf")
    pr.add_argument("h", metavar="h.lhf")
    pr.add_argument("boundary", metavar="boundary.lhb")
    pr.add_argument("-o", "--output", required=True)
    pr.set_defaults(func=cmd_reconstruct)

    pi = sub.add_parser("inpaint", help="fill a masked hole via lambda-H inpainting")
    pi.add_argument("patch")
    pi.add_argument("mask", metavar="mask.pgm")
    pi.add_argument("--dt", type=float, default=None)
    pi.add_argument("--iters", type=int, default=None)
    pi.add_argument("--tol", type=float, default=None)
    pi.add_argument("--method", choices=("auto", "flow", "direct"), default="auto")
    pi.add_argument("--energy-log", default=None, help="write iter,energy_lambda,energy_h CSV")
    pi.add_argument("-o", "--output", required=True)
    pi.set_defaults(func=cmd_inpaint)

    pt = sub.add_parser("roundtrip", help="extract, reconstruct, align and report errors")
    pt.add_argument("patch")
    pt.add_argument("-o", "--output", default=None, help="also write the report as CSV")
    pt.set_defaults(func=cmd_roundtrip)
    return p


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _parser().parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except LhsurfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
