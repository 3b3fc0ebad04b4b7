"""Command line interface: ``revbend <subcommand> ...``.

Exit codes: 0 success, 2 config error, 3 admissibility failure, 4 solver failure,
5 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, MeshGridError, RevbendError
from .fieldcheck import (EPS_LIST, deformation_residuals, fd_crosscheck, isometry_order, smoothness_report,
                         triviality_fit)
from .modesolve.continuation import PocketDefaults, continue_mode, ensure_pockets, solve_installed
from .modesolve.field import assemble_field
from .perturb import CapSegmentProfile, SupportBox, cap_critical_points, check_admissible, rotate_to_morse
from .pipeline import (EXIT_ADMISSIBILITY, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERIFICATION, NONTRIVIAL_MIN,
                       SLOPE_TOL, PipelineConfig, _classify, auto_k, default_box, run_pipeline)
from .profile import ProfileCurve, SurfaceParam, morse_report


def _print(report: dict):
    sys.stdout.write(fileio.format_report(report))


def _grid(text):
    try:
        n_s, n_t = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 256x128") from None
    return n_s, n_t


def _floats(text):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list '{text}'") from None


def _load(path, kind=None):
    prof = fileio.load_profile(path)
    if kind is not None and not isinstance(prof, kind):
        raise ConfigError(f"{path}: expected a {'cap-segment' if kind is CapSegmentProfile else 'Fourier'} profile")
    return prof


def cmd_analyze(args):
    curve = _load(args.profile, ProfileCurve)
    rep = morse_report(curve)
    out = {"is_morse": rep.is_morse, "margin": rep.margin, "morse_margin": rep.morse_margin,
           "critical_points": len(rep.critical_points), "problems": "; ".join(curve.validate()) or "none"}
    for j, cp in enumerate(rep.critical_points):
        out[f"point {j}"] = {"s": cp.s, "x": cp.point[0], "z": cp.point[1], "h_ss": cp.second_deriv,
                             "index_sign": cp.index_sign, "curvature": cp.curvature, "degenerate": cp.degenerate}
    _print(out)
    return EXIT_OK


def cmd_perturb(args):
    curve = _load(args.profile, ProfileCurve)
    s = curve.grid()
    box = SupportBox(*args.box) if args.box else default_box(curve.r(s), curve.h(s))
    rotated, step = rotate_to_morse(curve, box, args.theta_max)
    prof = cap_critical_points(rotated, args.d1, box=box)
    prof = CapSegmentProfile(prof.caps, prof.segments, [step] + list(prof.provenance))
    prof = ensure_pockets(prof, PocketDefaults(args.d2, args.amplitude), box)
    adm = check_admissible(prof, box)
    out = args.output or str(Path(args.profile).with_suffix(".capseg"))
    fileio.save_capseg(prof, out)
    _print({"output": out, "theta": step.params["theta"], "caps": prof.n, "admissible": adm.admissible,
            "min_x": adm.min_x, "clearance": adm.clearance})
    return EXIT_OK if adm.admissible else EXIT_ADMISSIBILITY


def cmd_solve(args):
    prof = _load(args.capseg, CapSegmentProfile)
    prof = ensure_pockets(prof)
    k = args.k if args.k is not None else auto_k(prof, args.k_max)
    mode = continue_mode(prof, k)
    n_s, n_t = args.grid
    base = Path(args.capseg)
    mode_path = args.output or str(base.with_suffix(".mode"))
    field_path = args.field or str(base.with_suffix(".field.csv"))
    fileio.save_mode(mode, mode_path)
    fileio.save_field_csv(assemble_field(mode, n_s, n_t), field_path)
    solved_path = args.solved or str(base.with_suffix(".solved.capseg"))
    fileio.save_capseg(mode.profile, solved_path)
    _print({"k": mode.k, "sigma": mode.sigma, "closure_d2psi_rel": mode.closure_defect["d2psi_rel"],
            "t_hat": [r.t_hat for r in mode.shots], "residual": [r.residual for r in mode.shots],
            "mode": mode_path, "field": field_path, "profile": solved_path})
    return EXIT_OK


def dominant_wavenumber(values: np.ndarray) -> int:
    """Fourier index in t carrying most of the energy of an (n_s, n_t) sample array."""
    spec = np.sum(np.abs(np.fft.rfft(values, axis=1)) ** 2, axis=0)
    return int(np.argmax(spec))


def cmd_verify(args):
    prof = _load(args.capseg, CapSegmentProfile)
    sampled = fileio.read_field(args.field)
    k = dominant_wavenumber(sampled.b)
    if k < 2:
        raise ConfigError(f"field has dominant wave number {k}; expected a mode with k >= 2")
    mode = solve_installed(prof, k)
    if args.grid:
        n_s, n_t = args.grid
        s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
        t = np.linspace(0, 2 * np.pi, n_t, endpoint=False)
    else:
        s, t = sampled.s, sampled.t
    fld = assemble_field(mode, s=s, t=t)
    r, h, r_s, h_s, _, _ = mode.chart.geometry(s)
    surf = SurfaceParam(s, t, r, h, r_s, h_s)
    # the file must agree with the re-solved field on its own grid
    ref = assemble_field(mode, s=sampled.s, t=sampled.t)
    file_diff = 0.0
    for want, got in zip((*ref.abc(), ref.Z()), (*sampled.abc(), sampled.Z())):
        scale = max(float(np.max(np.abs(want))), 1e-300)
        file_diff = max(file_diff, float(np.max(np.abs(want - got))) / scale)
    res = deformation_residuals(fld, surf)
    slope = isometry_order(fld, surf, args.eps_list)
    triv = triviality_fit(fld, surf)
    smooth = smoothness_report(mode)
    fd = fd_crosscheck(mode, len(s))
    checks = {
        "file_matches_profile": file_diff <= 1e-9,
        "residuals": res.passed(args.residual_tol),
        "isometry_order": abs(slope - 2.0) <= SLOPE_TOL,
        "nontrivial": triv.relative_residual >= NONTRIVIAL_MIN,
        "smoothness": smooth.passed(),
    }
    _print({"k": k, "passed": all(checks.values()), "checks": checks,
            "values": {"file_difference": file_diff, "residual_ss": res.relative["ss"],
                       "residual_tt": res.relative["tt"], "residual_mixed": res.relative["mixed"],
                       "isometry_slope": slope, "triviality_residual": triv.relative_residual,
                       "closure_d2psi_rel": smooth.closure().relative[2], "fd_crosscheck": max(fd.values())}})
    return EXIT_OK if all(checks.values()) else EXIT_VERIFICATION


def cmd_export(args):
    prof = _load(args.profile)
    if args.obj is None and args.frames is None:
        raise ConfigError("export needs --obj or --frames")
    out = {}
    if args.obj:
        n_s, n_t = args.grid
        fileio.export_surface(prof, args.obj, n_s, n_t)
        out["obj"] = args.obj
    if args.frames is not None:
        if args.field is None:
            raise ConfigError("--frames needs --field")
        if not isinstance(prof, CapSegmentProfile):
            raise ConfigError("--frames needs a cap-segment profile")
        fld = fileio.read_field(args.field)
        from .modesolve.chart import Chart
        surf = Chart(prof).surface(len(fld.s), len(fld.t))
        if not (np.allclose(surf.s, fld.s, rtol=0, atol=1e-12) and np.allclose(surf.t, fld.t, rtol=0, atol=1e-12)):
            raise MeshGridError("field samples are not on the uniform periodic grid")
        paths = fileio.export_frames(surf, fld, args.epsilon, args.frames, args.outdir)
        out["frames"] = len(paths)
        out["outdir"] = args.outdir
    _print(out)
    return EXIT_OK


def cmd_pipeline(args):
    cfg = PipelineConfig.from_file(args.config)
    res = run_pipeline(cfg)
    _print(res.report)
    return res.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revbend", description="Nontrivial infinitesimal bendings of surfaces of revolution.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="Morse report of a Fourier profile")
    a.add_argument("profile")
    a.set_defaults(fn=cmd_analyze)

    a = sub.add_parser("perturb", help="rotate to Morse, cap critical points, insert pockets")
    a.add_argument("profile")
    a.add_argument("--theta-max", type=float, default=0.2)
    a.add_argument("--d1", type=float, default=0.1, help="cap width as a fraction of the x-range")
    a.add_argument("--d2", type=float, default=0.05, help="pocket half-scale as a fraction of segment height")
    a.add_argument("--amplitude", type=float, default=0.15, help="dent depth as a fraction of the local x")
    a.add_argument("--box", type=_floats, help="x_min,x_max,z_min,z_max")
    a.add_argument("-o", "--output")
    a.set_defaults(fn=cmd_perturb)

    a = sub.add_parser("solve", help="solve a mode on a cap-segment profile")
    a.add_argument("capseg")
    g = a.add_mutually_exclusive_group()
    g.add_argument("--k", type=int)
    g.add_argument("--auto-k", action="store_true", help="smallest k allowed by every pocket (default)")
    a.add_argument("--k-max", type=int, default=64)
    a.add_argument("--grid", type=_grid, default=(256, 128))
    a.add_argument("-o", "--output", help="mode dump path")
    a.add_argument("--field", help="field CSV path")
    a.add_argument("--solved", help="path for the profile with the solved pockets installed")
    a.set_defaults(fn=cmd_solve)

    a = sub.add_parser("verify", help="check a field CSV against its solved profile")
    a.add_argument("capseg")
    a.add_argument("field")
    a.add_argument("--grid", type=_grid)
    a.add_argument("--eps-list", type=_floats, default=EPS_LIST)
    a.add_argument("--residual-tol", type=float, default=1e-8)
    a.set_defaults(fn=cmd_verify)

    a = sub.add_parser("export", help="OBJ mesh or first-order animation frames")
    a.add_argument("profile")
    a.add_argument("--obj")
    a.add_argument("--grid", type=_grid, default=(64, 64))
    a.add_argument("--frames", type=int)
    a.add_argument("--epsilon", type=float, default=0.05)
    a.add_argument("--field")
    a.add_argument("--outdir", default="frames")
    a.set_defaults(fn=cmd_export)

    a = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    a.add_argument("config")
    a.set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.fn(args)
    except RevbendError as e:
        sys.stderr.write(f"revbend {args.command}: {e}\n")
        return _classify(e)
    except (OSError, ValueError) as e:
        sys.stderr.write(f"revbend {args.command}: {e}\n")
        return EXIT_CONFIG if isinstance(e, OSError) else EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
