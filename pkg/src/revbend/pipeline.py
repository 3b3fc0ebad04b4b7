"""End-to-end run: rotate to Morse, cap, insert pockets, solve a mode, verify, export.

Configuration is a flat ``key = value`` file whose keys are the fields of
:class:`PipelineConfig`. Every stage is recorded in the result with its status,
so a partial run still produces a report.
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fileio
from .errors import (AdmissibilityViolation, CapCollision, ConfigError, ConvexityConstructionFailure,
                     DegenerateDefect, GridMismatch, ImmersionFailure, MonotonicityLoss, NoCountJump,
                     NoMorseAngleFound, ParseError, PocketOutOfBounds, RevbendError, SolverError)
from .fieldcheck import (EPS_LIST, RESIDUAL_TOL, deformation_residuals, fd_crosscheck, isometry_order,
                         smoothness_report, triviality_fit)
from .modesolve.continuation import CLOSURE_TOL, PocketDefaults, continue_mode, ensure_pockets
from .modesolve.field import assemble_field
from .modesolve.segments import ODE_TOL, SHOOT_TOL, pocket_k_min
from .perturb import CapSegmentProfile, SupportBox, cap_critical_points, check_admissible, rotate_to_morse
from .profile import ProfileCurve

EXIT_OK, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_SOLVER, EXIT_VERIFICATION = 0, 2, 3, 4, 5
NONTRIVIAL_MIN = 0.1
SLOPE_TOL = 0.1

ADMISSIBILITY_ERRORS = (AdmissibilityViolation, CapCollision, ConvexityConstructionFailure, ImmersionFailure,
                        MonotonicityLoss, NoMorseAngleFound, PocketOutOfBounds)


@dataclass
class PipelineConfig:
    profile: str  # input file, Fourier or cap-segment format
    output_dir: str = "revbend_out"
    box: Optional[tuple] = None  # x_min, x_max, z_min, z_max; default grows the trace bounds by half
    theta_max: float = 0.2
    delta1_fraction: float = 0.1
    delta2_fraction: float = 0.05  # pocket half-scale over segment height range
    amplitude_fraction: float = 0.15
    perturb: bool = True  # false: the input is a cap-segment profile used as is
    k: Optional[int] = None  # None picks the smallest k allowed by every pocket
    k_max: int = 64
    ode_tol: float = ODE_TOL
    shoot_tol: float = SHOOT_TOL
    closure_tol: float = CLOSURE_TOL
    residual_tol: float = RESIDUAL_TOL
    grid_s: int = 256
    grid_t: int = 128
    eps_list: tuple = EPS_LIST
    mesh_s: int = 64
    mesh_t: int = 64
    epsilon: float = 0.05
    n_frames: int = 0

    def validate(self):
        problems = []
        for name in ("ode_tol", "shoot_tol", "closure_tol", "residual_tol", "theta_max", "delta1_fraction",
                     "delta2_fraction", "amplitude_fraction"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.k is not None and self.k < 2:
            problems.append("k must be at least 2")
        if self.grid_s < 8 or self.grid_t < 4:
            problems.append("grid too small")
        if self.mesh_s < 3 or self.mesh_t < 3:
            problems.append("mesh grid must be at least 3x3")
        if self.n_frames < 0:
            problems.append("n_frames must be non-negative")
        if not self.eps_list or any(e <= 0 for e in self.eps_list):
            problems.append("eps_list must hold positive values")
        if self.box is not None:
            if len(self.box) != 4:
                problems.append("box needs four numbers")
            else:
                try:
                    SupportBox(*self.box)
                except ValueError as e:
                    problems.append(f"box: {e}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        types = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for lineno, ln in enumerate(text.splitlines(), 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            key, sep, val = ln.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            try:
                kw[key] = _convert(key, val)
            except ValueError as e:
                raise ConfigError(f"line {lineno}: {key}: {e}") from None
        if "profile" not in kw:
            raise ConfigError("missing key 'profile'")
        return cls(**kw).validate()

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        cfg = cls.from_text(text)
        base = Path(path).parent
        if not os.path.isabs(cfg.profile):
            cfg.profile = str(base / cfg.profile)
        if not os.path.isabs(cfg.output_dir):
            cfg.output_dir = str(base / cfg.output_dir)
        return cfg

    def to_text(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, (tuple, list)):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"


_INT_KEYS = {"k", "k_max", "grid_s", "grid_t", "mesh_s", "mesh_t", "n_frames"}
_STR_KEYS = {"profile", "output_dir"}


def _convert(key, val):
    if key in _STR_KEYS:
        return val
    if key == "perturb":
        if val.lower() not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError("expected true or false")
        return val.lower() in ("true", "yes", "1")
    if key == "k":
        return None if val.lower() == "auto" else int(val)
    if key in _INT_KEYS:
        return int(val)
    if key in ("box", "eps_list"):
        return tuple(float(x) for x in val.replace(",", " ").split())
    return float(val)


@dataclass
class StageRecord:
    name: str
    status: str  # ok | failed | skipped
    message: str = ""
    seconds: float = 0.0


@dataclass
class PipelineResult:
    config: PipelineConfig
    stages: list = field(default_factory=list)
    profile: Optional[CapSegmentProfile] = None
    steps: list = field(default_factory=list)  # PerturbationStep log with displacement budgets
    mode: object = None
    deformation: object = None  # DeformationField
    report: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    artifacts: dict = field(default_factory=dict)
    box: Optional[SupportBox] = None
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK

    def stage(self, name) -> Optional[StageRecord]:
        return next((s for s in self.stages if s.name == name), None)


class _StageFailed(Exception):
    def __init__(self, code):
        self.code = code


def default_box(x, z) -> SupportBox:
    x, z = np.asarray(x), np.asarray(z)
    dx, dz = float(np.ptp(x)), float(np.ptp(z))
    return SupportBox(max(0.5 * float(np.min(x)), 1e-6), float(np.max(x)) + 0.5 * dx,
                      float(np.min(z)) - 0.5 * dz, float(np.max(z)) + 0.5 * dz)


def auto_k(profile: CapSegmentProfile, k_max: int) -> int:
    ks = [pocket_k_min(seg) for seg in profile.segments]
    k = max(ks)
    if math.isinf(k) or k > k_max:
        raise NoCountJump(f"pocket k_min {k} exceeds k_max {k_max}", k_suggested=None if math.isinf(k) else int(k))
    return int(k)


def _classify(err) -> int:
    if isinstance(err, (ConfigError, ParseError)):
        return EXIT_CONFIG
    if isinstance(err, ADMISSIBILITY_ERRORS):
        return EXIT_ADMISSIBILITY
    if isinstance(err, SolverError):
        return EXIT_SOLVER
    if isinstance(err, (DegenerateDefect, GridMismatch)):
        return EXIT_VERIFICATION
    return EXIT_SOLVER


def run_pipeline(config: PipelineConfig, write: bool = True) -> PipelineResult:
    cfg = config.validate()
    res = PipelineResult(cfg)

    def run(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except RevbendError as e:
            res.stages.append(StageRecord(name, "failed", f"[{name}] {e}", time.perf_counter() - t0))
            raise _StageFailed(_classify(e)) from e
        except ValueError as e:
            res.stages.append(StageRecord(name, "failed", f"[{name}] {e}", time.perf_counter() - t0))
            code = EXIT_ADMISSIBILITY if name in ("admissibility", "morse", "caps", "pockets") else EXIT_SOLVER
            raise _StageFailed(code) from e
        res.stages.append(StageRecord(name, "ok", "", time.perf_counter() - t0))
        return out

    try:
        res.exit_code = _run_stages(cfg, res, run)
    except _StageFailed as f:
        res.exit_code = f.code
    done = {s.name for s in res.stages}
    for name in STAGES:
        if name not in done:
            res.stages.append(StageRecord(name, "skipped"))
    res.report = build_report(res)
    if write:
        try:
            write_artifacts(res)
        except OSError as e:
            res.stages.append(StageRecord("write", "failed", f"[write] {e}"))
            res.exit_code = res.exit_code or EXIT_CONFIG
            res.report = build_report(res)
    return res


STAGES = ("load", "admissibility", "morse", "caps", "pockets", "solve", "field", "verify", "export")


def _run_stages(cfg: PipelineConfig, res: PipelineResult, run) -> int:
    def load():
        src = fileio.load_profile(cfg.profile)
        if isinstance(src, ProfileCurve) and not cfg.perturb:
            raise ConfigError("perturb = false needs a cap-segment input")
        return src

    src = run("load", load)

    def admissible_input():
        if isinstance(src, ProfileCurve):
            problems = src.validate()
            if problems:
                raise AdmissibilityViolation("; ".join(problems))
            s = src.grid()
            x, z = src.r(s), src.h(s)
        else:
            x, z = src.trace()
            if np.min(x) <= 0:
                raise AdmissibilityViolation(f"profile leaves the half-plane x > 0 (min x {np.min(x):.3g})")
        box = SupportBox(*cfg.box) if cfg.box is not None else default_box(x, z)
        if box.clearance(x, z) <= 0:
            raise AdmissibilityViolation("profile is not inside the support box")
        return box

    box = run("admissibility", admissible_input)
    res.box = box
    if isinstance(src, ProfileCurve):
        curve, step = run("morse", lambda: rotate_to_morse(src, box, cfg.theta_max))
        prof = run("caps", lambda: cap_critical_points(curve, cfg.delta1_fraction, box=box))
        prof = CapSegmentProfile(prof.caps, prof.segments, [step] + list(prof.provenance))
        res.steps = list(prof.provenance)
    else:
        prof = src
        res.steps.extend(prof.provenance)
        run("morse", lambda: None)
        run("caps", lambda: None)
    defaults = PocketDefaults(cfg.delta2_fraction, cfg.amplitude_fraction)
    n_before = len(prof.provenance)
    prof = run("pockets", lambda: ensure_pockets(prof, defaults, box))
    res.steps.extend(prof.provenance[n_before:])
    res.profile = prof

    def solve():
        k = cfg.k if cfg.k is not None else auto_k(prof, cfg.k_max)
        while True:
            try:
                return continue_mode(prof, k, cfg.closure_tol, cfg.shoot_tol, defaults, ode_tol=cfg.ode_tol)
            except NoCountJump:
                if cfg.k is not None or k >= cfg.k_max:
                    raise
                k += 1

    mode = run("solve", solve)
    res.mode = mode
    res.profile = mode.profile
    fld = run("field", lambda: assemble_field(mode, cfg.grid_s, cfg.grid_t))
    res.deformation = fld

    def verify():
        surf = mode.chart.surface(cfg.grid_s, cfg.grid_t)
        out = {"residuals": deformation_residuals(fld, surf)}
        try:
            out["slope"] = isometry_order(fld, surf, cfg.eps_list)
        except DegenerateDefect as e:
            out["slope"] = float("nan")
            out["degenerate"] = str(e)
        out["triviality"] = triviality_fit(fld, surf)
        out["smoothness"] = smoothness_report(mode)
        out["fd"] = fd_crosscheck(mode, cfg.grid_s)
        out["admissibility"] = check_admissible(mode.profile, box)
        return out

    checks = run("verify", verify)
    res.checks = checks
    failures = verification_failures(cfg, checks)
    if failures:
        res.stages[-1] = StageRecord("verify", "failed", "[verify] " + "; ".join(failures), res.stages[-1].seconds)
        return EXIT_ADMISSIBILITY if failures == ["admissibility"] else EXIT_VERIFICATION
    return EXIT_OK


def verification_failures(cfg: PipelineConfig, checks: dict) -> list:
    bad = []
    if not checks["residuals"].passed(cfg.residual_tol):
        bad.append("residuals")
    if not abs(checks["slope"] - 2.0) <= SLOPE_TOL:
        bad.append("isometry order")
    if not checks["triviality"].relative_residual >= NONTRIVIAL_MIN:
        bad.append("nontriviality")
    if not checks["smoothness"].passed(cfg.closure_tol):
        bad.append("smoothness")
    if not checks["admissibility"].admissible:
        bad.append("admissibility")
    return bad


def build_report(res: PipelineResult) -> dict:
    rep = {"status": "success" if res.ok else "failure", "exit_code": res.exit_code}
    rep["stages"] = {s.name: s.status + (f" ({s.message})" if s.message else "") for s in res.stages}
    if res.profile is not None:
        p = res.profile
        rep["profile"] = {"caps": p.n, "pockets": sum(seg.pocket is not None for seg in p.segments),
                          "index_signs": [c.index_sign for c in p.caps]}
    if res.steps:
        rep["steps"] = {f"{i}_{st.kind}": {"max_displacement": float(st.max_displacement),
                                           "admissible": bool(st.admissible)} for i, st in enumerate(res.steps)}
    if res.mode is not None:
        m = res.mode
        rep["mode"] = {"k": m.k, "sigma": m.sigma, "closure_d2psi_rel": m.closure_defect["d2psi_rel"],
                       "t_hat": [r.t_hat for r in m.shots], "shoot_residual": [r.residual for r in m.shots],
                       "count_jump": [r.zero_count_jump for r in m.shots]}
    checks = res.checks
    if checks:
        r = checks["residuals"]
        rep["verification"] = {
            "residual_ss": r.relative["ss"], "residual_tt": r.relative["tt"], "residual_mixed": r.relative["mixed"],
            "residual_scale": r.scale, "isometry_slope": checks["slope"],
            "triviality_residual": checks["triviality"].relative_residual,
            "smoothness_passed": checks["smoothness"].passed(res.config.closure_tol),
            "closure_third_jump_exempt": checks["smoothness"].closure().relative[3],
            "fd_crosscheck": max(checks["fd"].values()) if isinstance(checks["fd"], dict) else checks["fd"],
            "min_x": checks["admissibility"].min_x, "box_clearance": checks["admissibility"].clearance,
        }
    return rep


def write_artifacts(res: PipelineResult) -> None:
    cfg = res.config
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if res.profile is not None:
        fileio.save_capseg(res.profile, out / "profile.capseg")
        res.artifacts["profile"] = out / "profile.capseg"
    if res.mode is not None:
        fileio.save_mode(res.mode, out / "mode.txt")
        res.artifacts["mode"] = out / "mode.txt"
    if res.deformation is not None:
        fileio.save_field_csv(res.deformation, out / "field.csv")
        res.artifacts["field"] = out / "field.csv"
    if res.mode is not None and res.ok:
        t0 = time.perf_counter()
        surf = res.mode.chart.surface(cfg.mesh_s, cfg.mesh_t)
        fileio.export_surface(surf, out / "surface.obj")
        res.artifacts["mesh"] = out / "surface.obj"
        if cfg.n_frames > 0:
            fld = assemble_field(res.mode, cfg.mesh_s, cfg.mesh_t)
            res.artifacts["frames"] = fileio.export_frames(surf, fld, cfg.epsilon, cfg.n_frames, out / "frames")
        res.stages = [s for s in res.stages if s.name != "export"]
        res.stages.append(StageRecord("export", "ok", "", time.perf_counter() - t0))
        res.report = build_report(res)
    fileio.save_report(res.report, out / "report.txt")
    res.artifacts["report"] = out / "report.txt"
