"""Plain-text formats: Fourier profiles, cap-segment profiles, mode dumps, field CSV,
key-value reports and OBJ meshes.

Floats are written with ``repr`` so every file round-trips bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
from pathlib import Path

import numpy as np

from .errors import MeshGridError, ParseError
from .perturb import Cap, CapSegmentProfile, PerturbationStep, PocketSpec, Segment
from .profile import ProfileCurve, SurfaceParam

PROFILE_HEADER = "revbend-profile v1"
CAPSEG_HEADER = "revbend-capseg v1"
MODE_HEADER = "revbend-mode v1"
FIELD_COLUMNS = ("s", "t", "a", "b", "c", "Zx", "Zy", "Zz")
FRAMES_DISCLAIMER = (
    "These frames show the linearized motion F + eps*Z of a verified infinitesimal\n"
    "deformation. They are first-order pictures only: F + eps*Z is not a bending and\n"
    "changes the metric at order eps^2.\n"
)


class ChecksumWarning(UserWarning):
    pass


def _f(x) -> str:
    return repr(float(x))


def _floats(tokens, lineno):
    try:
        return [float(v) for v in tokens]
    except ValueError as e:
        raise ParseError(f"bad number ({e})", lineno) from None


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        return [(i + 1, ln.strip()) for i, ln in enumerate(fh)]


def _content(lines):
    """Non-empty, non-comment lines."""
    return [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]


def _check_header(lines, header):
    if not lines or " ".join(lines[0][1].split()) != header:
        raise ParseError(f"expected header '{header}'", lines[0][0] if lines else 1)


# ---------------------------------------------------------------------------
# Fourier profiles

def _profile_body(curve: ProfileCurve):
    return [
        "r: " + " ".join(_f(v) for v in curve.r_coeffs),
        "h: " + " ".join(_f(v) for v in curve.h_coeffs),
    ]


def _checksum(body_lines) -> str:
    return hashlib.sha256("\n".join(body_lines).encode()).hexdigest()[:16]


def save_profile(profile, path) -> None:
    """Write a ProfileCurve or a CapSegmentProfile in its own format."""
    if isinstance(profile, CapSegmentProfile):
        return save_capseg(profile, path)
    body = _profile_body(profile)
    text = "\n".join([PROFILE_HEADER, *body, "checksum: " + _checksum(body)]) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_profile(path):
    """Read either file format (dispatch on the header line)."""
    lines = _content(_lines(path))
    if lines and " ".join(lines[0][1].split()) == CAPSEG_HEADER:
        return _parse_capseg(lines)
    _check_header(lines, PROFILE_HEADER)
    fields, checksum = {}, None
    for lineno, ln in lines[1:]:
        key, _, rest = ln.partition(":")
        key = key.strip()
        if key in ("r", "h"):
            if key in fields:
                raise ParseError(f"duplicate '{key}:' line", lineno)
            fields[key] = _floats(rest.split(), lineno)
            if not fields[key]:
                raise ParseError(f"empty '{key}:' line", lineno)
        elif key == "checksum":
            checksum = rest.strip()
        else:
            raise ParseError(f"unknown key '{key}'", lineno)
    for key in ("r", "h"):
        if key not in fields:
            raise ParseError(f"missing '{key}:' line", lines[-1][0])
    curve = ProfileCurve(tuple(fields["r"]), tuple(fields["h"]))
    if checksum is not None and checksum != _checksum(_profile_body(curve)):
        warnings.warn(f"{path}: checksum mismatch", ChecksumWarning, stacklevel=2)
    return curve


# ---------------------------------------------------------------------------
# cap-segment profiles

def _opt(x):
    return "none" if x is None else _f(x)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def save_capseg(profile: CapSegmentProfile, path) -> None:
    out = [CAPSEG_HEADER]
    for c in profile.caps:
        out.append("cap: " + " ".join([_f(c.x0), _f(c.z0), _f(c.K), _f(c.delta1), str(int(c.direction)),
                                       _opt(c.blend_width), _opt(c.s)]))
    for seg in profile.segments:
        out.append("seg: " + " ".join([_f(seg.za), _f(seg.zb), str(seg.degree), str(int(seg.direction)),
                                       str(int(seg.side_start)), str(int(seg.side_end)), str(len(seg.coeffs))]))
        out.append("knots: " + " ".join(_f(v) for v in seg.knots))
        for c in seg.coeffs:
            out.append("coef: " + " ".join(_f(v) for v in c))
        p = seg.pocket
        if p is not None:
            out.append("pocket: " + " ".join(_f(v) for v in (p.z0, p.delta2, p.t, p.amplitude, p.kappa)))
            out.append("f0: " + " ".join(_f(v) for v in p.f0))
            out.append("f1: " + " ".join(_f(v) for v in p.f1))
    for st in profile.provenance:
        rec = {"kind": st.kind, "params": st.params, "support": list(st.support),
               "max_displacement": st.max_displacement, "admissible": st.admissible}
        out.append("step: " + json.dumps(rec, default=_json_default, sort_keys=True))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_capseg(path) -> CapSegmentProfile:
    return _parse_capseg(_content(_lines(path)))


def _parse_capseg(lines) -> CapSegmentProfile:
    _check_header(lines, CAPSEG_HEADER)
    caps, segs, steps = [], [], []
    cur = None  # segment under construction

    def finish(lineno):
        if cur is None:
            return
        if cur["knots"] is None or len(cur["coefs"]) != cur["npieces"]:
            raise ParseError("incomplete segment block", lineno)
        pocket = None
        if cur["pocket"] is not None:
            z0, d2, t, amp, kap = cur["pocket"]
            if cur["f0"] is None or cur["f1"] is None:
                raise ParseError("pocket without f0/f1 lines", lineno)
            pocket = PocketSpec(z0, d2, t, tuple(cur["f0"]), tuple(cur["f1"]), amp, kap)
        za, zb = cur["z"]
        seg = Segment(za, zb, tuple(cur["knots"]), tuple(tuple(c) for c in cur["coefs"]),
                      cur["dir"], cur["ss"], cur["se"], pocket)
        if seg.degree != cur["degree"]:
            raise ParseError(f"degree {cur['degree']} does not match coefficients", lineno)
        segs.append(seg)

    for lineno, ln in lines[1:]:
        key, _, rest = ln.partition(":")
        key, tok = key.strip(), rest.split()
        try:
            if key == "cap":
                if len(tok) != 7:
                    raise ParseError("cap line needs 7 fields", lineno)
                x0, z0, K, d1 = _floats(tok[:4], lineno)
                bw = None if tok[5] == "none" else float(tok[5])
                s = None if tok[6] == "none" else float(tok[6])
                caps.append(Cap(x0, z0, K, d1, int(tok[4]), bw, s))
            elif key == "seg":
                finish(lineno)
                if len(tok) != 7:
                    raise ParseError("seg line needs 7 fields", lineno)
                za, zb = _floats(tok[:2], lineno)
                cur = {"z": (za, zb), "degree": int(tok[2]), "dir": int(tok[3]), "ss": int(tok[4]),
                       "se": int(tok[5]), "npieces": int(tok[6]), "knots": None, "coefs": [],
                       "pocket": None, "f0": None, "f1": None}
            elif key in ("knots", "coef", "pocket", "f0", "f1"):
                if cur is None:
                    raise ParseError(f"'{key}:' outside a segment block", lineno)
                vals = _floats(tok, lineno)
                if key == "coef":
                    cur["coefs"].append(vals)
                elif key == "pocket":
                    if len(vals) != 5:
                        raise ParseError("pocket line needs 5 fields", lineno)
                    cur["pocket"] = vals
                else:
                    cur[key] = vals
            elif key == "step":
                finish(lineno)
                cur = None
                rec = json.loads(rest)
                steps.append(PerturbationStep(rec["kind"], rec["params"], tuple(rec["support"]),
                                              rec["max_displacement"], rec["admissible"]))
            else:
                raise ParseError(f"unknown key '{key}'", lineno)
        except ParseError:
            raise
        except (ValueError, KeyError, IndexError) as e:
            raise ParseError(str(e), lineno) from None
    finish(lines[-1][0] if lines else 1)
    try:
        return CapSegmentProfile(caps, segs, steps)
    except ValueError as e:
        raise ParseError(str(e), lines[-1][0]) from None


# ---------------------------------------------------------------------------
# mode dumps, field samples, reports

def save_mode(mode, path, n_samples: int = 257) -> None:
    out = [MODE_HEADER, f"k = {mode.k}", f"sigma = {_f(mode.sigma)}"]
    for i, ser in enumerate(mode.series):
        out.append(f"[cap {i}]")
        out.append(f"exponent = {ser.exponent}")
        out.append(f"radius = {_f(ser.radius)}")
        out.append("coefficients = " + " ".join(_f(v) for v in ser.coeffs))
    for i, r in enumerate(mode.shots):
        out.append(f"[segment {i}]")
        out.append(f"t_hat = {_f(r.t_hat)}")
        out.append(f"residual = {_f(r.residual)}")
        out.append(f"scale = {_f(mode.glue_scales[i])}")
        out.append("z,psi,dpsi,phase")
        for row in mode.segment_samples(i, n_samples):
            out.append(",".join(_f(v) for v in row))
    out.append("[closure]")
    for key, val in mode.closure_defect.items():
        out.append(f"{key} = {_f(val)}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def field_table(field, surface: SurfaceParam = None) -> np.ndarray:
    """Rows s, t, a, b, c, Zx, Zy, Zz in s-major order."""
    a, b, c = field.abc()
    Z = field.Z()
    S, T = np.meshgrid(field.s, field.t, indexing="ij")
    return np.column_stack([S.ravel(), T.ravel(), a.ravel(), b.ravel(), c.ravel(), Z.reshape(-1, 3)])


def save_field_csv(field, path) -> None:
    np.savetxt(path, field_table(field), delimiter=",", header=",".join(FIELD_COLUMNS), comments="", fmt="%.17g")


class SampledField:
    """Field values read back from CSV (no derivatives)."""

    def __init__(self, s, t, a, b, c, Z):
        self.s, self.t, self.a, self.b, self.c, self._Z = s, t, a, b, c, Z

    @property
    def shape(self):
        return self.a.shape

    def abc(self):
        return self.a, self.b, self.c

    def Z(self):
        return self._Z


def read_field(path) -> SampledField:
    return SampledField(*load_field_csv(path))


def load_field_csv(path):
    """Returns (s, t, a, b, c, Z) with a, b, c of shape (n_s, n_t) and Z of shape (n_s, n_t, 3)."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
    if head.replace(" ", "") != ",".join(FIELD_COLUMNS):
        raise ParseError(f"expected header '{','.join(FIELD_COLUMNS)}'", 1)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise ParseError(str(e)) from None
    s = np.unique(data[:, 0])
    t = np.unique(data[:, 1])
    if len(s) * len(t) != len(data):
        raise ParseError("samples do not form a tensor grid")
    shape = (len(s), len(t))
    cols = [data[:, j].reshape(shape) for j in range(2, 8)]
    return s, t, cols[0], cols[1], cols[2], np.stack(cols[3:], -1)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _f(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt_value(x) for x in v)
    return str(v)


def format_report(report: dict) -> str:
    """``key = value`` lines; nested dicts become ``[section]`` / ``[section.sub]`` blocks."""
    flat, sections = [], []

    def walk(d, prefix):
        for key, val in d.items():
            if isinstance(val, dict):
                sections.append((prefix + (key,), val))
            elif not prefix:
                flat.append(f"{key} = {_fmt_value(val)}")

    walk(report, ())
    out = list(flat)
    while sections:
        path, d = sections.pop(0)
        out.append(f"[{'.'.join(map(str, path))}]")
        for key, val in d.items():
            if isinstance(val, dict):
                sections.append((path + (key,), val))
            else:
                out.append(f"{key} = {_fmt_value(val)}")
    return "\n".join(out) + "\n"


def parse_report(text: str) -> dict:
    """Inverse of format_report with every value kept as a string."""
    root: dict = {}
    cur = root
    for lineno, ln in enumerate(text.splitlines(), 1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("[") and ln.endswith("]"):
            cur = root
            for part in ln[1:-1].split("."):
                cur = cur.setdefault(part, {})
            continue
        key, sep, val = ln.partition("=")
        if not sep:
            raise ParseError("expected 'key = value'", lineno)
        cur[key.strip()] = val.strip()
    return root


def save_report(report: dict, path) -> None:
    Path(path).write_text(format_report(report), encoding="utf-8")


# ---------------------------------------------------------------------------
# meshes

def surface_points(surface: SurfaceParam) -> np.ndarray:
    """F(s_i, t_j) as an (n_s, n_t, 3) array."""
    return surface.F()


def _check_mesh_grid(n_s, n_t):
    if n_s < 3 or n_t < 3:
        raise MeshGridError(f"grid {n_s}x{n_t} cannot be tessellated (need at least 3x3)")


def mesh_faces(n_s: int, n_t: int) -> np.ndarray:
    """Quads on the doubly periodic grid (seam vertices welded), 1-based OBJ indices."""
    i, j = np.meshgrid(np.arange(n_s), np.arange(n_t), indexing="ij")
    idx = lambda a, b: (a % n_s) * n_t + (b % n_t) + 1
    return np.stack([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)], -1).reshape(-1, 4)


def write_obj(points: np.ndarray, path, comment: str = "") -> None:
    n_s, n_t, _ = points.shape
    _check_mesh_grid(n_s, n_t)
    lines = [f"# {ln}" for ln in comment.splitlines()]
    lines += [f"v {_f(x)} {_f(y)} {_f(z)}" for x, y, z in points.reshape(-1, 3)]
    lines += [f"f {a} {b} {c} {d}" for a, b, c, d in mesh_faces(n_s, n_t)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_obj(path):
    """(vertices, faces) of an OBJ written by write_obj."""
    v, f = [], []
    for lineno, ln in _lines(path):
        if ln.startswith("v "):
            v.append(_floats(ln.split()[1:], lineno))
        elif ln.startswith("f "):
            f.append([int(x) for x in ln.split()[1:]])
    return np.array(v), np.array(f, dtype=int)


def export_surface(profile, path, n_s: int = 64, n_t: int = 64) -> SurfaceParam:
    """OBJ mesh of the surface of revolution; returns the sampled surface."""
    _check_mesh_grid(n_s, n_t)
    if isinstance(profile, SurfaceParam):
        surface = profile
    elif isinstance(profile, CapSegmentProfile):
        from .modesolve.chart import Chart
        surface = Chart(profile).surface(n_s, n_t)
    else:
        surface = SurfaceParam.from_curve(profile, n_s, n_t)
    write_obj(surface_points(surface), path)
    return surface


def export_frames(surface: SurfaceParam, field, epsilon: float, n_frames: int, outdir) -> list:
    """Meshes of F + (j*epsilon/n_frames) Z for j = 0..n_frames, plus a README with the disclaimer."""
    if n_frames < 1:
        raise MeshGridError("n_frames must be positive")
    if field.shape != (len(surface.s), len(surface.t)):
        raise MeshGridError("field and surface grids differ")
    os.makedirs(outdir, exist_ok=True)
    F = surface_points(surface)
    Z = field.Z()
    paths = []
    for j in range(n_frames + 1):
        P = F if j == 0 else F + (j * epsilon / n_frames) * Z
        p = Path(outdir) / f"frame_{j:04d}.obj"
        write_obj(P, p)
        paths.append(p)
    (Path(outdir) / "README.txt").write_text(FRAMES_DISCLAIMER, encoding="utf-8")
    return paths
