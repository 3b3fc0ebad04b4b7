"""Independent checks that a sampled vector field is a (nontrivial) infinitesimal deformation.

Every check works on the sampled surface F(s, t) and field Z(s, t) in the ambient
space: the three first-order metric variations

    Z_s . F_s,   Z_t . F_t,   Z_s . F_t + Z_t . F_s

must vanish. In the frame (gamma, gamma', k) they are the three scalar equations
r' a_s + h' c_s, r (a + b_t) and r' (a_t - b) + r b_s + h' c_t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDefect, GridMismatch
from .modesolve.field import DeformationField, ModeProfile
from .profile import SurfaceParam

RESIDUAL_TOL = 1e-8
EPS_LIST = (1e-2, 1e-3, 1e-4, 1e-5)


def _check_grid(fld: DeformationField, surface: SurfaceParam):
    if fld.shape != surface.shape or not (np.allclose(fld.s, surface.s, rtol=0, atol=1e-14)
                                          and np.allclose(fld.t, surface.t, rtol=0, atol=1e-14)):
        raise GridMismatch(f"field grid {fld.shape} does not match surface grid {surface.shape}")


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


@dataclass
class ResidualReport:
    res_ss: float  # sup norms, absolute
    res_tt: float
    res_mixed: float
    rms_ss: float
    rms_tt: float
    rms_mixed: float
    scale: float  # max over nodes of |JZ| |JF|
    grid: tuple
    scheme: str = "stored s-derivatives; exact t-derivatives"

    @property
    def relative(self):
        sc = self.scale if self.scale > 0 else 1.0
        return {"ss": self.res_ss / sc, "tt": self.res_tt / sc, "mixed": self.res_mixed / sc}

    @property
    def max_relative(self) -> float:
        return max(self.relative.values())

    def passed(self, tol: float = RESIDUAL_TOL) -> bool:
        return self.max_relative <= tol


def deformation_residuals(fld: DeformationField, surface: SurfaceParam) -> ResidualReport:
    _check_grid(fld, surface)
    Zs, Zt = fld.Z_s(), fld.Z_t()
    Fs, Ft = surface.F_s(), surface.F_t()
    e_ss = _dot(Zs, Fs)
    e_tt = _dot(Zt, Ft)
    e_st = _dot(Zs, Ft) + _dot(Zt, Fs)
    jz = np.sqrt(_dot(Zs, Zs) + _dot(Zt, Zt))
    jf = np.sqrt(_dot(Fs, Fs) + _dot(Ft, Ft))
    scale = float(np.max(jz * jf))
    rms = lambda e: float(np.sqrt(np.mean(e**2)))
    return ResidualReport(float(np.max(np.abs(e_ss))), float(np.max(np.abs(e_tt))), float(np.max(np.abs(e_st))),
                          rms(e_ss), rms(e_tt), rms(e_st), scale, surface.shape)


def first_fundamental_form(Fs, Ft):
    return _dot(Fs, Fs), _dot(Fs, Ft), _dot(Ft, Ft)


def isometry_defects(fld: DeformationField, surface: SurfaceParam, eps_list=EPS_LIST, normalize: bool = True):
    """D(eps) = max |E_eps - E|, |F_eps - F|, |G_eps - G| for the surface F + eps Z.

    With ``normalize`` the field is first scaled so that max|JZ| = max|JF|, making
    eps a relative amplitude.
    """
    _check_grid(fld, surface)
    Fs, Ft = surface.F_s(), surface.F_t()
    Zs, Zt = fld.Z_s(), fld.Z_t()
    if normalize:
        jz = float(np.max(np.sqrt(_dot(Zs, Zs) + _dot(Zt, Zt))))
        jf = float(np.max(np.sqrt(_dot(Fs, Fs) + _dot(Ft, Ft))))
        if jz > 0:
            Zs, Zt = Zs * (jf / jz), Zt * (jf / jz)
    E, F, G = first_fundamental_form(Fs, Ft)
    out = []
    for eps in eps_list:
        Ee, Fe, Ge = first_fundamental_form(Fs + eps * Zs, Ft + eps * Zt)
        out.append(float(max(np.max(np.abs(Ee - E)), np.max(np.abs(Fe - F)), np.max(np.abs(Ge - G)))))
    return np.array(out)


def isometry_order(fld: DeformationField, surface: SurfaceParam, eps_list=EPS_LIST) -> float:
    """Least-squares slope of log D(eps) against log eps."""
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) < 2:
        raise ValueError("need at least two eps values")
    D = isometry_defects(fld, surface, eps)
    Fs, Ft = surface.F_s(), surface.F_t()
    floor = 64 * np.finfo(float).eps * float(np.max(_dot(Fs, Fs) + _dot(Ft, Ft)))
    if np.all(D <= floor):
        raise DegenerateDefect("metric defect at machine floor for every eps: field is rigid at grid resolution")
    D = np.maximum(D, floor)
    slope, _ = np.polyfit(np.log(eps), np.log(D), 1)
    return float(slope)


@dataclass
class TrivialFit:
    mu: np.ndarray
    omega: np.ndarray
    relative_residual: float
    normal_residual: float


def _skew(F):
    # [F]_x with [F]_x v = F x v, for F of shape (N, 3)
    z = np.zeros(len(F))
    return np.stack([
        np.stack([z, -F[:, 2], F[:, 1]], -1),
        np.stack([F[:, 2], z, -F[:, 0]], -1),
        np.stack([-F[:, 1], F[:, 0], z], -1),
    ], 1)


def triviality_fit(fld: DeformationField, surface: SurfaceParam) -> TrivialFit:
    """Least-squares fit Z ~ mu x F + omega over all grid nodes."""
    _check_grid(fld, surface)
    F = surface.F().reshape(-1, 3)
    Z = fld.Z().reshape(-1, 3)
    A = np.concatenate([-_skew(F), np.broadcast_to(np.eye(3), (len(F), 3, 3))], axis=2).reshape(-1, 6)
    b = Z.reshape(-1)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    r = A @ x - b
    nz = float(np.linalg.norm(b))
    rel = float(np.linalg.norm(r) / nz) if nz > 0 else 0.0
    nres = float(np.linalg.norm(A.T @ r) / max(1.0, np.linalg.norm(A.T @ b)))
    return TrivialFit(x[:3], x[3:], rel, nres)


def gram_singular_values(fields, weights=None):
    """Singular values of the Gram matrix of the normalized fields (flattened samples of Z)."""
    V = []
    for f in fields:
        z = f.Z().reshape(-1)
        n = np.linalg.norm(z)
        if n == 0:
            raise DegenerateDefect("zero field in Gram test")
        V.append(z / n)
    V = np.array(V)
    G = V @ V.T
    return np.linalg.svd(G, compute_uv=False), G


# ---------------------------------------------------------------------------
# finite-difference cross-check of a mode solution

_CENTRAL = (np.array([-2, -1, 1, 2]), np.array([1, -8, 8, -1]) / 12.0)
_FORWARD = (np.array([0, 1, 2, 3, 4]), np.array([-25, 48, -36, 16, -3]) / 12.0)


def _fd(fun, s, h, lo, hi):
    """4th-order derivative of fun at s, one-sided if the central stencil would leave [lo, hi)."""
    if s - 2 * h >= lo and s + 2 * h < hi:
        off, w = _CENTRAL
    elif s + 4 * h < hi:
        off, w = _FORWARD
    else:
        off, w = -_FORWARD[0], -_FORWARD[1]
    vals = fun(s + off * h)
    return np.tensordot(w, vals, axes=([0], [-1])) / h if vals.ndim > 1 else float(w @ vals) / h


def fd_crosscheck(mode, n_s: int = 256, rel_step: float = 3e-5):
    """Max relative difference between the stored s-derivatives of (Psi, X) and 4th-order differences.

    Stencils never cross chart junctions.
    """
    chart = mode.chart
    s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
    idx = chart.locate(s)
    vals = mode.evaluate(s)
    err = np.zeros((2, n_s))
    for j, sj in enumerate(s):
        pc = chart.pieces[idx[j]]
        h = rel_step * (pc.s1 - pc.s0)
        lo, hi = pc.s0, pc.s1 - 1e-15
        d = _fd(lambda q: mode.evaluate(q)[[0, 2]], sj, h, lo, hi)
        err[:, j] = np.abs(d - vals[[1, 3], j])
    scale = np.max(np.abs(vals[[1, 3]]), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    return {"psi_s": float(np.max(err[0]) / scale[0]), "X_s": float(np.max(err[1]) / scale[1])}


def fd_field(mode, n_s: int = 256, n_t: int = 128, rel_step: float = 3e-5) -> DeformationField:
    """The mode's field with s-derivatives replaced by one-sided-at-junction 4th-order differences."""
    chart = mode.chart
    k = mode.k
    s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
    t = np.linspace(0, 2 * np.pi, n_t, endpoint=False)
    idx = chart.locate(s)
    psi, _, X, _ = mode.evaluate(s)
    d = np.zeros((2, n_s))
    for j, sj in enumerate(s):
        pc = chart.pieces[idx[j]]
        h = rel_step * (pc.s1 - pc.s0)
        d[:, j] = _fd(lambda q: mode.evaluate(q)[[0, 2]], sj, h, pc.s0, pc.s1 - 1e-15)
    mp = ModeProfile(-1j * k * psi, psi + 0j, 1j * X / k, -1j * k * d[0], d[0] + 0j, 1j * d[1] / k)
    return DeformationField(s, t, {k: mp}, "C2", {"scheme": "finite differences"})


# ---------------------------------------------------------------------------
# smoothness

@dataclass
class JunctionDefect:
    name: str
    kind: str  # apex | match | closure
    jumps: tuple  # psi, psi', psi'', psi''' in the junction's local parameter
    relative: tuple
    exempt_orders: tuple = ()


@dataclass
class SmoothnessReport:
    rows: list = field(default_factory=list)

    def closure(self) -> JunctionDefect:
        return next(r for r in self.rows if r.kind == "closure")

    def passed(self, closure_tol: float = 1e-6, match_tol: float = 1e-7, apex_tol: float = 1e-14) -> bool:
        """Closure: psi and psi' exact, psi'' within closure_tol, third derivative exempt.

        Interior apices must match exactly, matching heights within match_tol.
        """
        for r in self.rows:
            if r.kind == "closure":
                tols = (apex_tol, apex_tol, closure_tol, math.inf)
            elif r.kind == "apex":
                tols = (apex_tol,) * 4
            else:
                tols = (match_tol,) * 4
            if any(v > tl for v, tl in zip(r.relative, tols)):
                return False
        return True


def _rel(a, b):
    return tuple(float(abs(x - y) / max(abs(x), abs(y), 1e-300)) if (x != y) else 0.0 for x, y in zip(a, b))


def smoothness_report(mode) -> SmoothnessReport:
    """One-sided jumps of psi..psi''' at every apex, matching height and the closure apex."""
    rows = []
    prof = mode.profile
    n = prof.n
    for i in range(n):
        ser = mode.series[i]
        derivs = [float(ser(0.0, m)) for m in range(4)]
        c_dep = mode.cap_scales[i]
        c_arr = mode.cap_scales[i - 1] * mode.glue_scales[i - 1] if i > 0 else mode.sigma
        left = tuple(c_arr * v for v in derivs)
        right = tuple(c_dep * v for v in derivs)
        jumps = tuple(a - b for a, b in zip(left, right))
        rel = _rel(left, right)
        if i == 0:
            rel = (abs(jumps[0]), abs(jumps[1]), abs(mode.sigma - 1), abs(mode.sigma - 1))
            rows.append(JunctionDefect("cap 0 apex (closure)", "closure", jumps, rel, exempt_orders=(3,)))
        else:
            rows.append(JunctionDefect(f"cap {i} apex", "apex", jumps, rel))
    k2 = mode.k**2 - 1
    for i in range(n):
        seg = prof.segments[i]
        m = mode.shots[i].match
        z = m.zm
        c = mode.cap_scales[i]
        lam = mode.glue_scales[i]
        pf, dpf, _ = m.forward.graph_eval(np.array([z]))
        pb, dpb, _ = m.backward.graph_eval(np.array([z]))
        R, R1, R2, R3 = (float(seg.R(z, o)) for o in range(4))
        q = k2 * R2 / R
        dq = k2 * (R3 / R - R2 * R1 / R**2)

        def four(p, dp):
            p, dp = float(p[0]), float(dp[0])
            return (p, dp, -q * p, -dq * p - q * dp)

        left = tuple(c * v for v in four(pf, dpf))
        right = tuple(c * lam * v for v in four(pb, dpb))
        scale = max(abs(left[0]), abs(left[1]) / max(1.0, math.sqrt(abs(q))), 1e-300)
        jumps = tuple(a - b for a, b in zip(left, right))
        rel = (abs(jumps[0]) / scale, abs(jumps[1]) / (scale * max(1.0, math.sqrt(abs(q)))),
               abs(jumps[2]) / (scale * max(1.0, abs(q))), abs(jumps[3]) / (scale * max(1.0, abs(q)) ** 1.5))
        rows.append(JunctionDefect(f"segment {i} matching height z={z:.6g}", "match", jumps, rel))
    return SmoothnessReport(rows)
