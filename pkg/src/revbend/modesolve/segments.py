"""Segment integration and pocket shooting.

Each segment joins cap i (departure) to cap i+1 (arrival). A *leg* starts at a
cap apex with the normalized series solution, follows the cap core in the
abscissa u = x - x0 (travel variable |u|), then the segment graph in z, and
stops at the pocket centre zm. The forward leg starts at cap i, the backward
leg at cap i+1. With both phases expressed with the same scale S at zm the
Wronskian of the two legs is proportional to sin(theta_f + theta_b), so the
segment is matched exactly when Delta = theta_f + theta_b is a multiple of pi,
and ceil(Delta/pi) - 1 counts the zeros of the glued solution between the
apices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from ..errors import BisectionStall, NoCountJump, PositivityError
from .frobenius import FrobeniusSeries, frobenius_cap_solution, handoff_radius
from .pruefer import RTOL as ODE_TOL
from .pruefer import PhaseSolution, integrate_pruefer, phase_of

SHOOT_TOL = 1e-8
HANDOFF_COND = 1e4


# ---------------------------------------------------------------------------
# plain segment integration

@dataclass
class SegmentSolution:
    """Solution of Psi'' + (k^2-1) R''/R Psi = 0 on part of a segment, in z."""

    seg_index: int
    k: int
    z_from: float
    z_to: float
    phase: PhaseSolution
    direction: int  # +1 if z increases along the travel
    samples: np.ndarray = field(default=None, repr=False)  # columns z, psi, dpsi, phase
    zero_count: int = 0
    endpoint_value: float = 0.0
    t: Optional[float] = None  # pocket parameter used (None: the installed one)

    def evaluate(self, z):
        """(Psi, dPsi/dz, theta) at heights z."""
        y = self.direction * np.asarray(z, dtype=float)
        psi, dpsi, th = self.phase.evaluate(y)
        return psi, self.direction * dpsi, th


def _seg_beta(seg, k, t, d):
    k2 = k * k - 1.0
    ev = seg.scalar_evaluator(t)

    def beta(y):
        R, R2 = ev(d * y)
        if R <= 0:
            raise PositivityError(f"R <= 0 at z={d * y:.12g}")
        return k2 * R2 / R

    return beta


def _scale_for(beta, ya, yb):
    ys = np.linspace(ya, yb, 9)
    return max(1.0, math.sqrt(max(abs(beta(y)) for y in ys)))


def _integrate_graph(seg, k, t, d, z_a, z_b, psi, dpsi_y, theta=None, sol=None, ode_tol=ODE_TOL):
    """Travel along the graph from z_a to z_b (d = sign(z_b - z_a)); one scale S per smooth piece."""
    beta = _seg_beta(seg, k, t, d)
    ya, yb = d * z_a, d * z_b
    cuts = sorted({ya, yb, *(d * b for b in seg.breakpoints() if min(ya, yb) < d * b < max(ya, yb))})
    sol = sol if sol is not None else PhaseSolution()
    for a, b in zip(cuts, cuts[1:]):
        S = _scale_for(beta, a, b)
        sol = integrate_pruefer(beta, a, b, psi, dpsi_y, S, theta0=theta, previous=sol, rtol=ode_tol, atol=ode_tol)
        if sol.trivial:
            return sol
        psi, dpsi_y, theta = sol.end_state()
    return sol


def integrate_segment(profile, seg_index: int, k: int, init, z_from: float, z_to: float,
                      t: Optional[float] = None, n_samples: int = 257, theta0: Optional[float] = None) -> SegmentSolution:
    """Integrate the mode equation on segment ``seg_index`` from z_from to z_to.

    ``init`` is (Psi, dPsi/dz) at z_from; travel direction follows sign(z_to - z_from).
    """
    seg = profile.segments[seg_index]
    lo, hi = min(z_from, z_to), max(z_from, z_to)
    if lo < seg.za - 1e-12 or hi > seg.zb + 1e-12:
        raise ValueError("integration range leaves the segment")
    d = 1 if z_to > z_from else -1
    psi0, dpsi0 = float(init[0]), float(init[1])
    sol = _integrate_graph(seg, k, t, d, z_from, z_to, psi0, d * dpsi0, theta0)
    out = SegmentSolution(seg_index, k, z_from, z_to, sol, d, t=t)
    zz = np.linspace(z_from, z_to, n_samples)
    psi, dpsi, th = out.evaluate(zz)
    out.samples = np.column_stack([zz, psi, dpsi, th])
    out.zero_count = sol.zero_count()
    quarter = np.abs(psi[-(n_samples // 4):])
    amp = float(np.max(quarter)) if quarter.size else 0.0
    out.endpoint_value = float(psi[-1] / amp) if amp > 0 else 0.0
    return out


def count_zeros(solution) -> int:
    """Interior zeros of a segment solution, from its Prüfer phase."""
    return solution.phase.zero_count() if isinstance(solution, SegmentSolution) else solution.zero_count()


def ode_residual(solution: SegmentSolution, profile, n: int = 101, h: float = None):
    """max |Psi'' + q Psi| / max(|Psi''|, |q Psi|) on interior samples, Psi'' by central differences of dPsi."""
    seg = profile.segments[solution.seg_index]
    k2 = solution.k**2 - 1
    lo, hi = sorted((solution.z_from, solution.z_to))
    h = h or 1e-4 * (hi - lo)
    zz = np.linspace(lo + 4 * h, hi - 4 * h, n)
    bps = np.array(seg.breakpoints())
    zz = zz[np.min(np.abs(zz[:, None] - bps[None, :]), axis=1) > 3 * h]
    _, d1p, _ = solution.evaluate(zz + h)
    _, d1m, _ = solution.evaluate(zz - h)
    _, d2p, _ = solution.evaluate(zz + 2 * h)
    _, d2m, _ = solution.evaluate(zz - 2 * h)
    d2 = (8 * (d1p - d1m) - (d2p - d2m)) / (12 * h)
    psi, _, _ = solution.evaluate(zz)
    q = k2 * seg.R(zz, 2, t=solution.t) / seg.R(zz, t=solution.t)
    scale = np.maximum(np.abs(d2), np.abs(q * psi)).max()
    return float(np.max(np.abs(d2 + q * psi)) / scale) if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# legs from a cap apex

@dataclass
class Leg:
    """Solution from a cap apex (Frobenius, scale 1) along one side to a stopping height."""

    cap_index: int
    side: int  # x-side of the apex the leg leaves along
    d: int  # travel sign in z on the segment
    series: FrobeniusSeries
    u_h: float  # series used for |u| <= u_h
    n_core: int  # zeros of the series in (0, u_h]
    core: Optional[PhaseSolution]  # travel |u| on [u_h, delta1/2]
    graph: PhaseSolution  # travel d*z from the cap boundary height
    ode_tol: float = ODE_TOL

    def core_eval(self, absu):
        """(Psi, dPsi/d|u|) on the core, |u| in [0, delta1/2]."""
        absu = np.asarray(absu, dtype=float)
        psi = self.series(self.side * absu)
        dpsi = self.side * self.series(self.side * absu, 1)
        if self.core is not None:
            m = absu > self.u_h
            if np.any(m):
                p, dp, _ = self.core.evaluate(absu[m])
                psi = np.where(m, 0.0, psi)
                dpsi = np.where(m, 0.0, dpsi)
                psi[m], dpsi[m] = p, dp
        return psi, dpsi

    def graph_eval(self, z):
        """(Psi, dPsi/dz, theta) on the graph part."""
        psi, dpsi, th = self.graph.evaluate(self.d * np.asarray(z, dtype=float))
        return psi, self.d * dpsi, th


def _core_beta(cap, side, k):
    k2 = k * k - 1.0
    x0 = cap.x0
    return (lambda y: -k2 / ((x0 + side * y) * side * y)), (lambda y: -1.0 / y)


def _series_phase(series, side, u_h, S):
    """Phase of the series state at |u| = u_h, lifted from theta = 0 at the apex."""
    us = np.linspace(0, u_h, 2001)[1:]
    vals = series(side * us)
    n_core = int(np.count_nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0))
    psi = float(series(side * u_h))
    dpsi = float(side * series(side * u_h, 1))
    return n_core, psi, dpsi, phase_of(psi, dpsi, S, n_core * math.pi + math.pi / 2)


def start_leg(profile, cap_index: int, side: int, seg_index: int, k: int, z_stop: float, t=None,
              handoff_cond: float = HANDOFF_COND, series: Optional[FrobeniusSeries] = None,
              ode_tol: float = ODE_TOL) -> Leg:
    cap = profile.caps[cap_index]
    seg = profile.segments[seg_index]
    series = series or frobenius_cap_solution(cap, k)
    u_b = cap.half_width
    u_h = handoff_radius(series, u_b, handoff_cond)
    beta_c, alpha_c = _core_beta(cap, side, k)
    S_c = max(1.0 / u_h, math.sqrt(abs(beta_c(u_h))))
    n_core, psi, dpsi, th = _series_phase(series, side, u_h, S_c)
    core = None
    if u_h < u_b:
        core = integrate_pruefer(beta_c, u_h, u_b, psi, dpsi, S_c, alpha=alpha_c, theta0=th, rtol=ode_tol, atol=ode_tol)
        psi, dpsi, th = core.end_state()
    # to the graph: dPsi/du = side dPsi/d|u|, dz/du = 2 K u
    z_b = cap.boundary_height()
    d = 1 if z_stop > z_b else -1
    dpsi_z = side * dpsi / (2 * cap.K * side * u_b)
    graph = _integrate_graph(seg, k, t, d, z_b, z_stop, psi, d * dpsi_z, th, ode_tol=ode_tol)
    return Leg(cap_index, side, d, series, u_h, n_core, core, graph, ode_tol)


def extend_leg(leg: Leg, profile, seg_index: int, k: int, z_stop: float, t=None) -> Leg:
    """Continue a leg's graph part to z_stop (further along the travel)."""
    seg = profile.segments[seg_index]
    psi, dpsi_y, th = leg.graph.end_state()
    z_from = leg.d * leg.graph.y_end
    g = PhaseSolution(list(leg.graph.pieces), leg.graph.trivial)
    g = _integrate_graph(seg, k, t, leg.d, z_from, z_stop, psi, dpsi_y, th, sol=g, ode_tol=leg.ode_tol)
    return replace(leg, graph=g)


# ---------------------------------------------------------------------------
# matching and shooting

@dataclass
class Match:
    t: float
    delta: float  # theta_f + theta_b at zm (common scale)
    count: int  # ceil(delta/pi) - 1
    scale: float  # lambda with forward = lambda * backward at zm
    forward: Leg
    backward: Leg
    zm: float
    S: float

    @property
    def residual(self) -> float:
        """Normalized Wronskian at zm: |sin(delta)|."""
        return abs(math.sin(self.delta))


class SegmentShooter:
    """Evaluates the matching of one segment as a function of the pocket parameter t.

    The legs up to the pocket's outer window edge (|z - z0| = 3 delta2) do not
    depend on the pocket and are computed once; ``rebind`` reuses them for a
    profile whose pocket on this segment has a different shape. The blend zone
    2 delta2 < |z - z0| < 3 delta2 depends on the pocket shape but not on t, so
    legs are also cached up to the inner window edge.
    """

    def __init__(self, profile, seg_index: int, k: int, handoff_cond: float = HANDOFF_COND,
                 ode_tol: float = ODE_TOL, _legs=None):
        self.profile = profile
        self.i = seg_index
        self.k = k
        seg = profile.segments[seg_index]
        n = profile.n
        self.seg = seg
        p = seg.pocket
        self.zm = p.z0 if p is not None else 0.5 * (seg.za + seg.zb)
        dirn = seg.direction
        w = 3 * p.delta2 if p is not None else 0.0
        zf_out, zb_out = self.zm - dirn * w, self.zm + dirn * w
        self.handoff_cond = handoff_cond
        self.ode_tol = ode_tol
        if _legs is None:
            _legs = (
                start_leg(profile, seg_index, seg.side_start, seg_index, k, zf_out, handoff_cond=handoff_cond,
                          ode_tol=ode_tol),
                start_leg(profile, (seg_index + 1) % n, seg.side_end, seg_index, k, zb_out,
                          handoff_cond=handoff_cond, ode_tol=ode_tol),
            )
        self._outer = _legs
        self.fwd0, self.bwd0 = _legs
        self.zf_win, self.zb_win = zf_out, zb_out  # where the cached legs stop
        if p is not None:
            self.zf_win, self.zb_win = self.zm - dirn * 2 * p.delta2, self.zm + dirn * 2 * p.delta2
            self.fwd0 = extend_leg(self.fwd0, profile, seg_index, k, self.zf_win)
            self.bwd0 = extend_leg(self.bwd0, profile, seg_index, k, self.zb_win)
        self._cache = {}

    def rebind(self, profile) -> "SegmentShooter":
        """Shooter for ``profile`` whose segment differs from ours only inside the pocket window."""
        p_new, p_old = profile.segments[self.i].pocket, self.seg.pocket
        if p_new is None or p_old is None or (p_new.z0, p_new.delta2) != (p_old.z0, p_old.delta2):
            return SegmentShooter(profile, self.i, self.k, self.handoff_cond, self.ode_tol)
        return SegmentShooter(profile, self.i, self.k, self.handoff_cond, self.ode_tol, _legs=self._outer)

    def match(self, t: Optional[float] = None) -> Match:
        key = None if t is None else float(t)
        if key in self._cache:
            return self._cache[key]
        fwd = extend_leg(self.fwd0, self.profile, self.i, self.k, self.zm, t) if self.zf_win != self.zm else self.fwd0
        bwd = extend_leg(self.bwd0, self.profile, self.i, self.k, self.zm, t) if self.zb_win != self.zm else self.bwd0
        pf, dpf, thf = fwd.graph.end_state()
        pb, dpb, thb = bwd.graph.end_state()
        S = fwd.graph.pieces[-1].S
        thf = phase_of(pf, dpf, S, thf)
        thb = phase_of(pb, dpb, S, thb)
        delta = thf + thb
        # forward = lambda * backward, with dPsi/dz (backward travel flips the derivative sign)
        u = np.array([pf, fwd.d * dpf / S])
        v = np.array([pb, bwd.d * dpb / S])
        lam = float(u @ v / (v @ v))
        m = Match(key if key is not None else float("nan"), delta, math.ceil(delta / math.pi) - 1, lam,
                  fwd, bwd, self.zm, S)
        self._cache[key] = m
        return m


def pocket_k_min(seg, n: int = 201) -> float:
    """Smallest k >= 2 with (k^2 - 1) min_{|w|<=1/2} (R1''/R1) >= (2 pi / delta2)^2 (inf if R1 not convex there)."""
    p = seg.pocket
    if p is None:
        return math.inf
    z = p.z0 + p.delta2 * np.linspace(-0.5, 0.5, n)
    ratio = float(np.min(p.f1_eval(z, 2) / p.f1_eval(z)))
    if ratio <= 0:
        return math.inf
    need = (2 * math.pi / p.delta2) ** 2 / ratio
    return max(2, math.ceil(math.sqrt(1 + need) - 1e-12))


@dataclass
class ShootResult:
    t_hat: float
    residual: float
    zero_count_jump: int
    count_before: int
    count_after: int
    target: int  # Delta(t_hat) = target * pi
    match: Match
    profile: object  # profile with R~_{t_hat} installed

    def __iter__(self):
        return iter((self.t_hat, self.residual, self.zero_count_jump))


def shoot_pocket(profile, seg_index: int, k: int, branch: int = 1, shoot_tol: float = SHOOT_TOL,
                 shooter: Optional[SegmentShooter] = None, n_bisect: int = 6,
                 target: Optional[int] = None) -> ShootResult:
    """Find t_hat in [0, 1] where the zero count jumps to count(0) + ``branch``; install it.

    Bisection on the count brackets the jump, then Delta(t) = target*pi is solved by
    brentq. ``target`` overrides the branch with an absolute count.
    """
    seg = profile.segments[seg_index]
    if seg.pocket is None:
        raise ValueError(f"segment {seg_index} has no pocket")
    sh = shooter or SegmentShooter(profile, seg_index, k)
    m0, m1 = sh.match(0.0), sh.match(1.0)
    target = m0.count + branch if target is None else int(target)
    if m1.count < target or m0.count >= target:
        kmin = pocket_k_min(seg)
        raise NoCountJump(f"zero counts {m0.count} (t=0) and {m1.count} (t=1) do not reach {target} at k={k}",
                          k_suggested=None if math.isinf(kmin) else max(kmin, k + 1))
    g = lambda t: sh.match(t).delta - target * math.pi
    lo, hi = 0.0, 1.0
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if sh.match(mid).count >= target:
            hi = mid
        else:
            lo = mid
    t_hat = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    mt = sh.match(t_hat)
    res = abs(math.sin(mt.delta))
    if res > shoot_tol:
        raise BisectionStall(f"residual {res:.3g} > {shoot_tol:g} at t={t_hat!r}")
    new_profile = profile.set_pocket_t(seg_index, t_hat)
    return ShootResult(t_hat, res, m1.count - m0.count, m0.count, m1.count, target, mt, new_profile)
