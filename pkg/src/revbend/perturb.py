"""Admissible perturbations of a generating curve.

Three moves, applied in order:

* rotation about the origin until the height function is Morse;
* capping: around every height critical point the local graph z = rho(x) is
  replaced by an exact parabola z0 + K (x - x0)^2 and blended back with a C^2
  bump, so each critical point becomes even analytic;
* pockets: on a segment x = R(z) a window is flattened to a concave f0 and then
  moved along the affine family (1 - t) f0 + t f1 towards a concave-convex-concave f1.

Only time-one images are stored. The flows producing them act on the curve as a
rotation, a vertical graph blend and a horizontal graph blend respectively, so
their parameters are kept as step metadata.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

from .errors import (
    AdmissibilityViolation,
    CapCollision,
    ConvexityConstructionFailure,
    MonotonicityLoss,
    NoMorseAngleFound,
    PocketOutOfBounds,
)
from .profile import ProfileCurve, morse_report


# ---------------------------------------------------------------------------
# small helpers

def smoothstep(v, order: int = 0):
    """Quintic smoothstep 6v^5 - 15v^4 + 10v^3 clamped to [0, 1], and its derivatives."""
    v = np.asarray(v, dtype=float)
    inside = (v > 0) & (v < 1)
    vc = np.clip(v, 0, 1)
    if order == 0:
        return vc**3 * (10 - 15 * vc + 6 * vc**2)
    if order == 1:
        out = 30 * vc**2 * (1 - vc) ** 2
    elif order == 2:
        out = 60 * vc * (1 - vc) * (1 - 2 * vc)
    elif order == 3:
        out = 60 * (1 - 6 * vc + 6 * vc**2)
    else:
        raise ValueError("order <= 3")
    return np.where(inside, out, 0.0)


def _leibniz(f, g, order):
    """order-th derivative of f*g from derivative lists f[0..order], g[0..order]."""
    return sum(math.comb(order, j) * f[j] * g[order - j] for j in range(order + 1))


@dataclass(frozen=True)
class SupportBox:
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise ValueError("empty support box")
        if self.x_min <= 0:
            raise ValueError("support box must lie in the half-plane x > 0")

    def clearance(self, x, z) -> float:
        """Signed distance of the sample set to the box boundary (> 0 means strictly inside)."""
        x = np.asarray(x)
        z = np.asarray(z)
        return float(np.min(np.minimum.reduce([x - self.x_min, self.x_max - x, z - self.z_min, self.z_max - z])))

    def as_tuple(self):
        return (self.x_min, self.x_max, self.z_min, self.z_max)


@dataclass
class PerturbationStep:
    kind: str  # rotation | cap | pocket
    params: dict
    support: tuple  # (x_min, x_max, z_min, z_max)
    max_displacement: float
    admissible: bool = True


# ---------------------------------------------------------------------------
# caps, pockets, segments

@dataclass(frozen=True)
class Cap:
    """Exact parabola z = z0 + K (x - x0)^2 on |x - x0| <= delta1 / 2.

    ``direction`` is the sign of dx/ds at the apex in curve order: the curve
    arrives from x0 - direction*... and leaves towards x0 + direction*...
    """

    x0: float
    z0: float
    K: float
    delta1: float
    direction: int = 1
    blend_width: Optional[float] = None
    s: Optional[float] = None  # parameter of the critical point on the source curve

    @property
    def half_width(self) -> float:
        return self.delta1 / 2

    @property
    def index_sign(self) -> int:
        return 1 if self.K > 0 else -1

    def boundary_height(self) -> float:
        return self.z0 + self.K * self.half_width**2

    def height(self, x, order=0):
        u = np.asarray(x, dtype=float) - self.x0
        if order == 0:
            return self.z0 + self.K * u**2
        if order == 1:
            return 2 * self.K * u
        if order == 2:
            return np.full_like(u, 2 * self.K)
        return np.zeros_like(u)

    def inverse(self, z, side: int, order: int = 0):
        """x(z) on the branch x - x0 = side * sqrt((z - z0)/K), with z-derivatives."""
        w = np.sqrt(np.maximum((np.asarray(z, dtype=float) - self.z0) / self.K, 0.0))
        K = self.K
        if order == 0:
            return self.x0 + side * w
        if order == 1:
            return side / (2 * K * w)
        if order == 2:
            return -side / (4 * K**2 * w**3)
        if order == 3:
            return 3 * side / (8 * K**3 * w**5)
        raise ValueError("order <= 3")


@dataclass
class PocketSpec:
    """Pocket on [z0 - 2*delta2, z0 + 2*delta2]; f0, f1 are polynomials in w = (z - z0)/delta2.

    Outside that window the graph is blended back to the segment's R over
    2*delta2 <= |z - z0| <= 3*delta2.
    """

    z0: float
    delta2: float
    t: float
    f0: tuple  # power coefficients in w
    f1: tuple
    amplitude: float = 0.0
    kappa: float = 0.0  # f0 curvature expressed as c0*delta2^2/amplitude

    def __post_init__(self):
        self.f0 = tuple(float(v) for v in self.f0)
        self.f1 = tuple(float(v) for v in self.f1)
        self._p0 = Polynomial(self.f0)
        self._p1 = Polynomial(self.f1)

    def with_t(self, t: float) -> "PocketSpec":
        return PocketSpec(self.z0, self.delta2, float(t), self.f0, self.f1, self.amplitude, self.kappa)

    def f0_eval(self, z, order=0):
        w = (np.asarray(z, dtype=float) - self.z0) / self.delta2
        return self._p0.deriv(order)(w) / self.delta2**order if order else self._p0(w)

    def f1_eval(self, z, order=0):
        w = (np.asarray(z, dtype=float) - self.z0) / self.delta2
        return self._p1.deriv(order)(w) / self.delta2**order if order else self._p1(w)

    def family(self, z, t=None, order=0):
        t = self.t if t is None else t
        return (1 - t) * self.f0_eval(z, order) + t * self.f1_eval(z, order)

    @property
    def breakpoints(self):
        d = self.delta2
        return [self.z0 - 3 * d, self.z0 - 2 * d, self.z0 + 2 * d, self.z0 + 3 * d]


@dataclass
class Segment:
    """Monotone-height arc between caps i and i+1, stored as x = R(z) on [za, zb].

    R is piecewise Chebyshev on ``knots`` (graded geometrically towards both
    ends, where the graph approaches the square-root behaviour of the caps).
    ``direction`` is +1 if the height increases from cap i to cap i+1.
    ``side_start``/``side_end`` are the x-sides of the adjacent cap apices the
    arc attaches to.
    """

    za: float
    zb: float
    knots: tuple
    coeffs: tuple  # one tuple of Chebyshev coefficients per knot interval
    direction: int
    side_start: int
    side_end: int
    pocket: Optional[PocketSpec] = None

    def __post_init__(self):
        self.knots = tuple(float(k) for k in self.knots)
        self.coeffs = tuple(tuple(float(c) for c in cc) for cc in self.coeffs)
        if len(self.coeffs) != len(self.knots) - 1:
            raise ValueError("need one coefficient block per knot interval")
        self._pieces = []
        for (a, b), cc in zip(zip(self.knots, self.knots[1:]), self.coeffs):
            ch = Chebyshev(cc, domain=[a, b])
            self._pieces.append([ch] + [ch.deriv(m) for m in range(1, 4)])
        # plain coefficient lists for the scalar evaluator
        self._scalar_pieces = []
        for (a, b), cc in zip(zip(self.knots, self.knots[1:]), self.coeffs):
            sc = 2.0 / (b - a)
            c1 = C.chebder(cc) * sc
            c2 = C.chebder(cc, 2) * sc * sc
            self._scalar_pieces.append((a, b, 0.5 * (a + b), sc, list(cc), list(c1), list(c2)))

    @property
    def degree(self) -> int:
        return max(len(c) for c in self.coeffs) - 1

    @property
    def z_start(self):
        return self.za if self.direction > 0 else self.zb

    @property
    def z_end(self):
        return self.zb if self.direction > 0 else self.za

    def base(self, z, order=0):
        z = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self.knots, z, side="right") - 1, 0, len(self._pieces) - 1)
        if z.ndim == 0:
            return self._pieces[int(idx)][order](z)
        out = np.empty_like(z)
        for j in np.unique(idx):
            m = idx == j
            out[m] = self._pieces[j][order](z[m])
        return out

    def R(self, z, order=0, t=None):
        """Current graph R~_t (with pocket if any) and its z-derivatives up to 3."""
        z = np.asarray(z, dtype=float)
        base = self.base(z, order)
        p = self.pocket
        if p is None:
            return base
        t = p.t if t is None else t
        w = (z - p.z0) / p.delta2
        aw = np.abs(w)
        out = np.array(base, dtype=float, copy=True)
        inner = aw <= 2
        if np.any(inner):
            out = np.where(inner, p.family(z, t, order), out)
        blend = (aw > 2) & (aw < 3)
        if np.any(blend):
            # R + eta (f0 - R), eta = 1 - smoothstep(|w| - 2)
            sgn = np.sign(w)
            eta = [1 - smoothstep(aw - 2)]
            for m in range(1, order + 1):
                eta.append(-smoothstep(aw - 2, m) * sgn**m / p.delta2**m)
            diff = [p.f0_eval(z, m) - self.base(z, m) for m in range(order + 1)]
            val = self.base(z, order) + _leibniz(eta, diff, order)
            out = np.where(blend, val, out)
        return out

    def scalar_evaluator(self, t=None):
        """Fast scalar z -> (R~_t, R~_t'') used inside ODE right-hand sides."""
        pieces = self._scalar_pieces
        knots = self.knots

        def base(z):
            j = bisect.bisect_right(knots, z) - 1
            j = min(max(j, 0), len(pieces) - 1)
            a, b, m, sc, c0, c1, c2 = pieces[j]
            x = (z - m) * sc
            return _clenshaw(c0, x), _clenshaw(c1, x), _clenshaw(c2, x)

        p = self.pocket
        if p is None:
            def ev(z):
                r0, _, r2 = base(z)
                return r0, r2
            return ev
        t = p.t if t is None else t
        d = p.delta2
        fam = [(1 - t) * a + t * b for a, b in zip(_pad(p.f0, 9), _pad(p.f1, 9))]
        fam1 = [j * fam[j] for j in range(1, len(fam))]
        fam2 = [j * fam1[j] for j in range(1, len(fam1))]
        f0 = _pad(p.f0, 3)
        z0 = p.z0

        def ev(z):
            w = (z - z0) / d
            aw = abs(w)
            if aw <= 2:
                return _horner(fam, w), _horner(fam2, w) / (d * d)
            if aw < 3:
                r0, r1, r2 = base(z)
                g0 = f0[0] + f0[1] * w + f0[2] * w * w
                g1 = (f0[1] + 2 * f0[2] * w) / d
                g2 = 2 * f0[2] / (d * d)
                v = aw - 2
                sg = 1.0 if w > 0 else -1.0
                eta = 1 - v**3 * (10 - 15 * v + 6 * v * v)
                eta1 = -30 * v * v * (1 - v) ** 2 * sg / d
                eta2 = -60 * v * (1 - v) * (1 - 2 * v) / (d * d)
                return r0 + eta * (g0 - r0), r2 + eta2 * (g0 - r0) + 2 * eta1 * (g1 - r1) + eta * (g2 - r2)
            r0, _, r2 = base(z)
            return r0, r2

        return ev

    def breakpoints(self):
        pts = list(self.knots)
        if self.pocket is not None:
            pts += self.pocket.breakpoints
        return sorted(pts)


@dataclass
class CapSegmentProfile:
    """Cyclic alternating list cap_0, seg_0, cap_1, seg_1, ...; seg_i joins cap_i to cap_{i+1}."""

    caps: list
    segments: list
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.caps) != len(self.segments):
            raise ValueError("caps and segments must alternate")
        if len(self.caps) % 2:
            raise ValueError("number of caps must be even")

    @property
    def n(self):
        return len(self.caps)

    def next_cap(self, i):
        return self.caps[(i + 1) % self.n]

    def with_segment(self, i, seg, step=None) -> "CapSegmentProfile":
        segs = list(self.segments)
        segs[i] = seg
        prov = list(self.provenance) + ([step] if step is not None else [])
        return CapSegmentProfile(list(self.caps), segs, prov)

    def set_pocket_t(self, i, t) -> "CapSegmentProfile":
        seg = self.segments[i]
        return self.with_segment(i, replace(seg, pocket=seg.pocket.with_t(t)))

    def trace(self, n_per_piece: int = 256, t=None):
        """Sampled (x, z) points of every piece, in curve order."""
        xs, zs = [], []
        for i, cap in enumerate(self.caps):
            u = cap.direction * np.linspace(-cap.half_width, cap.half_width, n_per_piece)
            xs.append(cap.x0 + u)
            zs.append(cap.height(cap.x0 + u))
            seg = self.segments[i]
            z = _cheb_nodes(seg.za, seg.zb, n_per_piece)
            if seg.pocket is not None:
                z = np.union1d(z, np.linspace(seg.pocket.z0 - 3 * seg.pocket.delta2,
                                              seg.pocket.z0 + 3 * seg.pocket.delta2, n_per_piece))
            z = z[::seg.direction]
            xs.append(seg.R(z, t=t))
            zs.append(z)
        return np.concatenate(xs), np.concatenate(zs)

    def critical_census(self):
        """(count, index-sign sequence) of the height function; caps are the only critical points."""
        return len(self.caps), [c.index_sign for c in self.caps]


def _clenshaw(c, x):
    b1 = b2 = 0.0
    x2 = 2 * x
    for ck in reversed(c[1:]):
        b1, b2 = ck + x2 * b1 - b2, b1
    return c[0] + x * b1 - b2


def _horner(c, x):
    out = 0.0
    for ck in reversed(c):
        out = out * x + ck
    return out


def _pad(c, n):
    c = list(c)
    return c + [0.0] * (n - len(c))


def _cheb_nodes(a, b, n):
    k = np.arange(n)
    x = np.cos(np.pi * (k + 0.5) / n)
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * x)


# ---------------------------------------------------------------------------
# rotation

def rotate_to_morse(curve: ProfileCurve, box: SupportBox, theta_max: float, n_candidates: int = 50):
    """Smallest |theta| on the ladder 0, +d, -d, +2d, ... (d = theta_max/n) giving a Morse height."""
    if theta_max <= 0:
        raise ValueError("theta_max must be positive")
    ladder = [0.0]
    for j in range(1, n_candidates + 1):
        ladder += [j * theta_max / n_candidates, -j * theta_max / n_candidates]
    found_morse = False
    s = curve.grid()
    for theta in ladder:
        rc = curve.rotated(theta) if theta else curve
        if not morse_report(rc).is_morse:
            continue
        found_morse = True
        x, z = rc.r(s), rc.h(s)
        if np.min(x) <= 0 or box.clearance(x, z) <= 0:
            continue
        pts = np.column_stack([curve.r(s), curve.h(s)])
        disp = 2 * abs(math.sin(theta / 2)) * float(np.max(np.linalg.norm(pts, axis=1)))
        step = PerturbationStep("rotation", {"theta": theta}, box.as_tuple(), disp, True)
        return rc, step
    if found_morse:
        raise AdmissibilityViolation("every Morse rotation leaves the support box or the half-plane x > 0")
    raise NoMorseAngleFound(f"no Morse angle with |theta| <= {theta_max}")


# ---------------------------------------------------------------------------
# capping

@dataclass
class _CapBranch:
    cap: Cap
    s_c: float
    s_lo: float  # branch parameter range where |x - x0| <= 2 delta1
    s_hi: float
    s_in: float  # cap boundary |x - x0| = delta1/2 before the apex
    s_out: float  # and after


def _capped_height(curve, branch: _CapBranch, s):
    """Height of the capped curve on the branch: h + eta1(x) (f(x) - h)."""
    cap = branch.cap
    x = curve.r(s)
    u = np.abs(x - cap.x0)
    eta = 1 - smoothstep((u - cap.delta1 / 2) / (cap.delta1 / 2))
    h = curve.h(s)
    return h + eta * (cap.height(x) - h)


def _branch_limits(curve, s_c, x0, reach, direction):
    # walk away from s_c until |r - x0| >= reach while r stays monotone
    ds = 2 * np.pi / 8192
    out = []
    for sgn in (-1, 1):
        s = s_c
        for _ in range(8192 // 2):
            s_next = s + sgn * ds
            if np.sign(curve.r(s_next, 1)) != direction:
                raise CapCollision(f"x is not monotone within {reach:.3g} of the critical point at s={s_c:.6g}")
            if abs(curve.r(s_next) - x0) >= reach:
                f = lambda q: float(curve.r(q)) - (x0 + sgn * direction * reach)
                a, b = sorted((s, s_next))
                out.append(brentq(f, a, b, xtol=1e-14))
                break
            s = s_next
        else:
            raise CapCollision("cap window wraps the whole curve")
    return out


def _build_cap(curve, cp, delta1, delta2_cap, max_halvings=40):
    direction = int(np.sign(curve.r(cp.s, 1)))
    x0, z0 = cp.point
    s_lo, s_hi = _branch_limits(curve, cp.s, x0, 2 * delta1, direction)
    s_in, s_out = _branch_limits(curve, cp.s, x0, delta1 / 2, direction)
    rho2 = float(curve.h(cp.s, 2) / curve.r(cp.s, 1) ** 2)

    # window |u| < delta1 on the branch
    w_lo, w_hi = _branch_limits(curve, cp.s, x0, delta1, direction)
    ss = np.linspace(w_lo, w_hi, 2001)
    u = curve.r(ss) - x0
    rho = curve.h(ss)
    # rho' strictly monotone on the window (decreasing for maxima, increasing for minima)
    drho = curve.h(ss, 1) / curve.r(ss, 1)
    order = np.argsort(u)
    d_sorted = np.diff(drho[order])
    if not (np.all(d_sorted * np.sign(rho2) > 0)):
        raise MonotonicityLoss(f"rho' not strictly monotone on the cap window at s={cp.s:.6g}; shrink delta1")

    K = rho2 / 2
    for _ in range(max_halvings):
        gap = z0 + K * u**2 - rho
        if (K < 0 and np.all(gap >= -1e-15)) or (K > 0 and np.all(gap <= 1e-15)):
            break
        K /= 2
    else:
        raise MonotonicityLoss("no parabola coefficient satisfies the one-sided bound")
    cap = Cap(float(x0), float(z0), float(K), float(delta1), direction, delta1 / 2, float(cp.s))
    return _CapBranch(cap, cp.s, s_lo, s_hi, s_in, s_out), {"delta2": delta2_cap}


def cap_critical_points(curve: ProfileCurve, delta1_fraction: float = 0.1, delta2_fraction: float = 0.05,
                        degree: int = 24, box: Optional[SupportBox] = None) -> CapSegmentProfile:
    """Replace every height critical point by an exact parabola cap; refit segments as x = R(z).

    ``delta1 = delta1_fraction * (max r - min r)`` is the horizontal cap scale;
    ``delta2_fraction`` sizes the vertical extent of each cap box (metadata).
    """
    rep = morse_report(curve)
    if not rep.is_morse:
        raise ValueError("curve height is not Morse; rotate first")
    cps = rep.critical_points
    s = curve.grid()
    xr = float(np.ptp(curve.r(s)))
    zr = float(np.ptp(curve.h(s)))
    delta1 = delta1_fraction * xr
    delta2_cap = delta2_fraction * zr

    branches, meta = [], []
    for cp in cps:
        b, m = _build_cap(curve, cp, delta1, delta2_cap)
        branches.append(b)
        meta.append(m)

    n = len(branches)
    # windows (|u| <= 2 delta1) must be disjoint in parameter
    for i in range(n):
        a, b = branches[i], branches[(i + 1) % n]
        hi = a.s_hi
        lo = b.s_lo + (2 * np.pi if i == n - 1 else 0.0)
        if hi >= lo:
            raise CapCollision(f"cap windows {i} and {(i + 1) % n} overlap; shrink delta1")

    # no foreign part of the curve inside a cap box
    for i, br in enumerate(branches):
        cap = br.cap
        ss = np.linspace(br.s_lo, br.s_hi, 801)
        zs = curve.h(ss)
        zlo, zhi = zs.min() - delta2_cap, zs.max() + delta2_cap
        zlo, zhi = min(zlo, cap.z0 - delta2_cap), max(zhi, cap.z0 + delta2_cap)
        sg = curve.grid()
        inside_branch = _in_circ_interval(sg, br.s_lo, br.s_hi)
        xg, zg = curve.r(sg), curve.h(sg)
        foreign = (~inside_branch) & (np.abs(xg - cap.x0) < delta1) & (zg > zlo) & (zg < zhi)
        if np.any(foreign):
            raise CapCollision(f"cap box {i} meets another part of the curve")
        if box is not None and box.clearance([cap.x0 - delta1, cap.x0 + delta1], [zlo, zhi]) <= 0:
            raise AdmissibilityViolation(f"cap box {i} leaves the support box")

    caps = [b.cap for b in branches]

    # capped branch must stay monotone on either side of the apex
    for br in branches:
        for a, b in ((br.s_lo, br.s_c), (br.s_c, br.s_hi)):
            ss = np.linspace(a, b, 4001)
            hh = _capped_height(curve, br, ss)
            d = np.diff(hh)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise MonotonicityLoss(f"capping introduced a critical point near s={br.s_c:.6g}")

    segments = []
    max_disp = 0.0
    for i in range(n):
        a, b = branches[i], branches[(i + 1) % n]
        s_a = a.s_out
        s_b = b.s_in + (2 * np.pi if b.s_in < s_a else 0.0)
        seg, disp = _fit_segment(curve, a, b, s_a, s_b, degree)
        segments.append(seg)
        max_disp = max(max_disp, disp)

    steps = []
    for br, m in zip(branches, meta):
        cap = br.cap
        ss = np.linspace(br.s_lo, br.s_hi, 801)
        disp = float(np.max(np.abs(_capped_height(curve, br, ss) - curve.h(ss))))
        steps.append(PerturbationStep(
            "cap",
            {"x0": cap.x0, "z0": cap.z0, "K": cap.K, "delta1": cap.delta1, "eta2_delta2": m["delta2"],
             "K_initial": float(curve.h(br.s_c, 2) / curve.r(br.s_c, 1) ** 2 / 2)},
            (cap.x0 - delta1, cap.x0 + delta1, cap.z0 - 2 * m["delta2"] - delta1 * abs(cap.K) * delta1,
             cap.z0 + 2 * m["delta2"] + delta1 * abs(cap.K) * delta1),
            max(disp, max_disp),
            True,
        ))
    return CapSegmentProfile(caps, segments, steps)


def _in_circ_interval(s, lo, hi):
    two_pi = 2 * np.pi
    return ((s - lo) % two_pi) <= (hi - lo)


def _capped_point(curve, branches, s):
    """Capped curve height at parameter s (outside every cap window it is h)."""
    for br in branches:
        if br.s_lo <= s <= br.s_hi or br.s_lo <= s - 2 * np.pi <= br.s_hi or br.s_lo <= s + 2 * np.pi <= br.s_hi:
            ss = s
            if not br.s_lo <= ss <= br.s_hi:
                ss = s - 2 * np.pi if br.s_lo <= s - 2 * np.pi <= br.s_hi else s + 2 * np.pi
            return float(_capped_height(curve, br, ss))
    return float(curve.h(s))


def _segment_knots(za, zb, d_lo, d_hi, extra=()):
    """Knots graded geometrically away from both ends; d_lo, d_hi are the distances
    from each end to the nearby branch point of the inverse graph. Each ``extra``
    knot displaces the nearest graded knot so no piece becomes tiny (short pieces
    amplify root-finding noise in the second derivative)."""
    mid = 0.5 * (za + zb)
    knots = [za, mid, zb]
    for end, d, sgn in ((za, d_lo, 1), (zb, d_hi, -1)):
        j = 1
        while True:
            z = end + sgn * d * (2**j - 1)
            if sgn * (mid - z) <= d * 2 ** (j - 1):
                break
            knots.append(z)
            j += 1
    knots = sorted(knots)
    for e in extra:
        if not za < e < zb:
            continue
        i = int(np.argmin(np.abs(np.asarray(knots) - e)))
        if 0 < i < len(knots) - 1:
            knots[i] = e
        else:
            knots.append(e)
        knots = sorted(knots)
    return knots


def _fit_segment(curve, ca: _CapBranch, cb: _CapBranch, s_a, s_b, degree):
    a, b = ca.cap, cb.cap
    branches = [ca, cb]
    z_a, z_b = a.boundary_height(), b.boundary_height()
    direction = 1 if z_b > z_a else -1
    za, zb = min(z_a, z_b), max(z_a, z_b)
    height = lambda s: _capped_point(curve, branches, s)

    def R_of_z(z):
        f = lambda s: height(s) - z
        fa, fb = f(s_a), f(s_b)
        if fa == 0.0:
            return float(curve.r(s_a))
        if fb == 0.0:
            return float(curve.r(s_b))
        return float(curve.r(brentq(f, s_a, s_b, xtol=1e-15, rtol=1e-15)))

    side_start = a.direction
    side_end = -b.direction
    cap_lo, side_lo = (a, side_start) if direction > 0 else (b, side_end)
    cap_hi, side_hi = (b, side_end) if direction > 0 else (a, side_start)

    # heights where the blend hands back to the source curve (|x - x0| = delta1)
    extra = []
    for cap, side in ((cap_lo, side_lo), (cap_hi, side_hi)):
        f = lambda s: float(curve.r(s)) - (cap.x0 + side * cap.delta1)
        ss = np.linspace(s_a, s_b, 4097)
        vals = np.array([f(q) for q in ss])
        hit = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
        if len(hit):
            i = hit[0] if cap is a else hit[-1]  # nearest crossing to that cap
            extra.append(height(brentq(f, ss[i], ss[i + 1], xtol=1e-15)))
    d_lo = abs(za - cap_lo.z0)
    d_hi = abs(zb - cap_hi.z0)
    knots = _segment_knots(za, zb, d_lo, d_hi, extra)

    vR = np.vectorize(R_of_z)
    blocks = [Chebyshev.interpolate(vR, degree, domain=[k0, k1]) for k0, k1 in zip(knots, knots[1:])]

    # exact C^2 contact with the cap parabolas at both ends
    for blk_i, cap, side, z in ((0, cap_lo, side_lo, za), (-1, cap_hi, side_hi, zb)):
        targets = [(z, m, float(cap.inverse(z, side, m))) for m in range(3)]
        blocks[blk_i] = _hermite_correct_end(blocks[blk_i], targets)

    seg = Segment(za, zb, tuple(knots), tuple(tuple(bk.coef) for bk in blocks), direction, side_start, side_end)
    zz = np.linspace(za, zb, 513)
    disp = float(np.max(np.abs(seg.R(zz) - vR(zz))))
    return seg, disp


def _hermite_correct_end(cheb: Chebyshev, targets):
    """Add a quadratic-times-vanishing correction so the block meets (value, d1, d2) at one end
    while leaving the value, d1, d2 at the other end untouched."""
    a, b = cheb.domain
    z_end = targets[0][0]
    z_far = b if z_end == a else a
    # correction = (c0 + c1 (z - z_end) + c2 (z - z_end)^2) * ((z - z_far)/(z_end - z_far))^3
    L = z_end - z_far
    v = Polynomial([-z_far / L, 1 / L]) ** 3
    basis = [Polynomial([-z_end, 1.0]) ** j * v for j in range(3)]
    A = np.array([[bj.deriv(m)(z) if m else bj(z) for bj in basis] for z, m, _ in targets])
    rhs = np.array([val - (cheb.deriv(m)(z) if m else cheb(z)) for z, m, val in targets])
    c = np.linalg.solve(A, rhs)
    corr = sum(ci * bi for ci, bi in zip(c, basis))
    return cheb + Chebyshev(corr.convert(kind=Chebyshev, domain=cheb.domain).coef, domain=cheb.domain)


# ---------------------------------------------------------------------------
# pockets

POCKET_KAPPA = 0.05


def pocket_polynomials(x0, slope, delta2, amplitude, kappa=POCKET_KAPPA, c0=None):
    """Concave f0 and concave-convex-concave f1 as power series in w = (z - z0)/delta2.

    f0 = x0 + slope*delta2*w - c0*delta2^2 w^2 / 2 with c0 = kappa*amplitude/delta2^2
    (unless given); f1 = f0 - amplitude * (1 - w^2/4)^3 (1 + q w^2), q placing the
    inflections of f1 exactly at w = +-1.
    """
    if c0 is None:
        c0 = kappa * amplitude / delta2**2
    f0 = Polynomial([x0, slope * delta2, -c0 * delta2**2 / 2])
    B = Polynomial([1.0, 0.0, -0.25]) ** 3
    W2B = Polynomial([0.0, 0.0, 1.0]) * B
    target = -c0 * delta2**2 / amplitude
    q = (target - B.deriv(2)(1.0)) / W2B.deriv(2)(1.0)
    dent = -amplitude * (B + q * W2B)
    f1 = f0 + dent
    return f0, f1, c0


def check_pocket_shape(f0: Polynomial, f1: Polynomial, n: int = 512):
    """Items (5)-(8) on an n-point grid; returns list of violated conditions."""
    bad = []
    for w in (-2.0, 2.0):
        for m in range(3):
            a = f0.deriv(m)(w) if m else f0(w)
            b = f1.deriv(m)(w) if m else f1(w)
            if abs(a - b) > 1e-12 * max(1.0, abs(a)):
                bad.append(f"derivative {m} mismatch at w={w}")
    w = np.linspace(-2, 2, n)
    if np.any(f1(w) > f0(w) + 1e-14):
        bad.append("f1 > f0 somewhere")
    d2 = f1.deriv(2)(w)
    inner = np.abs(w) < 1 - 1e-9
    outer = (np.abs(w) > 1 + 1e-9) & (np.abs(w) <= 2)
    if np.any(d2[inner] <= 0):
        bad.append("f1 not strictly convex on the inner interval")
    if np.any(d2[outer] >= 0):
        bad.append("f1 not strictly concave on the outer intervals")
    if np.any(f0.deriv(2)(w) >= 0):
        bad.append("f0 not strictly concave")
    return bad


def insert_pocket(profile: CapSegmentProfile, seg_index: int, z0: float, delta2: float, t: float = 0.0,
                  amplitude: Optional[float] = None, amplitude_fraction: float = 0.15,
                  kappa: float = POCKET_KAPPA, box: Optional[SupportBox] = None) -> CapSegmentProfile:
    """Flatten segment ``seg_index`` to a concave f0 near z0 and install the family (1-t) f0 + t f1."""
    seg = profile.segments[seg_index]
    if not (seg.za < z0 - 3 * delta2 and z0 + 3 * delta2 < seg.zb):
        raise PocketOutOfBounds(f"pocket window [{z0 - 3 * delta2:.4g}, {z0 + 3 * delta2:.4g}] "
                                f"not inside segment ({seg.za:.4g}, {seg.zb:.4g})")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x0 = float(seg.base(z0))
    slope = float(seg.base(z0, 1))
    if amplitude is None:
        amplitude = amplitude_fraction * x0
    f0, f1, c0 = pocket_polynomials(x0, slope, delta2, amplitude, kappa)
    bad = check_pocket_shape(f0, f1)
    if bad:
        raise ConvexityConstructionFailure("; ".join(bad) + " (shrink delta2)")
    pocket = PocketSpec(z0, delta2, t, tuple(f0.coef), tuple(f1.coef), amplitude, kappa)
    new_seg = replace(seg, pocket=pocket)

    zz = np.linspace(z0 - 3 * delta2, z0 + 3 * delta2, 601)
    xs = [new_seg.R(zz, t=tt) for tt in np.linspace(0, 1, 16)]
    xmin = min(float(np.min(x)) for x in xs)
    if xmin <= 0:
        raise PocketOutOfBounds("pocket family leaves the half-plane x > 0")
    if box is not None and min(box.clearance(x, zz) for x in xs) <= 0:
        raise PocketOutOfBounds("pocket family leaves the support box")
    disp = max(float(np.max(np.abs(x - seg.base(zz)))) for x in xs)
    xall = np.concatenate(xs)
    step = PerturbationStep(
        "pocket",
        {"segment": seg_index, "z0": z0, "delta2": delta2, "amplitude": amplitude, "c0": c0,
         "horizontal_field": "(f1 - f0)(z) damped in x"},
        (float(xall.min()), float(xall.max()), z0 - 3 * delta2, z0 + 3 * delta2),
        disp,
        True,
    )
    return profile.with_segment(seg_index, new_seg, step)


def with_pocket_amplitude(profile: CapSegmentProfile, seg_index: int, amplitude: float) -> CapSegmentProfile:
    """Same pocket window and t with the dent amplitude changed (no provenance entry)."""
    seg = profile.segments[seg_index]
    p = seg.pocket
    if p is None:
        raise ValueError(f"segment {seg_index} has no pocket")
    x0 = float(seg.base(p.z0))
    slope = float(seg.base(p.z0, 1))
    f0, f1, _ = pocket_polynomials(x0, slope, p.delta2, amplitude, p.kappa)
    bad = check_pocket_shape(f0, f1)
    if bad:
        raise ConvexityConstructionFailure("; ".join(bad))
    pocket = PocketSpec(p.z0, p.delta2, p.t, tuple(f0.coef), tuple(f1.coef), float(amplitude), p.kappa)
    segs = list(profile.segments)
    segs[seg_index] = replace(seg, pocket=pocket)
    return CapSegmentProfile(list(profile.caps), segs, list(profile.provenance))


# ---------------------------------------------------------------------------
# admissibility

@dataclass
class AdmissibilityReport:
    admissible: bool
    min_x: float
    clearance: float


def check_admissible(profile, box: SupportBox, n: int = 1024) -> AdmissibilityReport:
    """Every sample of every piece (and every pocket family member on a 16-point t-grid) in box and x > 0."""
    if isinstance(profile, ProfileCurve):
        s = profile.grid()
        x, z = profile.r(s), profile.h(s)
        xs, zs = [x], [z]
    else:
        xs, zs = [], []
        x, z = profile.trace(n)
        xs.append(x)
        zs.append(z)
        if any(seg.pocket is not None for seg in profile.segments):
            for tt in np.linspace(0, 1, 16):
                x, z = profile.trace(n // 4, t=tt)
                xs.append(x)
                zs.append(z)
    x = np.concatenate(xs)
    z = np.concatenate(zs)
    min_x = float(np.min(x))
    clearance = box.clearance(x, z)
    return AdmissibilityReport(bool(min_x > 0 and clearance > 0), min_x, clearance)
