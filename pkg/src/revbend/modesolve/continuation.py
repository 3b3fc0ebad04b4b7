"""Global continuation of a mode around the whole profile.

Starting at cap 0 with its normalized series solution, each segment is matched
by shooting its pocket; the forward solution then equals lambda_i times the
series solution of the next cap. After the loop the solution arriving at
cap 0 is sigma = prod(lambda_i) times the departing one, so psi and psi' are
continuous at the apex and psi'' jumps by 2 (sigma - 1) in the abscissa. The
closure step drives sigma to 1: first by choosing a branch giving sigma > 0,
then by tuning the dent amplitude of the last pocket (second shape parameter).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from ..errors import (BisectionStall, ClosureFailure, ConvexityConstructionFailure, NoCountJump, PocketOutOfBounds,
                      SolverError)
from ..perturb import insert_pocket, with_pocket_amplitude
from .chart import Chart
from .frobenius import FrobeniusSeries, frobenius_cap_solution
from .segments import HANDOFF_COND, ODE_TOL, SHOOT_TOL, SegmentShooter, SegmentSolution, ShootResult, shoot_pocket

CLOSURE_TOL = 1e-6


@dataclass
class PocketDefaults:
    delta2_fraction: float = 0.05  # pocket half-scale as a fraction of the segment height range
    amplitude_fraction: float = 0.15  # dent depth as a fraction of the local abscissa


def ensure_pockets(profile, defaults: PocketDefaults = PocketDefaults(), box=None):
    """Insert a pocket at the midpoint of every segment that has none."""
    for i, seg in enumerate(profile.segments):
        if seg.pocket is None:
            z0 = 0.5 * (seg.za + seg.zb)
            d2 = defaults.delta2_fraction * (seg.zb - seg.za)
            profile = insert_pocket(profile, i, z0, d2, amplitude_fraction=defaults.amplitude_fraction, box=box)
    return profile


@dataclass
class ModeSolution:
    k: int
    profile: object  # cap-segment profile with every t_hat installed
    series: list  # FrobeniusSeries per cap
    shots: list  # ShootResult per segment
    glue_scales: list  # lambda_i: forward = lambda_i * backward on segment i
    cap_scales: list  # c_i: solution on the core of cap i is c_i * series_i (c_0 = 1)
    sigma: float
    closure_defect: dict
    tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        self.chart = Chart(self.profile)

    @property
    def pocket_results(self):
        return [(r.t_hat, r.residual) for r in self.shots]

    # -- pointwise evaluation -------------------------------------------------
    def _core(self, cap_index, u, leg, scale):
        """Psi, Psi_u, X, X_u on a cap core at offsets u (all on one side)."""
        cap = self.profile.caps[cap_index]
        k = self.k
        ser: FrobeniusSeries = leg.series
        absu = np.abs(u)
        psi = np.empty_like(u)
        dpsi = np.empty_like(u)
        X = np.empty_like(u)
        dX = np.empty_like(u)
        inner = absu <= leg.u_h
        if np.any(inner):
            ui = u[inner]
            xp = ser.x_poly(cap.K)
            psi[inner], dpsi[inner] = ser(ui), ser(ui, 1)
            X[inner], dX[inner] = xp(ui), xp.deriv()(ui)
        if np.any(~inner):
            uo = u[~inner]
            p, dp_abs = leg.core_eval(np.abs(uo))
            dp = leg.side * dp_abs
            x = cap.x0 + uo
            d2 = (x * dp + (k * k - 1) * p) / (x * uo)
            Xo = ((k * k - 1) * p + x * dp) / (2 * cap.K * uo)
            psi[~inner], dpsi[~inner] = p, dp
            X[~inner] = Xo
            dX[~inner] = (k * k * dp + x * d2 - 2 * cap.K * Xo) / (2 * cap.K * uo)
        return scale * psi, scale * dpsi, scale * X, scale * dX

    def _graph(self, seg_index, z):
        """Psi, Psi_z, X, X_z on a segment graph."""
        seg = self.profile.segments[seg_index]
        shot = self.shots[seg_index]
        m = shot.match
        c = self.cap_scales[seg_index]
        lam = self.glue_scales[seg_index]
        d = seg.direction
        fwd_side = d * (z - m.zm) <= 0
        psi = np.empty_like(z)
        dpsi = np.empty_like(z)
        if np.any(fwd_side):
            p, dp, _ = m.forward.graph_eval(z[fwd_side])
            psi[fwd_side], dpsi[fwd_side] = c * p, c * dp
        if np.any(~fwd_side):
            p, dp, _ = m.backward.graph_eval(z[~fwd_side])
            psi[~fwd_side], dpsi[~fwd_side] = c * lam * p, c * lam * dp
        k2 = self.k**2 - 1
        R, R1, R2 = seg.R(z), seg.R(z, 1), seg.R(z, 2)
        d2 = -k2 * R2 / R * psi
        X = k2 * R1 * psi + R * dpsi
        dX = k2 * (R2 * psi + R1 * dpsi) + R1 * dpsi + R * d2
        return psi, dpsi, X, dX

    def evaluate(self, s):
        """Real Psi, Psi_s, X, X_s at global parameters s (X as in xi = i X / k)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((4, s.size))
        chart = self.chart
        idx = chart.locate(s)
        last = len(chart.pieces) - 1
        for j in np.unique(idx):
            m = idx == j
            pc = chart.pieces[j]
            p = pc.p_of(s[m])
            g = pc.dp_ds
            if pc.kind == "graph":
                vals = self._graph(pc.index, p)
            else:
                ci = pc.index
                vals = np.zeros((4, p.size))
                # departure half uses the forward leg of segment ci, arrival half the backward leg of ci-1
                dep_side = self.profile.segments[ci].side_start
                on_dep = (np.sign(p) == dep_side) | (p == 0)
                if j == last:
                    on_dep = np.zeros_like(on_dep)
                if j == 0:
                    on_dep = np.ones_like(on_dep)
                for mask, leg, scale in (
                    (on_dep, self.shots[ci].match.forward, self.cap_scales[ci]),
                    (~on_dep, self.shots[ci - 1].match.backward,
                     self.cap_scales[ci - 1] * self.glue_scales[ci - 1]),
                ):
                    if np.any(mask):
                        vals[:, mask] = self._core(ci, p[mask], leg, scale)
            out[0, m] = vals[0]
            out[1, m] = vals[1] * g
            out[2, m] = vals[2]
            out[3, m] = vals[3] * g
        return out

    def segment_samples(self, i: int, n: int = 257):
        """Glued samples z, psi, dpsi, phase on segment i (phase of the leg in use)."""
        seg = self.profile.segments[i]
        z = np.linspace(seg.z_start, seg.z_end, n)
        m = self.shots[i].match
        psi, dpsi, _, _ = self._graph(i, z)
        fwd = seg.direction * (z - m.zm) <= 0
        th = np.empty_like(z)
        th[fwd] = m.forward.graph_eval(z[fwd])[2]
        th[~fwd] = m.backward.graph_eval(z[~fwd])[2]
        return np.column_stack([z, psi, dpsi, th])

    def segment_solution(self, i: int, n: int = 257) -> SegmentSolution:
        """Forward leg on segment i packaged as a SegmentSolution up to the matching height."""
        seg = self.profile.segments[i]
        m = self.shots[i].match
        leg = m.forward
        ss = SegmentSolution(i, self.k, seg.z_start, m.zm, leg.graph, leg.d)
        zz = np.linspace(seg.z_start, m.zm, n)
        p, dp, th = ss.evaluate(zz)
        ss.samples = np.column_stack([zz, p, dp, th])
        ss.zero_count = leg.graph.zero_count()
        ss.endpoint_value = self.shots[i].residual
        return ss


def _closure_defect(series0: FrobeniusSeries, sigma: float):
    """Jumps of Psi, Psi_u, Psi_uu, Psi_uuu at the cap-0 apex (arrival minus departure)."""
    a2 = series0.coefficient(2)
    a3 = series0.coefficient(3)
    jumps = {"psi": 0.0, "dpsi": 0.0, "d2psi": 2 * a2 * (sigma - 1), "d3psi": 6 * a3 * (sigma - 1)}
    jumps["d2psi_rel"] = abs(sigma - 1)
    return jumps


def _shoot_all(profile, k, branches, shoot_tol, handoff_cond, ode_tol=ODE_TOL, targets=None):
    shots = []
    for i in range(profile.n):
        sh = SegmentShooter(profile, i, k, handoff_cond, ode_tol)
        r = shoot_pocket(profile, i, k, branches[i], shoot_tol, shooter=sh,
                         target=None if targets is None else targets[i])
        profile = r.profile
        shots.append(r)
    return profile, shots


def _tune_closure(family, grid, other, closure_tol):
    """Root of log|sigma| along a one-parameter pocket family with sigma > 0; (shot or None, scan)."""
    def g(p):
        r = family(p)
        return math.log(abs(other * r.match.scale)), r

    vals, signs, targets = [], [], []
    for p in grid:
        try:
            v, r = g(p)
            vals.append(v)
            signs.append(np.sign(other * r.match.scale))
            targets.append(r.target)
        except (SolverError, ConvexityConstructionFailure, PocketOutOfBounds):
            vals.append(np.nan)
            signs.append(0.0)
            targets.append(None)
    scan = list(zip(np.asarray(grid).tolist(), vals))
    for m in range(len(grid) - 1):
        a, b, va, vb = grid[m], grid[m + 1], vals[m], vals[m + 1]
        # same target on both ends, so log|sigma| is continuous on [a, b]
        if not (np.isfinite(va) and np.isfinite(vb) and va * vb <= 0 and signs[m] > 0 and signs[m + 1] > 0
                and targets[m] == targets[m + 1]):
            continue
        try:
            p_hat = brentq(lambda p: g(p)[0], a, b, xtol=1e-14 * max(abs(a), abs(b), 1.0), rtol=1e-14)
            r = family(p_hat)
        except (SolverError, ConvexityConstructionFailure, PocketOutOfBounds, ValueError):
            continue
        if abs(other * r.match.scale - 1) <= closure_tol:
            return r, scan
    return None, scan


def _position_family(profile, i, k, target, pockets, shoot_tol, handoff_cond, ode_tol, n_grid):
    """Pocket i moved along its segment at fixed width, relative depth and zero-count target.

    Returns (family, admissible centres)."""
    pk = profile.segments[i].pocket
    bare = profile.with_segment(i, replace(profile.segments[i], pocket=None))
    seg = bare.segments[i]
    margin = 1e-3 * (seg.zb - seg.za)
    lo, hi = seg.za + 3 * pk.delta2 + margin, seg.zb - 3 * pk.delta2 - margin

    def family(z0):
        pa = insert_pocket(bare, i, z0, pk.delta2, amplitude_fraction=pockets.amplitude_fraction, kappa=pk.kappa)
        return shoot_pocket(pa, i, k, shoot_tol=shoot_tol, target=target,
                            shooter=SegmentShooter(pa, i, k, handoff_cond, ode_tol))

    return family, (np.linspace(lo, hi, n_grid) if hi > lo else np.empty(0))


def continue_mode(profile, k: int, closure_tol: float = CLOSURE_TOL, shoot_tol: float = SHOOT_TOL,
                  pockets: PocketDefaults = PocketDefaults(), branch: int = 1, tune: bool = True,
                  max_branch: int = 3, amplitude_range=(0.6, 1.4), n_scan: int = 9,
                  handoff_cond: float = HANDOFF_COND, ode_tol: float = ODE_TOL) -> ModeSolution:
    """Solve mode k around the profile and close the loop (see module docstring)."""
    profile = ensure_pockets(profile, pockets)
    n = profile.n
    series = [frobenius_cap_solution(c, k) for c in profile.caps]
    branches = [branch] * n
    profile_b, shots = _shoot_all(profile, k, branches, shoot_tol, handoff_cond, ode_tol)
    lams = [r.match.scale for r in shots]
    tuning = {"branches": list(branches), "amplitude_steps": 0}

    # sign of sigma: move the last segment to a later branch
    j = n - 1
    base_for_last = profile_b.set_pocket_t(j, 0.0)
    while np.prod(lams) < 0:
        branches[j] += 1
        if branches[j] > max_branch:
            raise ClosureFailure(f"no branch up to {max_branch} gives a positive closure scale")
        try:
            r = shoot_pocket(base_for_last, j, k, branches[j], shoot_tol,
                             shooter=SegmentShooter(base_for_last, j, k, handoff_cond, ode_tol))
        except NoCountJump as e:
            raise ClosureFailure(f"closure sign needs branch {branches[j]}: {e}") from e
        shots[j] = r
        profile_b = r.profile
        lams[j] = r.match.scale
    tuning["branches"] = list(branches)
    sigma = float(np.prod(lams))

    if abs(sigma - 1) > closure_tol and tune:
        A0, target = profile_b.segments[j].pocket.amplitude, shots[j].target

        def by_amplitude(A):
            pa = with_pocket_amplitude(base_for_last, j, A)
            return shoot_pocket(pa, j, k, shoot_tol=shoot_tol, target=target,
                                shooter=SegmentShooter(pa, j, k, handoff_cond, ode_tol))

        families = [("amplitude", j, by_amplitude,
                     np.linspace(amplitude_range[0] * A0, amplitude_range[1] * A0, n_scan))]
        for i in reversed(range(n)):
            m0 = shots[i].target
            # nearby targets first; lambda is continuous in the centre only at a fixed target
            for m in sorted(range(max(1, m0 - 2), m0 + 3), key=lambda m: abs(m - m0)):
                fam, grid = _position_family(profile_b, i, k, m, pockets, shoot_tol, handoff_cond, ode_tol,
                                             4 * n_scan - 3)
                if len(grid):
                    families.append(("position", i, fam, grid))
        r = None
        for name, i, family, grid in families:
            other = float(np.prod([lam for m, lam in enumerate(lams) if m != i]))
            r, scan = _tune_closure(family, grid, other, closure_tol)
            tuning.setdefault("scans", []).append({"parameter": name, "segment": i, "scan": scan})
            if r is not None:
                pk = r.profile.segments[i].pocket
                tuning[name] = {"segment": i, "value": pk.amplitude if name == "amplitude" else pk.z0}
                break
        if r is None:
            raise ClosureFailure(f"closure scale {sigma:.6g} cannot be tuned to 1 by pocket amplitude or position")
        shots[i] = r
        profile_b = profile_b.with_segment(i, r.profile.segments[i])
        lams[i] = r.match.scale
        sigma = float(np.prod(lams))

    defect = _closure_defect(series[0], sigma)
    if defect["d2psi_rel"] > closure_tol:
        raise ClosureFailure(f"psi'' jump {defect['d2psi_rel']:.3g} exceeds closure_tol {closure_tol:g}")
    caps_scale = [1.0]
    for lam in lams[:-1]:
        caps_scale.append(caps_scale[-1] * lam)
    # shots were computed on intermediate profiles; the legs only depend on their own segment
    return ModeSolution(k, profile_b, series, shots, lams, caps_scale, sigma, defect, tuning)


def solve_installed(profile, k: int, closure_tol: float = CLOSURE_TOL, shoot_tol: float = SHOOT_TOL,
                    handoff_cond: float = HANDOFF_COND, ode_tol: float = ODE_TOL) -> ModeSolution:
    """Mode k on a profile whose pocket parameters are already fixed (no shooting or tuning).

    Every segment must carry a pocket and already satisfy its matching condition.
    """
    if any(seg.pocket is None for seg in profile.segments):
        raise ValueError("every segment needs a pocket")
    series = [frobenius_cap_solution(c, k) for c in profile.caps]
    shots = []
    for i, seg in enumerate(profile.segments):
        sh = SegmentShooter(profile, i, k, handoff_cond, ode_tol)
        m = sh.match(seg.pocket.t)
        if m.residual > shoot_tol:
            raise BisectionStall(f"segment {i}: matching residual {m.residual:.3g} > {shoot_tol:g} at k={k}")
        c0, c1 = sh.match(0.0).count, sh.match(1.0).count
        target = int(round(m.delta / math.pi))
        shots.append(ShootResult(seg.pocket.t, m.residual, c1 - c0, c0, c1, target, m, profile))
    lams = [r.match.scale for r in shots]
    sigma = float(np.prod(lams))
    defect = _closure_defect(series[0], sigma)
    if defect["d2psi_rel"] > closure_tol:
        raise ClosureFailure(f"psi'' jump {defect['d2psi_rel']:.3g} exceeds closure_tol {closure_tol:g}")
    caps_scale = [1.0]
    for lam in lams[:-1]:
        caps_scale.append(caps_scale[-1] * lam)
    return ModeSolution(k, profile, series, shots, lams, caps_scale, sigma, defect, {"fixed": True})
