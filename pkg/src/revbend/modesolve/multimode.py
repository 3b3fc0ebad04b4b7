"""Two modes on one profile.

A pocket has two shape parameters, t and the dent amplitude A, so on each
segment it can satisfy the matching conditions of two wave numbers at once:

    Delta_k1(t, A) = m1 * pi,   Delta_k2(t, A) = m2 * pi.

The (t, A) plane is scanned on a coarse grid, cells where both level sets
cross are refined with a 2D root finder, and one solution per segment is
chosen so that the closure scale sigma_k is +1 within tolerance for both k.
Closure then has no free parameter left; it holds when every segment is
symmetric about its pocket centre (lambda = +-1) and the target parities
agree, which is the case on mirror-symmetric profiles such as the torus.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from ..errors import ClosureFailure, ConvexityConstructionFailure, SolverError
from ..perturb import with_pocket_amplitude
from .continuation import CLOSURE_TOL, PocketDefaults, ensure_pockets, solve_installed
from .segments import HANDOFF_COND, ODE_TOL, SHOOT_TOL, SegmentShooter

# Narrow, deep pockets: wide ones reach too few (m_k2, m_k3) combinations for low k.
TWO_MODE_POCKETS = PocketDefaults(delta2_fraction=0.02, amplitude_fraction=0.9)


@dataclass
class JointScan:
    t: np.ndarray
    fractions: np.ndarray  # amplitude / local abscissa
    deltas: dict  # k -> array (n_fraction, n_t) of Delta_k / pi (nan where the pocket is invalid)


@dataclass
class JointPocket:
    seg_index: int
    t: float
    amplitude: float
    targets: dict  # k -> m with Delta_k = m * pi
    residuals: dict  # k -> |sin Delta_k|
    scales: dict  # k -> lambda_k on this segment


@dataclass
class MultiModeResult:
    profile: object
    pockets: list
    modes: dict  # k -> ModeSolution
    scan: list = field(default_factory=list)


class _JointShooter:
    def __init__(self, profile, seg_index, ks, handoff_cond=HANDOFF_COND, ode_tol=ODE_TOL):
        self.profile = profile
        self.i = seg_index
        self.ks = tuple(ks)
        self.x0 = float(profile.segments[seg_index].base(profile.segments[seg_index].pocket.z0))
        self.base = {k: SegmentShooter(profile, seg_index, k, handoff_cond, ode_tol) for k in self.ks}
        self._bound = {}

    def shooters(self, frac):
        key = float(frac)
        if key not in self._bound:
            q = with_pocket_amplitude(self.profile, self.i, frac * self.x0)
            self._bound = {key: (q, {k: sh.rebind(q) for k, sh in self.base.items()})}
        return self._bound[key]

    def matches(self, t, frac):
        _, shs = self.shooters(frac)
        return {k: shs[k].match(float(t)) for k in self.ks}


def scan_pocket(js: _JointShooter, t_grid, fractions) -> JointScan:
    deltas = {k: np.full((len(fractions), len(t_grid)), np.nan) for k in js.ks}
    for a, frac in enumerate(fractions):
        try:
            js.shooters(frac)
        except ConvexityConstructionFailure:
            continue
        for b, t in enumerate(t_grid):
            try:
                ms = js.matches(t, frac)
            except SolverError:
                continue
            for k in js.ks:
                deltas[k][a, b] = ms[k].delta / math.pi
    return JointScan(np.asarray(t_grid), np.asarray(fractions), deltas)


def _cell_levels(vals):
    """Integers m >= 1 crossed by the four corner values."""
    if not np.all(np.isfinite(vals)):
        return []
    lo, hi = float(np.min(vals)), float(np.max(vals))
    return list(range(max(1, math.floor(lo) + 1), math.ceil(hi)))


def candidate_cells(scan: JointScan):
    k1, k2 = sorted(scan.deltas)
    out = []
    for a in range(len(scan.fractions) - 1):
        for b in range(len(scan.t) - 1):
            corners = np.s_[a:a + 2, b:b + 2]
            for m1 in _cell_levels(scan.deltas[k1][corners]):
                for m2 in _cell_levels(scan.deltas[k2][corners]):
                    tc = 0.5 * (scan.t[b] + scan.t[b + 1])
                    fc = 0.5 * (scan.fractions[a] + scan.fractions[a + 1])
                    out.append((tc, fc, {k1: m1, k2: m2}))
    return out


def refine_joint(js: _JointShooter, t0, frac0, targets, frac_range, shoot_tol=SHOOT_TOL):
    """Solve Delta_k(t, A) = m_k * pi for both k from (t0, frac0); None if it fails."""
    ks = js.ks

    def F(x):
        t, frac = x
        if not (0.0 <= t <= 1.0 and frac_range[0] <= frac <= frac_range[1]):
            return np.full(2, 10.0)
        try:
            ms = js.matches(t, frac)
        except (SolverError, ConvexityConstructionFailure):
            return np.full(2, 10.0)
        return np.array([ms[k].delta / math.pi - targets[k] for k in ks])

    sol = root(F, [t0, frac0], method="hybr", options={"xtol": 1e-14})
    t, frac = sol.x
    if not (0.0 <= t <= 1.0 and frac_range[0] <= frac <= frac_range[1]):
        return None
    try:
        ms = js.matches(t, frac)
    except (SolverError, ConvexityConstructionFailure):
        return None
    res = {k: ms[k].residual for k in ks}
    if max(res.values()) > shoot_tol:
        return None
    if any(abs(ms[k].delta / math.pi - targets[k]) > 0.25 for k in ks):
        return None
    return JointPocket(js.i, float(t), float(frac * js.x0), dict(targets), res,
                       {k: ms[k].scale for k in ks})


def _install(profile, pockets):
    for jp in pockets:
        profile = with_pocket_amplitude(profile, jp.seg_index, jp.amplitude).set_pocket_t(jp.seg_index, jp.t)
    return profile


def solve_two_modes(profile, ks=(2, 3), pockets: PocketDefaults = TWO_MODE_POCKETS,
                    fractions=None, n_t: int = 11, closure_tol: float = CLOSURE_TOL,
                    shoot_tol: float = SHOOT_TOL, handoff_cond: float = HANDOFF_COND,
                    max_candidates: int = 8, ode_tol: float = ODE_TOL) -> MultiModeResult:
    """Pocket parameters (t, A) per segment that solve modes ks[0] and ks[1] on one profile."""
    ks = tuple(sorted(ks))
    if len(ks) != 2 or ks[0] == ks[1]:
        raise ValueError("exactly two distinct wave numbers are needed")
    fractions = np.linspace(0.5, 0.98, 9) if fractions is None else np.asarray(fractions, dtype=float)
    frac_range = (float(fractions[0]), float(fractions[-1]))
    t_grid = np.linspace(0.0, 1.0, n_t)
    profile = ensure_pockets(profile, pockets)

    per_segment, scans = [], []
    for i in range(profile.n):
        js = _JointShooter(profile, i, ks, handoff_cond, ode_tol)
        scan = scan_pocket(js, t_grid, fractions)
        scans.append(scan)
        found = []
        for tc, fc, targets in candidate_cells(scan):
            if any(jp.targets == targets for jp in found):
                continue  # one solution per target pair is enough
            jp = refine_joint(js, tc, fc, targets, frac_range, shoot_tol)
            if jp is not None:
                found.append(jp)
        if not found:
            raise ClosureFailure(f"segment {i}: no pocket shape solves k={ks[0]} and k={ks[1]} together")
        found.sort(key=lambda jp: jp.amplitude)
        per_segment.append(found[:max_candidates])

    best, best_defect = None, math.inf
    for combo in itertools.product(*per_segment):
        defect = max(abs(float(np.prod([jp.scales[k] for jp in combo])) - 1.0) for k in ks)
        if defect < best_defect:
            best, best_defect = combo, defect
    if best_defect > closure_tol:
        raise ClosureFailure(f"best closure defect {best_defect:.3g} over {math.prod(map(len, per_segment))} "
                             f"pocket combinations exceeds {closure_tol:g}")
    installed = _install(profile, best)
    modes = {k: solve_installed(installed, k, closure_tol, shoot_tol, handoff_cond, ode_tol) for k in ks}
    return MultiModeResult(installed, list(best), modes, scans)
