"""Closed generating curves, their height critical points, and the surface they sweep.

A generating curve is stored as a truncated Fourier series in the parameter
``s`` (period 2*pi).  Coefficient lists use the layout ``[a0, a1, b1, a2, b2, ...]``
so that ``f(s) = a0 + sum_n a_n cos(n s) + b_n sin(n s)``.  Derivatives are
exact: differentiating ``m`` times multiplies mode ``n`` by ``n**m`` and shifts
its phase by ``m*pi/2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import ImmersionFailure, RootClusterError

CHECK_SAMPLES = 4096
ROOT_XTOL = 1e-12


def _fourier_eval(coeffs: np.ndarray, s, order: int = 0):
    s = np.asarray(s, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.full(s.shape, coeffs[0] if order == 0 else 0.0)
    nmax = (len(coeffs) - 1) // 2
    for n in range(1, nmax + 1):
        a, b = coeffs[2 * n - 1], coeffs[2 * n]
        if a == 0.0 and b == 0.0:
            continue
        # d^m/ds^m [a cos ns + b sin ns]
        ph = order * np.pi / 2
        scale = float(n) ** order
        out = out + scale * (a * np.cos(n * s + ph) + b * np.sin(n * s + ph))
    return out


def _pad(coeffs: Sequence[float], length: int) -> np.ndarray:
    c = np.zeros(length)
    c[: len(coeffs)] = coeffs
    return c


@dataclass(frozen=True)
class ProfileCurve:
    """Generating curve lambda(s) = (r(s), h(s)), s in [0, 2*pi)."""

    r_coeffs: tuple
    h_coeffs: tuple
    sample_density: int = CHECK_SAMPLES

    def __post_init__(self):
        for name in ("r_coeffs", "h_coeffs"):
            c = tuple(float(v) for v in getattr(self, name))
            if len(c) == 0:
                raise ValueError(f"{name} must be non-empty")
            if len(c) % 2 == 0:
                c = c + (0.0,)
            object.__setattr__(self, name, c)

    period = 2 * np.pi

    @property
    def n_modes(self) -> int:
        return max(len(self.r_coeffs), len(self.h_coeffs)) // 2

    def r(self, s, order=0):
        return _fourier_eval(self.r_coeffs, s, order)

    def h(self, s, order=0):
        return _fourier_eval(self.h_coeffs, s, order)

    def grid(self, n=None):
        n = n or self.sample_density
        return np.linspace(0.0, 2 * np.pi, n, endpoint=False)

    def rotated(self, theta: float) -> "ProfileCurve":
        """Image under the plane rotation by ``theta`` about the origin (exact)."""
        L = max(len(self.r_coeffs), len(self.h_coeffs))
        r, h = _pad(self.r_coeffs, L), _pad(self.h_coeffs, L)
        c, s = np.cos(theta), np.sin(theta)
        return ProfileCurve(tuple(c * r - s * h), tuple(s * r + c * h), self.sample_density)

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> "ProfileCurve":
        r = list(self.r_coeffs)
        h = list(self.h_coeffs)
        r[0] += dx
        h[0] += dz
        return ProfileCurve(tuple(r), tuple(h), self.sample_density)

    def validate(self):
        """Check the type invariants on the dense check grid; returns a list of problems."""
        s = self.grid()
        problems = []
        r = self.r(s)
        if np.min(r) <= 0:
            problems.append(f"r(s) <= 0 (min {np.min(r):.3g})")
        speed = np.hypot(self.r(s, 1), self.h(s, 1))
        if np.min(speed) < 1e-12 * max(1.0, np.max(speed)):
            problems.append("not an immersion on the check grid")
        if not _trace_injective(r, self.h(s)):
            problems.append("sampled trace self-intersects")
        return problems


def _trace_injective(x, z, m: int = 512) -> bool:
    # polyline through m subsampled points must not cross itself (non-adjacent edges)
    idx = np.linspace(0, len(x), m, endpoint=False).astype(int)
    P = np.column_stack([x[idx], z[idx]])
    Q = np.roll(P, -1, axis=0)
    return not polyline_self_intersects(P, Q)


def polyline_self_intersects(P, Q) -> bool:
    """True if any two non-adjacent edges P[i]->Q[i] of a closed polyline cross."""
    d = Q - P
    m = len(P)

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    rel = P[None, :, :] - P[:, None, :]  # P_j - P_i
    denom = cross(d[:, None, :], d[None, :, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = cross(rel, d[None, :, :]) / denom
        tb = cross(rel, d[:, None, :]) / denom
    hit = (denom != 0) & (ta >= 0) & (ta <= 1) & (tb >= 0) & (tb <= 1)
    i, j = np.indices((m, m))
    gap = np.abs(i - j)
    gap = np.minimum(gap, m - gap)
    return bool(np.any(hit & (gap > 1)))


def eval_profile(curve: ProfileCurve, s: float, order: int = 0):
    """Return ``[lambda(s), lambda'(s), ..., lambda^(order)(s)]`` as plane vectors."""
    if not 0 <= order <= 4:
        raise ValueError("order must be in 0..4")
    return [np.array([float(curve.r(s, m)), float(curve.h(s, m))]) for m in range(order + 1)]


def signed_curvature(curve: ProfileCurve, s, tol: float = 1e-12):
    """det(lambda', lambda'') / |lambda'|^3 with s increasing as the positive orientation."""
    r1, h1 = curve.r(s, 1), curve.h(s, 1)
    r2, h2 = curve.r(s, 2), curve.h(s, 2)
    speed = np.hypot(r1, h1)
    if np.any(speed < tol):
        raise ImmersionFailure(f"|lambda'| below {tol} at s={s}")
    return (r1 * h2 - h1 * r2) / speed**3


@dataclass(frozen=True)
class HeightCriticalPoint:
    s: float
    point: tuple
    second_deriv: float
    index_sign: int  # +1 minimum, -1 maximum
    degenerate: bool
    curvature: float


def _bisect_roots(f, grid, values, xtol):
    roots = []
    sign = np.sign(values)
    n = len(grid)
    for i in range(n):
        j = (i + 1) % n
        a, b = grid[i], grid[j] if j else grid[0] + 2 * np.pi
        if values[i] == 0.0:
            roots.append(a)
        elif sign[i] * sign[j] < 0:
            roots.append(brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps))
    return [r % (2 * np.pi) for r in roots]


def default_morse_margin(curve: ProfileCurve) -> float:
    return 1e-6 * float(np.max(np.abs(curve.h(curve.grid(), 2))))


def find_height_critical_points(curve: ProfileCurve, tol: float = ROOT_XTOL, morse_margin=None):
    """All zeros of h' on [0, 2*pi), ordered by s.

    Odd-multiplicity zeros come from a sign scan of h' plus bisection. Touching
    (even-multiplicity) zeros are caught separately as sign changes of h'' at
    which h' is numerically zero, and degenerate zeros hidden between grid points
    by a joint solve of h' = h'' = 0; those are always degenerate.
    """
    if morse_margin is None:
        morse_margin = default_morse_margin(curve)
    grid = curve.grid()
    f1 = lambda s: float(curve.h(s, 1))
    roots = _bisect_roots(f1, grid, curve.h(grid, 1), tol)

    scale = float(np.max(np.abs(curve.h(grid, 1)))) or 1.0
    f2 = lambda s: float(curve.h(s, 2))
    for s2 in _bisect_roots(f2, grid, curve.h(grid, 2), tol):
        if abs(f1(s2)) <= 1e-9 * scale and not any(_circ_dist(s2, r) < 1e-6 for r in roots):
            roots.append(s2)
    # degenerate zeros the grid straddles: solve h' = h'' = 0 jointly from local minima of both
    a1 = np.abs(curve.h(grid, 1)) / scale
    a2 = np.abs(curve.h(grid, 2))
    a2 = a2 / (float(np.max(a2)) or 1.0)
    g = a1 + a2
    step = grid[1] - grid[0]
    for i in np.nonzero((g <= np.roll(g, 1)) & (g <= np.roll(g, -1)) & (a1 <= 1e-6))[0]:
        fit = least_squares(lambda v: [f1(v[0]) / scale, f2(v[0]) / morse_margin], [grid[i]],
                            bounds=([grid[i] - step], [grid[i] + step]), xtol=tol, ftol=1e-15, gtol=1e-15)
        s2 = float(fit.x[0]) % (2 * np.pi)
        if abs(f1(s2)) <= 1e-9 * scale and abs(f2(s2)) < morse_margin \
                and not any(_circ_dist(s2, r) < 1e-6 for r in roots):
            roots.append(s2)

    roots = sorted(roots)
    for a, b in zip(roots, roots[1:] + [roots[0] + 2 * np.pi] if roots else []):
        if len(roots) > 1 and _circ_dist(a, b) < 10 * tol:
            raise RootClusterError(f"critical points at s={a:.15g} and s={b:.15g} are closer than {10 * tol}")

    out = []
    for s in roots:
        h2 = float(curve.h(s, 2))
        degenerate = abs(h2) < morse_margin
        sigma = _index_sign(curve, s) if degenerate else (1 if h2 > 0 else -1)
        out.append(
            HeightCriticalPoint(
                s=float(s),
                point=(float(curve.r(s)), float(curve.h(s))),
                second_deriv=h2,
                index_sign=sigma,
                degenerate=bool(degenerate),
                curvature=float(signed_curvature(curve, s)),
            )
        )
    return out


def _index_sign(curve, s):
    # lowest nonvanishing even-order behaviour decides min/max for a degenerate point
    eps = 1e-3
    mid = float(curve.h(s))
    around = 0.5 * (float(curve.h(s - eps)) + float(curve.h(s + eps)))
    return 1 if around >= mid else -1


def _circ_dist(a, b):
    d = abs(a - b) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


@dataclass
class MorseReport:
    is_morse: bool
    margin: float  # min |h''| over critical points
    morse_margin: float  # threshold used
    offenders: list = field(default_factory=list)
    critical_points: list = field(default_factory=list)


def morse_report(curve: ProfileCurve, morse_margin=None) -> MorseReport:
    if morse_margin is None:
        morse_margin = default_morse_margin(curve)
    try:
        cps = find_height_critical_points(curve, morse_margin=morse_margin)
    except RootClusterError:
        return MorseReport(False, 0.0, morse_margin, ["root cluster"], [])
    margin = min((abs(c.second_deriv) for c in cps), default=0.0)
    offenders = [c for c in cps if abs(c.second_deriv) < morse_margin]
    return MorseReport(len(offenders) == 0 and len(cps) > 0, margin, morse_margin, offenders, cps)


@dataclass
class SurfaceParam:
    """F(s, t) = r(s) gamma(t) + h(s) k on an (n_s x n_t) grid.

    Only the generating data on the s-grid is stored: r, h and their s-derivatives.
    Everything three-dimensional is rebuilt from the frame.
    """

    s: np.ndarray
    t: np.ndarray
    r: np.ndarray
    h: np.ndarray
    r_s: np.ndarray
    h_s: np.ndarray

    @classmethod
    def from_curve(cls, curve: ProfileCurve, n_s: int = 256, n_t: int = 128):
        s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
        t = np.linspace(0, 2 * np.pi, n_t, endpoint=False)
        return cls(s, t, curve.r(s), curve.h(s), curve.r(s, 1), curve.h(s, 1))

    @property
    def shape(self):
        return (len(self.s), len(self.t))

    def frame(self):
        ct, st = np.cos(self.t), np.sin(self.t)
        zero = np.zeros_like(ct)
        gamma = np.stack([ct, st, zero], axis=-1)  # (n_t, 3)
        dgamma = np.stack([-st, ct, zero], axis=-1)
        khat = np.array([0.0, 0.0, 1.0])
        return gamma, dgamma, khat

    def F(self):
        gamma, _, khat = self.frame()
        return self.r[:, None, None] * gamma[None] + self.h[:, None, None] * khat

    def F_s(self):
        gamma, _, khat = self.frame()
        return self.r_s[:, None, None] * gamma[None] + self.h_s[:, None, None] * khat

    def F_t(self):
        _, dgamma, _ = self.frame()
        return self.r[:, None, None] * dgamma[None]


def torus_profile(R: float = 3.0, a: float = 1.0) -> ProfileCurve:
    return ProfileCurve((R, a, 0.0), (0.0, 0.0, a))


def degenerate_profile() -> ProfileCurve:
    """r = 3 + cos s, h = sin s + sin(3s)/9: height critical point at s=pi/2 with h''=0."""
    return ProfileCurve((3.0, 1.0, 0.0), (0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0 / 9.0))


def impose_degenerate_point(curve: ProfileCurve, s0: float, modes=(1, 2)) -> ProfileCurve:
    """Adjust the sine coefficients of two height modes so that h'(s0) = h''(s0) = 0."""
    # the 2x2 system must be well conditioned at s0: modes (1, 2) suit s0 near pi/2
    n1, n2 = modes
    L = max(len(curve.h_coeffs), 2 * max(modes) + 1)
    h = _pad(curve.h_coeffs, L)
    # d/ds and d2/ds2 of sin(n s) at s0
    A = np.array([[n * np.cos(n * s0) for n in modes], [-n * n * np.sin(n * s0) for n in modes]])
    rhs = -np.array([_fourier_eval(h, s0, 1), _fourier_eval(h, s0, 2)], dtype=float)
    d = np.linalg.solve(A, rhs)
    h[2 * n1] += d[0]
    h[2 * n2] += d[1]
    return ProfileCurve(curve.r_coeffs, tuple(h), curve.sample_density)

