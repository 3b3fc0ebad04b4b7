"""Series solutions of the mode equation at a cap apex.

On a cap z = z0 + K (x - x0)^2 the mode-k equation in the abscissa reads

    x (x - x0) Psi'' - x Psi' - (k^2 - 1) Psi = 0

(after dividing by 2K). With u = x - x0 the analytic solution vanishing to
second order is Psi = sum_{n>=2} a_n u^n, a_2 = 1, and

    a_{m+1} = -((m - 1)^2 - k^2) a_m / (x0 (m + 1)(m - 1)).

The factor (m - 1)^2 - k^2 vanishes at m = k + 1, so the series terminates:
Psi is a polynomial of degree k + 1. At a pole (x0 = 0) the equation is of
Euler type with exponents 1 +- k and the analytic solution is x^(1+k).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from ..errors import PoleParameterError, TruncationError

DEFAULT_ORDER = 30
SERIES_TOL = 1e-14


@dataclass(frozen=True)
class FrobeniusSeries:
    """Psi(u) = sum_n a_n u^n with u = x - x0; ``coeffs`` holds a_exponent .. a_N."""

    x0: float
    k: int
    exponent: int
    coeffs: tuple
    radius: float
    N: int
    tail: float = 0.0

    @property
    def poly(self) -> Polynomial:
        return Polynomial(np.concatenate([np.zeros(self.exponent), np.asarray(self.coeffs, dtype=float)]))

    def __call__(self, u, order: int = 0):
        p = self.poly
        return (p.deriv(order) if order else p)(np.asarray(u, dtype=float))

    def coefficient(self, n: int) -> float:
        j = n - self.exponent
        return float(self.coeffs[j]) if 0 <= j < len(self.coeffs) else 0.0

    def ode_residual(self, u):
        """Pointwise residual of the cap equation, relative to the size of its terms."""
        u = np.asarray(u, dtype=float)
        x = self.x0 + u
        k2 = self.k**2 - 1
        t1 = x * u * self(u, 2)
        t2 = x * self(u, 1)
        t3 = k2 * self(u)
        scale = np.abs(t1) + np.abs(t2) + np.abs(t3)
        scale = np.where(scale > 0, scale, 1.0)
        return np.abs(t1 - t2 - t3) / scale

    def cancellation(self, u):
        """sum |a_n u^n| / |sum a_n u^n|: digits lost evaluating the series at u."""
        u = np.asarray(u, dtype=float)
        n = np.arange(self.exponent, self.exponent + len(self.coeffs))
        terms = np.asarray(self.coeffs)[None, :] * u[..., None] ** n
        num = np.sum(np.abs(terms), axis=-1)
        den = np.abs(np.sum(terms, axis=-1))
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)

    def x_poly(self, K: float) -> Polynomial:
        """X(u) = [(k^2 - 1) Psi + x Psi_u] / (2 K u) as a polynomial (interior caps only)."""
        p = self.poly
        x = Polynomial([self.x0, 1.0])
        num = (self.k**2 - 1) * p + x * p.deriv()
        c = num.coef
        if abs(c[0]) > 1e-300:
            raise ValueError("numerator of X does not vanish at the apex")
        return Polynomial(c[1:] / (2 * K)) if len(c) > 1 else Polynomial([0.0])


def indicial_roots(x0: float, k: int):
    """Exponents sigma of the leading behaviour u^sigma at the apex (sorted)."""
    if x0 != 0.0:
        # x0 u Psi'' - x0 Psi' at order u^(sigma-1): x0 (sigma(sigma-1) - sigma)
        coeffs = [1.0, -2.0, 0.0]
    else:
        # x^2 Psi'' - x Psi' - (k^2-1) Psi: sigma^2 - 2 sigma - (k^2 - 1)
        coeffs = [1.0, -2.0, -(k**2 - 1.0)]
    return sorted(float(np.real(r)) for r in np.roots(coeffs))


def frobenius_coefficients(x0: float, k: int, N: int):
    """a_2 .. a_N for an interior cap, a_2 = 1."""
    a = [1.0]
    for m in range(2, N):
        a.append(-((m - 1) ** 2 - k**2) * a[-1] / (x0 * (m + 1) * (m - 1)))
    return a


def frobenius_cap_solution(cap, k: int, N: int = DEFAULT_ORDER, radius=None, series_tol: float = SERIES_TOL):
    """Normalized analytic solution at the apex of ``cap`` (exponent 2, or 1+k at a pole)."""
    if cap.K == 0:
        raise ValueError("cap curvature K must be nonzero")
    if k < 2 and cap.x0 != 0.0:
        raise ValueError("mode k must be >= 2")
    radius = cap.half_width if radius is None else float(radius)
    if cap.x0 == 0.0:
        return frobenius_pole_solution(k, radius, N)
    coeffs = frobenius_coefficients(cap.x0, k, N)
    if N >= k + 1:
        tail = 0.0  # recursion has terminated
    else:
        tail = abs(coeffs[-1]) * radius**N
        if tail > series_tol:
            raise TruncationError(f"tail |a_N r^N| = {tail:.3g} > {series_tol:g} at N={N}; raise N or shrink radius")
    # drop trailing exact zeros beyond the terminating degree
    last = len(coeffs)
    while last > 1 and coeffs[last - 1] == 0.0:
        last -= 1
    return FrobeniusSeries(float(cap.x0), int(k), 2, tuple(coeffs[:last]), radius, N, tail)


def frobenius_pole_solution(k: int, radius: float, N: int = DEFAULT_ORDER):
    """Analytic solution x^(1+k) at a pole on an exact parabola (Euler equation)."""
    if k <= 1:
        raise PoleParameterError("pole variant needs k > 1")
    return FrobeniusSeries(0.0, int(k), 1 + int(k), (1.0,), float(radius), N, 0.0)


def handoff_radius(series: FrobeniusSeries, max_radius: float, cond_max: float = 1e4, n: int = 200) -> float:
    """Largest |u| <= max_radius at which the series loses at most log10(cond_max) digits on both sides."""
    us = np.linspace(max_radius / n, max_radius, n)
    cond = np.maximum(series.cancellation(us), series.cancellation(-us))
    bad = np.nonzero(cond > cond_max)[0]
    if len(bad) == 0:
        return float(max_radius)
    if bad[0] == 0:
        return float(us[0] / 2)
    return float(us[bad[0] - 1])
