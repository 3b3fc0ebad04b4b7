"""Prüfer-phase integration of Psi'' + alpha Psi' + beta Psi = 0.

Writing Psi = rho sin(theta), Psi' = S rho cos(theta) for a constant S > 0 gives

    theta' = S cos^2 + alpha sin cos + (beta / S) sin^2
    (ln rho)' = (S - beta / S) sin cos - alpha cos^2

The phase is continuous even where Psi grows without bound, and zeros of Psi
are exactly the points where theta crosses a multiple of pi. There theta' = S > 0,
so every crossing is upward and the zero count on an interval is the number
of multiples of pi strictly between the end phases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import StiffnessError

RTOL = 1e-12
ATOL = 1e-12


def phase_of(psi: float, dpsi: float, S: float, near: Optional[float] = None) -> float:
    """Phase of the state (psi, dpsi), lifted to the 2*pi-branch closest to ``near``."""
    th = math.atan2(psi, dpsi / S)
    if near is None:
        return th
    return th + 2 * math.pi * round((near - th) / (2 * math.pi))


def zeros_between(theta_a: float, theta_b: float) -> int:
    """Number of multiples of pi strictly inside (theta_a, theta_b)."""
    if theta_b <= theta_a:
        return 0
    return max(0, math.ceil(theta_b / math.pi) - math.floor(theta_a / math.pi) - 1)


@dataclass
class PhasePiece:
    y0: float
    y1: float
    S: float
    sol: object  # OdeSolution over [y0, y1] of (theta, ln rho)

    def state(self, y):
        th, L = self.sol(y)
        r = np.exp(L)
        return r * np.sin(th), self.S * r * np.cos(th), th


@dataclass
class PhaseSolution:
    """Piecewise Prüfer solution in a travel variable y (increasing)."""

    pieces: list = field(default_factory=list)
    trivial: bool = False

    @property
    def y_start(self):
        return self.pieces[0].y0 if self.pieces else 0.0

    @property
    def y_end(self):
        return self.pieces[-1].y1 if self.pieces else 0.0

    def _piece(self, y):
        for p in self.pieces:
            if y <= p.y1:
                return p
        return self.pieces[-1]

    def evaluate(self, y):
        """(Psi, Psi_y, theta) at travel coordinates y (array)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros((3, y.size))
        if self.trivial:
            return out
        ys = np.array([p.y1 for p in self.pieces])
        idx = np.clip(np.searchsorted(ys, y, side="left"), 0, len(self.pieces) - 1)
        for j in np.unique(idx):
            m = idx == j
            psi, dpsi, th = self.pieces[j].state(y[m])
            out[0, m], out[1, m], out[2, m] = psi, dpsi, th
        return out

    def end_state(self):
        if self.trivial:
            return 0.0, 0.0, 0.0
        p = self.pieces[-1]
        psi, dpsi, th = p.state(p.y1)
        return float(psi), float(dpsi), float(th)

    def start_phase(self):
        return 0.0 if self.trivial else float(self.pieces[0].sol(self.pieces[0].y0)[0])

    def end_phase(self):
        return self.end_state()[2]

    def zero_count(self) -> int:
        if self.trivial:
            return 0
        return zeros_between(self.start_phase(), self.end_phase())


def _rhs(alpha, beta, S):
    def f(y, v):
        th = v[0]
        s, c = math.sin(th), math.cos(th)
        a = alpha(y) if alpha is not None else 0.0
        b = beta(y)
        return [S * c * c + a * s * c + (b / S) * s * s, (S - b / S) * s * c - a * c * c]

    return f


def integrate_pruefer(beta: Callable, y0: float, y1: float, psi0: float, dpsi0: float, S: float = 1.0,
                      alpha: Optional[Callable] = None, theta0: Optional[float] = None,
                      breakpoints=(), rtol: float = RTOL, atol: float = ATOL,
                      h_min: float = 1e-14, previous: Optional[PhaseSolution] = None) -> PhaseSolution:
    """Integrate from y0 to y1 (> y0), splitting at ``breakpoints``; appends to ``previous`` if given.

    ``theta0`` fixes the branch of the initial phase (default: the principal value,
    or continuation from ``previous``).
    """
    if y1 <= y0:
        raise ValueError("travel variable must increase")
    if psi0 == 0.0 and dpsi0 == 0.0:
        sol = previous or PhaseSolution()
        sol.trivial = True
        return sol
    if previous is not None and previous.pieces and not previous.trivial and theta0 is None:
        theta0 = previous.end_phase()
    th = phase_of(psi0, dpsi0, S, theta0)
    L = math.log(math.hypot(psi0, dpsi0 / S))
    sol = previous if previous is not None else PhaseSolution()
    cuts = [y0] + sorted(b for b in breakpoints if y0 < b < y1) + [y1]
    f = _rhs(alpha, beta, S)
    for a, b in zip(cuts, cuts[1:]):
        res = solve_ivp(f, (a, b), [th, L], method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if res.status != 0:
            z = float(res.t[-1])
            raise StiffnessError(f"integration stalled at y={z:.12g}: {res.message}", z=z)
        sol.pieces.append(PhasePiece(a, b, S, res.sol))
        th, L = res.y[0, -1], res.y[1, -1]
    return sol


def continue_with_scale(sol: PhaseSolution, S_new: float):
    """Phase of the end state of ``sol`` re-expressed with a new scale S, same branch."""
    psi, dpsi, th = sol.end_state()
    return phase_of(psi, dpsi, S_new, th)
