"""Deformation fields Z = a gamma(t) + b gamma'(t) + c k in mode form.

A field is stored as complex mode profiles on an s-grid,

    a = sum_k 2 Re(e^{ikt} phi_k),  b = sum_k 2 Re(e^{ikt} psi_k),  c = sum_k 2 Re(e^{ikt} xi_k),

together with their s-derivatives. t-derivatives are exact (multiplication by ik).
For a solved mode, phi_k = -i k Psi, psi_k = Psi and xi_k = i X / k.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..profile import SurfaceParam

COMPONENTS = ("phi", "psi", "xi")


@dataclass
class ModeProfile:
    phi: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    phi_s: np.ndarray
    psi_s: np.ndarray
    xi_s: np.ndarray

    def scaled(self, c):
        return ModeProfile(*(c * getattr(self, f) for f in ("phi", "psi", "xi", "phi_s", "psi_s", "xi_s")))


@dataclass
class DeformationField:
    s: np.ndarray
    t: np.ndarray
    modes: dict  # k -> ModeProfile
    regularity: str = "C2"  # at the closure junction
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return (len(self.s), len(self.t))

    @property
    def k(self):
        ks = sorted(self.modes)
        return ks[0] if len(ks) == 1 else ks

    def _sum(self, name, dt=0, ds=False):
        out = np.zeros(self.shape)
        for k, mp in self.modes.items():
            prof = getattr(mp, name + ("_s" if ds else ""))
            e = np.exp(1j * k * self.t)[None, :] * (1j * k) ** dt
            out += 2 * np.real(prof[:, None] * e)
        return out

    def abc(self):
        return self._sum("phi"), self._sum("psi"), self._sum("xi")

    def abc_s(self):
        return self._sum("phi", ds=True), self._sum("psi", ds=True), self._sum("xi", ds=True)

    def abc_t(self):
        return self._sum("phi", dt=1), self._sum("psi", dt=1), self._sum("xi", dt=1)

    def _frame(self):
        ct, st = np.cos(self.t), np.sin(self.t)
        z = np.zeros_like(ct)
        return np.stack([ct, st, z], -1), np.stack([-st, ct, z], -1)

    def Z(self):
        a, b, c = self.abc()
        g, dg = self._frame()
        return a[..., None] * g + b[..., None] * dg + c[..., None] * np.array([0.0, 0.0, 1.0])

    def Z_s(self):
        a, b, c = self.abc_s()
        g, dg = self._frame()
        return a[..., None] * g + b[..., None] * dg + c[..., None] * np.array([0.0, 0.0, 1.0])

    def Z_t(self):
        a, b, c = self.abc()
        at, bt, ct = self.abc_t()
        g, dg = self._frame()
        # gamma' = dg, gamma'' = -gamma
        return (at - b)[..., None] * g + (a + bt)[..., None] * dg + ct[..., None] * np.array([0.0, 0.0, 1.0])

    def __add__(self, other: "DeformationField"):
        if self.s.shape != other.s.shape or not np.array_equal(self.s, other.s) or not np.array_equal(self.t, other.t):
            raise ValueError("fields live on different grids")
        modes = dict(self.modes)
        for k, mp in other.modes.items():
            if k in modes:
                a = modes[k]
                modes[k] = ModeProfile(*(getattr(a, f) + getattr(mp, f) for f in ("phi", "psi", "xi", "phi_s", "psi_s", "xi_s")))
            else:
                modes[k] = mp
        return DeformationField(self.s, self.t, modes, self.regularity)

    def scaled(self, c):
        return DeformationField(self.s, self.t, {k: m.scaled(c) for k, m in self.modes.items()}, self.regularity, dict(self.meta))


def assemble_field(mode, n_s: int = 256, n_t: int = 128, s=None, t=None) -> DeformationField:
    """Real field of a ModeSolution sampled on the chart grid of its profile."""
    s = np.linspace(0, 2 * np.pi, n_s, endpoint=False) if s is None else np.asarray(s, dtype=float)
    t = np.linspace(0, 2 * np.pi, n_t, endpoint=False) if t is None else np.asarray(t, dtype=float)
    k = mode.k
    psi, psi_s, X, X_s = mode.evaluate(s)
    mp = ModeProfile(
        phi=-1j * k * psi, psi=psi.astype(complex), xi=1j * X / k,
        phi_s=-1j * k * psi_s, psi_s=psi_s.astype(complex), xi_s=1j * X_s / k,
    )
    return DeformationField(s, t, {k: mp}, "C2", {"k": k, "sigma": mode.sigma})


# ---------------------------------------------------------------------------
# trivial fields, in mode form on a given surface

def _zeros(n):
    return np.zeros(n, dtype=complex)


def rigid_field(surface: SurfaceParam, mu=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0)) -> DeformationField:
    """Z = mu x F + omega decomposed in the frame (gamma, gamma', k) as k = 0, 1 modes."""
    mu = np.asarray(mu, dtype=float)
    om = np.asarray(omega, dtype=float)
    r, h, r_s, h_s = surface.r, surface.h, surface.r_s, surface.h_s
    n = len(surface.s)
    # mu x (r gamma + h k):  mu x gamma = (mu_y*0 - mu_z sin t, mu_z cos t, mu_x sin t - mu_y cos t)
    # frame components: a = Z.gamma, b = Z.gamma', c = Z.k
    # mu x gamma: .gamma = 0 ; .gamma' = mu_z ; .k = mu_x sin t - mu_y cos t
    # mu x k = (mu_y, -mu_x, 0): .gamma = mu_y cos t - mu_x sin t ; .gamma' = -mu_y sin t - mu_x cos t
    # omega: .gamma = om_x cos t + om_y sin t ; .gamma' = -om_x sin t + om_y cos t ; .k = om_z
    # cos t = 2 Re(e^{it}/2), sin t = 2 Re(e^{it} * (-i/2))
    def m1(cos_coef, sin_coef):
        return 0.5 * cos_coef - 0.5j * sin_coef

    phi0 = _zeros(n)
    psi0 = 0.5 * mu[2] * r + 0j
    xi0 = _zeros(n) + 0.5 * om[2]
    phi1 = m1(mu[1] * h + om[0], -mu[0] * h + om[1])
    psi1 = m1(-mu[0] * h + om[1], -mu[1] * h - om[0])
    xi1 = m1(-mu[1] * r, mu[0] * r)
    phi1_s = m1(mu[1] * h_s, -mu[0] * h_s)
    psi1_s = m1(-mu[0] * h_s, -mu[1] * h_s)
    xi1_s = m1(-mu[1] * r_s, mu[0] * r_s)
    modes = {
        0: ModeProfile(phi0, psi0, xi0, _zeros(n), 0.5 * mu[2] * r_s + 0j, _zeros(n)),
        1: ModeProfile(phi1, psi1, xi1, phi1_s, psi1_s, xi1_s),
    }
    return DeformationField(surface.s, surface.t, modes, "analytic")


def scaling_field(surface: SurfaceParam) -> DeformationField:
    """Z = F (radial scaling): a = r, b = 0, c = h."""
    n = len(surface.s)
    mp = ModeProfile(0.5 * surface.r + 0j, _zeros(n), 0.5 * surface.h + 0j,
                     0.5 * surface.r_s + 0j, _zeros(n), 0.5 * surface.h_s + 0j)
    return DeformationField(surface.s, surface.t, {0: mp}, "analytic")


def zero_field(surface: SurfaceParam) -> DeformationField:
    n = len(surface.s)
    z = _zeros(n)
    return DeformationField(surface.s, surface.t, {0: ModeProfile(z, z, z, z, z, z)}, "analytic")
