"""Global parameter s on a cap-segment profile.

The curve is cut into pieces in curve order, starting at the apex of cap 0:

    half core of cap 0, segment 0, core of cap 1, segment 1, ..., half core of cap 0.

Cores use the abscissa offset u = x - x0, segments the height z. On each piece
s is affine in that local parameter and the pieces receive s-lengths
proportional to their arclength, scaled to a total of 2*pi. The chart is only
piecewise smooth in s; quantities that should be smooth across a junction are
compared in the junction's local parameter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..profile import SurfaceParam


@dataclass(frozen=True)
class Piece:
    kind: str  # "core" or "graph"
    index: int  # cap index for cores, segment index for graphs
    p0: float  # local parameter at the start of the piece (curve order)
    p1: float
    s0: float
    s1: float

    @property
    def dp_ds(self) -> float:
        return (self.p1 - self.p0) / (self.s1 - self.s0)

    def p_of(self, s):
        return self.p0 + (np.asarray(s, dtype=float) - self.s0) * self.dp_ds


def _gauss_length(f, a, b, n=64, cuts=()):
    x, w = np.polynomial.legendre.leggauss(n)
    pts = sorted({a, b, *(c for c in cuts if min(a, b) < c < max(a, b))})
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += h * float(np.sum(w * f(m + h * x)))
    return abs(total)


class Chart:
    def __init__(self, profile):
        self.profile = profile
        caps, segs = profile.caps, profile.segments
        n = profile.n
        for i in range(n):
            dep = segs[i].side_start
            arr = segs[i - 1].side_end
            if dep != -arr:
                raise ValueError(f"curve does not pass through the apex of cap {i}")
        raw = []
        c0 = caps[0]
        raw.append(("core", 0, 0.0, segs[0].side_start * c0.half_width))
        for i in range(n):
            seg = segs[i]
            raw.append(("graph", i, seg.z_start, seg.z_end))
            j = (i + 1) % n
            cap = caps[j]
            a = seg.side_end * cap.half_width
            b = 0.0 if j == 0 else segs[j].side_start * cap.half_width
            raw.append(("core", j, a, b))
        lengths = []
        for kind, idx, a, b in raw:
            if kind == "core":
                K = caps[idx].K
                lengths.append(_gauss_length(lambda u: np.sqrt(1 + (2 * K * u) ** 2), a, b, cuts=(0.0,)))
            else:
                seg = segs[idx]
                lengths.append(_gauss_length(lambda z: np.sqrt(1 + seg.R(z, 1) ** 2), a, b, cuts=seg.breakpoints()))
        L = np.cumsum([0.0] + lengths)
        s_edges = 2 * np.pi * L / L[-1]
        s_edges[-1] = 2 * np.pi
        self.pieces = [Piece(kind, idx, a, b, float(s_edges[j]), float(s_edges[j + 1]))
                       for j, (kind, idx, a, b) in enumerate(raw)]
        self.edges = s_edges
        self.length = float(L[-1])

    def locate(self, s):
        """Piece index for each s in [0, 2*pi) (a node on an edge belongs to the piece it starts)."""
        s = np.mod(np.asarray(s, dtype=float), 2 * np.pi)
        idx = np.searchsorted(self.edges, s, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def geometry(self, s):
        """r, h, r_s, h_s, r_ss, h_ss at s (piecewise)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((6, s.size))
        idx = self.locate(s)
        for j in np.unique(idx):
            m = idx == j
            pc = self.pieces[j]
            p = pc.p_of(s[m])
            g = pc.dp_ds
            if pc.kind == "core":
                cap = self.profile.caps[pc.index]
                out[0, m] = cap.x0 + p
                out[1, m] = cap.z0 + cap.K * p**2
                out[2, m] = g
                out[3, m] = 2 * cap.K * p * g
                out[4, m] = 0.0
                out[5, m] = 2 * cap.K * g * g
            else:
                seg = self.profile.segments[pc.index]
                out[0, m] = seg.R(p)
                out[1, m] = p
                out[2, m] = seg.R(p, 1) * g
                out[3, m] = g
                out[4, m] = seg.R(p, 2) * g * g
                out[5, m] = 0.0
        return out

    def surface(self, n_s: int = 256, n_t: int = 128) -> SurfaceParam:
        s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
        t = np.linspace(0, 2 * np.pi, n_t, endpoint=False)
        r, h, r_s, h_s, _, _ = self.geometry(s)
        return SurfaceParam(s, t, r, h, r_s, h_s)
