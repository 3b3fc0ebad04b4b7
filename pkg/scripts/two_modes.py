"""Solve k=2 and k=3 on one pocketed torus profile and report their Gram matrix.

    python3 scripts/two_modes.py [--grid 256x128]
"""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from revbend.fieldcheck import deformation_residuals, gram_singular_values
from revbend.modesolve.field import assemble_field
from revbend.modesolve.multimode import solve_two_modes
from revbend.perturb import cap_critical_points
from revbend.profile import torus_profile


@dataclass
class Experiment:
    ks: tuple = (2, 3)
    n_s: int = 256
    n_t: int = 128


def run(exp: Experiment) -> None:
    t0 = time.perf_counter()
    two = solve_two_modes(cap_critical_points(torus_profile()), exp.ks)
    print(f"solve: {time.perf_counter() - t0:.1f} s")
    for jp in two.pockets:
        print(f"segment {jp.seg_index}: t = {jp.t:.6f}, amplitude = {jp.amplitude:.6f}, targets = {jp.targets}, "
              f"scales = {{{', '.join(f'{k}: {v:+.3e}' for k, v in jp.scales.items())}}}")
    fields = [assemble_field(two.modes[k], exp.n_s, exp.n_t) for k in exp.ks]
    surf = two.modes[exp.ks[0]].chart.surface(exp.n_s, exp.n_t)
    for k, f in zip(exp.ks, fields):
        m = two.modes[k]
        print(f"k = {k}: sigma - 1 = {m.sigma - 1:+.2e}, residual = {deformation_residuals(f, surf).max_relative:.2e}")
    sv, G = gram_singular_values(fields)
    print("normalized Gram matrix:")
    print(np.array2string(G, precision=3))
    print(f"singular values: {sv}")


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", default="256x128")
    a = p.parse_args(argv)
    n_s, n_t = (int(v) for v in a.grid.split("x"))
    run(Experiment(n_s=n_s, n_t=n_t))


if __name__ == "__main__":
    main()
