"""Zero count of the matched solution against the pocket parameter t, for several k, on the torus.

    python3 scripts/sturm_scan.py --ks 8,12,16,20 --n-t 64
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from revbend.modesolve.continuation import ensure_pockets
from revbend.modesolve.segments import SegmentShooter, pocket_k_min
from revbend.perturb import cap_critical_points
from revbend.profile import torus_profile


@dataclass
class Experiment:
    ks: tuple = (8, 12, 16, 20)
    n_t: int = 64
    segment: int = 0


def run(exp: Experiment) -> None:
    prof = ensure_pockets(cap_critical_points(torus_profile()))
    seg = prof.segments[exp.segment]
    print(f"segment {exp.segment}: pocket k_min = {pocket_k_min(seg)}")
    ts = np.linspace(0.0, 1.0, exp.n_t)
    for k in exp.ks:
        sh = SegmentShooter(prof, exp.segment, k)
        counts = np.array([sh.match(t).count for t in ts])
        jumps = ts[1:][np.diff(counts) != 0]
        print(f"k = {k:3d}: count {counts[0]} -> {counts[-1]}, max step {int(np.max(np.abs(np.diff(counts))))}, "
              f"jumps at t = {np.array2string(jumps, precision=3)}")


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ks", default="8,12,16,20")
    p.add_argument("--n-t", type=int, default=Experiment.n_t)
    p.add_argument("--segment", type=int, default=Experiment.segment)
    a = p.parse_args(argv)
    run(Experiment(tuple(int(v) for v in a.ks.split(",")), a.n_t, a.segment))


if __name__ == "__main__":
    main()
