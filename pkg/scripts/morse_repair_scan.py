"""Random degenerate profiles near the reference one, and the rotation angle that makes each Morse.

Every sample is a small random perturbation with a degenerate critical point
imposed near s = pi/2, so none is Morse before rotation.

    python3 scripts/morse_repair_scan.py --n 200 --noise 1e-2 --seed 0
"""
from __future__ import annotations

import argparse
from collections import Counter
from dataclasses import dataclass

import numpy as np

from revbend.errors import RevbendError
from revbend.perturb import SupportBox, rotate_to_morse
from revbend.profile import ProfileCurve, degenerate_profile, impose_degenerate_point, morse_report


@dataclass
class Experiment:
    n: int = 200
    noise: float = 1e-2
    seed: int = 0
    theta_max: float = 0.2
    candidates: int = 50


def run(exp: Experiment) -> None:
    rng = np.random.default_rng(exp.seed)
    base = degenerate_profile()
    box = SupportBox(0.5, 10.0, -5.0, 5.0)
    thetas, failures, already = [], 0, 0
    for _ in range(exp.n):
        r = np.array(base.r_coeffs) + exp.noise * rng.normal(size=len(base.r_coeffs))
        h = np.array(base.h_coeffs) + exp.noise * rng.normal(size=len(base.h_coeffs))
        curve = impose_degenerate_point(ProfileCurve(tuple(r), tuple(h)), np.pi / 2 + 0.05 * rng.normal())
        already += morse_report(curve).is_morse
        try:
            _, step = rotate_to_morse(curve, box, exp.theta_max, exp.candidates)
            thetas.append(step.params["theta"])
        except RevbendError:
            failures += 1
    print(f"profiles: {exp.n}, Morse before rotation: {already}, repaired: {len(thetas)}, failed: {failures}")
    step = exp.theta_max / exp.candidates
    hist = Counter(round(t / step) for t in thetas)
    for j in sorted(hist):
        print(f"theta = {j * step:+.4f}: {hist[j]}")


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=Experiment.n)
    p.add_argument("--noise", type=float, default=Experiment.noise)
    p.add_argument("--seed", type=int, default=Experiment.seed)
    a = p.parse_args(argv)
    run(Experiment(a.n, a.noise, a.seed))


if __name__ == "__main__":
    main()
