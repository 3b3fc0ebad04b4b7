"""Shared fixtures. Expensive solves are session-scoped."""
from __future__ import annotations

import time

import numpy as np
import pytest

from revbend.fileio import save_profile
from revbend.modesolve.continuation import continue_mode, ensure_pockets
from revbend.modesolve.segments import pocket_k_min
from revbend.perturb import cap_critical_points
from revbend.pipeline import PipelineConfig, run_pipeline
from revbend.profile import ProfileCurve, torus_profile

# profile without mirror symmetry: closure needs the tuning path
ASYMMETRIC = ProfileCurve((3.0, 1.0, 0.0, 0.0, 0.15), (0.0, 0.0, 1.0, 0.1, 0.0))

ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def torus():
    return torus_profile()


@pytest.fixture(scope="session")
def torus_capped(torus):
    return cap_critical_points(torus)


@pytest.fixture(scope="session")
def torus_pocketed(torus_capped):
    return ensure_pockets(torus_capped)


@pytest.fixture(scope="session")
def torus_mode(torus_pocketed):
    k = max(pocket_k_min(s) for s in torus_pocketed.segments)
    return continue_mode(torus_pocketed, k)


def _pipeline(tmp_path_factory, curve, name):
    d = tmp_path_factory.mktemp(name)
    path = d / "profile.txt"
    save_profile(curve, path)
    t0 = time.perf_counter()
    res = run_pipeline(PipelineConfig(str(path), output_dir=str(d / "out")))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def torus_pipeline(tmp_path_factory, torus):
    return _pipeline(tmp_path_factory, torus, "torus")


@pytest.fixture(scope="session")
def asymmetric_pipeline(tmp_path_factory):
    return _pipeline(tmp_path_factory, ASYMMETRIC, "asym")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
