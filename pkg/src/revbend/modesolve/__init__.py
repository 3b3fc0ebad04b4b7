"""Mode equation solver: cap series, segment shooting, continuation and field assembly."""
from .chart import Chart
from .continuation import CLOSURE_TOL, ModeSolution, PocketDefaults, continue_mode, ensure_pockets, solve_installed
from .field import DeformationField, ModeProfile, assemble_field, rigid_field, scaling_field, zero_field
from .frobenius import (FrobeniusSeries, frobenius_cap_solution, frobenius_coefficients, frobenius_pole_solution,
                        handoff_radius, indicial_roots)
from .multimode import MultiModeResult, solve_two_modes
from .pruefer import integrate_pruefer, zeros_between
from .segments import (SHOOT_TOL, SegmentShooter, SegmentSolution, ShootResult, count_zeros, integrate_segment,
                       ode_residual, pocket_k_min, shoot_pocket)

__all__ = [
    "CLOSURE_TOL", "SHOOT_TOL", "Chart", "DeformationField", "FrobeniusSeries", "ModeProfile", "ModeSolution",
    "MultiModeResult", "PocketDefaults", "SegmentShooter", "SegmentSolution", "ShootResult", "assemble_field",
    "continue_mode", "count_zeros", "ensure_pockets", "frobenius_cap_solution", "frobenius_coefficients",
    "frobenius_pole_solution", "handoff_radius", "indicial_roots", "integrate_pruefer", "integrate_segment",
    "ode_residual", "pocket_k_min", "rigid_field", "scaling_field", "shoot_pocket", "solve_installed",
    "solve_two_modes", "zero_field", "zeros_between",
]
