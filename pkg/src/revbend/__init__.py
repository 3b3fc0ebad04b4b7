"""Nontrivial infinitesimal bendings of closed surfaces of revolution.

Modules:
    profile     Fourier profile curves, height critical points, Morse reports
    perturb     Morse rotation, parabola caps, segment graphs and pockets
    modesolve   Frobenius series, Pruefer shooting, global continuation, fields
    fieldcheck  residuals, isometry order, triviality fit, smoothness
    fileio      text formats and OBJ export
    pipeline    end-to-end run with a flat config file
"""
from .errors import RevbendError

__version__ = "0.1.0"
__all__ = ["RevbendError", "__version__"]
