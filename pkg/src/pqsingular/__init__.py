"""Numerical solvers for singular (p,q)-Laplacian elliptic and parabolic problems."""

__version__ = "0.1.0"

from .params import ParameterError, ProblemParams  # noqa: E402
from .mesh import Mesh, build_interval_mesh, build_rect_mesh, phi_delta, default_A  # noqa: E402
from . import nonlinearity  # noqa: E402

__all__ = ["ParameterError", "ProblemParams", "Mesh", "build_interval_mesh", "build_rect_mesh",
           "phi_delta", "default_A", "nonlinearity", "__version__"]
