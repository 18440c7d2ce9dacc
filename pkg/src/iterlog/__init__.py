"""Numerical companion to the compact law of the iterated logarithm for
SPDEs driven by white noise on an auxiliary space (super-Brownian motion and
Fleming-Viot densities)."""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, ExcursionError, InvalidInputError, InvalidMeasureError,  # noqa: E402
                     IterlogError, KernelDivergenceError, NumericalError, ResourceError, ShapeError)
from .grid import GridSpec, UDomainSpec  # noqa: E402
from .kernels import KernelSpec, constant_kernel, custom_kernel, fvp_kernel, kernel_by_name, sbm_kernel  # noqa: E402
from .spde_engine import EpsilonPoint, FieldPath, deterministic_limit, solve_controlled, solve_spde, solve_Z  # noqa: E402
