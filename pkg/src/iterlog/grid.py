"""Discretization specs: the space-time grid and the auxiliary U-domain."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[0, t_horizon] x [-L, L]`` plus weight parameters.

    ``beta`` is the spatial weight exponent, ``beta0`` the growth exponent of
    initial data, ``alpha`` the Hölder exponent and ``m_max`` the truncation
    level of the Hölder metric sum.
    """

    n_t: int = 1000
    n_x: int = 201
    x_half_width: float = 5.0
    beta: float = 1.0
    beta0: float = 0.5
    alpha: float = 0.25
    m_max: int = 20
    t_horizon: float = 1.0

    def __post_init__(self):
        problems = []
        if int(self.n_t) < 1:
            problems.append("n_t must be >= 1")
        if int(self.n_x) < 3:
            problems.append("n_x must be >= 3")
        if not self.t_horizon > 0:
            problems.append("t_horizon must be positive")
        if not self.beta > 0:
            problems.append("beta must be positive")
        if not 0 < self.beta0 < self.beta:
            problems.append("beta0 must lie in (0, beta)")
        if not 0 < self.alpha < 0.5:
            problems.append("alpha must lie in (0, 1/2)")
        if int(self.m_max) < 1:
            problems.append("m_max must be >= 1")
        if self.beta > 0 and self.x_half_width < 5.0 / self.beta - 1e-12:
            problems.append("x_half_width must be >= 5/beta")
        if problems:
            raise DomainError("; ".join(problems))

    @property
    def dt(self) -> float:
        return self.t_horizon / self.n_t

    @property
    def dx(self) -> float:
        return 2.0 * self.x_half_width / (self.n_x - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-self.x_half_width, self.x_half_width, self.n_x)

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.t_horizon, self.n_t + 1)

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_x, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def chi0_weights(self, beta: float | None = None) -> np.ndarray:
        """Trapezoid weights times ``exp(-2 beta |x|)``."""
        b = self.beta if beta is None else beta
        return self.trapezoid_weights * np.exp(-2.0 * b * np.abs(self.x))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t + 1, self.n_x)

    def replace(self, **changes) -> "GridSpec":
        params = {k: getattr(self, k) for k in self.__dataclass_fields__}
        params.update(changes)
        return GridSpec(**params)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class UDomainSpec:
    """Bounded interval ``[u_min, u_max]`` split into ``n_a`` Lebesgue cells.

    ``truncated`` marks a finite window onto an unbounded U (the SBM case);
    solvers monitor excursions only for truncated domains.
    """

    u_min: float
    u_max: float
    n_a: int
    truncated: bool = False
    lambda_kind: str = field(default="lebesgue")

    def __post_init__(self):
        if int(self.n_a) < 1:
            raise DomainError("n_a must be >= 1")
        if not self.u_max > self.u_min:
            raise DomainError("u_max must exceed u_min")
        if self.lambda_kind != "lebesgue":
            raise DomainError(f"unsupported lambda_kind {self.lambda_kind!r}")

    @property
    def da(self) -> float:
        return (self.u_max - self.u_min) / self.n_a

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.u_min + (np.arange(self.n_a) + 0.5) * self.da

    @property
    def half_width(self) -> float:
        return max(abs(self.u_min), abs(self.u_max))

    def count_below(self, u, inclusive: bool) -> np.ndarray:
        """Number of cell midpoints ``< u`` (or ``<= u`` when inclusive)."""
        s = (np.asarray(u, dtype=float) - self.u_min) / self.da - 0.5
        n = np.floor(s) + 1 if inclusive else np.ceil(s)
        return np.clip(n, 0, self.n_a).astype(np.intp)

    @classmethod
    def fvp(cls, n_a: int = 200) -> "UDomainSpec":
        return cls(0.0, 1.0, n_a)

    @classmethod
    def sbm(cls, f_sup: float, n_a: int = 400, half_width: float | None = None) -> "UDomainSpec":
        """Symmetric window ``[-A, A]`` with ``A = 4 (1 + sup|F|)`` unless given."""
        a = 4.0 * (1.0 + float(f_sup)) if half_width is None else float(half_width)
        return cls(-a, a, n_a, truncated=True)

    def as_dict(self) -> dict:
        return {"u_min": self.u_min, "u_max": self.u_max, "n_a": self.n_a,
                "truncated": self.truncated, "lambda_kind": self.lambda_kind}
