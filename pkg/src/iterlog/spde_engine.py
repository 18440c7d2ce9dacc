"""Semi-implicit solvers for the white-noise heat equation family.

The half-Laplacian is treated by Crank-Nicolson with zero-flux boundaries at
``+-L``; noise and control terms enter explicitly (Itô / Euler-Maruyama in
the stochastic part). One step reads

    M u^{n+1} = B u^n + r_n,   M = I - dt/4 A,   B = I + dt/4 A,

with A the second-difference matrix and r_n the explicit source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, ExcursionError, InvalidInputError, ShapeError
from .grid import GridSpec, UDomainSpec
from .kernels import KernelSpec
from .noise_field import NoiseGrid, sample_noise

__all__ = [
    "EpsilonPoint", "FieldPath", "HeatStepper", "deterministic_limit", "solve_spde",
    "solve_Z", "solve_controlled", "z_ensemble", "EXCURSION_FRACTION",
]

EXCURSION_FRACTION = 0.9
LABELS = ("u_eps", "u0", "v_eps", "z_eps", "y_eps", "skeleton", "smoothed")


@dataclass(frozen=True)
class EpsilonPoint:
    """Noise level with its moderate-deviation speed and LIL normalization."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < math.exp(-1.0):
            raise DomainError(
                f"epsilon={self.epsilon!r} must lie in (0, e^-1) so that log log(1/epsilon) > 0")

    @property
    def loglog(self) -> float:
        return math.log(math.log(1.0 / self.epsilon))

    @property
    def a_eps(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.loglog)

    @property
    def z_norm(self) -> float:
        return math.sqrt(2.0 * self.epsilon * self.loglog)


@dataclass
class FieldPath:
    values: np.ndarray
    label: str
    grid: GridSpec
    epsilon: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in LABELS:
            raise InvalidInputError(f"unknown field label {self.label!r}")
        if self.values.shape != self.grid.shape:
            raise ShapeError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field has non-finite entries")
        if self.label == "z_eps" and self.epsilon is not None and not self.epsilon < math.exp(-1):
            raise DomainError("z_eps paths need epsilon < e^-1")

    def at_time(self, t: float) -> np.ndarray:
        return self.values[int(round(t / self.grid.dt))]


class HeatStepper:
    """Crank-Nicolson stepping of ``du/dt = 1/2 u''`` with zero-flux ends.

    A is self-adjoint for the trapezoid inner product, which gives
    ``A^T = W A W^-1`` and the transposed solves used by adjoint code.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        n, dx = grid.n_x, grid.dx
        self.c = grid.dt / 4.0
        inv = 1.0 / dx**2
        lower = np.full(n - 1, inv)
        upper = np.full(n - 1, inv)
        upper[0] = 2.0 * inv
        lower[-1] = 2.0 * inv
        diag = np.full(n, -2.0 * inv)
        dl, d, du, du2, ipiv, info = lapack.dgttrf(-self.c * lower, 1.0 - self.c * diag, -self.c * upper)
        if info != 0:
            raise ArithmeticError("Crank-Nicolson matrix is singular")
        self._lu = (dl, d, du, du2, ipiv)
        self.w = grid.trapezoid_weights

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        out[..., 1:-1] = u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]
        out[..., 0] = 2.0 * (u[..., 1] - u[..., 0])
        out[..., -1] = 2.0 * (u[..., -2] - u[..., -1])
        return out / self.grid.dx**2

    def explicit(self, u: np.ndarray) -> np.ndarray:
        return u + self.c * self.laplacian(u)

    def explicit_T(self, w: np.ndarray) -> np.ndarray:
        return self.w * self.explicit(w / self.w)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        n = self.grid.n_x
        b = np.asfortranarray(rhs.reshape(-1, n).T)
        x, info = lapack.dgttrs(*self._lu, b)
        return x.T.reshape(rhs.shape)

    def solve_T(self, rhs: np.ndarray) -> np.ndarray:
        return self.w * self.solve(rhs / self.w)

    def step(self, u: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        rhs = self.explicit(u)
        if source is not None:
            rhs = rhs + source
        return self.solve(rhs)


def _check_F(F, grid: GridSpec) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.shape != (grid.n_x,):
        raise ShapeError(f"F has shape {F.shape}, expected ({grid.n_x},)")
    if not np.all(np.isfinite(F)):
        raise InvalidInputError("F has non-finite entries")
    return F


def boundary_contribution(values: np.ndarray, grid: GridSpec) -> float:
    """Largest beta-weighted boundary value over the path."""
    edge = np.maximum(np.abs(values[..., 0]), np.abs(values[..., -1]))
    return float(math.exp(-grid.beta * grid.x_half_width) * np.max(edge))


def deterministic_limit(F, grid: GridSpec) -> FieldPath:
    """Heat flow ``u0_t = P_t F`` on the truncated grid."""
    F = _check_F(F, grid)
    stepper = HeatStepper(grid)
    out = np.empty(grid.shape)
    out[0] = F
    for i in range(grid.n_t):
        out[i + 1] = stepper.step(out[i])
    return FieldPath(out, "u0", grid, meta={"boundary_contribution": boundary_contribution(out, grid)})


def _excursion_guard(u: np.ndarray, udom: UDomainSpec, step: int):
    if udom.truncated:
        limit = EXCURSION_FRACTION * udom.half_width
        peak = float(np.max(np.abs(u)))
        if peak > limit:
            raise ExcursionError(
                f"|u| reached {peak:.4g} > {limit:.4g} (0.9 A) at step {step}; enlarge the U window")


def _march(grid: GridSpec, init: np.ndarray, source: Callable | None, guard: Callable | None = None,
           clamp: tuple | None = None) -> np.ndarray:
    """Run the CN recursion; ``source(i, u_i)`` returns the explicit term."""
    stepper = HeatStepper(grid)
    out = np.empty(init.shape[:-1] + (grid.n_t + 1, grid.n_x))
    out[..., 0, :] = init
    cur = init
    for i in range(grid.n_t):
        cur = stepper.step(cur, None if source is None else source(i, cur))
        if clamp is not None:
            cur = np.clip(cur, *clamp)
        if guard is not None:
            guard(cur, i + 1)
        out[..., i + 1, :] = cur
    return out


def _check_noise(noise: NoiseGrid, grid: GridSpec, udom: UDomainSpec):
    if noise.xi.shape[-2:] != (grid.n_t, udom.n_a):
        raise ShapeError(f"noise shape {noise.xi.shape} does not match (n_t, n_a)=({grid.n_t}, {udom.n_a})")


def solve_spde(kernel: KernelSpec, F, eps: EpsilonPoint | float, grid: GridSpec, noise: NoiseGrid,
               udom: UDomainSpec, clamp: bool = False) -> FieldPath:
    """``u = F + sqrt(eps) int int G(a, y, u) W(da ds) + int 1/2 u'' ds``."""
    F = _check_F(F, grid)
    _check_noise(noise, grid, udom)
    epsilon = eps.epsilon if isinstance(eps, EpsilonPoint) else float(eps)
    amp = math.sqrt(epsilon)
    y = grid.x
    source = None
    if not noise.is_zero():
        def source(i, u):
            return amp * kernel.project(y, u, noise.xi[i], udom)
    box = (0.0, 1.0) if clamp else None
    values = _march(grid, F, source, lambda u, i: _excursion_guard(u, udom, i), box)
    meta = {"boundary_contribution": boundary_contribution(values, grid), "clamp": bool(clamp),
            "seed": noise.seed, "stream_key": list(noise.stream_key)}
    return FieldPath(values, "u_eps", grid, epsilon, meta)


def _z_source(kernel, eps: EpsilonPoint, grid, udom, u0: np.ndarray, xi: np.ndarray | None,
              h: np.ndarray | None, freeze: bool):
    y = grid.x
    a_eps, z_norm = eps.a_eps, eps.z_norm
    if xi is None and h is None:
        return None, None

    def source(i, z):
        arg = np.broadcast_to(u0[i], z.shape) if freeze else z_norm * z + u0[i]
        total = 0.0
        if xi is not None:
            total = a_eps * kernel.project(y, arg, xi[..., i, :], udom)
        if h is not None:
            total = total + grid.dt * kernel.project(y, arg, np.broadcast_to(h[i] * udom.da, arg.shape[:-1] + (udom.n_a,)), udom)
        return total

    def guard(z, i):
        if udom.truncated:
            _excursion_guard(z_norm * z + u0[i], udom, i)

    return source, guard


def solve_Z(kernel: KernelSpec, F, eps: EpsilonPoint | float, grid: GridSpec, noise: NoiseGrid,
            udom: UDomainSpec, u0: FieldPath | None = None) -> FieldPath:
    """LIL-normalized fluctuation ``Z = (u - u0) / sqrt(2 eps log log(1/eps))``,
    stepped directly in rescaled variables with ``Z_0 = 0``."""
    if not isinstance(eps, EpsilonPoint):
        eps = EpsilonPoint(float(eps))
    F = _check_F(F, grid)
    _check_noise(noise, grid, udom)
    u0 = deterministic_limit(F, grid) if u0 is None else u0
    xi = None if noise.is_zero() else noise.xi
    source, guard = _z_source(kernel, eps, grid, udom, u0.values, xi, None, False)
    values = _march(grid, np.zeros(grid.n_x), source, guard)
    meta = {"boundary_contribution": boundary_contribution(values, grid),
            "seed": noise.seed, "stream_key": list(noise.stream_key)}
    return FieldPath(values, "z_eps", grid, eps.epsilon, meta)


def solve_controlled(kernel: KernelSpec, F, eps: EpsilonPoint | float, grid: GridSpec, noise: NoiseGrid,
                     udom: UDomainSpec, h, u0: FieldPath | None = None,
                     freeze_kernel: bool = False) -> FieldPath:
    """Z-dynamics plus the control drift ``int G(a, y, z_norm Y + u0) h_s(a) da ds``.

    ``freeze_kernel`` evaluates G at ``u0`` (the small-noise linearization).
    """
    if not isinstance(eps, EpsilonPoint):
        eps = EpsilonPoint(float(eps))
    F = _check_F(F, grid)
    _check_noise(noise, grid, udom)
    h = np.asarray(h.h if hasattr(h, "h") else h, dtype=float)
    if h.shape != (grid.n_t, udom.n_a):
        raise ShapeError(f"control shape {h.shape} != ({grid.n_t}, {udom.n_a})")
    u0 = deterministic_limit(F, grid) if u0 is None else u0
    xi = None if noise.is_zero() else noise.xi
    source, guard = _z_source(kernel, eps, grid, udom, u0.values, xi, h, freeze_kernel)
    values = _march(grid, np.zeros(grid.n_x), source, guard)
    meta = {"boundary_contribution": boundary_contribution(values, grid),
            "freeze_kernel": bool(freeze_kernel)}
    return FieldPath(values, "y_eps", grid, eps.epsilon, meta)


def z_ensemble(kernel: KernelSpec, F, eps: EpsilonPoint | float, grid: GridSpec, udom: UDomainSpec,
               seed: int, replicas, eps_index: int = 0, chunk: int = 64,
               reduce: Callable | None = None, u0: FieldPath | None = None,
               noise_off: bool = False):
    """Solve Z for many replicas at once; replica r uses stream ``(r, eps_index)``.

    ``replicas`` is a count or an explicit sequence of replica ids. With
    ``reduce`` each chunk of paths ``(R, n_t+1, n_x)`` is mapped through it and
    the concatenated results are returned instead of the paths.
    """
    if not isinstance(eps, EpsilonPoint):
        eps = EpsilonPoint(float(eps))
    F = _check_F(F, grid)
    ids = list(range(replicas)) if isinstance(replicas, (int, np.integer)) else [int(r) for r in replicas]
    u0 = deterministic_limit(F, grid) if u0 is None else u0
    pieces = []
    for start in range(0, len(ids), chunk):
        block = ids[start:start + chunk]
        if noise_off:
            xi = None
        else:
            xi = np.stack([sample_noise(grid, udom, seed, (r, eps_index)).xi for r in block])
        source, guard = _z_source(kernel, eps, grid, udom, u0.values, xi, None, False)
        paths = _march(grid, np.zeros((len(block), grid.n_x)), source, guard)
        pieces.append(paths if reduce is None else reduce(paths))
    if not pieces:
        return np.zeros((0,) + grid.shape) if reduce is None else np.zeros(0)
    return np.concatenate(pieces, axis=0)


def write_field_csv(path_obj: FieldPath, path) -> None:
    """Long-form CSV with header ``t,x,value``; time-major row order."""
    from .reports import csv_text

    g = path_obj.grid
    tt, xx = np.meshgrid(g.t, g.x, indexing="ij")
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(("t", "x", "value"), zip(tt.ravel(), xx.ravel(), path_obj.values.ravel())))


def read_field_csv(path, grid: GridSpec, label: str = "smoothed") -> FieldPath:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.shape[0] != (grid.n_t + 1) * grid.n_x:
        raise ShapeError(f"{path}: {data.shape[0]} rows do not fit grid {grid.shape}")
    return FieldPath(data[:, 2].reshape(grid.shape), label, grid)


def write_field_binary(path_obj: FieldPath, path) -> None:
    """``<n_rows:u64><n_cols:u64>`` followed by float64 row-major values."""
    vals = np.ascontiguousarray(path_obj.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array(vals.shape, dtype="<u8").tobytes())
        fh.write(vals.tobytes())


def read_field_binary(path, grid: GridSpec, label: str = "smoothed") -> FieldPath:
    raw = open(path, "rb").read()
    rows, cols = np.frombuffer(raw[:16], dtype="<u8")
    vals = np.frombuffer(raw[16:], dtype="<f8").reshape(int(rows), int(cols)).copy()
    return FieldPath(vals, label, grid)


def default_initial(kind: str, grid: GridSpec) -> np.ndarray:
    """Standard-normal initial data: the CDF for FVP, the signed distribution
    function ``Phi(y) - 1/2`` for SBM, a Gaussian bump otherwise."""
    from scipy.stats import norm

    if kind == "fvp":
        return norm.cdf(grid.x)
    if kind == "sbm":
        return norm.cdf(grid.x) - 0.5
    return np.exp(-0.5 * grid.x**2)
