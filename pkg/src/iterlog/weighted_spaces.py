"""Weighted sup/L2 norms, the truncated Hölder metric, M_beta integrals and
numerical checks of the kernel conditions.

All functions take plain numpy arrays sampled on the nodes of a GridSpec.
The real line is replaced by ``[-L, L]``; suprema are maxima over nodes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InvalidInputError, InvalidMeasureError, KernelDivergenceError, ShapeError
from .grid import GridSpec, UDomainSpec
from .kernels import KernelSpec

__all__ = [
    "GridSpec", "beta_norm", "chi0_norm_sq", "chi0_inner", "holder_seminorm", "holder_metric",
    "m_beta_integral", "in_m_beta", "kernel_l2_difference", "kernel_l2_mass",
    "validate_kernel", "ValidationReport",
]


def _finite(f, name="f") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return f


def _on_grid(f, grid: GridSpec, name="f") -> np.ndarray:
    f = _finite(f, name)
    if f.shape[-1] != grid.n_x:
        raise ShapeError(f"{name} has {f.shape[-1]} spatial nodes, grid has {grid.n_x}")
    return f


def beta_norm(f, grid: GridSpec, beta: float | None = None) -> np.ndarray | float:
    """``max_j exp(-beta |x_j|) |f(x_j)|`` over the last axis."""
    f = _on_grid(f, grid)
    b = grid.beta if beta is None else beta
    out = np.max(np.exp(-b * np.abs(grid.x)) * np.abs(f), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def chi0_inner(f, g, grid: GridSpec, beta: float | None = None):
    """Trapezoid approximation of ``int f g exp(-2 beta |x|) dx`` on [-L, L]."""
    w = grid.chi0_weights(beta)
    out = np.sum(np.asarray(f) * np.asarray(g) * w, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def chi0_norm_sq(f, grid: GridSpec, beta: float | None = None):
    f = _on_grid(f, grid)
    return chi0_inner(f, f, grid, beta)


def holder_seminorm(f, grid: GridSpec, radius: float, alpha: float | None = None) -> float:
    """Max of ``|f(x_i) - f(x_j)| / |x_i - x_j|^alpha`` over distinct nodes with
    ``|x_i|, |x_j| <= radius``; zero when fewer than two nodes qualify."""
    a = grid.alpha if alpha is None else alpha
    mask = np.abs(grid.x) <= radius + 1e-12 * grid.x_half_width
    if mask.sum() < 2:
        return 0.0
    xs, fs = grid.x[mask], np.asarray(f, dtype=float)[mask]
    gap = np.abs(xs[:, None] - xs[None, :])
    np.fill_diagonal(gap, 1.0)
    ratio = np.abs(fs[:, None] - fs[None, :]) / gap**a
    return float(ratio.max())


def holder_metric(u, v, grid: GridSpec, m_max: int | None = None) -> float:
    """Truncated ``sum_{m<=m_max} 2^-m min(||u - v||_{m,alpha,beta}, 1)``.

    The Hölder part of level m uses nodes with ``|x| <= min(m, L)`` and weight
    ``exp(-beta m)``. The neglected tail is at most ``2^-m_max``.
    """
    u = _on_grid(u, grid, "u")
    v = _on_grid(v, grid, "v")
    if u.shape != v.shape:
        raise ShapeError(f"mismatched shapes {u.shape} and {v.shape}")
    levels = grid.m_max if m_max is None else int(m_max)
    w = u - v
    sup_part = beta_norm(w, grid)
    total = 0.0
    cached = {}
    for m in range(1, levels + 1):
        radius = min(float(m), grid.x_half_width)
        if radius not in cached:
            cached[radius] = holder_seminorm(w, grid, radius)
        level = sup_part + cached[radius] * math.exp(-grid.beta * m)
        total += 2.0**-m * min(level, 1.0)
    return total


def m_beta_integral(density, grid: GridSpec, beta: float | None = None, tol: float = 1e-12) -> float:
    """Trapezoid value of ``int exp(-beta |x|) q(x) dx`` for a density on the grid."""
    q = _on_grid(density, grid, "density")
    if np.any(q < -tol):
        raise InvalidMeasureError("density has negative mass below tolerance")
    b = grid.beta if beta is None else beta
    return float(np.sum(grid.trapezoid_weights * np.exp(-b * np.abs(grid.x)) * q, axis=-1))


def in_m_beta(density, grid: GridSpec, beta: float | None = None) -> bool:
    return bool(np.isfinite(m_beta_integral(density, grid, beta)))


# -- kernel conditions -------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _piecewise_quad(fun, lo: float, hi: float, breaks) -> float:
    """Gauss-Legendre on each piece between breakpoints; exact for piecewise
    cubic integrands such as squared indicator combinations."""
    pts = np.unique(np.clip(np.concatenate([[lo, hi], np.ravel(breaks)]), lo, hi))
    left, right = pts[:-1], pts[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * fun(nodes)))


def _integrate_u(fun, bounds, breaks) -> float:
    lo, hi = bounds
    if np.isfinite(lo) and np.isfinite(hi) and breaks is not None:
        return _piecewise_quad(fun, lo, hi, breaks)
    pts = None
    if breaks is not None and np.isfinite(lo) and np.isfinite(hi):
        pts = [b for b in np.ravel(breaks) if lo < b < hi]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if pts and np.isfinite(lo) and np.isfinite(hi):
                val, _ = integrate.quad(lambda a: float(fun(np.array(a))), lo, hi, points=pts, limit=400)
            else:
                val, _ = integrate.quad(lambda a: float(fun(np.array(a))), lo, hi, limit=400)
        except integrate.IntegrationWarning as exc:
            raise KernelDivergenceError(f"U-quadrature failed to converge: {exc}") from exc
    if not np.isfinite(val):
        raise KernelDivergenceError("U-quadrature returned a non-finite value")
    return float(val)


def _breaks(kernel: KernelSpec, y, *us):
    if kernel.breakpoints is None:
        return None
    return np.concatenate([np.ravel(kernel.breakpoints(y, u)) for u in us])


def kernel_l2_difference(kernel: KernelSpec, y: float, u1: float, u2: float, bounds) -> float:
    """``int_U |G(a,y,u1) - G(a,y,u2)|^2 da``."""
    def fun(a):
        return (kernel.G(a, y, u1) - kernel.G(a, y, u2)) ** 2
    return _integrate_u(fun, bounds, _breaks(kernel, y, u1, u2))


def kernel_l2_mass(kernel: KernelSpec, y: float, u: float, bounds) -> float:
    """``int_U |G(a,y,u)|^2 da``."""
    def fun(a):
        return np.asarray(kernel.G(a, y, u), dtype=float) ** 2
    return _integrate_u(fun, bounds, _breaks(kernel, y, u))


@dataclass
class ValidationReport:
    kernel: str
    samples: int
    k1_hat: float
    k2_hat: float
    max_ratio_location: dict
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "samples": self.samples,
            "k1_hat": self.k1_hat,
            "k2_hat": self.k2_hat,
            "max_ratio_location": self.max_ratio_location,
            "pass": self.passed,
        }


def default_u_bounds(kernel: KernelSpec, u_range) -> tuple[float, float]:
    if kernel.kind == "fvp":
        return (0.0, 1.0)
    lo, hi = u_range
    width = 1.2 * max(abs(lo), abs(hi), 1.0)
    return (-width, width)


def validate_kernel(kernel: KernelSpec, sample_count: int = 100, seed: int = 0,
                    u_range=None, y_range=(-5.0, 5.0), bounds=None,
                    udom: UDomainSpec | None = None, tol: float = 1e-6) -> ValidationReport:
    """Estimate the best constants in the two kernel conditions by sampling.

    ``k1_hat`` is the largest ``int |G(u1)-G(u2)|^2 / |u1-u2|`` and ``k2_hat``
    the largest ``int |G(u)|^2 / (1 + u^2)`` over random ``(y, u1, u2)``.
    The report passes when both stay within the kernel's declared constants.
    """
    if u_range is None:
        u_range = (0.0, 1.0) if kernel.kind == "fvp" else (-10.0, 10.0)
    if bounds is None:
        bounds = (udom.u_min, udom.u_max) if udom is not None else default_u_bounds(kernel, u_range)
    rng = np.random.default_rng(seed)
    ys = rng.uniform(*y_range, size=sample_count)
    u1s = rng.uniform(*u_range, size=sample_count)
    u2s = rng.uniform(*u_range, size=sample_count)
    k1_hat, k2_hat, where = 0.0, 0.0, {}
    for y, u1, u2 in zip(ys, u1s, u2s):
        gap = abs(u1 - u2)
        if gap > 0:
            r1 = kernel_l2_difference(kernel, y, u1, u2, bounds) / gap
            if r1 > k1_hat:
                k1_hat, where = r1, {"y": float(y), "u1": float(u1), "u2": float(u2)}
        for u in (u1, u2):
            k2_hat = max(k2_hat, kernel_l2_mass(kernel, y, u, bounds) / (1.0 + u * u))
    passed = k1_hat <= kernel.k1 + tol and k2_hat <= kernel.k2 + tol
    return ValidationReport(kernel.kind, int(sample_count), float(k1_hat), float(k2_hat),
                            where, bool(passed))
