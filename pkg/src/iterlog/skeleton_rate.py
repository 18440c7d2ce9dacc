"""Skeleton (controlled heat) equation and the two rate-function evaluators.

The skeleton map ``h -> S(h)`` is linear, so the variational rate
``I(g) = 1/2 inf {||h||^2 : S(h) = g}`` is computed as the Tikhonov-regularized
least-norm control, solving ``(lam + S* S) h = S* g`` by conjugate gradients.
Inner products: controls use ``da dt sum h h'``; paths use the chi0 weight in
space and flat ``dt`` weights over time nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import InvalidMeasureError, ShapeError
from .grid import GridSpec, UDomainSpec
from .kernels import KernelSpec
from .spde_engine import FieldPath, HeatStepper

__all__ = [
    "ControlField", "RateResult", "ClosedFormRate", "SkeletonOperator", "solve_skeleton",
    "apply_adjoint", "rate_variational", "rate_variational_many", "rate_closed_form",
    "level_set_membership", "path_inner", "path_norm",
]


@dataclass(frozen=True)
class ControlField:
    h: np.ndarray
    da: float
    dt: float

    @cached_property
    def squared_l2(self) -> float:
        return float(np.sum(self.h**2) * self.da * self.dt)

    def __add__(self, other: "ControlField") -> "ControlField":
        return ControlField(self.h + other.h, self.da, self.dt)

    def scaled(self, c: float) -> "ControlField":
        return ControlField(c * self.h, self.da, self.dt)

    @classmethod
    def zeros(cls, grid: GridSpec, udom: UDomainSpec) -> "ControlField":
        return cls(np.zeros((grid.n_t, udom.n_a)), udom.da, grid.dt)


@dataclass
class RateResult:
    value: float
    lambda_reg: float
    residual: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {"value": self.value, "lambda_reg": self.lambda_reg, "residual": self.residual,
                "iterations": self.iterations, "converged": self.converged}


@dataclass
class ClosedFormRate:
    value: float
    q_floor: float
    constraint_defect: float | None
    q_floor_sensitivity: float
    reading: str

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        out = {"value": self.value, "q_floor": self.q_floor,
               "q_floor_sensitivity": self.q_floor_sensitivity, "reading": self.reading}
        if self.constraint_defect is not None:
            out["constraint_defect"] = self.constraint_defect
        return out


def path_inner(f, g, grid: GridSpec, beta: float | None = None):
    """``dt sum_i <f_i, g_i>_chi0`` over all time nodes (trailing two axes)."""
    w = grid.chi0_weights(beta)
    return grid.dt * np.sum(np.asarray(f) * np.asarray(g) * w, axis=(-2, -1))


def path_norm(f, grid: GridSpec, beta: float | None = None):
    return np.sqrt(path_inner(f, f, grid, beta))


class SkeletonOperator:
    """Linear map ``h -> S(h)`` for a fixed kernel and deterministic limit.

    The source at step i is ``sum_k G(a_k, y, u0_i(y)) h_i(a_k) da``.
    """

    def __init__(self, kernel: KernelSpec, u0: FieldPath, grid: GridSpec, udom: UDomainSpec):
        if u0.values.shape != grid.shape:
            raise ShapeError("u0 does not live on the grid")
        self.kernel, self.grid, self.udom = kernel, grid, udom
        self.u0 = u0.values
        self.stepper = HeatStepper(grid)

    @property
    def control_shape(self) -> tuple[int, int]:
        return (self.grid.n_t, self.udom.n_a)

    def _h_array(self, h) -> np.ndarray:
        arr = np.asarray(h.h if isinstance(h, ControlField) else h, dtype=float)
        if arr.shape[-2:] != self.control_shape:
            raise ShapeError(f"control shape {arr.shape[-2:]} != {self.control_shape}")
        return arr

    def forward(self, h) -> np.ndarray:
        h = self._h_array(h)
        g, ud = self.grid, self.udom
        lead = h.shape[:-2]
        out = np.zeros(lead + g.shape)
        cur = np.zeros(lead + (g.n_x,))
        arg_shape = lead + (g.n_x,)
        for i in range(g.n_t):
            arg = np.broadcast_to(self.u0[i], arg_shape)
            src = g.dt * ud.da * self.kernel.project(g.x, arg, h[..., i, :], ud)
            cur = self.stepper.step(cur, src)
            out[..., i + 1, :] = cur
        return out

    def adjoint(self, w) -> np.ndarray:
        w = np.asarray(w.values if isinstance(w, FieldPath) else w, dtype=float)
        g, ud = self.grid, self.udom
        if w.shape[-2:] != g.shape:
            raise ShapeError(f"path shape {w.shape[-2:]} != {g.shape}")
        lead = w.shape[:-2]
        dw = g.dt * g.chi0_weights() * w
        out = np.zeros(lead + self.control_shape)
        q = np.zeros(lead + (g.n_x,))
        st = self.stepper
        for m in range(g.n_t - 1, -1, -1):
            q = st.solve_T(dw[..., m + 1, :] + (st.explicit_T(q) if m < g.n_t - 1 else 0.0))
            arg = np.broadcast_to(self.u0[m], lead + (g.n_x,))
            out[..., m, :] = self.kernel.project_adjoint(g.x, arg, q, ud)
        return out

    def control_inner(self, h1, h2):
        return self.udom.da * self.grid.dt * np.sum(h1 * h2, axis=(-2, -1))


def solve_skeleton(kernel: KernelSpec, u0: FieldPath, h, grid: GridSpec, udom: UDomainSpec) -> FieldPath:
    op = SkeletonOperator(kernel, u0, grid, udom)
    return FieldPath(op.forward(h), "skeleton", grid)


def apply_adjoint(kernel: KernelSpec, u0: FieldPath, w, grid: GridSpec, udom: UDomainSpec) -> ControlField:
    op = SkeletonOperator(kernel, u0, grid, udom)
    return ControlField(op.adjoint(w), udom.da, grid.dt)


def _cg_batch(op: SkeletonOperator, targets: np.ndarray, lam: float, tol: float, max_iter: int):
    """Column-wise CG for ``(lam + S*S) h = S* g``; returns h, iterations, converged."""
    inner = op.control_inner
    b = op.adjoint(targets)
    bnorm = np.sqrt(inner(b, b))
    h = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = inner(r, r)
    active = bnorm > 0
    iters = np.zeros(b.shape[0], dtype=int)
    done = ~active
    for _ in range(max_iter):
        if done.all():
            break
        idx = np.flatnonzero(~done)
        ap = lam * p[idx] + op.adjoint(op.forward(p[idx]))
        alpha = rr[idx] / inner(p[idx], ap)
        h[idx] += alpha[:, None, None] * p[idx]
        r[idx] -= alpha[:, None, None] * ap
        rr_new = inner(r[idx], r[idx])
        beta = rr_new / rr[idx]
        p[idx] = r[idx] + beta[:, None, None] * p[idx]
        rr[idx] = rr_new
        iters[idx] += 1
        done[idx] = np.sqrt(rr_new) <= tol * bnorm[idx]
    return h, iters, done


def rate_variational_many(paths, kernel: KernelSpec, u0: FieldPath, grid: GridSpec, udom: UDomainSpec,
                          lambda_reg: float = 1e-4, tol: float = 1e-8, max_iter: int = 500,
                          return_controls: bool = False):
    """Regularized variational rate for a stack of paths ``(R, n_t+1, n_x)``."""
    if not lambda_reg > 0:
        raise ValueError("lambda_reg must be positive")
    g = np.asarray(paths, dtype=float)
    if g.ndim == 2:
        g = g[None]
    if g.shape[-2:] != grid.shape:
        raise ShapeError(f"path shape {g.shape[-2:]} != {grid.shape}")
    op = SkeletonOperator(kernel, u0, grid, udom)
    if g.shape[0] == 0:
        return ([], np.zeros((0,) + op.control_shape)) if return_controls else []
    h, iters, conv = _cg_batch(op, g, lambda_reg, tol, max_iter)
    resid = path_norm(op.forward(h) - g, grid)
    values = 0.5 * op.control_inner(h, h)
    results = [RateResult(float(v), float(lambda_reg), float(rs), int(it), bool(c))
               for v, rs, it, c in zip(values, resid, iters, conv)]
    return (results, h) if return_controls else results


def rate_variational(g, kernel: KernelSpec, u0: FieldPath, grid: GridSpec, udom: UDomainSpec,
                     lambda_reg: float = 1e-4, tol: float = 1e-8, max_iter: int = 500) -> RateResult:
    vals = g.values if isinstance(g, FieldPath) else np.asarray(g, dtype=float)
    return rate_variational_many(vals[None], kernel, u0, grid, udom, lambda_reg, tol, max_iter)[0]


def rate_closed_form(omega, mu0, grid: GridSpec, q_floor: float | None = None,
                     model: str = "sbm", reading: str = "evaluate") -> ClosedFormRate:
    """``1/2 int int r^2 q dy dt`` with ``r = (d_t omega - 1/2 omega'') / q``.

    ``omega`` and ``mu0`` are density paths of shape ``(n_t+1, n_x)``.
    ``q_floor`` defaults to 1e-8 of the peak of ``mu0``. ``reading='multiply'``
    uses ``(r y)^2`` in place of ``r^2``. For ``model='fvp'`` the side condition
    ``max_t |<mu0_t, r_t>|`` is reported as ``constraint_defect``.
    """
    omega = np.asarray(omega.values if isinstance(omega, FieldPath) else omega, dtype=float)
    q = np.asarray(mu0.values if isinstance(mu0, FieldPath) else mu0, dtype=float)
    if omega.shape != grid.shape or q.shape != grid.shape:
        raise ShapeError("omega and mu0 must be density paths on the grid")
    if np.any(q < -1e-12):
        raise InvalidMeasureError("mu0 density has negative entries")
    if reading not in ("evaluate", "multiply"):
        raise ValueError("reading must be 'evaluate' or 'multiply'")
    if q_floor is None:
        q_floor = 1e-8 * float(np.max(q)) if np.max(q) > 0 else 1e-300
    stepper = HeatStepper(grid)
    forcing = np.gradient(omega, grid.dt, axis=0, edge_order=1) - 0.5 * stepper.laplacian(omega)
    tw = np.full(grid.n_t + 1, grid.dt)
    tw[0] = tw[-1] = 0.5 * grid.dt
    xw = grid.trapezoid_weights

    def evaluate(floor):
        r = forcing / np.maximum(q, floor)
        if reading == "multiply":
            r = r * grid.x
        return 0.5 * float(np.sum(tw[:, None] * xw[None, :] * r**2 * q)), r

    value, r = evaluate(q_floor)
    coarse, _ = evaluate(10.0 * q_floor)
    defect = None
    if model == "fvp":
        defect = float(np.max(np.abs(np.sum(xw * r * q, axis=1))))
    sens = abs(coarse - value) / value if value > 0 else 0.0
    return ClosedFormRate(value, float(q_floor), defect, float(sens), reading)


def level_set_membership(path, evaluator: Callable, threshold: float = 1.0,
                         slack: float = 0.0) -> tuple[bool, float]:
    """Check ``I(path) <= threshold + slack`` with any rate evaluator."""
    result = evaluator(path)
    value = float(result.value if hasattr(result, "value") else result)
    return bool(value <= threshold + slack), value
