"""Noise coefficients ``G(a, y, u)`` for the white-noise-driven heat equation.

Every kernel exposes its pointwise formula. The two population kernels also
carry an indicator decomposition

    G(a, y, u) = 1{a in cells [lo(u), hi(u))} - shift(u)

on a cell grid of U, which turns the U-integrals against noise or controls
into prefix-sum lookups (O(n_a + n_x) per time step instead of O(n_a n_x)).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import UDomainSpec


def _sbm_G(a, y, u):
    a, u = np.asarray(a, dtype=float), np.asarray(u, dtype=float)
    return (((0.0 < a) & (a < u)) | ((u < a) & (a < 0.0))).astype(float)


def _fvp_G(a, y, u):
    a, u = np.asarray(a, dtype=float), np.asarray(u, dtype=float)
    return (a <= u).astype(float) - u


def _sbm_cells(u, udom: UDomainSpec):
    le0 = udom.count_below(0.0, inclusive=True)
    lt0 = udom.count_below(0.0, inclusive=False)
    lt_u = udom.count_below(u, inclusive=False)
    le_u = udom.count_below(u, inclusive=True)
    pos = np.asarray(u) >= 0.0
    lo = np.where(pos, le0, np.minimum(le_u, lt0))
    hi = np.where(pos, np.maximum(lt_u, le0), lt0)
    return lo, hi


def _fvp_cells(u, udom: UDomainSpec):
    hi = udom.count_below(u, inclusive=True)
    return np.zeros_like(hi), hi


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    G: Callable
    k1: float
    k2: float
    cells: Callable | None = None
    shift: Callable | None = None
    breakpoints: Callable | None = None

    def matrix(self, y, u, udom: UDomainSpec) -> np.ndarray:
        """Dense ``G(a_k, y_j, u_j)`` with shape ``u.shape + (n_a,)``."""
        u = np.asarray(u, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), u.shape)
        return np.asarray(self.G(udom.midpoints, y[..., None], u[..., None]), dtype=float) \
            * np.ones(u.shape + (udom.n_a,))

    def project(self, y, u, values, udom: UDomainSpec, dense: bool = False) -> np.ndarray:
        """``sum_k G(a_k, y_j, u_j) values[..., k]`` for every node j.

        ``u`` has shape ``(..., n_x)`` and ``values`` shape ``(..., n_a)`` with
        matching leading dimensions.
        """
        u = np.asarray(u, dtype=float)
        values = np.asarray(values, dtype=float)
        if self.cells is None or dense:
            return np.einsum("...jk,...k->...j", self.matrix(y, u, udom), values)
        lo, hi = self.cells(u, udom)
        csum = np.zeros(values.shape[:-1] + (udom.n_a + 1,))
        np.cumsum(values, axis=-1, out=csum[..., 1:])
        out = np.take_along_axis(csum, hi, axis=-1) - np.take_along_axis(csum, lo, axis=-1)
        if self.shift is not None:
            out -= self.shift(u) * csum[..., -1:]
        return out

    def project_adjoint(self, y, u, weights, udom: UDomainSpec, dense: bool = False) -> np.ndarray:
        """``sum_j G(a_k, y_j, u_j) weights[..., j]`` for every cell k."""
        u = np.asarray(u, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if self.cells is None or dense:
            return np.einsum("...jk,...j->...k", self.matrix(y, u, udom), weights)
        lo, hi = self.cells(u, udom)
        lead = weights.shape[:-1]
        n_rows = int(np.prod(lead)) if lead else 1
        width = udom.n_a + 1
        base = (np.arange(n_rows) * width).reshape(lead + (1,)) if lead else 0
        diff = np.zeros(n_rows * width)
        np.add.at(diff, (lo + base).ravel(), weights.ravel())
        np.add.at(diff, (hi + base).ravel(), -weights.ravel())
        out = np.cumsum(diff.reshape(lead + (width,)), axis=-1)[..., :-1]
        if self.shift is not None:
            out = out - np.sum(self.shift(u) * weights, axis=-1, keepdims=True)
        return out


def sbm_kernel() -> KernelSpec:
    """Super-Brownian kernel ``1{0<a<u} + 1{u<a<0}`` on U = R."""
    return KernelSpec(
        kind="sbm", G=_sbm_G, k1=1.0, k2=1.0, cells=_sbm_cells,
        breakpoints=lambda y, u: np.array([0.0, u]),
    )


def fvp_kernel() -> KernelSpec:
    """Fleming-Viot kernel ``1{a<=u} - u`` on U = [0, 1]."""
    return KernelSpec(
        kind="fvp", G=_fvp_G, k1=1.0, k2=1.0, cells=_fvp_cells,
        shift=lambda u: u, breakpoints=lambda y, u: np.array([u]),
    )


def constant_kernel(value: float = 1.0) -> KernelSpec:
    """``G == value``; useful as a closed-form test case for the skeleton."""
    return custom_kernel(lambda a, y, u: np.full(np.broadcast(a, y, u).shape, float(value)),
                         k1=0.0, k2=float(value) ** 2, kind="constant")


def custom_kernel(G: Callable, k1: float, k2: float, kind: str = "custom",
                  breakpoints: Callable | None = None) -> KernelSpec:
    return KernelSpec(kind=kind, G=G, k1=k1, k2=k2, breakpoints=breakpoints)


def kernel_by_name(name: str) -> KernelSpec:
    table = {"sbm": sbm_kernel, "fvp": fvp_kernel, "constant": constant_kernel}
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; expected one of {sorted(table)}") from None
