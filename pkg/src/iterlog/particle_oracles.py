"""Particle systems used as independent oracles for the two population models.

* Branching Brownian motion: particles of mass ``m`` move as standard Brownian
  motions and, at rate ``eps / m``, either die or split in two with equal
  probability. ``<mu_t, f>`` then has martingale part with bracket
  ``eps int <mu_s, f^2> ds`` (plus motion noise of order ``m``).
* Moran model: N particles move as Brownian motions; each ordered pair (i, j)
  fires at rate ``eps / 2`` and particle i takes particle j's position. The
  resampling bracket is ``eps int (<mu,f^2> - <mu,f>^2) ds`` for any N.

Events are thinned per time step (first order in dt); each replica draws from
its own keyed stream so replicas are reproducible in isolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import DomainError, ResourceError
from .grid import GridSpec
from .noise_field import generator_for
from .spde_engine import FieldPath

__all__ = [
    "MeasurePath", "OracleReport", "particles_from_density", "particles_from_atoms",
    "simulate_branching_bm", "simulate_moran", "distribution_function", "densities", "qv_check",
    "write_particles_csv",
]

MAX_EVENT_PROB = 0.1
_SBM_TAG, _MORAN_TAG = 1, 2


@dataclass
class MeasurePath:
    """Empirical measure snapshots ``(positions[i], masses[i])`` at ``times[i]``."""

    times: np.ndarray
    positions: list
    masses: list
    model: str
    epsilon: float
    meta: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> np.ndarray:
        return np.array([float(np.sum(m)) for m in self.masses])

    def integrate(self, f: Callable) -> np.ndarray:
        return np.array([float(np.sum(m * f(x))) for x, m in zip(self.positions, self.masses)])


@dataclass
class OracleReport:
    model: str
    epsilon: float
    t_end: float
    qv_predicted: float
    qv_estimated: float
    mc_stderr: float
    replicas: int
    passed: bool

    def to_dict(self) -> dict:
        return {"model": self.model, "epsilon": self.epsilon, "t_end": self.t_end,
                "qv_predicted": self.qv_predicted, "qv_estimated": self.qv_estimated,
                "mc_stderr": self.mc_stderr, "replicas": self.replicas, "pass": self.passed}


def particles_from_density(density, grid: GridSpec, n_particles: int) -> np.ndarray:
    """Deterministic quantile placement of ``n_particles`` under a grid density."""
    q = np.clip(np.asarray(density, dtype=float), 0.0, None)
    cdf = np.cumsum(np.concatenate([[0.0], 0.5 * (q[1:] + q[:-1]) * grid.dx]))
    if cdf[-1] <= 0:
        raise DomainError("density has no mass")
    levels = (np.arange(n_particles) + 0.5) / n_particles * cdf[-1]
    return np.interp(levels, cdf, grid.x)


def particles_from_atoms(atoms: dict, particle_mass: float) -> np.ndarray:
    """Particles of equal mass placed on atoms ``{position: mass}``."""
    out = []
    for x, m in atoms.items():
        count = int(round(m / particle_mass))
        out.append(np.full(count, float(x)))
    return np.concatenate(out) if out else np.zeros(0)


def _steps(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise DomainError(f"t_end={t_end} is not a multiple of dt={dt}")
    return n


def _sbm_stream(x0, rate: float, dt: float, n_steps: int, rng, cap: int) -> Iterator[np.ndarray]:
    x = np.array(x0, dtype=float)
    p = rate * dt
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        if x.size:
            x = x + sq * rng.standard_normal(x.size)
            u = rng.random(x.size)
            split = (u >= 0.5 * p) & (u < p)
            x = np.concatenate([x[u >= p], x[split], x[split]])
            if x.size > cap:
                raise ResourceError(f"particle count {x.size} exceeds cap {cap}; raise epsilon or the cap")
        yield x


def _moran_stream(x0, gamma: float, dt: float, n_steps: int, rng) -> Iterator[np.ndarray]:
    x = np.array(x0, dtype=float)
    n = x.size
    p = (n - 1) * gamma * dt
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        x = x + sq * rng.standard_normal(n)
        hit = np.flatnonzero(rng.random(n) < p)
        if hit.size:
            parent = rng.integers(0, n - 1, size=hit.size)
            parent += parent >= hit
            x[hit] = x[parent]
        yield x


def _check_rate(prob: float):
    if prob > MAX_EVENT_PROB + 1e-12:
        raise DomainError(f"event probability per step {prob:.3g} exceeds {MAX_EVENT_PROB}; reduce dt")


def simulate_branching_bm(initial, eps: float, grid: GridSpec | None = None, seed: int = 0,
                          replica: int = 0, dt: float | None = None, t_end: float | None = None,
                          particle_mass: float | None = None, branching: bool = True,
                          record_every: int = 1, cap: int = 1_000_000) -> MeasurePath:
    """Critical binary branching Brownian motion started from particle positions."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    mass = eps if particle_mass is None else float(particle_mass)
    dt = grid.dt if dt is None else dt
    t_end = (grid.t_horizon if grid is not None else 1.0) if t_end is None else t_end
    rate = eps / mass if branching else 0.0
    _check_rate(rate * dt)
    n_steps = _steps(t_end, dt)
    rng = generator_for(seed, (replica, _SBM_TAG, 0))
    x0 = np.asarray(initial, dtype=float)
    times, pos = [0.0], [x0.copy()]
    for i, x in enumerate(_sbm_stream(x0, rate, dt, n_steps, rng, cap), start=1):
        if i % record_every == 0 or i == n_steps:
            times.append(i * dt)
            pos.append(x.copy())
    masses = [np.full(p.size, mass) for p in pos]
    return MeasurePath(np.array(times), pos, masses, "sbm", eps,
                       {"particle_mass": mass, "branching_rate": rate, "dt": dt, "seed": seed, "replica": replica})


def simulate_moran(initial, eps: float, grid: GridSpec | None = None, seed: int = 0, replica: int = 0,
                   dt: float | None = None, t_end: float | None = None, record_every: int = 1) -> MeasurePath:
    """Moran particle system with ``len(initial)`` particles (default round(1/eps))."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    x0 = np.asarray(initial, dtype=float)
    n = x0.size
    if n < 2:
        raise DomainError("the Moran model needs at least two particles")
    dt = grid.dt if dt is None else dt
    t_end = (grid.t_horizon if grid is not None else 1.0) if t_end is None else t_end
    gamma = eps / 2.0
    _check_rate((n - 1) * gamma * dt)
    n_steps = _steps(t_end, dt)
    rng = generator_for(seed, (replica, _MORAN_TAG, 0))
    times, pos = [0.0], [x0.copy()]
    for i, x in enumerate(_moran_stream(x0, gamma, dt, n_steps, rng), start=1):
        if i % record_every == 0 or i == n_steps:
            times.append(i * dt)
            pos.append(x.copy())
    masses = [np.full(n, 1.0 / n) for _ in pos]
    return MeasurePath(np.array(times), pos, masses, "fvp", eps,
                       {"n_particles": n, "pair_rate": gamma, "dt": dt, "seed": seed, "replica": replica})


def default_particle_count(eps: float) -> int:
    n = int(round(1.0 / eps))
    if n < 2:
        raise DomainError("round(1/eps) must be at least 2")
    return n


def _cumulative(x, m, y, model: str) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs, cm = x[order], np.concatenate([[0.0], np.cumsum(m[order])])
    upto = cm[np.searchsorted(xs, y, side="right")]
    if model == "fvp":
        return upto
    at0 = cm[np.searchsorted(xs, 0.0, side="right")]
    # signed interval mass: +mu((0, y]) for y > 0, -mu((y, 0]) for y < 0
    return np.where(y > 0, upto - at0, np.where(y < 0, -(at0 - upto), 0.0))


def distribution_function(mu: MeasurePath, grid: GridSpec):
    """Distribution-function path at the grid nodes.

    SBM uses the signed convention anchored at 0; FVP the usual CDF. Returns a
    FieldPath when the snapshots sit on every grid time, else an array.
    """
    vals = np.stack([_cumulative(x, m, grid.x, mu.model) for x, m in zip(mu.positions, mu.masses)])
    if vals.shape == grid.shape and np.allclose(mu.times, grid.t):
        return FieldPath(vals, "u_eps", grid, mu.epsilon)
    return vals


def densities(mu: MeasurePath, grid: GridSpec) -> np.ndarray:
    """Histogram densities on cells centred at the grid nodes."""
    edges = np.concatenate([[grid.x[0] - 0.5 * grid.dx], grid.x + 0.5 * grid.dx])
    width = np.diff(edges)
    return np.stack([np.histogram(x, bins=edges, weights=m)[0] / width
                     for x, m in zip(mu.positions, mu.masses)])


def _half_laplacian(f: Callable, h: float = 1e-3) -> Callable:
    return lambda x: 0.5 * (f(x + h) - 2.0 * f(x) + f(x - h)) / h**2


def qv_check(model: str, f: Callable, eps: float, replicas: int, seed: int, initial,
             t_end: float = 1.0, dt: float = 0.01, half_lap: Callable | None = None,
             particle_mass: float | None = None) -> OracleReport:
    """Monte Carlo check of the martingale bracket of ``<mu_t, f>``.

    For each replica the martingale ``M = <mu_T,f> - <mu_0,f> - int <mu_s, f''/2> ds``
    and the pathwise predicted bracket Q are accumulated; the report compares
    ``mean(M^2)`` with ``mean(Q)`` using the standard error of ``M^2 - Q``.
    """
    if replicas < 100:
        raise DomainError("qv_check needs at least 100 replicas")
    lap = _half_laplacian(f) if half_lap is None else half_lap
    n_steps = _steps(t_end, dt)
    x0 = np.asarray(initial, dtype=float)
    m2 = np.empty(replicas)
    qv = np.empty(replicas)
    for r in range(replicas):
        if model == "sbm":
            mass = eps if particle_mass is None else particle_mass
            rate = eps / mass
            _check_rate(rate * dt)
            stream = _sbm_stream(x0, rate, dt, n_steps, generator_for(seed, (r, _SBM_TAG, 0)), 10**7)
            weight = lambda x: np.full(x.size, mass)
        elif model == "fvp":
            gamma = eps / 2.0
            _check_rate((x0.size - 1) * gamma * dt)
            stream = _moran_stream(x0, gamma, dt, n_steps, generator_for(seed, (r, _MORAN_TAG, 0)))
            weight = lambda x: np.full(x.size, 1.0 / x0.size)
        else:
            raise DomainError(f"unknown model {model!r}")
        x = x0
        w = weight(x)
        start = float(np.sum(w * f(x)))
        drift = q = 0.0
        for x_next in stream:
            fx = f(x)
            mean_f = float(np.sum(w * fx))
            drift += dt * float(np.sum(w * lap(x)))
            centred = fx - mean_f if model == "fvp" else fx
            q += dt * eps * float(np.sum(w * centred * centred))
            x = x_next
            w = weight(x)
        mart = float(np.sum(w * f(x))) - start - drift
        m2[r] = mart * mart
        qv[r] = q
    est, pred = float(m2.mean()), float(qv.mean())
    stderr = float(np.std(m2 - qv, ddof=1) / math.sqrt(replicas))
    # brackets below the roundoff floor count as exact zeros
    floor = 1e-14 * eps * t_end
    return OracleReport(model, float(eps), float(t_end), pred, est, stderr, int(replicas),
                        bool(abs(est - pred) <= 3.0 * stderr + floor))


def write_particles_csv(mu: MeasurePath, path) -> None:
    from .reports import csv_text

    rows = ((t, x, m) for t, xs, ms in zip(mu.times, mu.positions, mu.masses) for x, m in zip(xs, ms))
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(("t", "position", "mass"), rows))
