"""Finite-scale experiments around the compact LIL.

Everything here is a statistical proxy: normalized fluctuation paths along a
geometric subsequence ``eps_j = c^-j`` are smoothed and scored against the
unit level set of the rate function, and simple moment/increment statistics
are fitted. None of it certifies an almost-sure limit statement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import DomainError
from .grid import GridSpec, UDomainSpec
from .kernels import KernelSpec, kernel_by_name
from .reports import config_hash
from .skeleton_rate import rate_variational_many
from .spde_engine import EpsilonPoint, FieldPath, default_initial, deterministic_limit, z_ensemble
from .weighted_spaces import beta_norm, chi0_norm_sq

__all__ = [
    "EpsilonSchedule", "build_schedule", "smooth_path", "smooth_values", "ClusterConfig",
    "ClusterReport", "run_cluster_experiment", "DiagnosticReport", "moment_diagnostic",
    "holder_diagnostic", "sup_beta_distance",
]

PROXY_LABEL = "statistical proxy at finite epsilon; not a verification of the limit theorem"


@dataclass(frozen=True)
class EpsilonSchedule:
    c: float
    js: tuple
    points: tuple

    def __iter__(self):
        return iter(zip(self.js, self.points))

    def __len__(self):
        return len(self.js)


def build_schedule(c: float, j_min: int, j_max: int, eps0: float | None = None) -> EpsilonSchedule:
    """``eps_j = c^-j`` for j in [j_min, j_max], dropping j with eps_j >= e^-1
    (or ``>= eps0`` when a smaller small-noise cutoff is given)."""
    if not c > 1:
        raise DomainError("c must exceed 1")
    if j_min > j_max:
        raise DomainError("j_min must not exceed j_max")
    top = math.exp(-1.0) if eps0 is None else min(float(eps0), math.exp(-1.0))
    js, pts = [], []
    for j in range(int(j_min), int(j_max) + 1):
        eps = c ** (-j)
        if eps < top:
            js.append(j)
            pts.append(EpsilonPoint(eps))
    if not js:
        raise DomainError(f"no j in [{j_min}, {j_max}] gives c^-j below {top:.4g} for c={c}")
    return EpsilonSchedule(float(c), tuple(js), tuple(pts))


def smooth_values(values: np.ndarray, grid: GridSpec, bandwidth_t: float, bandwidth_x: float) -> np.ndarray:
    """Separable Gaussian smoothing over the trailing (time, space) axes with
    reflecting boundaries; bandwidths are standard deviations in physical units."""
    if bandwidth_t < grid.dt * (1 - 1e-12) or bandwidth_x < grid.dx * (1 - 1e-12):
        raise DomainError("bandwidths must be at least the grid spacings")
    out = gaussian_filter1d(np.asarray(values, dtype=float), bandwidth_t / grid.dt, axis=-2, mode="reflect")
    return gaussian_filter1d(out, bandwidth_x / grid.dx, axis=-1, mode="reflect")


def smooth_path(Z: FieldPath, bandwidth_t: float, bandwidth_x: float) -> FieldPath:
    vals = smooth_values(Z.values, Z.grid, bandwidth_t, bandwidth_x)
    return FieldPath(vals, "smoothed", Z.grid, Z.epsilon,
                     {"bandwidth_t": bandwidth_t, "bandwidth_x": bandwidth_x})


def sup_beta_distance(paths: np.ndarray, target: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``sup_t ||path_t - target_t||_beta`` for a stack of paths."""
    return np.max(beta_norm(np.asarray(paths) - target, grid), axis=-1)


@dataclass
class ClusterConfig:
    kernel: str = "fvp"
    grid: GridSpec = field(default_factory=lambda: GridSpec(n_t=20, n_x=41))
    n_a: int = 40
    c: float = 2.0
    j_min: int = 4
    j_max: int = 10
    replicas: int = 200
    seed: int = 0
    threshold: float = 1.0
    slack: float = 0.25
    bandwidth_t: float | None = None
    bandwidth_x: float | None = None
    lambda_reg: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 500
    targets: tuple = ("zero",)
    target_fraction: float = 0.9
    eps0: float = math.exp(-2.0)

    @property
    def bw_t(self) -> float:
        return 4.0 * self.grid.dt if self.bandwidth_t is None else self.bandwidth_t

    @property
    def bw_x(self) -> float:
        return 4.0 * self.grid.dx if self.bandwidth_x is None else self.bandwidth_x

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel, "grid": self.grid.as_dict(), "n_a": self.n_a, "c": self.c,
            "j_min": self.j_min, "j_max": self.j_max, "replicas": self.replicas, "seed": self.seed,
            "threshold": self.threshold, "slack": self.slack, "bandwidth_t": self.bw_t,
            "bandwidth_x": self.bw_x, "lambda_reg": self.lambda_reg, "tol": self.tol,
            "max_iter": self.max_iter, "targets": list(self.targets),
            "target_fraction": self.target_fraction, "eps0": self.eps0,
        }


@dataclass
class ClusterReport:
    config: dict
    config_hash: str
    rows: list
    membership_fraction: dict
    min_distance: dict
    failures: list
    label: str = PROXY_LABEL

    COLUMNS = ("j", "epsilon", "replica", "rate_value", "residual", "member")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "config_hash": self.config_hash,
            "config": self.config,
            "membership_fraction": {str(j): f for j, f in self.membership_fraction.items()},
            "min_distance": self.min_distance,
            "failures": self.failures,
            "rows": self.rows,
        }


def _udomain(kernel: KernelSpec, F: np.ndarray, n_a: int) -> UDomainSpec:
    if kernel.kind == "sbm":
        return UDomainSpec.sbm(float(np.max(np.abs(F))), n_a)
    return UDomainSpec(0.0, 1.0, n_a)


def _target_path(name: str, grid: GridSpec) -> np.ndarray:
    if name == "zero":
        return np.zeros(grid.shape)
    raise DomainError(f"unknown target {name!r}")


def run_cluster_experiment(config: ClusterConfig) -> ClusterReport:
    """Score smoothed normalized paths against the level set ``{I <= threshold}``.

    For each j and replica, Z^{eps_j} is simulated on stream ``(replica, j)``,
    smoothed, and its regularized variational rate recorded together with the
    membership flag ``rate <= threshold + slack``. For each target the running
    minimum over j of the sup-beta distance is summarized across replicas.
    """
    grid = config.grid
    kernel = kernel_by_name(config.kernel)
    F = default_initial(kernel.kind, grid)
    udom = _udomain(kernel, F, config.n_a)
    schedule = build_schedule(config.c, config.j_min, config.j_max, config.eps0)
    u0 = deterministic_limit(F, grid)
    cfg = config.to_dict()
    rows, fractions, failures = [], {}, []
    targets = {name: _target_path(name, grid) for name in config.targets}
    running = {name: np.full(config.replicas, np.inf) for name in targets}
    min_distance = {name: {} for name in targets}
    cut = config.threshold + config.slack

    def smooth(paths):
        return smooth_values(paths, grid, config.bw_t, config.bw_x)

    for j, pt in schedule:
        if config.replicas == 0:
            fractions[j] = 0.0
            continue
        try:
            paths = z_ensemble(kernel, F, pt, grid, udom, config.seed, config.replicas,
                               eps_index=j, reduce=smooth, u0=u0)
            results = rate_variational_many(paths, kernel, u0, grid, udom, config.lambda_reg,
                                            config.tol, config.max_iter)
        except ArithmeticError as exc:
            failures.append({"j": j, "error": str(exc)})
            fractions[j] = float("nan")
            continue
        members = 0
        for r, res in enumerate(results):
            member = res.value <= cut
            members += member
            rows.append({"j": j, "epsilon": pt.epsilon, "replica": r, "rate_value": res.value,
                         "residual": res.residual, "member": bool(member)})
        fractions[j] = members / config.replicas
        for name, target in targets.items():
            running[name] = np.minimum(running[name], sup_beta_distance(paths, target, grid))
            min_distance[name][str(j)] = {
                "mean": float(np.mean(running[name])),
                "median": float(np.median(running[name])),
                "max": float(np.max(running[name])),
            }
    return ClusterReport(cfg, config_hash(cfg), rows, fractions, min_distance, failures)


@dataclass
class DiagnosticReport:
    kind: str
    x: list
    estimates: dict
    stderr: dict
    slope: dict
    slope_stderr: dict
    band: tuple
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x": self.x, "estimates": self.estimates, "stderr": self.stderr,
                "slope": self.slope, "slope_stderr": self.slope_stderr, "band": list(self.band),
                "pass": self.passed, "details": self.details}


def _fit_slope(x, y, se=None) -> tuple[float, float]:
    """Least-squares slope of y on x and its standard error."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        return 0.0, float("nan")
    if se is not None and np.all(np.asarray(se) > 0):
        w = 1.0 / np.asarray(se, float)
    else:
        w = np.ones_like(x)
    coef, cov = np.polyfit(x, y, 1, w=w, cov="unscaled") if len(x) > 2 else (np.polyfit(x, y, 1, w=w), None)
    slope_se = float(np.sqrt(cov[0, 0])) if cov is not None else float("nan")
    return float(coef[0]), slope_se


def moment_diagnostic(eps_list, p_list, replicas: int, seed: int, kernel: str = "fvp",
                      grid: GridSpec | None = None, n_a: int = 100, noise_off: bool = False,
                      band: tuple = (-0.1, 0.1)) -> DiagnosticReport:
    """Monte Carlo ``E (sup_t ||Z_t||_chi0^2)^p`` per epsilon and its log-slope
    against ``log(1/eps)``; the bound being probed is uniformity in epsilon."""
    grid = GridSpec(n_t=200, n_x=101) if grid is None else grid
    kern = kernel_by_name(kernel)
    F = default_initial(kern.kind, grid)
    udom = _udomain(kern, F, n_a)
    u0 = deterministic_limit(F, grid)
    for e in eps_list:
        EpsilonPoint(e)

    def sup_chi0(paths):
        return np.max(chi0_norm_sq(paths, grid), axis=-1)

    sups = {}
    for idx, e in enumerate(eps_list):
        sups[e] = z_ensemble(kern, F, e, grid, udom, seed, replicas, eps_index=idx,
                             reduce=sup_chi0, u0=u0, noise_off=noise_off)
    x = [math.log(1.0 / e) for e in eps_list]
    estimates, stderr, slope, slope_se = {}, {}, {}, {}
    ok = True
    for p in p_list:
        key = str(p)
        est = [float(np.mean(sups[e] ** p)) for e in eps_list]
        se = [float(np.std(sups[e] ** p, ddof=1) / math.sqrt(len(sups[e]))) if len(sups[e]) > 1 else 0.0
              for e in eps_list]
        estimates[key], stderr[key] = est, se
        if all(v > 0 for v in est):
            rel = [s / v for s, v in zip(se, est)]
            slope[key], slope_se[key] = _fit_slope(x, np.log(est), rel)
        else:
            slope[key], slope_se[key] = 0.0, 0.0
        ok &= band[0] <= slope[key] <= band[1]
    details = {"epsilon": list(eps_list), "replicas": replicas, "kernel": kernel,
               "a_eps_sq": [EpsilonPoint(e).a_eps ** 2 for e in eps_list]}
    return DiagnosticReport("moment", x, estimates, stderr, slope, slope_se, tuple(band), bool(ok), details)


def holder_diagnostic(paths, lags, grid: GridSpec, x_index: int | None = None,
                      threshold: float = 0.9, min_paths: int = 100) -> DiagnosticReport:
    """Fourth moment of time increments at one node versus the lag.

    ``paths`` is ``(R, n_t+1, n_x)`` (a node is picked, centre by default) or
    ``(R, n_t+1)``. Increments are pooled over all start times. The fitted
    log-log slope is the exponent q in ``E|Z_{t+h} - Z_t|^4 ~ h^q``.
    """
    arr = np.asarray(paths, dtype=float)
    if arr.ndim == 3:
        arr = arr[:, :, grid.n_x // 2 if x_index is None else x_index]
    if arr.shape[0] < min_paths:
        raise DomainError(f"need at least {min_paths} paths, got {arr.shape[0]}")
    lags = [int(l) for l in lags]
    if len(lags) < 3:
        raise DomainError("need at least three lags")
    moments, se = [], []
    for lag in lags:
        inc4 = (arr[:, lag:] - arr[:, :-lag]) ** 4
        per_path = inc4.mean(axis=1)
        moments.append(float(per_path.mean()))
        se.append(float(per_path.std(ddof=1) / math.sqrt(len(per_path))))
    h = [lag * grid.dt for lag in lags]
    if all(m > 0 for m in moments):
        q, q_se = _fit_slope(np.log(h), np.log(moments))
    else:
        q, q_se = 0.0, 0.0
    return DiagnosticReport("holder", h, {"4": moments}, {"4": se}, {"4": q}, {"4": q_se},
                            (threshold, float("inf")), bool(q >= threshold), {"lags": lags})
