"""Command-line entry point: ``iterlog <subcommand> [--config FILE] [--key value ...]``.

Exit status is 0 on success, 1 on configuration, validation or IO failure and
2 on numerical failure (excursions, kernel divergence, non-convergence).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, KERNELS, MODELS, SUBCOMMANDS, RunConfig, parse_config
from .errors import ConfigError, NumericalError
from .grid import UDomainSpec
from .kernels import kernel_by_name
from .lil_harness import ClusterConfig, ClusterReport, holder_diagnostic, moment_diagnostic, run_cluster_experiment
from .noise_field import sample_noise, zero_noise
from .particle_oracles import default_particle_count, particles_from_density, qv_check
from .reports import canonical_json, config_hash, csv_text, ensure_writable, write_once
from .skeleton_rate import SkeletonOperator, rate_variational
from .spde_engine import (EpsilonPoint, FieldPath, default_initial, deterministic_limit, read_field_csv,
                          solve_spde, z_ensemble)
from .weighted_spaces import validate_kernel

FIELD_COLUMNS = ("t", "x", "value")


def _versions() -> dict:
    import matplotlib
    import scipy

    return {"iterlog": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": sys.version.split()[0]}


class Run:
    """Collects artifacts for one command and writes them once into the output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.hash = config_hash(cfg.hash_dict())
        self.stem = f"{cfg.subcommand}-{self.hash}"
        self.files: list[str] = []
        self._pending: list[tuple[str, str]] = []

    def add(self, suffix: str, text: str, fmt: str):
        if fmt in self.cfg.formats:
            self._pending.append((f"{self.stem}-{suffix}", text))

    def flush(self, summary: dict) -> Path:
        out = ensure_writable(self.cfg.output_dir)
        for name, text in self._pending:
            write_once(out / name, text)
            self.files.append(name)
        meta = {"config_hash": self.hash, "config": self.cfg.hash_dict(), "versions": _versions(),
                "seed": self.cfg.seed, "artifacts": self.files, "summary": summary}
        write_once(out / f"{self.stem}-metadata.json", canonical_json(meta))
        return out


def field_csv(path: FieldPath) -> str:
    g = path.grid
    tt, xx = np.meshgrid(g.t, g.x, indexing="ij")
    return csv_text(FIELD_COLUMNS, zip(tt.ravel(), xx.ravel(), path.values.ravel()))


def _udomain(cfg: RunConfig, kernel, F) -> UDomainSpec:
    if kernel.kind == "sbm":
        return UDomainSpec.sbm(float(np.max(np.abs(F))), cfg.n_a)
    if kernel.kind == "fvp":
        return UDomainSpec.fvp(cfg.n_a)
    return UDomainSpec(-1.0, 1.0, cfg.n_a)


def _setup(cfg: RunConfig):
    grid = cfg.grid
    kernel = kernel_by_name(cfg.kernel)
    F = default_initial(kernel.kind, grid)
    return grid, kernel, F, _udomain(cfg, kernel, F)


def _control(cfg: RunConfig, grid, udom) -> np.ndarray:
    """Demonstration control ``h(t, a) = scale (1 + t) cos(pi s(a))`` with ``s`` mapping U onto [0, 1].

    A control constant in ``a`` would be annihilated by the FVP kernel.
    """
    t = grid.t[:-1, None]
    s = (udom.midpoints[None, :] - udom.u_min) / (udom.u_max - udom.u_min)
    return cfg.control_scale * (1.0 + t) * np.cos(np.pi * s)


def cmd_simulate(cfg: RunConfig, run: Run) -> dict:
    grid, kernel, F, udom = _setup(cfg)
    u0 = deterministic_limit(F, grid)
    noise = sample_noise(grid, udom, cfg.seed, (0, 0)) if cfg.noise else zero_noise(grid, udom)
    u = solve_spde(kernel, F, cfg.epsilon, grid, noise, udom)
    run.add("u.csv", field_csv(u), "csv")
    run.add("u0.csv", field_csv(u0), "csv")
    return {"epsilon": cfg.epsilon, "noise": cfg.noise,
            "boundary_contribution": u.meta["boundary_contribution"],
            "max_abs_deviation": float(np.max(np.abs(u.values - u0.values)))}


def cmd_skeleton(cfg: RunConfig, run: Run) -> dict:
    grid, kernel, F, udom = _setup(cfg)
    u0 = deterministic_limit(F, grid)
    op = SkeletonOperator(kernel, u0, grid, udom)
    h = _control(cfg, grid, udom)
    path = FieldPath(op.forward(h), "skeleton", grid)
    run.add("path.csv", field_csv(path), "csv")
    return {"control_scale": cfg.control_scale, "rate_upper_bound": 0.5 * float(op.control_inner(h, h))}


def cmd_rate(cfg: RunConfig, run: Run, input_path: str | None) -> dict:
    grid, kernel, F, udom = _setup(cfg)
    u0 = deterministic_limit(F, grid)
    if input_path:
        g = read_field_csv(input_path, grid)
        source = str(input_path)
    else:
        op = SkeletonOperator(kernel, u0, grid, udom)
        g = FieldPath(op.forward(_control(cfg, grid, udom)), "skeleton", grid)
        source = "skeleton of the demonstration control"
    res = rate_variational(g, kernel, u0, grid, udom, cfg.lambda_reg, cfg.tol, cfg.max_iter)
    if not res.converged:
        raise NumericalError(f"conjugate gradient did not converge in {cfg.max_iter} iterations")
    out = {"source": source, **res.to_dict()}
    run.add("rate.json", canonical_json(out), "json")
    return out


def cmd_oracle(cfg: RunConfig, run: Run) -> dict:
    from scipy.stats import norm

    grid = cfg.grid
    n = default_particle_count(cfg.epsilon)
    initial = particles_from_density(norm.pdf(grid.x), grid, n)
    rep = qv_check(cfg.model, lambda x: np.ones_like(x), cfg.epsilon, cfg.replicas, cfg.seed, initial,
                   t_end=cfg.t_end, dt=cfg.dt_particle, half_lap=lambda x: np.zeros_like(x))
    run.add("oracle.json", canonical_json(rep), "json")
    return rep.to_dict()


def cmd_validate(cfg: RunConfig, run: Run) -> dict:
    rep = validate_kernel(kernel_by_name(cfg.kernel), cfg.samples, cfg.seed)
    run.add("validation.json", canonical_json(rep), "json")
    return rep.to_dict()


def cluster_csv(report: ClusterReport) -> str:
    return csv_text(ClusterReport.COLUMNS, report.rows)


def cmd_lil(cfg: RunConfig, run: Run) -> dict:
    from .plotting import membership_svg, slope_svg

    grid = cfg.grid
    if cfg.experiment == "cluster":
        cc = ClusterConfig(kernel=cfg.kernel, grid=grid, n_a=cfg.n_a, c=cfg.c, j_min=cfg.j_min,
                           j_max=cfg.j_max, replicas=cfg.replicas, seed=cfg.seed, slack=cfg.slack,
                           bandwidth_t=cfg.bandwidth_t, bandwidth_x=cfg.bandwidth_x,
                           lambda_reg=cfg.lambda_reg, tol=cfg.tol, max_iter=cfg.max_iter, eps0=cfg.eps0)
        rep = run_cluster_experiment(cc)
        run.add("cluster.json", canonical_json(rep), "json")
        run.add("cluster.csv", cluster_csv(rep), "csv")
        if "svg" in cfg.formats:
            run.add("membership.svg", membership_svg(rep), "svg")
        return {"membership_fraction": rep.membership_fraction, "failures": rep.failures,
                "label": rep.label}
    if cfg.experiment == "moment":
        rep = moment_diagnostic(cfg.eps_list, cfg.p_list, cfg.replicas, cfg.seed, cfg.kernel, grid,
                                cfg.n_a, noise_off=not cfg.noise)
    else:
        kernel = kernel_by_name(cfg.kernel)
        F = default_initial(kernel.kind, grid)
        udom = _udomain(cfg, kernel, F)
        paths = z_ensemble(kernel, F, EpsilonPoint(cfg.epsilon), grid, udom, cfg.seed, cfg.replicas,
                           noise_off=not cfg.noise)
        rep = holder_diagnostic(paths, cfg.lags, grid)
    run.add(f"{rep.kind}.json", canonical_json(rep), "json")
    if "svg" in cfg.formats:
        run.add(f"{rep.kind}.svg", slope_svg(rep), "svg")
    return {"slope": rep.slope, "pass": rep.passed}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iterlog", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"iterlog {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file; flags override it")
        if name == "rate":
            p.add_argument("--input", dest="input_path", help="field CSV (t,x,value) to score")
        for f in fields(RunConfig):
            if f.name == "subcommand":
                continue
            flag = "--" + f.name.replace("_", "-")
            kwargs = {"dest": f.name, "default": None}
            if f.name == "kernel":
                kwargs["choices"] = KERNELS
            elif f.name == "experiment":
                kwargs["choices"] = EXPERIMENTS
            elif f.name == "model":
                kwargs["choices"] = MODELS
            elif f.name == "noise":
                kwargs["choices"] = ("on", "off")
            if f.name in ("eps_list", "p_list", "lags", "formats"):
                kwargs["nargs"] = "+"
            p.add_argument(flag, **kwargs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "input_path") and v is not None}
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, overrides)
        run = Run(cfg)
        handler = {"simulate": cmd_simulate, "skeleton": cmd_skeleton, "oracle": cmd_oracle,
                   "lil": cmd_lil, "validate-kernel": cmd_validate}
        if cfg.subcommand == "rate":
            summary = cmd_rate(cfg, run, getattr(args, "input_path", None))
        else:
            summary = handler[cfg.subcommand](cfg, run)
        out = run.flush(summary)
    except ConfigError as exc:
        print(f"iterlog: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"iterlog: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"iterlog: {exc}", file=sys.stderr)
        return 1
    print(canonical_json({"config_hash": run.hash, "output_dir": str(out), "artifacts": run.files,
                          "summary": summary}), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
