"""Flat key-value run configuration.

The file format is INI-like: ``key = value`` lines, lowercase keys, optional
``[section]`` headers that are merged into one flat namespace. Every key is
validated up front and all violations are reported together.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .grid import GridSpec

SUBCOMMANDS = ("simulate", "skeleton", "rate", "oracle", "lil", "validate-kernel")
KERNELS = ("sbm", "fvp", "constant")
EXPERIMENTS = ("cluster", "moment", "holder")
MODELS = ("sbm", "fvp")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    subcommand: str = "simulate"
    kernel: str = "fvp"
    n_t: int = 1000
    n_x: int = 201
    x_half_width: float = 5.0
    beta: float = 1.0
    beta0: float = 0.5
    alpha: float = 0.25
    m_max: int = 20
    t_horizon: float = 1.0
    n_a: int = 200
    epsilon: float = 1e-3
    eps0: float = math.exp(-2.0)
    seed: int | None = None
    replicas: int = 200
    noise: bool = True
    lambda_reg: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 500
    reading: str = "evaluate"
    experiment: str = "cluster"
    c: float = 2.0
    j_min: int = 4
    j_max: int = 10
    slack: float = 0.25
    bandwidth_t: float | None = None
    bandwidth_x: float | None = None
    eps_list: tuple = (1e-2, 1e-3, 1e-4)
    p_list: tuple = (1, 2)
    lags: tuple = (1, 2, 4, 8)
    model: str = "sbm"
    t_end: float = 1.0
    dt_particle: float = 0.01
    samples: int = 100
    control_scale: float = 1.0
    output_dir: str = "out"
    formats: tuple = ("json", "csv", "svg")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(n_t=self.n_t, n_x=self.n_x, x_half_width=self.x_half_width, beta=self.beta,
                        beta0=self.beta0, alpha=self.alpha, m_max=self.m_max, t_horizon=self.t_horizon)

    def to_dict(self, include_output: bool = True) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "output_dir" and not include_output:
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def hash_dict(self) -> dict:
        """Config content that identifies a run; the output location is excluded."""
        return self.to_dict(include_output=False)


_PARSERS = {
    "subcommand": str, "kernel": str, "n_t": int, "n_x": int, "x_half_width": float, "beta": float,
    "beta0": float, "alpha": float, "m_max": int, "t_horizon": float, "n_a": int, "epsilon": float, "eps0": float,
    "seed": int, "replicas": int, "noise": _bool, "lambda_reg": float, "tol": float, "max_iter": int,
    "reading": str, "experiment": str, "c": float, "j_min": int, "j_max": int, "slack": float,
    "bandwidth_t": float, "bandwidth_x": float, "eps_list": _floats, "p_list": _ints, "lags": _ints,
    "model": str, "t_end": float, "dt_particle": float, "samples": int, "control_scale": float,
    "output_dir": str, "formats": lambda s: tuple(str(s).replace(",", " ").split()),
}
ALIASES = {"l": "x_half_width", "x_half": "x_half_width"}


def _check(cfg: RunConfig, errors: dict) -> None:
    def bad(key, msg):
        errors.setdefault(key, msg)

    if cfg.subcommand not in SUBCOMMANDS:
        bad("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    if cfg.kernel not in KERNELS:
        bad("kernel", f"must be one of {', '.join(KERNELS)}")
    if cfg.experiment not in EXPERIMENTS:
        bad("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    if cfg.model not in MODELS:
        bad("model", f"must be one of {', '.join(MODELS)}")
    if cfg.reading not in ("evaluate", "multiply"):
        bad("reading", "must be 'evaluate' or 'multiply'")
    for key in ("n_t", "replicas", "max_iter", "samples"):
        if getattr(cfg, key) < (0 if key == "replicas" else 1):
            bad(key, "must be positive" if key != "replicas" else "must be non-negative")
    if cfg.n_x < 3:
        bad("n_x", "must be at least 3")
    if cfg.n_a < 1:
        bad("n_a", "must be at least 1")
    if not cfg.beta > 0:
        bad("beta", "must be positive")
    if not 0 < cfg.beta0 < cfg.beta:
        bad("beta0", f"violates beta0 in (0, beta) with beta = {cfg.beta}")
    if not 0 < cfg.alpha < 0.5:
        bad("alpha", "violates alpha in (0, 1/2)")
    if cfg.beta > 0 and cfg.x_half_width < 5.0 / cfg.beta:
        bad("x_half_width", f"truncation L must be at least 5/beta = {5.0 / cfg.beta:g}")
    if cfg.t_horizon <= 0:
        bad("t_horizon", "must be positive")
    cap = math.exp(-1.0)
    if not 0 < cfg.eps0 <= cap:
        bad("eps0", "must lie in (0, e^-1]")
    eps_top = min(cfg.eps0, cap) if cfg.eps0 > 0 else cap
    if not 0 < cfg.epsilon < cap:
        bad("epsilon", "must lie in (0, e^-1) so that log log(1/epsilon) is positive")
    elif cfg.epsilon >= eps_top:
        bad("epsilon", f"must lie below eps0 = {cfg.eps0:g}, the small-noise neighbourhood")
    for e in cfg.eps_list:
        if not 0 < e < cap:
            bad("eps_list", "every value must lie in (0, e^-1) so that log log(1/epsilon) is positive")
        elif e >= eps_top:
            bad("eps_list", f"every value must lie below eps0 = {cfg.eps0:g}")
    if not cfg.c > 1:
        bad("c", "must exceed 1")
    if cfg.j_min > cfg.j_max:
        bad("j_min", "must not exceed j_max")
    elif cfg.c > 1 and cfg.c ** (-cfg.j_max) >= eps_top:
        bad("j_max", "no j gives c^-j below min(eps0, e^-1); log log(1/epsilon) needs epsilon < e^-1")
    if cfg.slack < 0:
        bad("slack", "must be non-negative")
    if cfg.lambda_reg <= 0:
        bad("lambda_reg", "must be positive")
    if len(cfg.lags) < 3 or any(l < 1 for l in cfg.lags):
        bad("lags", "need at least three positive lags")
    if cfg.seed is not None and cfg.seed < 0:
        bad("seed", "must be non-negative")
    for fmt in cfg.formats:
        if fmt not in ("json", "csv", "svg"):
            bad("formats", "entries must be json, csv or svg")


def build_config(values: dict, env: dict | None = None) -> RunConfig:
    """Validate a flat mapping of raw (string or typed) values into a RunConfig."""
    errors: dict = {}
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for raw_key, raw in values.items():
        key = ALIASES.get(raw_key.lower(), raw_key.lower())
        if key not in known:
            errors[raw_key] = "unknown key"
            continue
        if raw is None:
            continue
        if isinstance(raw, (list, tuple)):
            raw = " ".join(str(v) for v in raw)
        try:
            val = _PARSERS[key](str(raw))
        except (TypeError, ValueError) as exc:
            errors[raw_key] = f"type mismatch: {exc}"
            continue
        setattr(cfg, key, val)
    if cfg.seed is None:
        env = os.environ if env is None else env
        if env.get("ITERLOG_SEED"):
            try:
                cfg.seed = int(env["ITERLOG_SEED"])
            except ValueError:
                errors["ITERLOG_SEED"] = "type mismatch: must be an integer"
    if cfg.seed is None:
        cfg.seed = 0
    _check(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def read_config_text(text: str) -> dict:
    """Flat key-value text to a raw mapping; sections are merged, later keys win."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    parser.read_string("[__top__]\n" + text)
    out = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            out[k] = v
    return out


def parse_config(text: str, overrides: dict | None = None, env: dict | None = None) -> RunConfig:
    values = read_config_text(text)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return build_config(values, env)
