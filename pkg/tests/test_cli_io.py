import json

import pytest

from iterlog.cli import main
from iterlog.config import parse_config
from iterlog.errors import ConfigError
from iterlog.lil_harness import ClusterReport
from iterlog.reports import canonical_json, csv_text, write_once

SMALL = ["--n-t", "40", "--n-x", "41", "--n-a", "40"]


def test_defaults():
    cfg = parse_config("kernel = fvp\n")
    assert (cfg.n_x, cfg.n_t, cfg.x_half_width, cfg.beta, cfg.beta0) == (201, 1000, 5.0, 1.0, 0.5)


def test_aggregated_errors():
    with pytest.raises(ConfigError) as info:
        parse_config("beta0 = 1.5\nbeta = 1.0\nepsilon = 0.5\nbogus = 3\nn_t = ten\n")
    v = info.value.violations
    assert "(0, beta)" in v["beta0"]
    assert "log log" in v["epsilon"]
    assert v["bogus"] == "unknown key" and "type mismatch" in v["n_t"]


def test_sections_merge_and_override():
    cfg = parse_config("[grid]\nn_t = 10\n[run]\nseed = 3\n", {"seed": "4"})
    assert cfg.n_t == 10 and cfg.seed == 4


def test_env_seed_last_resort():
    assert parse_config("", env={"ITERLOG_SEED": "17"}).seed == 17
    assert parse_config("seed = 2", env={"ITERLOG_SEED": "17"}).seed == 2
    assert parse_config("", env={}).seed == 0


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_validate_kernel_cli(tmp_path, capsys):
    code, out = run(["validate-kernel", "--kernel", "sbm", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / out["artifacts"][0]).read_text())
    assert rep["k1_hat"] == pytest.approx(1.0, abs=1e-6)


def test_noise_off_reproduces_limit(tmp_path, capsys):
    code, out = run(["simulate", "--noise", "off", *SMALL, "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    u, u0 = sorted(p for p in out["artifacts"] if p.endswith(".csv"))
    assert (tmp_path / u).read_bytes() == (tmp_path / u0).read_bytes()


def test_lil_empty(tmp_path, capsys):
    code, out = run(["lil", "--replicas", "0", *SMALL, "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    csv = next(p for p in out["artifacts"] if p.endswith(".csv"))
    assert (tmp_path / csv).read_text() == "j,epsilon,replica,rate_value,residual,member\n"


def test_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--beta0", "1.5", "--output-dir", str(tmp_path)]) == 1
    # conjugate gradients capped at one iteration cannot converge: numerical failure
    assert main(["rate", *SMALL, "--max-iter", "1", "--output-dir", str(tmp_path / "x")]) == 2
    assert main(["lil", "--experiment", "holder", "--lags", "1", "2", *SMALL,
                 "--output-dir", str(tmp_path / "y")]) == 1


def test_write_once(tmp_path, capsys):
    args = ["skeleton", *SMALL, "--output-dir", str(tmp_path)]
    assert main(args) == 0
    capsys.readouterr()
    assert main(args) == 1


def test_rerun_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        code, out = run(["lil", "--replicas", "10", "--j-min", "8", "--j-max", "9", "--n-t", "50", "--n-x", "41",
                         "--n-a", "40", "--output-dir", str(d)], capsys)
        assert code == 0
        outs.append({p: (d / p).read_bytes() for p in out["artifacts"]})
        outs[-1]["meta"] = (d / f"lil-{out['config_hash']}-metadata.json").read_bytes()
    assert outs[0] == outs[1]


def test_emit_helpers(tmp_path):
    assert csv_text(ClusterReport.COLUMNS, []) == "j,epsilon,replica,rate_value,residual,member\n"
    assert csv_text(("a", "b"), [{"a": True, "b": 0.1}]) == "a,b\n1,0.1\n"
    assert canonical_json({"x": 1.0}) == canonical_json({"x": 1.0})
    write_once(tmp_path / "f", "x")
    with pytest.raises(OSError):
        write_once(tmp_path / "f", "y")


def test_eps0_guard():
    assert parse_config("").eps0 == pytest.approx(2.718281828459045 ** -2)
    with pytest.raises(ConfigError) as info:
        parse_config("epsilon = 0.2")
    assert "eps0" in info.value.violations["epsilon"]
    assert parse_config("epsilon = 0.2\neps0 = 0.3").epsilon == 0.2
