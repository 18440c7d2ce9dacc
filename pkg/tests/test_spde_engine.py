import math

import numpy as np
import pytest

from iterlog.errors import DomainError, ExcursionError, InvalidInputError, ShapeError
from iterlog.grid import GridSpec, UDomainSpec
from iterlog.kernels import fvp_kernel, sbm_kernel
from iterlog.noise_field import sample_noise, zero_noise
from iterlog.skeleton_rate import solve_skeleton
from iterlog.spde_engine import (EpsilonPoint, FieldPath, HeatStepper, default_initial, deterministic_limit,
                                 read_field_binary, read_field_csv, solve_controlled, solve_spde, solve_Z,
                                 write_field_binary, write_field_csv, z_ensemble)
from scipy.stats import norm


def gaussian_exact(grid):
    t = grid.t[:, None]
    return np.exp(-grid.x**2 / (2 * (1 + t))) / np.sqrt(1 + t)


def test_epsilon_point():
    p = EpsilonPoint(math.exp(-math.e**2))
    assert p.a_eps == pytest.approx(0.5, rel=1e-14)
    assert p.z_norm == pytest.approx(2 * math.sqrt(p.epsilon), rel=1e-14)
    for bad in (0.5, math.exp(-1), 0.0, -1e-3):
        with pytest.raises(DomainError):
            EpsilonPoint(bad)


def test_constants_preserved():
    g = GridSpec(n_t=100, n_x=51)
    u0 = deterministic_limit(np.full(g.n_x, 0.3), g)
    np.testing.assert_allclose(u0.values, 0.3, atol=1e-14)


def test_gaussian_heat_flow():
    g = GridSpec(n_t=1000, n_x=201)
    u0 = deterministic_limit(np.exp(-g.x**2 / 2), g)
    assert u0.values[-1, g.n_x // 2] == pytest.approx(1 / math.sqrt(2), abs=1e-3)
    w = np.exp(-np.abs(g.x))
    assert np.max(w * np.abs(u0.values - gaussian_exact(g))) < 1e-3


def test_linearity(rng):
    g = GridSpec(n_t=50, n_x=41)
    F1, F2 = rng.standard_normal((2, g.n_x))
    a = deterministic_limit(F1, g).values + deterministic_limit(F2, g).values
    np.testing.assert_allclose(deterministic_limit(F1 + F2, g).values, a, atol=1e-12)


def test_rejects_bad_initial():
    g = GridSpec(n_t=5, n_x=11)
    with pytest.raises(ShapeError):
        deterministic_limit(np.zeros(12), g)
    F = np.zeros(11)
    F[3] = np.nan
    with pytest.raises(InvalidInputError):
        deterministic_limit(F, g)


def test_stepper_adjoint_structure(rng):
    g = GridSpec(n_t=10, n_x=31)
    s = HeatStepper(g)
    W = g.trapezoid_weights
    u, v = rng.standard_normal((2, g.n_x))
    assert np.sum(W * s.laplacian(u) * v) == pytest.approx(np.sum(W * u * s.laplacian(v)), rel=1e-12)
    assert np.dot(s.solve(u), v) == pytest.approx(np.dot(u, s.solve_T(v)), rel=1e-12)


def test_zero_noise_equals_limit():
    g = GridSpec(n_t=50, n_x=41)
    udom = UDomainSpec.fvp(30)
    F = default_initial("fvp", g)
    u = solve_spde(fvp_kernel(), F, 1e-3, g, zero_noise(g, udom), udom)
    np.testing.assert_array_equal(u.values, deterministic_limit(F, g).values)
    Z = solve_Z(fvp_kernel(), F, 1e-3, g, zero_noise(g, udom), udom)
    assert not np.any(Z.values)


def test_Z_matches_differenced_form():
    g = GridSpec(n_t=100, n_x=41)
    udom = UDomainSpec.fvp(50)
    F = default_initial("fvp", g)
    p = EpsilonPoint(1e-3)
    noise = sample_noise(g, udom, 5)
    u = solve_spde(fvp_kernel(), F, p, g, noise, udom)
    u0 = deterministic_limit(F, g)
    Z = solve_Z(fvp_kernel(), F, p, g, noise, udom)
    assert np.max(np.abs(Z.values - (u.values - u0.values) / p.z_norm)) < 1e-8


def test_ensemble_matches_single_solves():
    g = GridSpec(n_t=30, n_x=21)
    udom = UDomainSpec.fvp(20)
    F = default_initial("fvp", g)
    ens = z_ensemble(fvp_kernel(), F, 1e-3, g, udom, 9, 3, eps_index=4, chunk=2)
    for r in range(3):
        single = solve_Z(fvp_kernel(), F, 1e-3, g, sample_noise(g, udom, 9, (r, 4)), udom)
        np.testing.assert_allclose(ens[r], single.values, atol=1e-14)
    assert z_ensemble(fvp_kernel(), F, 1e-3, g, udom, 9, 0).shape == (0,) + g.shape


def test_fvp_paths_stay_near_unit_interval():
    g = GridSpec(n_t=100, n_x=41)
    udom = UDomainSpec.fvp(50)
    F = default_initial("fvp", g)
    p = EpsilonPoint(1e-3)
    u0 = deterministic_limit(F, g)
    Z = z_ensemble(fvp_kernel(), F, p, g, udom, 0, 200, u0=u0)
    u = u0.values + p.z_norm * Z
    inside = np.all((u >= -0.05) & (u <= 1.05), axis=(1, 2))
    assert inside.mean() >= 0.99


def test_sbm_variance_scaling():
    g = GridSpec(n_t=100, n_x=41)
    F = default_initial("sbm", g)
    udom = UDomainSpec.sbm(float(np.max(np.abs(F))), 80)
    u0 = deterministic_limit(F, g)
    node = g.n_x // 2 + 4

    def var_at(eps):
        p = EpsilonPoint(eps)
        z = z_ensemble(sbm_kernel(), F, p, g, udom, 1, 1000, u0=u0, reduce=lambda P: P[:, -1, node])
        return np.var(p.z_norm * z)

    ratio = var_at(4e-3) / var_at(1e-3)
    assert 3.0 <= ratio <= 5.0


def test_controlled_reduces_to_Z_and_skeleton(rng):
    g = GridSpec(n_t=40, n_x=31)
    udom = UDomainSpec.fvp(30)
    F = default_initial("fvp", g)
    noise = sample_noise(g, udom, 2)
    h0 = np.zeros((g.n_t, udom.n_a))
    Z = solve_Z(fvp_kernel(), F, 1e-3, g, noise, udom)
    Y = solve_controlled(fvp_kernel(), F, 1e-3, g, noise, udom, h0)
    np.testing.assert_allclose(Y.values, Z.values, atol=1e-14)
    h = rng.standard_normal((g.n_t, udom.n_a))
    quiet = zero_noise(g, udom)
    Y1 = solve_controlled(fvp_kernel(), F, 1e-3, g, quiet, udom, h, freeze_kernel=True)
    Y2 = solve_controlled(fvp_kernel(), F, 1e-3, g, quiet, udom, 2 * h, freeze_kernel=True)
    np.testing.assert_allclose(Y2.values, 2 * Y1.values, atol=1e-9)
    S = solve_skeleton(fvp_kernel(), deterministic_limit(F, g), h, g, udom)
    np.testing.assert_allclose(Y1.values, S.values, atol=1e-12)
    # with the kernel evaluated along the perturbed path the gap is of order z_norm
    Yf = solve_controlled(fvp_kernel(), F, 1e-3, g, quiet, udom, h)
    gap = np.max(np.abs(Yf.values - S.values))
    assert gap <= 10 * (g.dt + g.dx**2 + EpsilonPoint(1e-3).z_norm) * np.max(np.abs(S.values))


def test_sbm_excursion_guard():
    g = GridSpec(n_t=20, n_x=21)
    F = default_initial("sbm", g)
    udom = UDomainSpec.sbm(0.5, 20, half_width=0.6)
    with pytest.raises(ExcursionError):
        solve_spde(sbm_kernel(), F, 0.3, g, sample_noise(g, udom, 0), udom)


def test_field_io_roundtrip(tmp_path):
    g = GridSpec(n_t=4, n_x=11)
    F = default_initial("fvp", g)
    u0 = deterministic_limit(F, g)
    write_field_csv(u0, tmp_path / "f.csv")
    back = read_field_csv(tmp_path / "f.csv", g)
    np.testing.assert_array_equal(back.values, u0.values)
    write_field_binary(u0, tmp_path / "f.bin")
    np.testing.assert_array_equal(read_field_binary(tmp_path / "f.bin", g).values, u0.values)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "t,x,value"


def test_field_path_validation():
    g = GridSpec(n_t=4, n_x=11)
    with pytest.raises(InvalidInputError):
        FieldPath(np.zeros(g.shape), "bogus", g)
    with pytest.raises(ShapeError):
        FieldPath(np.zeros((3, 11)), "u0", g)


def test_default_initial():
    g = GridSpec(n_t=2, n_x=11)
    np.testing.assert_allclose(default_initial("fvp", g), norm.cdf(g.x))
    np.testing.assert_allclose(default_initial("sbm", g), norm.cdf(g.x) - 0.5)
