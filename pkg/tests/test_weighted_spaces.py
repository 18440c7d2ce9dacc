import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from iterlog.errors import DomainError, InvalidMeasureError, ShapeError
from iterlog.grid import GridSpec, UDomainSpec
from iterlog.kernels import constant_kernel, custom_kernel, fvp_kernel, sbm_kernel
from iterlog.weighted_spaces import (beta_norm, chi0_norm_sq, holder_metric, holder_seminorm, in_m_beta,
                                     kernel_l2_difference, kernel_l2_mass, m_beta_integral, validate_kernel)
from iterlog.errors import KernelDivergenceError

G = GridSpec()


def test_beta_norm_basic():
    assert beta_norm(np.zeros(G.n_x), G) == 0.0
    assert beta_norm(np.exp(np.abs(G.x)), G) == pytest.approx(1.0, abs=1e-14)
    val = beta_norm(G.x, G)
    assert val == pytest.approx(math.exp(-1.0), abs=1e-12)
    brute = max(abs(x) * math.exp(-abs(x)) for x in G.x)
    assert val == pytest.approx(brute, rel=1e-14)


def test_beta_norm_shape_mismatch():
    with pytest.raises(ShapeError):
        beta_norm(np.zeros(G.n_x + 1), G)


def test_chi0_norm_cases():
    assert chi0_norm_sq(np.zeros(G.n_x), G) == 0.0
    big = GridSpec(n_x=40001, x_half_width=20.0)
    assert chi0_norm_sq(np.ones(big.n_x), big) == pytest.approx(1.0, abs=1e-6)
    assert chi0_norm_sq(np.exp(np.abs(G.x)), G) == pytest.approx(2 * G.x_half_width, rel=1e-12)


def _holder_brute(w, grid, radius, alpha):
    best = 0.0
    for i, j in itertools.combinations(range(grid.n_x), 2):
        if abs(grid.x[i]) <= radius + 1e-9 and abs(grid.x[j]) <= radius + 1e-9:
            best = max(best, abs(w[i] - w[j]) / abs(grid.x[i] - grid.x[j]) ** alpha)
    return best


def test_holder_metric_brute_force():
    grid = GridSpec(n_x=41, alpha=0.25)
    w = grid.x.copy()
    # the grid type requires alpha < 1/2, so the closest admissible exponent stands in for 1/2
    alpha = 0.4999999
    grid = grid.replace(alpha=alpha)
    sup = max(abs(x) * math.exp(-abs(x)) for x in grid.x)
    expected = 0.0
    for m in range(1, 21):
        r = min(m, grid.x_half_width)
        level = sup + _holder_brute(w, grid, r, alpha) * math.exp(-m)
        expected += 2.0**-m * min(level, 1.0)
    assert holder_metric(w, np.zeros_like(w), grid, m_max=20) == pytest.approx(expected, abs=1e-9)


def test_holder_metric_identity_and_symmetry(rng):
    u = rng.standard_normal(G.n_x)
    assert holder_metric(u, u, G) == 0.0
    for _ in range(50):
        a, b = rng.standard_normal((2, G.n_x))
        assert holder_metric(a, b, G) == holder_metric(b, a, G)


def test_holder_seminorm_too_few_nodes():
    assert holder_seminorm(G.x, G, radius=0.0) == 0.0


def test_m_beta_cases():
    point = np.zeros(G.n_x)
    point[G.n_x // 2] = 1.0 / G.dx
    assert m_beta_integral(point, G) == pytest.approx(1.0, abs=1e-14)
    assert m_beta_integral(np.zeros(G.n_x), G) == 0.0
    fine = GridSpec(n_x=4001)
    oracle = float(2 * mpmath.exp(0.5) * mpmath.ncdf(-1))
    assert m_beta_integral(norm.pdf(fine.x), fine) == pytest.approx(oracle, abs=1e-4)
    assert in_m_beta(norm.pdf(fine.x), fine)


def test_m_beta_rejects_negative():
    d = np.zeros(G.n_x)
    d[3] = -1.0
    with pytest.raises(InvalidMeasureError):
        m_beta_integral(d, G)


def test_sbm_difference_integral_is_interval_length(rng):
    k = sbm_kernel()
    for _ in range(100):
        y, u1, u2 = rng.uniform(-5, 5), rng.uniform(-10, 10), rng.uniform(-10, 10)
        assert kernel_l2_difference(k, y, u1, u2, (-12, 12)) == pytest.approx(abs(u1 - u2), abs=1e-6)


def test_fvp_difference_integral(rng):
    k = fvp_kernel()
    for _ in range(100):
        y, u1, u2 = rng.uniform(-5, 5), rng.uniform(), rng.uniform()
        d = abs(u1 - u2)
        assert kernel_l2_difference(k, y, u1, u2, (0, 1)) == pytest.approx(d * (1 - d), abs=1e-6)
    assert kernel_l2_difference(k, 0.0, 0.3, 0.3, (0, 1)) == 0.0


@given(st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=50, deadline=None)
def test_fvp_difference_bounded_by_gap(u1, u2):
    val = kernel_l2_difference(fvp_kernel(), 0.0, u1, u2, (0, 1))
    assert val <= abs(u1 - u2) + 1e-12


def test_kernel_mass_constant():
    assert kernel_l2_mass(constant_kernel(2.0), 0.0, 0.5, (0, 1)) == pytest.approx(4.0)


def test_validate_kernel_reports():
    rep = validate_kernel(sbm_kernel(), 100, seed=0)
    assert rep.k1_hat == pytest.approx(1.0, abs=1e-6)
    assert rep.passed
    rep = validate_kernel(fvp_kernel(), 100, seed=0)
    assert rep.k1_hat <= 1.0 + 1e-6 and rep.passed
    d = rep.to_dict()
    assert list(d) == ["kernel", "samples", "k1_hat", "k2_hat", "max_ratio_location", "pass"]


def test_validate_kernel_flags_violation():
    k = custom_kernel(lambda a, y, u: np.sqrt(2.0) * ((0 < a) & (a < u)), k1=1.0, k2=2.0,
                      breakpoints=lambda y, u: np.array([0.0, u]))
    rep = validate_kernel(k, 30, seed=1, u_range=(0, 3))
    assert rep.k1_hat == pytest.approx(2.0, abs=1e-6)
    assert not rep.passed


def test_divergent_kernel_raises():
    def G(a, y, u):
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(np.abs(a - u))

    k = custom_kernel(G, k1=1.0, k2=1.0)
    with pytest.raises(KernelDivergenceError):
        kernel_l2_mass(k, 0.0, 0.5, (0, 1))


def test_grid_validation():
    with pytest.raises(DomainError):
        GridSpec(beta0=1.5, beta=1.0)
    with pytest.raises(DomainError):
        GridSpec(alpha=0.5)
    with pytest.raises(DomainError):
        GridSpec(x_half_width=4.0)
    g = GridSpec()
    assert (g.n_x, g.n_t, g.x_half_width, g.beta, g.beta0) == (201, 1000, 5.0, 1.0, 0.5)
    assert g.dx == pytest.approx(0.05) and g.dt == pytest.approx(1e-3)


def test_udomain_sbm_window():
    u = UDomainSpec.sbm(0.5, 100)
    assert (u.u_min, u.u_max, u.truncated) == (-6.0, 6.0, True)
