import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexlayers.profile import (psi, omega1, omega3, omega, omega_on_axes, u_tilde,
                                  diagnostics, identity_profile, zero_profile, LayerProfile,
                                  Poly, Affine, Reciprocal, Spline, Cheb, const, identity,
                                  SheetIntegral)
from vortexlayers.grid import Grid3, divergence
from vortexlayers.grid.verify import tight_box


def _psi_mp(x, k):
    mpmath.mp.dps = 50
    f = lambda t: mpmath.exp(1 - 1 / (1 - t * t))
    return float(mpmath.diff(f, mpmath.mpf(x), k))


def test_psi_basic():
    assert psi(0.0) == 1.0
    assert psi(1.5) == 0.0
    assert psi(-1.0) == 0.0
    assert psi(0.0, 1) == 0.0
    x = np.linspace(-0.9, 0.9, 7)
    assert np.allclose(psi(x), psi(-x), rtol=0, atol=0)


def test_psi_prime_matches_central_difference():
    h = 1e-5
    fd = (psi(0.3 + h) - psi(0.3 - h)) / (2 * h)
    assert abs(psi(0.3, 1) - fd) < 1e-8


@pytest.mark.parametrize("k", range(9))
@pytest.mark.parametrize("x", [0.0, 0.37, -0.81])
def test_psi_derivatives_against_mpmath(k, x):
    ref = _psi_mp(x, k)
    assert psi(x, k) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_psi_order_limit():
    with pytest.raises(ValueError):
        psi(0.1, 9)


def test_omega1_factorwise_example():
    p = identity_profile(4, 2)
    x = np.array([0.1, 0.2, 0.3])
    mpmath.mp.dps = 30
    ps = lambda t: mpmath.exp(1 - 1 / (1 - mpmath.mpf(t) ** 2))
    ref = ps(0.2) * mpmath.sin(0.8) * ps(0.4) * mpmath.sin(1.2) * ps(0.6)
    assert float(omega1(p, x)) == pytest.approx(float(ref), rel=1e-13)


def test_omega1_zeros():
    p = identity_profile(4, 2)
    assert omega1(p, [0.1, 0.2, 0.0]) == 0.0
    # g1 >= 1/2 so |x1| >= 1/(L1/2) is outside the bump
    assert omega1(p, [1.0, 0.2, 0.3]) == 0.0


def test_omega3_zeros():
    p = identity_profile(16, 3)
    assert omega3(p, [0.0, 0.1, 0.05]) == 0.0
    assert omega3(p, [0.1, 0.1, -0.5]) == 0.0
    assert omega3(p, [0.1, 0.1, -0.5], "quadrature") == 0.0


def test_omega3_table_matches_quadrature():
    p = identity_profile(40, (3.0, 2.5, 4.0))
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.3, 0.3, (20, 3))
    a = omega3(p, x)
    b = omega3(p, x, "quadrature")
    assert np.abs(a - b).max() < 1e-11 * np.abs(b).max()


def test_sheet_integral_against_quad():
    from scipy import integrate
    J = SheetIntegral(37.0)
    for v in (-0.5, 0.1, 0.77, 1.0):
        ref, _ = integrate.quad(lambda u: math.sin(37 * u) * float(psi(u)), -1, v,
                                limit=200, epsabs=1e-14)
        assert abs(float(J(v)) - ref) < 1e-14


def test_series_k4_gap_bound():
    # gap between the 4-term series and quadrature is the dropped remainder,
    # of size sup|psi^(5)| (L3/M)^5 relative to the leading term
    M, L3 = 64.0, 4.0
    p = identity_profile(M, (2.0, 2.0, L3))
    x3 = np.linspace(-0.2, 0.2, 9)
    x = np.stack([np.full_like(x3, 0.1), np.full_like(x3, 0.05), x3], axis=-1)
    q = omega3(p, x, "quadrature")
    s = omega3(p, x, ("series", 4))
    sup5 = np.abs(psi(np.linspace(-1, 1, 20001), 5)).max()
    rel = np.abs(q - s).max() / np.abs(q).max()
    assert rel <= sup5 * (L3 / M) ** 5


def test_series_gaps_decrease_standard_profile():
    # standard test profile: M / L3 = 256 keeps the asymptotic series monotone up to k = 6
    p = identity_profile(1024.0, (2.0, 2.0, 4.0))
    x3 = np.linspace(-0.24, 0.24, 41)
    x = np.stack([np.full_like(x3, 0.1), np.full_like(x3, 0.05), x3], axis=-1)
    q = omega3(p, x, "quadrature")
    gaps = [np.abs(omega3(p, x, ("series", k)) - q).max() for k in range(8)]
    assert all(b <= a for a, b in zip(gaps[:7], gaps[1:8]))


def test_u_tilde_gates():
    p = identity_profile(16, 3)
    x = np.array([[0.05, 0.1, 0.02], [0.0, -0.1, 0.1]])
    assert np.all(u_tilde(p, (1, 0, 0), x) == 0)
    flat = LayerProfile(const(1.0), const(1.0), const(0.0), const(1.0), 16.0, 3.0, 3.0, 3.0)
    assert np.all(u_tilde(flat, (0, 0, 0), x)[2] == 0)
    assert np.all(u_tilde(p, (0, 0, 0), x)[0] == 0)


def test_u_tilde_magnitude():
    M = 16.0
    p = identity_profile(M, 3)
    pts = np.random.default_rng(0).uniform(-0.4, 0.4, (500, 3))
    u = u_tilde(p, (0, 0, 0), pts)
    assert np.abs(u[1]).max() <= 2 / M * (1 / 2)
    assert np.abs(u[1]).max() > 0


def test_diagnostics_identity_examples():
    d = diagnostics(identity_profile(math.e, 1.0))
    assert d.B0 == pytest.approx(4.0, rel=1e-14)
    assert d.B1 == pytest.approx(4 * (math.e + 4), rel=1e-14)
    assert d.B1 >= d.B0 * (math.e + d.B0) - 1e-12
    assert d.D <= math.sqrt(3) * max(d.support) + 1e-12


def test_diagnostics_g3_slope_term():
    M, L3 = 100.0, 2.0
    p = LayerProfile(const(1.0), const(1.0), identity(), Affine(1.0, 0.1), M, 1.0, 1.0, L3,
                     (-1.0, 1.0))
    d = diagnostics(p)
    base = 1 + 1 + L3 + L3 * math.log(M)
    assert d.B0 - base == pytest.approx(M / L3 * 0.1, rel=1e-12)


def test_check_flags_violations():
    p = identity_profile(16, 40)
    assert any("L1" in b for b in p.check(0.1))
    assert identity_profile(16, 4).check(0.1) == []
    big = LayerProfile(const(3.0), const(1.0), identity(), const(1.0), 16.0, 2.0, 2.0, 2.0)
    assert "|a| > 2" in big.check()


def test_profile_json_roundtrip():
    L = 3.0
    g1 = Poly([1.0, 0.0, 0.2 * L ** 2])
    p = LayerProfile(Reciprocal(g1), g1, Poly([0, 0.6, 0, 0.05 * L * L]),
                     Spline(np.linspace(-1, 1, 9), 1 + 0.1 * np.linspace(-1, 1, 9) ** 2),
                     20.0, L, L, L)
    q = LayerProfile.from_dict(json.loads(json.dumps(p.to_dict())))
    x = np.random.default_rng(1).uniform(-0.2, 0.2, (30, 3))
    assert np.array_equal(omega1(p, x), omega1(q, x))


def test_cheb_profile_derivatives():
    X = 0.5
    from vortexlayers.interp import cheb_nodes
    f = Cheb(X, np.sin(3 * cheb_nodes(257, -X, X)))
    t = np.linspace(-X, X, 11)
    assert np.allclose(f(t), np.sin(3 * t), atol=1e-13)
    assert np.allclose(f(t, 1), 3 * np.cos(3 * t), atol=1e-10)
    assert np.allclose(f(t, 2), -9 * np.sin(3 * t), atol=1e-7)


def test_zero_profile():
    p = zero_profile(8, 2)
    x = np.random.default_rng(2).uniform(-0.5, 0.5, (10, 3))
    assert np.all(omega(p, x) == 0)


def test_omega_on_axes_matches_pointwise():
    p = identity_profile(12, (2.0, 3.0, 2.5))
    ax = [np.linspace(-0.5, 0.5, n) for n in (5, 6, 7)]
    w = omega_on_axes(p, *ax)
    P = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
    assert np.allclose(w, omega(p, P), rtol=0, atol=1e-15)


def _random_profile(c):
    M, L = 16.0, 3.0
    g1 = Poly([1.0, 0.0, c[0] * L * L])
    g3 = Poly([1.0, 0.0, c[1] * L * L])
    g2 = Poly([0.0, 0.6 + c[2], 0.0, c[3] * L * L])  # |g2'| <= 0.95 on the range
    a = Reciprocal(g1) if c[4] > 0 else Poly([1.0 + c[4], 0.0, c[0] * L * L])
    return LayerProfile(a, g1, g2, g3, M, L, L, L, (-1.5 / L, 1.5 / L))


coef = st.tuples(st.floats(0, 0.2), st.floats(0, 0.2), st.floats(-0.1, 0.2),
                 st.floats(0, 0.02), st.floats(-0.3, 0.3))


@settings(max_examples=30, deadline=None)
@given(coef)
def test_random_profiles_admissible(c):
    assert _random_profile(c).check() == []


@settings(max_examples=4, deadline=None)
@given(coef)
def test_divergence_free_random_profiles(c):
    p = _random_profile(c)
    box = tight_box(p)
    w = Grid3(box, omega_on_axes(p, *box.axes()))
    assert divergence(w).sup() <= 1e-6 * w.sup()


@settings(max_examples=10, deadline=None)
@given(coef, st.integers(0, 2 ** 31))
def test_reflection_symmetries(c, seed):
    p = _random_profile(c)
    x = np.random.default_rng(seed).uniform(-0.4, 0.4, (1000, 3))
    w = omega(p, x)
    scale = np.abs(w).max()
    for axis, par1, par3 in ((0, 1, -1), (1, -1, -1), (2, -1, 1)):
        y = x.copy()
        y[:, axis] *= -1
        v = omega(p, y)
        assert np.abs(v[0] - par1 * w[0]).max() <= 1e-12 * scale
        assert np.abs(v[2] - par3 * w[2]).max() <= 1e-12 * scale
