import math

import numpy as np
import pytest

from vortexlayers.errors import HypothesisViolated, OutOfValidity, StepUnderflow
from vortexlayers.flow import (dopri, integrate_ode, flow_with_derivatives, polynomial_spec,
                               OddVelocitySpec, check_1dode_bounds, check_1dode2_bounds,
                               ReducedVelocity, flow_factors, transport_solution,
                               random_odd_spec, cubic_reduced_velocity)


def rk4(f, y, t0, t1, h):
    n = int(round(abs(t1 - t0) / h))
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


# ------------------------------------------------------------- integrator

def test_linear_closed_form():
    s = polynomial_spec(1.0)
    for x in (-0.7, 0.3, 2.0):
        assert integrate_ode(s, x, 0.0, 1.0) == pytest.approx(x * math.exp(-1), abs=1e-9)
        assert integrate_ode(s, x, 1.0, 0.0) == pytest.approx(x * math.e, abs=1e-9)


def test_origin_is_fixed():
    s = polynomial_spec(1.0, 0.3, 0.1, 2.0)
    assert integrate_ode(s, 0.0, 0.0, 1.0) == 0.0


def test_against_fine_rk4():
    u = lambda x, t: -x + x ** 3 / 10
    s = OddVelocitySpec(u)
    xs = np.linspace(-1, 1, 9)
    ref = rk4(lambda t, y: u(y, t), xs.copy(), 0.0, 1.0, 1e-5)
    got = integrate_ode(s, xs, 0.0, 1.0)
    assert np.abs(got - ref).max() < 1e-7


def test_vector_state_and_output_times():
    ts = np.linspace(0, 2, 5)
    Y = dopri(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], ts)
    assert np.abs(Y[:, 0] - np.sin(ts)).max() < 1e-9
    with pytest.raises(ValueError):
        dopri(lambda t, y: y, [1.0], [0.0, 1.0, 0.5])


def test_step_underflow_on_blowup():
    s = OddVelocitySpec(lambda x, t: x ** 3)
    # x' = x^3 from x = 2 blows up at t = 1/8
    with pytest.raises(StepUnderflow):
        integrate_ode(s, 2.0, 0.0, 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_reversibility_and_monotonicity(seed):
    spec, x = random_odd_spec(np.random.default_rng(seed))
    X = abs(x)
    for t in (0.0, 0.4):
        # stay inside the backward containment radius
        _, _, _, I1, I3 = flow_with_derivatives(spec, [0.0], [t, 1.0])
        xs = np.linspace(-1, 1, 17) * X * math.exp(I1[-1] - X * X * I3[-1] / 6)
        back = integrate_ode(spec, xs, 1.0, t)
        assert np.all(np.diff(back) > 0)
        there = integrate_ode(spec, back, t, 1.0)
        assert np.abs(there - xs).max() < 1e-8


def test_variational_derivatives_match_differences():
    spec = polynomial_spec(1.0, -0.05, 0.1, 2.0)
    x, h = 0.6, 1e-4
    p, px, pxx, _, _ = flow_with_derivatives(spec, [x - h, x, x + h], [0.0, 1.0])
    assert px[-1, 1] == pytest.approx((p[-1, 2] - p[-1, 0]) / (2 * h), rel=1e-7)
    assert pxx[-1, 1] == pytest.approx((px[-1, 2] - px[-1, 0]) / (2 * h), rel=1e-5)


# ------------------------------------------------------------ 1D bounds

def test_linear_bounds_are_equalities():
    rep = check_1dode_bounds(polynomial_spec(1.0), 0.8, 1.0)
    assert rep.all_pass and not rep.estimated
    for r in rep.rows:
        if r.bound_id in ("iii", "iv"):
            assert r.lhs == pytest.approx(0.8 * math.exp(-r.t), rel=1e-9)
            assert r.rhs == pytest.approx(0.8 * math.exp(-r.t), rel=1e-14)
        if r.bound_id in ("v", "vi"):
            assert r.lhs == pytest.approx(math.exp(-r.t), rel=1e-9)


def test_cubic_bounds_strict():
    spec = polynomial_spec(1.0, -1 / 20)
    rep = check_1dode_bounds(spec, 0.5, 1.0)
    assert rep.all_pass
    for r in rep.rows:
        if r.t > 0 and r.bound_id != "ii":
            assert r.margin > 0, r
    assert rep.worst("ii").margin > 0


def test_random_specs_satisfy_all_bounds():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        spec, x = random_odd_spec(rng)
        rep = check_1dode_bounds(spec, x, 1.0, n_times=17)
        assert rep.all_pass, rep.worst()


def test_hypothesis_violation_reports_time():
    spec = polynomial_spec(lambda t: 1.0 - t, 0.5)
    with pytest.raises(HypothesisViolated, match="t ="):
        check_1dode_bounds(spec, 0.5, 1.0)


def test_estimated_spec_is_flagged():
    u = lambda x, t: -x - x ** 3 / 20
    spec = OddVelocitySpec(u, domain=1.0)
    rep = check_1dode_bounds(spec, 0.5, 1.0, n_times=9)
    assert rep.estimated
    assert spec.sup3(0.3) == pytest.approx(6 / 20, rel=1e-6)
    assert rep.all_pass


def test_odd_defect():
    spec = polynomial_spec(1.0, 0.1, 0.2, 1.5)
    assert spec.odd_defect(np.linspace(0, 1, 11), [0.0, 0.5]) < 1e-15


def test_report_csv():
    rep = check_1dode_bounds(polynomial_spec(1.0), 0.5, 1.0, n_times=3)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "bound_id,t,lhs,rhs,margin,pass"
    assert len(lines) == 1 + 3 * 8


def test_1dode2_linear_boundary_case():
    rep = check_1dode2_bounds(polynomial_spec(1.0), 1.0, 0.0)
    assert rep.all_pass
    # the containment radius is 1/e and its end points land on X = 1
    assert rep.worst("i").lhs == pytest.approx(1.0, abs=1e-9)
    assert integrate_ode(polynomial_spec(1.0), math.exp(-1), 1.0, 0.0) == pytest.approx(1.0, abs=1e-9)


def test_1dode2_zero_velocity():
    zero = OddVelocitySpec(lambda x, t: 0 * x, lambda x, t: 0 * x, lambda x, t: 0 * x, lambda t: 0.0)
    rep = check_1dode2_bounds(zero, 0.7, 0.2)
    assert rep.all_pass
    for r in rep.rows:
        if r.bound_id != "iii":
            assert r.lhs == pytest.approx(r.rhs, abs=1e-12) or r.bound_id == "i"
    assert rep.worst("i").margin == pytest.approx(0.0, abs=1e-12)


def test_1dode2_cubic_margins():
    spec = polynomial_spec(1.0, 0.05, 0.05, 2.0)
    rep = check_1dode2_bounds(spec, 1.0, 0.0)
    assert rep.all_pass
    assert rep.worst("i").margin > 0
    ii = [r for r in rep.rows if r.bound_id == "ii"]
    # x = 0 (the middle sample) is an equality case
    assert all(r.margin > 0 for k, r in enumerate(ii) if k != len(ii) // 2)


# ------------------------------------------------------------ reduced 3D

def _poly_velocity(time_dependent=False):
    c = (lambda s: 1 + s) if time_dependent else (lambda s: 1.0)
    e = (lambda s: 1 - s / 2) if time_dependent else (lambda s: 1.0)

    def u2(x, s, d=0):
        x = np.asarray(x, float)
        return [-c(s) * x + x ** 3 / 50, -c(s) + 3 * x ** 2 / 50, 6 * x / 50, 6 / 50 + 0 * x][d]

    def d3u3(x, s, d=0):
        x = np.asarray(x, float)
        return [0.3 * e(s) * (1 + x ** 2 / 4), 0.15 * e(s) * x, 0.15 * e(s) + 0 * x][d]

    def d1u1(x, s, d=0):
        assert d == 0
        return -u2(x, s, 1) - d3u3(x, s, 0)

    return ReducedVelocity(u2, d1u1, d3u3)


def test_zero_velocity_factors():
    ff = flow_factors(ReducedVelocity.zero(), 0.3, 0.5)
    xs = np.linspace(-0.5, 0.5, 7)
    assert ff.K == 1.0 and ff.G == 1.0
    assert np.allclose(ff.g1(xs), 1, atol=1e-14)
    assert np.allclose(ff.g3(xs), 1, atol=1e-14)
    assert np.allclose(ff.g2(xs), xs, atol=1e-14)
    assert np.allclose(ff.g2(xs, 1), 1, atol=1e-12)


@pytest.mark.parametrize("t", [0.0, 0.6])
def test_saddle_factors(t):
    a = 0.7
    z = lambda x, s, d=0: np.zeros_like(np.asarray(x, float))
    U = ReducedVelocity(z, lambda x, s, d=0: -a + z(x, s), lambda x, s, d=0: (a if d == 0 else 0) + z(x, s))
    ff = flow_factors(U, t, 0.5)
    xs = np.linspace(-0.5, 0.5, 5)
    assert ff.K == 1.0
    assert np.allclose(np.log(ff.g1(xs)), -a * (1 - t), atol=1e-10)
    assert np.allclose(np.log(ff.g3(xs)), a * (1 - t), atol=1e-10)
    assert ff.report.all_pass


def test_cubic_factors_bounds_and_residual():
    ff = flow_factors(_poly_velocity(), 0.2, 1.0)
    assert ff.K == pytest.approx(math.exp(0.8), rel=1e-10)
    assert ff.residual <= 1e-8
    assert ff.report.all_pass
    for bid in ("ln_g3", "ln_g1", "d2ln_g3", "d2ln_g1"):
        assert ff.report.worst(bid).margin > 0
    xs = np.linspace(0, 1, 11)
    assert np.abs(ff.g2(xs) + ff.g2(-xs)).max() < 1e-12
    # variational g2' agrees with the interpolant
    from vortexlayers.interp import cheb_nodes
    nodes = cheb_nodes(257, -1, 1)
    assert np.abs(ff.g2(nodes, 1) - ff.g2_prime_nodes).max() < 1e-8


def test_cubic_reduced_velocity_is_divergence_free():
    U = cubic_reduced_velocity()
    x = np.linspace(-1, 1, 9)
    assert np.allclose(U.d1u1(x, 0.0) + U.u2(x, 0.0, 1) + U.d3u3(x, 0.0), 0, atol=1e-15)
    ff = flow_factors(U, 0.3, 1.0)
    assert ff.report.all_pass and ff.residual <= 1e-8


def test_factor_hypothesis_enforced():
    with pytest.raises(HypothesisViolated):
        flow_factors(_poly_velocity(), 0.2, 4.0)


def _final(y):
    r2 = (y ** 2).sum(axis=-1)
    env = np.exp(-r2)
    return np.stack([y[..., 0] * env * (1 + 0.3 * y[..., 1]), 0 * env,
                     y[..., 2] * env * np.cos(y[..., 1])])


def test_transport_at_final_time_is_identity():
    ff = flow_factors(_poly_velocity(), 1.0, 1.0)
    x = np.random.default_rng(0).uniform(-0.9, 0.9, (20, 3))
    w = transport_solution(_final, ff, x)
    ref = _final(x)
    assert np.array_equal(w[1], np.zeros(20))
    assert np.abs(w[[0, 2]] - ref[[0, 2]]).max() < 1e-14


def test_transport_linear_in_inverse_G():
    ff = flow_factors(_poly_velocity(), 0.5, 1.0, g=lambda s: 0.4)
    assert ff.G == pytest.approx(math.exp(0.2), rel=1e-12)
    x = np.array([[0.2, 0.3, -0.1]])
    w = transport_solution(_final, ff, x)
    w2 = transport_solution(_final, ff.with_G(ff.lnG + math.log(2)), x)
    assert np.allclose(w2, w / 2, rtol=1e-15, atol=0)


def test_transport_out_of_validity():
    ff = flow_factors(_poly_velocity(), 0.5, 0.5)
    with pytest.raises(OutOfValidity):
        transport_solution(_final, ff, [[0.0, 0.6, 0.0]])
    with pytest.raises(ValueError):
        transport_solution(_final, ff, [[0.0, 0.1, 0.0]], t=0.4)


def test_transport_solves_pde():
    U = _poly_velocity(time_dependent=True)
    g = lambda s: 0.2 + 0.1 * s
    t, h, dx = 0.4, 1e-4, 1e-5
    F = {s: flow_factors(U, s, 1.0, g=g) for s in (t - h, t, t + h)}
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.8, 0.8, (12, 3))
    w = lambda s, x: transport_solution(_final, F[s], x)
    w0 = w(t, pts)
    dt = (w(t + h, pts) - w(t - h, pts)) / (2 * h)
    grad = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = dx
        grad.append((w(t, pts + e) - w(t, pts - e)) / (2 * dx))
    vel = U.velocity(pts, t)
    adv = sum(vel[:, j] * grad[j] for j in range(3))
    stretch = np.stack([w0[0] * U.d1u1(pts[:, 1], t), 0 * w0[1], w0[2] * U.d3u3(pts[:, 1], t)])
    res = dt + adv - stretch - g(t) * w0
    scale = np.abs(dt) + np.abs(adv) + np.abs(stretch) + np.abs(g(t) * w0)
    assert np.abs(res).max() <= 1e-4 * scale.max()


def _axial_final(y):
    env = np.exp(-(y ** 2).sum(axis=-1))
    y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
    return np.stack([env * y2 * y3 * (1 + 0.3 * y1 ** 2), 0 * env, env * y1 * y2 * np.cos(y3)])


def test_transport_preserves_axial_class():
    ff = flow_factors(_poly_velocity(), 0.3, 1.0)
    x = np.random.default_rng(3).uniform(-0.8, 0.8, (30, 3))
    w = transport_solution(_axial_final, ff, x)
    for axis in range(3):
        y = x.copy()
        y[:, axis] *= -1
        v = transport_solution(_axial_final, ff, y)
        for c in (0, 2):
            sign = 1 if c == axis else -1
            assert np.abs(v[c] - sign * w[c]).max() <= 1e-12 * np.abs(w[c]).max()
