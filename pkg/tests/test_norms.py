import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexlayers.errors import UnderResolved
from vortexlayers.grid import Box, Grid3
from vortexlayers.norms import (c_j_norm, holder_norm, holder_quotient, cr_norm,
                                interpolate_bound, time_integral, norm_curve_csv)


def band_limited(box, seed, kmax=3, n_modes=6):
    """Random trigonometric polynomial on the periodic box, and its evaluator."""
    rng = np.random.default_rng(seed)
    scale = np.pi / np.array(box.half)
    ks = rng.integers(-kmax, kmax + 1, (n_modes, 3)) * scale
    amp = rng.normal(size=n_modes)
    ph = rng.uniform(0, 2 * np.pi, n_modes)

    def f(X, Y, Z):
        out = np.zeros(np.broadcast(X, Y, Z).shape)
        for k, a, p in zip(ks, amp, ph):
            out += a * np.cos(k[0] * X + k[1] * Y + k[2] * Z + p)
        return out
    return f


def test_constant_field():
    box = Box((1, 1, 1), (8, 8, 8))
    g = Grid3(box, np.full((8, 8, 8), -2.5))
    for j in (0, 1, 2):
        assert c_j_norm(g, j).value == 2.5
    h = holder_norm(g, 0.3)
    assert h.value == 2.5 and h.seminorm == 0.0


@pytest.mark.parametrize("k", [1, 3, 5])
def test_sine_c1(k):
    box = Box((np.pi, np.pi, np.pi), (8, 8, 64))
    X, Y, Z = box.mesh()
    g = Grid3(box, np.sin(k * Z))
    assert c_j_norm(g, 1).value == pytest.approx(max(1, k), rel=1e-12)
    assert c_j_norm(g, 2).value == pytest.approx(k * k, rel=1e-12)


def test_c_j_rejects_bad_order_and_unresolved():
    box = Box((1, 1, 1), (16, 16, 16))
    g = Grid3(box, np.random.default_rng(0).normal(size=(16, 16, 16)))
    with pytest.raises(ValueError):
        c_j_norm(g, 3)
    with pytest.raises(UnderResolved):
        c_j_norm(g, 1)
    assert c_j_norm(g, 0).value == np.abs(g.data).max()


@pytest.mark.parametrize("seed", range(3))
def test_c1_refinement_oracle(seed):
    box = Box((np.pi, np.pi, np.pi), (64, 64, 64))
    fine = Box(box.half, (256, 256, 256))
    f = band_limited(box, seed, kmax=3)
    a = c_j_norm(Grid3(box, f(*box.mesh())), 1).value
    b = c_j_norm(Grid3(fine, f(*fine.mesh())), 1).value
    assert abs(a - b) <= 0.02 * b


def test_vector_norm_is_max_over_components():
    box = Box((np.pi, np.pi, np.pi), (16, 16, 16))
    X, Y, Z = box.mesh()
    g = Grid3(box, np.stack([np.sin(X), 3 * np.sin(Y), 0 * Z]))
    assert c_j_norm(g, 1).value == pytest.approx(3.0, rel=1e-12)
    assert holder_norm(g, 0.5).sup == pytest.approx(3.0, rel=1e-12)


def test_abs_x3_quotient_coarsest_scale():
    # |x3| with nodes at multiples of h: the quotient of a pair (-a, a) is
    # 2a / (2a)^(1/2), so it grows with the separation
    n = 64
    box = Box((1.0, 1.0, 1.0), (4, 4, n))
    X, Y, Z = box.mesh()
    g = Grid3(box, np.abs(Z))
    h = box.spacing[2]
    semi = holder_norm(g, 0.5).seminorm
    # any pair has quotient <= d^(1/2): the largest dyadic step (32 cells
    # along x3, one side of 0) attains it, nearest neighbours give only h^(1/2)
    assert semi == pytest.approx(math.sqrt(32 * h), rel=1e-12)
    assert semi > 5 * math.sqrt(h)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 0.9))
def test_holder_against_interpolation_bound(seed, r):
    box = Box((np.pi, np.pi, np.pi), (32, 32, 32))
    g = Grid3(box, band_limited(box, seed, kmax=2)(*box.mesh()))
    c0 = c_j_norm(g, 0).value
    c1 = c_j_norm(g, 1).value
    bound = interpolate_bound(c0, c1, r)
    h = holder_norm(g, r, seed=seed, n_pairs=20000)
    assert h.seminorm <= 2 * bound
    assert h.seminorm >= bound / 2
    assert c0 <= h.value


def test_scaling():
    box = Box((np.pi, np.pi, np.pi), (32, 32, 32))
    g = Grid3(box, band_limited(box, 4)(*box.mesh()))
    base = holder_norm(g, 0.4).value
    for lam in (-3.0, 0.5, 1e3):
        v = holder_norm(g.with_data(lam * g.data), 0.4).value
        assert v == pytest.approx(abs(lam) * base, rel=1e-13)


def test_quotient_monotone_in_r():
    # all separations below 1, so d^-r grows with r on every pair
    box = Box((0.25, 0.25, 0.25), (16, 16, 16))
    X, Y, Z = box.mesh()
    f = 0.5 * np.sin(X + 0.3 * Y) * np.cos(Z)
    prev = None
    for r in (0.1, 0.3, 0.5, 0.7, 0.9):
        q, _ = holder_quotient([f], box.spacing, r, seed=3, n_pairs=5000)
        if prev is not None:
            assert q >= prev
        prev = q


def test_cr_norm_zero_is_sup():
    box = Box((1, 1, 1), (8, 8, 8))
    g = Grid3(box, np.random.default_rng(5).normal(size=(8, 8, 8)))
    assert cr_norm(g, 0).value == np.abs(g.data).max()
    with pytest.raises(ValueError):
        holder_norm(g, 1.0)


def test_holder_deterministic():
    box = Box((np.pi, np.pi, np.pi), (16, 16, 16))
    g = Grid3(box, band_limited(box, 7)(*box.mesh()))
    assert holder_norm(g, 0.5, seed=1).value == holder_norm(g, 0.5, seed=1).value


def test_interpolate_bound():
    assert interpolate_bound(1, 1, 0.3) == 1
    assert interpolate_bound(4, 9, 0.5) == pytest.approx(6)
    with pytest.raises(ValueError):
        interpolate_bound(-1, 1, 0.5)


def test_time_integral_examples():
    t = np.linspace(0, 1, 11)
    assert time_integral(t, np.ones_like(t)).value == pytest.approx(1.0, abs=1e-15)
    assert time_integral(t, t).value == pytest.approx(0.5, abs=1e-15)
    t = np.linspace(0, 1, 64)
    assert abs(time_integral(t, np.exp(-t)).value - (1 - math.exp(-1))) < 1e-4
    t = np.linspace(0, 1, 65)
    ti = time_integral(t, np.exp(-t))
    assert abs(ti.value - (1 - math.exp(-1))) <= 2 * ti.error
    with pytest.raises(ValueError):
        time_integral([0, 1, 1], [1, 2, 3])


def test_norm_curve_csv():
    csv = norm_curve_csv([0.0, 0.5], [1.0, 2.0], "pair-sample")
    assert csv.splitlines() == ["t,value,method", "0.0,1.0,pair-sample", "0.5,2.0,pair-sample"]
