"""Generalized vortex-sheet profiles.

A profile is

    w1 = a(x2) psi(L1 g1 x1) sin(M g2) psi(L2 g2) sin(M g3 x3) psi(L3 g3 x3)

with every ``g`` a function of x2 only, completed to a divergence-free
field (w1, 0, w3) by w3 = -int_{-inf}^{x3} d1 w1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import QuadratureNonConvergent
from .interp import ChebInterpolant

PSI_MAX_ORDER = 8


# ------------------------------------------------------------------ bump

def _h_deriv(x, m):
    # h = 1 - 1/(1-x^2) = 1 - (1/(1-x) + 1/(1+x))/2, so closed-form derivatives
    return -0.5 * math.factorial(m) * (1.0 / (1.0 - x) ** (m + 1)
                                       + (-1.0) ** m / (1.0 + x) ** (m + 1))


def psi(x, k=0):
    """k-th derivative of psi(x) = exp(1 - 1/(1-x^2)), zero for |x| >= 1."""
    if k > PSI_MAX_ORDER:
        raise ValueError("derivative order above 8")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    # below 1e-3 the function is < e^-499 and all eight derivatives underflow too
    inside = (1.0 - x * x) > 1e-3
    xi = x[inside]
    f = [np.exp(1.0 - 1.0 / (1.0 - xi * xi))]
    if k:
        h = [None] + [_h_deriv(xi, m) for m in range(1, k + 1)]
        for n in range(1, k + 1):
            # f^(n) = sum_j C(n-1, j) h^(j+1) f^(n-1-j)
            f.append(sum(comb(n - 1, j) * h[j + 1] * f[n - 1 - j] for j in range(n)))
    out[inside] = f[k]
    return out


# ------------------------------------------------------- profile functions

class ProfileFunction:
    """Scalar function of x2 with derivatives of order 0..2 (3 where cheap)."""

    kind = "callable"

    def __call__(self, x, d=0):
        raise NotImplementedError

    def to_dict(self):
        raise TypeError(f"{self.kind} profile function is not serializable")

    def is_zero(self):
        return False


class Affine(ProfileFunction):
    kind = "affine"

    def __init__(self, c0=0.0, c1=1.0):
        self.c0, self.c1 = float(c0), float(c1)

    def __call__(self, x, d=0):
        x = np.asarray(x, dtype=float)
        if d == 0:
            return self.c0 + self.c1 * x
        if d == 1:
            return np.full_like(x, self.c1)
        return np.zeros_like(x)

    def to_dict(self):
        if self.c0 == 0.0 and self.c1 == 1.0:
            return {"kind": "identity"}
        return {"kind": "affine", "c0": self.c0, "c1": self.c1}

    def is_zero(self):
        return self.c0 == 0.0 and self.c1 == 0.0


def identity():
    return Affine(0.0, 1.0)


def const(c):
    return Affine(c, 0.0)


class Poly(ProfileFunction):
    """Polynomial in x2, coefficients in increasing degree."""

    kind = "polynomial"

    def __init__(self, coeffs):
        self.c = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))

    def __call__(self, x, d=0):
        return (self.c.deriv(d) if d else self.c)(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "coeffs": [float(c) for c in self.c.coef]}


class Spline(ProfileFunction):
    kind = "sampled-spline"

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self._cs = CubicSpline(self.nodes, self.values)

    def __call__(self, x, d=0):
        return self._cs(np.asarray(x, dtype=float), d)

    def to_dict(self):
        return {"kind": self.kind, "nodes": self.nodes.tolist(), "values": self.values.tolist()}


class Cheb(ProfileFunction):
    """Chebyshev-sampled function on [-X, X]; extended linearly outside."""

    kind = "chebyshev"

    def __init__(self, X, values):
        self.X = float(X)
        self.ci = ChebInterpolant(-self.X, self.X, values)

    def __call__(self, x, d=0):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, -self.X, self.X)
        v = self.ci(xc, d)
        if d == 0:
            # first-order extension keeps evaluations finite just past the edge
            v = v + (x - xc) * self.ci(xc, 1)
        elif d == 1:
            pass
        else:
            v = np.where(x == xc, v, 0.0)
        return v

    def to_dict(self):
        return {"kind": self.kind, "X": self.X, "values": self.ci.f.tolist()}


class Reciprocal(ProfileFunction):
    """scale / base(x)."""

    kind = "reciprocal"

    def __init__(self, base, scale=1.0):
        self.base, self.scale = base, float(scale)

    def __call__(self, x, d=0):
        b = self.base(x)
        if d == 0:
            return self.scale / b
        b1 = self.base(x, 1)
        if d == 1:
            return -self.scale * b1 / b ** 2
        b2 = self.base(x, 2)
        return self.scale * (2 * b1 ** 2 / b ** 3 - b2 / b ** 2)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "base": self.base.to_dict()}

    def is_zero(self):
        return self.scale == 0.0


class FiniteDifference(ProfileFunction):
    """Plain callable; derivatives by central differences with h = 1e-5*scale."""

    kind = "callable"

    def __init__(self, f, scale=1.0):
        self.f, self.h = f, 1e-5 * scale

    def __call__(self, x, d=0):
        x = np.asarray(x, dtype=float)
        f, h = self.f, self.h
        if d == 0:
            return f(x)
        if d == 1:
            return (f(x + h) - f(x - h)) / (2 * h)
        return (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2


def function_from_dict(d):
    kind = d["kind"]
    if kind == "identity":
        return identity()
    if kind == "const":
        return const(d["c"])
    if kind == "affine":
        return Affine(d["c0"], d["c1"])
    if kind == "polynomial":
        return Poly(d["coeffs"])
    if kind == "sampled-spline":
        return Spline(d["nodes"], d["values"])
    if kind == "chebyshev":
        return Cheb(d["X"], d["values"])
    if kind == "reciprocal":
        return Reciprocal(function_from_dict(d["base"]), d["scale"])
    raise KeyError(f"unknown profile function kind {kind!r}")


# ---------------------------------------------------------------- profile

@dataclass(frozen=True)
class LayerProfile:
    a: ProfileFunction
    g1: ProfileFunction
    g2: ProfileFunction
    g3: ProfileFunction
    M: float
    L1: float
    L2: float
    L3: float
    x2_range: tuple = None
    _tables: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.x2_range is None:
            object.__setattr__(self, "x2_range", (-2.0 / self.L2, 2.0 / self.L2))

    @property
    def L(self):
        return (self.L1, self.L2, self.L3)

    def check(self, delta=0.1):
        """Standing assumptions; returns the list of violated ones."""
        bad = []
        if self.M < 1:
            bad.append("M < 1")
        top = self.M ** (1 - delta)
        for i, Li in enumerate(self.L, 1):
            if not 1 <= Li <= top * (1 + 1e-12):
                bad.append(f"L{i} outside [1, M^(1-delta)]")
        x = np.linspace(*self.x2_range, 4096)
        if np.abs(self.a(x)).max() > 2:
            bad.append("|a| > 2")
        for name in ("g1", "g3"):
            v = getattr(self, name)(x)
            if v.min() < 0.5 or v.max() > 2:
                bad.append(f"{name} outside [1/2, 2]")
        if np.abs(self.g2(x, 1)).max() > 1 + 1e-12:
            bad.append("|g2'| > 1")
        return bad

    def to_dict(self):
        return {"a": self.a.to_dict(), "g1": self.g1.to_dict(), "g2": self.g2.to_dict(),
                "g3": self.g3.to_dict(), "M": self.M, "L1": self.L1, "L2": self.L2,
                "L3": self.L3, "x2_range": list(self.x2_range)}

    @classmethod
    def from_dict(cls, d):
        return cls(function_from_dict(d["a"]), function_from_dict(d["g1"]),
                   function_from_dict(d["g2"]), function_from_dict(d["g3"]),
                   d["M"], d["L1"], d["L2"], d["L3"], tuple(d["x2_range"]))

    def table(self):
        """Cumulative integral table for the x3 factor (cached)."""
        t = self._tables.get("J")
        if t is None:
            t = SheetIntegral(self.M / self.L3)
            self._tables["J"] = t
        return t


def identity_profile(M, L, a=1.0):
    """a constant, g1 = g3 = 1, g2(x2) = x2, equal cutoffs ``L``."""
    L = (L, L, L) if np.isscalar(L) else tuple(L)
    return LayerProfile(const(a), const(1.0), identity(), const(1.0), float(M), *map(float, L))


def zero_profile(M, L):
    p = identity_profile(M, L, a=0.0)
    return p


# ----------------------------------------------- x3 antiderivative table

class SheetIntegral:
    """J(v) = int_{-1}^{v} sin(kappa u) psi(u) du on [-1, 1].

    Composite Gauss-Legendre: panel sums are accumulated once, a query
    adds the partial panel with the same rule mapped onto [left, v].
    """

    ORDER = 20

    def __init__(self, kappa, panels=None):
        self.kappa = float(kappa)
        if panels is None:
            panels = max(128, int(np.ceil(4 * self.kappa)))
        self.edges = np.linspace(-1.0, 1.0, panels + 1)
        self.w = 2.0 / panels
        z, wz = np.polynomial.legendre.leggauss(self.ORDER)
        self.z, self.wz = z, wz
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        u = mid[:, None] + 0.5 * self.w * z[None, :]
        vals = (self._f(u) * wz).sum(axis=1) * 0.5 * self.w
        self.cum = np.concatenate([[0.0], np.cumsum(vals)])

    def _f(self, u):
        return np.sin(self.kappa * u) * psi(u)

    def __call__(self, v):
        v = np.clip(np.asarray(v, dtype=float), -1.0, 1.0)
        i = np.minimum(((v + 1.0) / self.w).astype(int), len(self.edges) - 2)
        left = self.edges[i]
        half = 0.5 * (v - left)
        u = (left + half)[..., None] + half[..., None] * self.z
        part = (self._f(u) * self.wz).sum(axis=-1) * half
        return self.cum[i] + part


# ------------------------------------------------------------ evaluation

def _xyz(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1], x[..., 2]


def omega1(p: LayerProfile, x):
    """w1 at points ``x`` (array with last axis of length 3)."""
    x1, x2, x3 = _xyz(x)
    g2 = p.g2(x2)
    g3 = p.g3(x2)
    return (p.a(x2) * psi(p.L1 * p.g1(x2) * x1) * np.sin(p.M * g2) * psi(p.L2 * g2)
            * np.sin(p.M * g3 * x3) * psi(p.L3 * g3 * x3))


def d1_omega1(p, x1, x2, x3):
    g1 = p.g1(x2)
    g2 = p.g2(x2)
    g3 = p.g3(x2)
    return (p.a(x2) * p.L1 * g1 * psi(p.L1 * g1 * x1, 1) * np.sin(p.M * g2) * psi(p.L2 * g2)
            * np.sin(p.M * g3 * x3) * psi(p.L3 * g3 * x3))


def _x3_integral(p, x2, x3, method):
    """int_{-inf}^{x3} sin(M g3 y) psi(L3 g3 y) dy."""
    g3 = p.g3(x2)
    if method == "table":
        return p.table()(p.L3 * g3 * x3) / (p.L3 * g3)
    if isinstance(method, tuple) and method[0] == "series":
        k = method[1]
        if k > PSI_MAX_ORDER:
            raise ValueError("series order above 8")
        out = 0.0
        for i in range(k + 1):
            out = out - (np.cos(p.M * g3 * x3 + i * np.pi / 2) * p.L3 ** i
                         * psi(p.L3 * g3 * x3, i) / (p.M ** (i + 1) * g3))
        return out
    raise ValueError(f"unknown method {method!r}")


def omega3(p: LayerProfile, x, method="table"):
    """Divergence-free companion w3 = -int_{-inf}^{x3} d1 w1.

    ``method``: "quadrature" (adaptive, pointwise), "table" (composite
    Gauss-Legendre, vectorized) or ("series", k).
    """
    x1, x2, x3 = _xyz(x)
    if method == "quadrature":
        return _omega3_adaptive(p, x1, x2, x3)
    g1 = p.g1(x2)
    g2 = p.g2(x2)
    pref = p.a(x2) * p.L1 * g1 * psi(p.L1 * g1 * x1, 1) * np.sin(p.M * g2) * psi(p.L2 * g2)
    return -pref * _x3_integral(p, x2, x3, method)


def _omega3_adaptive(p, x1, x2, x3):
    x1, x2, x3 = np.broadcast_arrays(x1, x2, x3)
    out = np.zeros(x1.shape)
    for idx in np.ndindex(x1.shape):
        a, b, c = float(x1[idx]), float(x2[idx]), float(x3[idx])
        lo = -1.0 / (p.L3 * float(p.g3(b)))
        if c <= lo:
            continue
        # absolute tolerance scaled to the x3-independent prefactor
        g1 = float(p.g1(b))
        scale = abs(float(p.a(b)) * p.L1 * g1 * float(psi(p.L1 * g1 * a, 1))) * 2 * abs(lo)
        if scale == 0.0:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(lambda s: float(d1_omega1(p, a, b, s)), lo, c,
                                        limit=400, epsabs=1e-13 * scale, epsrel=1e-11)
            except integrate.IntegrationWarning as exc:
                raise QuadratureNonConvergent(str(exc)) from None
        out[idx] = -val
    return out


def omega(p: LayerProfile, x, method="table"):
    """(w1, 0, w3) stacked on a leading axis."""
    w1 = omega1(p, x)
    return np.stack([w1, np.zeros_like(w1), omega3(p, x, method)])


def omega_on_axes(p: LayerProfile, x1, x2, x3):
    """(w1, 0, w3) on the tensor grid x1 x x2 x x3, shape (3, n1, n2, n3).

    Uses the product structure so that only (x2, x3) pairs hit the
    quadrature table.
    """
    x1 = np.asarray(x1, float)[:, None]
    x2 = np.asarray(x2, float)
    x3 = np.asarray(x3, float)[None, :]
    a = p.a(x2)
    g1, g2, g3 = p.g1(x2), p.g2(x2), p.g3(x2)
    s2 = a * np.sin(p.M * g2) * psi(p.L2 * g2)
    arg1 = p.L1 * g1[None, :] * x1
    X1 = psi(arg1)
    X1p = psi(arg1, 1)
    z3 = g3[:, None] * x3
    X3 = np.sin(p.M * z3) * psi(p.L3 * z3)
    I3 = p.table()(p.L3 * z3) / (p.L3 * g3[:, None])
    w = np.zeros((3, X1.shape[0], len(x2), x3.shape[1]))
    w[0] = X1[:, :, None] * s2[None, :, None] * X3[None, :, :]
    w[2] = -(X1p * (p.L1 * g1 * s2)[None, :])[:, :, None] * I3[None, :, :]
    return w


def u_tilde(p: LayerProfile, J, x):
    """Approximate velocity derivative d_J(w1 e1 * K), as (0, u2, u3)."""
    j1, j2, j3 = J
    x1, x2, x3 = _xyz(x)
    shape = np.broadcast(x1, x2, x3).shape
    if j1 > 0:
        return np.zeros((3,) + shape)
    nJ = j1 + j2 + j3
    g2, g2p, g3 = p.g2(x2), p.g2(x2, 1), p.g3(x2)
    env = p.a(x2) * psi(p.L1 * p.g1(x2) * x1) * psi(p.L2 * g2) * psi(p.L3 * g3 * x3)
    den = p.M ** (1 - nJ) * (g3 ** 2 + g2p ** 2)
    ph2 = p.M * g2 + j2 * np.pi / 2
    ph3 = p.M * g3 * x3 + j3 * np.pi / 2
    u2 = g2p ** j2 * g3 ** (1 + j3) * env * np.sin(ph2) * np.cos(ph3) / den
    u3 = -(g2p ** (1 + j2)) * g3 ** j3 * env * np.cos(ph2) * np.sin(ph3) / den
    out = np.zeros((3,) + shape)
    out[1] = u2
    out[2] = u3
    return out


# ------------------------------------------------------------ diagnostics

@dataclass
class ProfileDiagnostics:
    B: float
    B0: float
    B1: float
    D: float
    support: tuple
    sups: dict


def support_box(p: LayerProfile, n=4096):
    """Half-extents of the support of w along each axis."""
    x = np.linspace(*p.x2_range, n)
    inside = np.abs(p.L2 * p.g2(x)) < 1.0
    if not inside.any():
        return (0.0, 0.0, 0.0)
    xs = x[inside]
    h2 = np.abs(xs).max()
    # the sampled edge can sit one step inside the true edge
    h2 = min(h2 + (x[1] - x[0]), max(abs(p.x2_range[0]), abs(p.x2_range[1])))
    h1 = 1.0 / (p.L1 * p.g1(xs).min())
    h3 = 1.0 / (p.L3 * p.g3(xs).min())
    return (float(h1), float(h2), float(h3))


def diagnostics(p: LayerProfile, delta=0.1, n=4096) -> ProfileDiagnostics:
    """B, B0 (B without sup|a'|), B1 and the support radius D."""
    x = np.linspace(*p.x2_range, n)
    sup = lambda f, d: float(np.abs(f(x, d)).max())
    sups = {"a1": sup(p.a, 1), "g1_1": sup(p.g1, 1), "g1_2": sup(p.g1, 2),
            "g2_2": sup(p.g2, 2), "g3_1": sup(p.g3, 1), "g3_2": sup(p.g3, 2)}
    M, L1, L2, L3 = p.M, p.L1, p.L2, p.L3
    B0 = (L1 + L2 + L3 + L3 * math.log(M) + sups["g1_1"]
          + M / L3 * (sups["g3_1"] + sups["g2_2"]))
    B = B0 + sups["a1"]
    B1 = B0 * (M + B0) + sups["g1_2"] + M / L3 * sups["g3_2"]
    box = support_box(p, n)
    return ProfileDiagnostics(B, B0, B1, float(np.linalg.norm(box)), box, sups)
