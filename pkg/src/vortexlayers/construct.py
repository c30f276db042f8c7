"""Layer-by-layer assembly of the vortex construction at desk scale.

Layer n is handled in its own coordinates y = (x_{n+1}, x_{n+2}, x_{n+3})
(indices mod 3).  In those coordinates it is a standard vortex layer:
components along y1 and y3, stretched along y2.  The cyclic relabelling
is a rotation, so curl, cross products and Biot-Savart commute with it.

Layers 0 and 1 are realized on grids ("field level"); later layers are
carried by their log-domain schedule only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import TargetUnreachable, HypothesisViolated, OutOfValidity, VortexLayersError
from .flow import ReducedVelocity, FlowFactors, flow_factors, dopri, transport_solution, BoundReport
from .grid.core import (Box, Grid3, biot_savart_spectral, curl, curl_hat, divergence, gradient,
                        frac_laplacian, spectral_eval, _deriv_factor, _irfft)
from .grid.decay import DecayReport
from .interp import cheb_nodes, ChebInterpolant
from .norms import holder_quotient, time_integral
from .params import Plan, schedule, validity_radius_log, force_exponents, plan as plan_of
from .profile import (LayerProfile, identity_profile, Reciprocal, omega_on_axes, omega, u_tilde,
                      support_box, diagnostics)

TERMS = ("self_interaction", "inner_outer", "outer_inner", "dissipation")
MAX_POINTS = 2 ** 22
N_FINE = 64
N_AXIS = 513


# ------------------------------------------------------------ coordinates

def perm(n):
    """Global axis (0-based) of each local axis of layer n."""
    return tuple((n + j) % 3 for j in range(3))


def local_points(x, n):
    """Global points (..., 3) -> layer-n coordinates."""
    return np.asarray(x, float)[..., list(perm(n))]


def global_vector(v, n):
    """Layer-n components on the leading axis -> global components."""
    v = np.asarray(v)
    out = np.empty_like(v)
    for j, i in enumerate(perm(n)):
        out[i] = v[j]
    return out


def _reindex(out_k, k, n):
    """Array (3, a0, a1, a2) in layer-k components and axis order -> layer n."""
    d = (n - k) % 3
    out = out_k[[(j + d) % 3 for j in range(3)]]
    return np.transpose(out, (0,) + tuple(1 + (j + d) % 3 for j in range(3)))


def _axes_for(k, n, axes_n):
    d = (n - k) % 3
    return [axes_n[(i - d) % 3] for i in range(3)]


def eval_grid_on(g: Grid3, k, n, axes_n, orders_n=(0, 0, 0)):
    """Trigonometric interpolant of a layer-k vector grid on the tensor
    product of layer-n axes, returned in layer-n components."""
    d = (n - k) % 3
    orders_k = [0, 0, 0]
    for j in range(3):
        orders_k[(j + d) % 3] = orders_n[j]
    return _reindex(spectral_eval(g, _axes_for(k, n, axes_n), tuple(orders_k)), k, n)


def eval_profile_on(p: LayerProfile, k, n, axes_n):
    return _reindex(omega_on_axes(p, *_axes_for(k, n, axes_n)), k, n)


# ------------------------------------------------------------ T_n and g_n

def find_Tn(n, curve, target_log, t_min=0.0, points=None, tol=1e-12, max_iter=200):
    """Time T with int_T^1 curve = target_log, for a positive curve.

    Bisection brackets the root, then Newton steps (derivative -curve(T))
    polish it.  ``points`` are breakpoints handed to the quadrature.
    """
    target = float(target_log)
    if target <= 0:
        return 1.0

    def I(T):
        pts = [p for p in (points or []) if T < p < 1.0]
        with warnings.catch_warnings():
            # roundoff warnings only mean the 1e-14 request was met early
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(lambda s: float(curve(s)), T, 1.0, points=pts or None,
                                    limit=500, epsabs=1e-15 * target, epsrel=1e-14)
        return val

    total = I(t_min)
    if total < target:
        raise TargetUnreachable(f"layer {n}: int_{t_min:g}^1 of -dU = {total:.6g} < target "
                                f"{target:.6g} (shortfall {target - total:.6g})")
    lo, hi = float(t_min), 1.0
    T = 1.0 - target / max(float(curve(1.0)), 1e-300)
    if not lo < T < hi:
        T = 0.5 * (lo + hi)
    for _ in range(max_iter):
        F = I(T) - target
        if abs(F) <= tol * target:
            return T
        if F > 0:
            lo = T
        else:
            hi = T
        c = float(curve(T))
        T_new = T + F / c if c > 0 else 0.5 * (lo + hi)
        T = T_new if lo < T_new < hi else 0.5 * (lo + hi)
    raise TargetUnreachable(f"layer {n}: root search for T_n did not converge")


def damping(n, factors: FlowFactors, plan: Plan):
    """g_n = nu N^(alpha R^n) (g2'(0)^2 + g3(0)^2)^(alpha/2)."""
    a = plan.alpha
    pre = plan.nu * math.exp(a * plan.R ** n * plan.lnN)
    g2p = float(factors.g2(np.float64(0.0), 1))
    g3 = float(factors.g3(np.float64(0.0)))
    return pre * (g2p ** 2 + g3 ** 2) ** (a / 2)


@dataclass(frozen=True)
class SwitchProfile:
    """C^2 smoothstep from 0 at T to 1 at T + eta (1 - T)."""
    T: float
    eta: float = 1e-2

    @property
    def width(self):
        return self.eta * (1.0 - self.T)

    def __call__(self, t):
        s = np.clip((np.asarray(t, float) - self.T) / self.width, 0.0, 1.0)
        return s ** 3 * (10 - 15 * s + 6 * s * s)

    def derivative(self, t):
        s = (np.asarray(t, float) - self.T) / self.width
        inside = (s > 0) & (s < 1)
        s = np.clip(s, 0.0, 1.0)
        return np.where(inside, 30 * s * s * (1 - s) ** 2 / self.width, 0.0)

    def l1_gap(self, n=4001):
        """int |rho - 1_[T,1]| dt on the ramp."""
        t = np.linspace(self.T, self.T + self.width, n)
        return float(integrate.simpson(1.0 - self(t), x=t))

    def switching_l1(self, norm_of_t, n=401):
        """int rho'(t) |w(t)| dt for a callable t -> |w(t)|."""
        t = np.linspace(self.T, self.T + self.width, n)
        v = np.array([norm_of_t(s) for s in t])
        return float(integrate.simpson(self.derivative(t) * v, x=t))


# ---------------------------------------------------------------- boxes

def _pow2(x):
    return 1 << max(0, int(math.ceil(math.log2(max(x, 1.0)))))


def layer_box(p: LayerProfile, per_support=16, per_wavelength=8, max_points=MAX_POINTS):
    """Periodic box wide enough for the truncated free-space kernel on
    every axis, with ``per_support`` samples across the support and
    ``per_wavelength`` samples per carrier wavelength."""
    h = np.array(support_box(p))
    s = 2 * h
    x = np.linspace(*p.x2_range, 4096)
    k = [0.0, p.M * float(np.abs(p.g2(x, 1)).max()), p.M * float(np.abs(p.g3(x)).max())]
    L = 1.05 * float(np.linalg.norm(s))
    half, shape = [], []
    for sj, kj in zip(s, k):
        P = 1.15 * (sj + L)
        dx = sj / per_support
        if kj > 0:
            dx = min(dx, 2 * np.pi / (per_wavelength * kj))
        n = _pow2(P / dx)
        half.append(P / 2)
        shape.append(n)
    if np.prod(shape) > max_points:
        raise MemoryError(f"layer box {shape} exceeds {max_points} points")
    return Box(tuple(half), tuple(shape))


def _zone(box: Box, p: LayerProfile):
    """Index slices of the sub-box on which the truncated kernel gives the
    true velocity: points whose distance to every support point is below
    the cutoff."""
    h = np.array(support_box(p))
    L = 1.05 * float(np.linalg.norm(2 * h))
    # largest kappa with |h + (h + kappa)| <= L
    a = 4.0 * float(h @ h)
    kap = (-4 * h.sum() + math.sqrt(max(16 * h.sum() ** 2 - 12 * (a - L * L), 0.0))) / 6
    out = []
    for ax, hj in zip(box.axes(), h):
        idx = np.nonzero(np.abs(ax) <= hj + max(kap, 0.0))[0]
        out.append(slice(int(idx[0]), int(idx[-1]) + 1))
    return tuple(out)


def _support_slices(box: Box, p: LayerProfile):
    h = support_box(p)
    out = []
    for ax, hj in zip(box.axes(), h):
        idx = np.nonzero(np.abs(ax) <= hj)[0]
        out.append(slice(int(idx[0]), int(idx[-1]) + 1))
    return tuple(out)


# ----------------------------------------------------------- layer state

@dataclass
class LayerField:
    """One layer sampled at one time on its own box, with its velocity."""
    t: float
    profile: LayerProfile
    box: Box
    w: Grid3
    u: Grid3

    @property
    def zone(self):
        return _zone(self.box, self.profile)

    @property
    def support(self):
        return _support_slices(self.box, self.profile)


@dataclass
class LayerState:
    n: int
    plan: Plan
    T_star: float
    T: float
    target_log: float
    X: float
    times: np.ndarray
    lnK: np.ndarray
    lnG: np.ndarray
    U: ReducedVelocity = None
    axis: dict = None
    flags: list = field(default_factory=list)
    n_nodes: int = 257
    hypothesis_ok: bool = True
    per_support: int = 16
    _cache: dict = field(default_factory=dict, repr=False)

    # -- scalars
    @property
    def M(self):
        return math.exp(self.plan.R ** self.n * self.plan.lnN)

    @property
    def Ln(self):
        return math.exp(self.plan.R ** self.n * self.plan.lnL)

    @property
    def amp(self):
        return math.exp(self.plan.R ** self.n * self.plan.lnA)

    @property
    def static(self):
        return self.U is None

    @property
    def out_of_regime(self):
        return bool(self.flags)

    def history(self, t):
        """(ln K_n, ln g3(0), ln G_n) at time t from the scalar ODE at the
        origin, which the flow fixes."""
        if self.static:
            return 0.0, 0.0, 0.0
        key = ("hist", float(t))
        if key not in self._cache:
            U, p, n = self.U, self.plan, self.n
            pre = p.nu * math.exp(p.alpha * p.R ** n * p.lnN)
            z = np.float64(0.0)

            def f(s, y):
                c = -float(U.u2(z, s, 1))
                e = float(U.d3u3(z, s, 0))
                g = pre * (math.exp(-2 * y[0]) + math.exp(2 * y[1])) ** (p.alpha / 2)
                return np.array([-c, -e, -g])
            y = np.zeros(3) if t == 1.0 else dopri(f, np.zeros(3), [1.0, float(t)], tol=1e-13)[-1]
            self._cache[key] = tuple(float(v) for v in y)
        return self._cache[key]

    def g_rate(self, t):
        lnK, lng3, _ = self.history(t)
        p = self.plan
        if self.static:
            return 0.0
        pre = p.nu * math.exp(p.alpha * p.R ** self.n * p.lnN)
        return pre * (math.exp(-2 * lnK) + math.exp(2 * lng3)) ** (p.alpha / 2)

    def factors(self, t) -> FlowFactors:
        if self.static:
            raise ValueError("layer 0 has no flow")
        key = ("ff", float(t))
        if key not in self._cache:
            self._cache[key] = flow_factors(self.U, float(t), self.X, n_nodes=self.n_nodes,
                                            check=self.hypothesis_ok)
        return self._cache[key]

    def final_profile(self) -> LayerProfile:
        Ln = self.Ln
        p = identity_profile(self.M, Ln, a=self.amp)
        if self.static:
            return p
        return LayerProfile(p.a, p.g1, p.g2, p.g3, p.M, Ln, Ln, Ln, (-self.X, self.X))

    def profile(self, t) -> LayerProfile:
        """The layer at time t as a vortex-layer profile."""
        if self.static:
            return self.final_profile()
        ff = self.factors(t)
        _, _, lnG = self.history(t)
        amp = math.exp(self.plan.R ** self.n * self.plan.lnA + lnG - ff.lnK)
        Ln = self.Ln
        return LayerProfile(Reciprocal(ff.g1, amp), ff.g1, ff.g2, ff.g3, self.M,
                            Ln * ff.K, Ln, Ln, (-self.X, self.X))

    def omega(self, x, t, global_coords=True):
        """Layer vorticity at points x (..., 3); global components unless
        ``global_coords`` is False (then x and the result are local)."""
        y = local_points(x, self.n) if global_coords else np.asarray(x, float)
        w = omega(self.profile(t), y)
        return global_vector(w, self.n) if global_coords else w

    def field(self, t, per_support=None) -> LayerField:
        ps = per_support or self.per_support
        key = ("field", float(t), ps)
        if key not in self._cache:
            if not self.static:
                # one time slice at a time keeps memory flat
                for k in [k for k in self._cache if k[0] == "field"]:
                    del self._cache[k]
            p = self.profile(t)
            box = layer_box(p, ps)
            w = Grid3(box, omega_on_axes(p, *box.axes()), "vorticity")
            u = biot_savart_spectral(w, check=False, kernel="free")
            self._cache[key] = LayerField(float(t), p, box, w, u)
        return self._cache[key]

    def to_dict(self):
        d = {
            "n": self.n, "T_star": self.T_star, "T": self.T, "target_log": self.target_log,
            "X": self.X, "M": self.M, "L": self.Ln, "A": self.amp,
            "times": [float(t) for t in self.times],
            "lnK": [float(v) for v in self.lnK], "lnG": [float(v) for v in self.lnG],
            "flags": list(self.flags), "out_of_regime": self.out_of_regime,
            "hypothesis_ok": self.hypothesis_ok,
        }
        if self.axis is not None:
            d["axis"] = {k: v if isinstance(v, str) else float(v)
                         for k, v in self.axis.items() if np.isscalar(v)}
        return d


def layer_zero(plan: Plan, force_override=False, per_support=16) -> LayerState:
    """Time-independent first layer: K = G = g1 = g3 = g2' = 1."""
    sch = schedule(plan, 1, force_override)
    flags = list(sch.flags)
    return LayerState(0, plan, sch[0].T_star, 0.0, 0.0, math.inf, np.array([0.0, 1.0]),
                      np.zeros(2), np.zeros(2), flags=flags, per_support=per_support)


# --------------------------------------------------- effective velocity

def effective_velocity(prior, t, X, n_axis=N_AXIS, mode="spectral"):
    """Reduced velocity U_n of layers ``prior`` (= 0..n-1) along the
    x_{n+2} axis of layer n = len(prior), on |x_{n+2}| <= X.

    Returns (ReducedVelocity, info) with axis samples made exactly odd
    (u2) and even (d1u1, d3u3).  Only time-independent inner layers are
    supported, which covers n = 1.
    """
    n = len(prior)
    if n == 0:
        return ReducedVelocity.zero(), {"d2U2_0": 0.0}
    if not all(s.static for s in prior):
        raise NotImplementedError("field-level U_n needs time-independent inner layers")
    z = cheb_nodes(n_axis, -X, X)
    z = (z - z[::-1]) / 2
    zero = np.array([0.0])
    u2 = np.zeros(n_axis)
    d1 = np.zeros(n_axis)
    d3 = np.zeros(n_axis)
    for st in prior:
        k = st.n
        if mode == "spectral":
            u = st.field(t).u
            ax = [zero, z, zero]
            u2 += eval_grid_on(u, k, n, ax)[1, 0, :, 0]
            d1 += eval_grid_on(u, k, n, ax, (1, 0, 0))[0, 0, :, 0]
            d3 += eval_grid_on(u, k, n, ax, (0, 0, 1))[2, 0, :, 0]
        elif mode == "analytic":
            p = st.profile(t)
            dd = (n - k) % 3
            pts = np.zeros((n_axis, 3))
            pts[:, (1 + dd) % 3] = z
            for j, out, J in ((1, u2, None), (0, d1, 0), (2, d3, 2)):
                Jk = [0, 0, 0]
                if J is not None:
                    Jk[(J + dd) % 3] = 1
                out += u_tilde(p, tuple(Jk), pts)[(j + dd) % 3]
        else:
            raise ValueError(f"unknown mode {mode!r}")
    u2 = (u2 - u2[::-1]) / 2
    d1 = (d1 + d1[::-1]) / 2
    d3 = (d3 + d3[::-1]) / 2
    c2, c1, c3 = (ChebInterpolant(-X, X, v) for v in (u2, d1, d3))
    xs = np.linspace(-X, X, 4001)
    sup3 = float(np.abs(c2(xs, 3)).max())
    supd3 = float(np.abs(c3(xs)).max())
    sup223 = float(np.abs(c3(xs, 2)).max())
    U = ReducedVelocity(lambda x2, s, d=0: c2(x2, d), lambda x2, s, d=0: c1(x2, d),
                        lambda x2, s, d=0: c3(x2, d),
                        lambda s: sup3, lambda s: supd3, lambda s: sup223)
    info = {"d2U2_0": float(c2(0.0, 1)), "d1U1_0": float(c1(0.0)), "d3U3_0": float(c3(0.0)),
            "sup_d2^3U2": sup3, "sup_d3U3": supd3, "sup_d223U3": sup223, "X": X,
            "mode": mode, "samples": {"z": z, "u2": u2, "d1u1": d1, "d3u3": d3}}
    return U, info


def reduced_on_axes(U: ReducedVelocity, X, axes, grad=False):
    """U (and optionally its gradient) on a tensor grid of local axes,
    with y2 clipped to [-X, X]."""
    y1, y2, y3 = axes
    z = np.clip(y2, -X, X)
    a, b, c = U.d1u1(z, 0.0), U.u2(z, 0.0), U.d3u3(z, 0.0)
    sh = (len(y1), len(y2), len(y3))
    v = np.zeros((3,) + sh)
    v[0] = y1[:, None, None] * a[None, :, None]
    v[1] = b[None, :, None]
    v[2] = y3[None, None, :] * c[None, :, None]
    if not grad:
        return v
    inside = (np.abs(y2) <= X).astype(float)
    a1, b1, c1 = U.d1u1(z, 0.0, 1) * inside, U.u2(z, 0.0, 1) * inside, U.d3u3(z, 0.0, 1) * inside
    dv = np.zeros((3, 3) + sh)
    dv[0, 0] = a[None, :, None]
    dv[0, 1] = y1[:, None, None] * a1[None, :, None]
    dv[1, 1] = b1[None, :, None]
    dv[2, 1] = y3[None, None, :] * c1[None, :, None]
    dv[2, 2] = c[None, :, None]
    return v, dv


# ------------------------------------------------------------- build

def build_layer(n, prior, plan: Plan, force_override=False, X=None, n_times=5, t_min=None,
                n_axis=N_AXIS, n_nodes=257, mode="spectral", per_support=16) -> LayerState:
    """Layer n >= 1 from the built layers 0..n-1.

    Without ``force_override`` the backward search for T_n stays in [0, 1]
    and the transport hypothesis must hold on |x_{n+2}| <= X.  With it the
    search may go to ``t_min`` (default -50) and hypothesis failures are
    recorded as flags.
    """
    if n < 1 or len(prior) != n:
        raise ValueError("build_layer needs n >= 1 and exactly n prior layers")
    sch = schedule(plan, n + 1, force_override)
    lay = sch[n]
    target = lay.K_target_log
    flags = list(sch.flags)
    Ln = math.exp(lay.lnL)
    X_formula = math.exp(validity_radius_log(plan, n))
    X_need = 1.25 * math.exp(target) / Ln
    if X is None:
        X = max(X_formula, X_need)
        if X > X_formula:
            flags.append(f"X raised from {X_formula:.4g} to {X:.4g} to contain the support")
    U, info = effective_velocity(prior, 1.0, X, n_axis, mode)
    info.pop("samples")
    c0 = -info["d2U2_0"]
    if not c0 > 0:
        raise HypothesisViolated(f"-d{n + 2}U(0) = {c0:.6g} is not positive")
    lo = 0.0 if not force_override else (-50.0 if t_min is None else float(t_min))
    T = find_Tn(n, lambda s: -float(U.u2(np.float64(0.0), s, 1)), target, lo)
    if T < 0:
        flags.append(f"T_{n} = {T:.6g} < 0")
    hyp = X * X * info["sup_d2^3U2"] <= c0
    if not hyp:
        msg = (f"X^2 sup|d^3 U| = {X * X * info['sup_d2^3U2']:.4g} > -dU(0) = {c0:.4g} "
               f"at X = {X:.4g}, t = 1")
        if not force_override:
            raise HypothesisViolated(msg)
        flags.append("3dpde hypothesis: " + msg)
    ratio = c0 / plan.A ** (plan.R ** (n - 1))
    info["ratio_to_A"] = ratio
    if not 1 / 34 < ratio < 35 / 34:
        flags.append(f"-dU(0)/A^R^(n-1) = {ratio:.4g} outside (1/34, 35/34)")
    times = np.linspace(T, 1.0, n_times)
    st = LayerState(n, plan, lay.T_star, T, target, X, times, np.zeros(n_times), np.zeros(n_times),
                    U=U, axis=info, flags=flags, n_nodes=n_nodes, hypothesis_ok=hyp,
                    per_support=per_support)
    for i, t in enumerate(times):
        lnK, _, lnG = st.history(t)
        st.lnK[i], st.lnG[i] = lnK, lnG
    ff = st.factors(T)
    if float(ff.g2(np.float64(X))) * Ln < 1.0:
        raise OutOfValidity(f"support of layer {n} at T_n leaves |x_{n + 2}| <= X = {X:.4g}")
    return st


def largest_feasible_N(alpha, candidates=(4, 8, 16, 32, 64), per_support=16, max_points=MAX_POINTS):
    """Largest N among ``candidates`` whose field layers 0 and 1 fit the
    grid budget at every sampled time; returns (N, {N: reason})."""
    best, why = None, {}
    for N in sorted(candidates):
        p = plan_of(alpha, N)
        try:
            s0 = layer_zero(p, True, per_support)
            s1 = build_layer(1, [s0], p, True, per_support=per_support)
            for st in (s0, s1):
                for t in st.times:
                    layer_box(st.profile(t), per_support, max_points=max_points)
        except (MemoryError, VortexLayersError) as e:
            why[N] = f"{type(e).__name__}: {e}"
            continue
        why[N] = "fits"
        best = N
    return best, why


def check_layer_invariants(st: LayerState, tol=1e-10):
    """Rows: ln K(T) on target, 1 <= G <= K, K monotone, e_{n+2} = 0."""
    rep = BoundReport(f"layer-{st.n}")
    if st.static:
        rep.add("G=K=1", 0.0, 0.0, 0.0)
        return rep
    lnK_T = st.history(st.T)[0]
    rep.add("lnK(T)_target", st.T, abs(lnK_T - st.target_log), tol * st.target_log)
    for t, a, b in zip(st.times, st.lnK, st.lnG):
        rep.add("G>=1", t, b, 0.0, ">=")
        rep.add("G<=K", t, b, a)
    rep.add("K_monotone", 0.0, float(np.diff(st.lnK).max()), 0.0)
    return rep


# -------------------------------------------------------------- checks

def induction_check(st: LayerState, next_T_star=None) -> BoundReport:
    """Induction items (i)-(v) on sampled t in [max(T*_{n+1}, T_n), 1]."""
    p, n = st.plan, st.n
    rep = BoundReport(f"induction-{n}")
    if next_T_star is None:
        next_T_star = schedule(p, n + 1, True)[n + 1].T_star
    rep.add("remark_T*_{n+1}>T_n", next_T_star, next_T_star, st.T, ">=")
    if st.static:
        for bid in ("i", "ii", "v"):
            rep.add(bid, 0.0, 1.0, 1.0, "==")
        return rep
    cap1 = math.exp(p.R ** (n - 1) * (2 * p.lnN - p.R * p.lnL))
    cap2 = math.exp(p.R ** (n - 1) * 2 * p.lnN)
    lo = max(next_T_star, st.T)
    for t in st.times:
        if t < lo:
            continue
        ff = st.factors(t)
        lnK, _, lnG = st.history(t)
        xs = np.linspace(-st.X, st.X, 2001)
        # the profile only needs g on the layer's support
        sup = np.abs(ff.g2(xs)) * st.Ln < 1.0
        xs = xs[sup]
        rep.add("i", t, math.exp(lnK), 2.0, "<")
        for name, g in (("g1", ff.g1), ("g3", ff.g3)):
            rep.add(f"ii_{name}_lo", t, float(g(xs).min()), 0.5, ">")
            rep.add(f"ii_{name}_hi", t, float(g(xs).max()), 2.0, "<")
            rep.add(f"iii_{name}'", t, float(np.abs(g(xs, 1)).max()), cap1, "<")
            rep.add(f"iv_{name}''", t, float(np.abs(g(xs, 2)).max()), cap2, "<")
        rep.add("iii_g2''", t, float(np.abs(ff.g2(xs, 2)).max()), cap1, "<")
        rep.add("v_G>=1", t, math.exp(lnG), 1.0, ">=")
        rep.add("v_G<=K", t, math.exp(lnG), math.exp(lnK), "<=")
        rep.add("g_n<N^(aR^n)/68", t, st.g_rate(t), math.exp(p.alpha * p.R ** n * p.lnN) / 68, "<")
    return rep


def flow_reversibility(st: LayerState, t, n_points=32, seed=0, tol=1e-12):
    """max |phi(phi(x, t, 1), 1, t) - x| / max|x| over seeded points in
    the layer's support box at time t."""
    U = st.U
    h = np.array(support_box(st.profile(t)))
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (n_points, 3)) * h
    m = n_points

    def f(s, y):
        x1, x2, x3 = y[:m], y[m:2 * m], y[2 * m:]
        return np.concatenate([x1 * U.d1u1(x2, s, 0), U.u2(x2, s, 0), x3 * U.d3u3(x2, s, 0)])
    fwd = dopri(f, P.T.ravel(), [t, 1.0], tol)[-1]
    back = dopri(f, fwd, [1.0, t], tol)[-1]
    return float(np.abs(back - P.T.ravel()).max() / np.abs(P).max())


def layer_pde_residual(st: LayerState, t, n_points=100, seed=0, h_t=1e-4, h_x=1e-5):
    """Relative residual of d_t w + U.grad w - w_i d_i U_i + g_n w = 0
    (i = 1, 3) at seeded points where the layer is not small, using the
    transported final data and central differences."""
    final = st.final_profile()
    fin = lambda y: omega(final, y, "quadrature")
    U = st.U
    h = np.array(support_box(st.profile(t)))
    rng = np.random.default_rng(seed)

    def W(x, s):
        ff = st.factors(s).with_G(-st.history(s)[2])
        return transport_solution(fin, ff, x)
    # points where |w1| is at least a tenth of its sampled max
    cand = rng.uniform(-0.8, 0.8, (20 * n_points, 3)) * h
    w = W(cand, t)
    keep = np.abs(w[0]) > 0.1 * np.abs(w[0]).max()
    P = cand[keep][:n_points]
    wt = (W(P, t + h_t) - W(P, t - h_t)) / (2 * h_t)
    grads = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h_x
        grads.append((W(P + e, t) - W(P - e, t)) / (2 * h_x))
    v = U.velocity(P, t)
    w0 = W(P, t)
    adv = sum(v[:, j] * grads[j] for j in range(3))
    stretch = np.stack([w0[0] * U.d1u1(P[:, 1], t), np.zeros(len(P)), w0[2] * U.d3u3(P[:, 1], t)])
    res = wt + adv - stretch + st.g_rate(t) * w0
    scale = np.abs(wt).max() + np.abs(adv).max()
    return float(np.abs(res[[0, 2]]).max() / scale), len(P)


# ------------------------------------------------------------- forces

def _fd_grad(fun, axes, h):
    """Fourth-order central differences of fun(axes) -> (3, ...) along
    each local axis."""
    out = []
    for j in range(3):
        acc = 0.0
        for c, s in ((8, 1), (-8, -1), (-1, 2), (1, -2)):
            ax = list(axes)
            ax[j] = axes[j] + s * h
            acc = acc + c * fun(ax)
        out.append(acc / (12 * h))
    return np.stack(out, axis=1)   # (component, derivative, ...)


@dataclass
class ForceTerms:
    """Force pieces on the layer's FFT box (``parts``) and on a fine
    tensor grid over the layer's support (``fine``, with ``fine_h`` its
    spacing), where the sampled norms are taken."""
    n: int
    t: float
    box: Box
    parts: dict
    g_n: float
    zone: tuple
    fine: dict
    fine_h: tuple
    grad_u_sup: float

    @property
    def total(self):
        return sum(self.parts.values())

    def grid(self, name=None):
        return Grid3(self.box, self.total if name is None else self.parts[name], name or "F")

    def norms(self, r, seed=0):
        """(sup, C^r) per term.  Terms supported on the layer use the fine
        grid; the inner-outer pair also spreads over the inner layers and
        takes the larger of the fine grid and the exact-velocity zone."""
        out = {}
        for name, arr in self.fine.items():
            sup, semi = _cr(arr, self.fine_h, r, seed)
            if name == "inner_outer":
                sup2, semi2 = _cr(self.parts[name][(slice(None),) + self.zone], self.box.spacing, r, seed)
                sup, semi = max(sup, sup2), max(semi, semi2)
            out[name] = (sup, sup + semi)
        return out


def _cr(arr, h, r, seed):
    sup = float(np.abs(arr).max())
    if sup == 0 or r == 0:
        return sup, 0.0
    semi, _ = holder_quotient([arr[c] for c in range(3)], h, r, seed)
    return sup, semi


def _advect(v, dw, w, dv):
    """v.grad w - w.grad v with gradients laid out as [i, j] = d_j f_i."""
    return sum(v[j] * dw[:, j] - w[j] * dv[:, j] for j in range(3))


def _spectral_grad(g: Grid3, axes):
    return np.stack([spectral_eval(g, axes, tuple(int(i == j) for i in range(3))) for j in range(3)], 1)


def _pieces(st, states, t, axes, lf, u, du, diss):
    """The four force pieces at the tensor grid ``axes`` (layer-n
    coordinates) given the layer's own velocity u, grad u and
    nu|grad|^alpha w there."""
    n = st.n
    prof = lf.profile
    w = omega_on_axes(prof, *axes)
    dw = _fd_grad(lambda ax: omega_on_axes(prof, *ax), axes, 1e-4 * min(support_box(prof)))
    g_n = 0.0 if st.static else st.g_rate(t)
    out = {"self_interaction": _advect(u, dw, w, du)}
    grad_tot = du
    if n == 0:
        out["inner_outer"] = np.zeros_like(w)
        out["outer_inner"] = np.zeros_like(w)
    else:
        profs = [(s_.profile(t), s_.n) for s_ in states[:n]]
        h = 1e-4 * min(min(support_box(q)) for q, _ in profs)
        Om_fun = lambda ax: sum(eval_profile_on(q, k, n, ax) for q, k in profs)
        out["inner_outer"] = _advect(u, _fd_grad(Om_fun, axes, h), Om_fun(axes), du)
        V = np.zeros_like(w)
        dV = np.zeros_like(dw)
        for s_ in states[:n]:
            ug = s_.field(t).u
            V += eval_grid_on(ug, s_.n, n, axes)
            for j in range(3):
                dV[:, j] += eval_grid_on(ug, s_.n, n, axes, tuple(int(i == j) for i in range(3)))
        grad_tot = du + dV
        Uv, dU = reduced_on_axes(st.U, st.X, axes, grad=True)
        out["outer_inner"] = _advect(V - Uv, dw, w, dV - dU)
    out["dissipation"] = diss - g_n * w
    return out, float(np.abs(grad_tot).max())


def force_residual(n, t, states, per_support=None, n_fine=N_FINE) -> ForceTerms:
    """Grouped pieces of the layer-n residual force F_n at time t, in
    layer-n coordinates:

    self_interaction = (w*K).grad w - w.grad(w*K)
    inner_outer = (w*K).grad O - O.grad(w*K), O = sum of inner layers
    outer_inner = (O*K - U).grad w - w.grad(O*K - U)
    dissipation = nu |grad|^alpha w - g_n w

    Velocities come from the spectral Biot-Savart law; vorticity and its
    gradient from the analytic profiles (fourth-order differences), since
    the bump's edge layers make spectral derivatives of sampled vorticity
    converge slowly.  The outer-inner pair is only formed on the support
    of w, where it lives.
    """
    st = states[n]
    lf = st.field(t, per_support)
    box, u = lf.box, lf.u
    axes = box.axes()
    diss = frac_laplacian(lf.w, st.plan.alpha)
    du = gradient(u)
    supp = lf.support
    parts = {}
    ax_s = [a[s_] for a, s_ in zip(axes, supp)]
    sl = (slice(None),) + supp
    sub, _ = _pieces(st, states, t, ax_s, lf, u.data[sl], du[(slice(None),) + sl],
                     st.plan.nu * diss.data[sl])
    w_full = lf.w.data
    g_n = 0.0 if st.static else st.g_rate(t)
    parts["self_interaction"] = np.zeros_like(w_full)
    parts["self_interaction"][sl] = sub["self_interaction"]
    parts["outer_inner"] = np.zeros_like(w_full)
    parts["outer_inner"][sl] = sub["outer_inner"]
    if n == 0:
        parts["inner_outer"] = np.zeros_like(w_full)
    else:
        profs = [(s_.profile(t), s_.n) for s_ in states[:n]]
        h = 1e-4 * min(min(support_box(q)) for q, _ in profs)
        Om_fun = lambda ax: sum(eval_profile_on(q, k, n, ax) for q, k in profs)
        parts["inner_outer"] = _advect(u.data, _fd_grad(Om_fun, axes, h), Om_fun(axes), du)
    del du
    parts["dissipation"] = st.plan.nu * diss.data - g_n * w_full
    # fine grid over the support for the sampled norms
    hs = support_box(lf.profile)
    fax = [np.linspace(-hj, hj, n_fine) for hj in hs]
    fu = spectral_eval(u, fax)
    fdu = _spectral_grad(u, fax)
    fdiss = st.plan.nu * spectral_eval(diss, fax)
    fine, gsup = _pieces(st, states, t, fax, lf, fu, fdu, fdiss)
    order = ("self_interaction", "inner_outer", "outer_inner", "dissipation")
    return ForceTerms(n, float(t), box, {k: parts[k] for k in order}, g_n, lf.zone,
                      {k: fine[k] for k in order}, tuple(2 * hj / (n_fine - 1) for hj in hs), gsup)


# ---------------------------------------------------------- force audit

@dataclass
class ForceAudit:
    r: float
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def get(self, n, term):
        for row in self.rows:
            if row["n"] == n and row["term"] == term:
                return row
        raise KeyError((n, term))

    def ratio(self, term, n1=1, n0=0):
        a, b = self.get(n1, term)["measured"], self.get(n0, term)["measured"]
        if not (np.isfinite(a) and np.isfinite(b)) or a == b == 0:
            return math.nan
        # a term absent at n0 but present at n1 grew
        return a / b if b else math.inf

    def summable(self):
        """Every predicted exponent negative, so sum_n M_n^exponent < inf."""
        return all(row["exponent"] < 0 for row in self.rows)

    def to_csv(self):
        head = ["n", "level", "term", "exponent", "M", "predicted", "measured", "measured_over_predicted",
                "time_error"]
        lines = [",".join(head)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(k, "")) for k in head))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _term_exponent(name):
    return {"switching": "switching", "self_interaction": "self_interaction",
            "inner_outer": "inner_outer", "outer_inner": "outer_inner",
            "dissipation": "dissipation"}[name]


def force_audit(plan: Plan, states, n_max, r=None, seed=0, per_support=None) -> ForceAudit:
    """Per-layer, per-term table of int_{T_n}^1 |.|_{C^r} dt for the
    field-level ``states`` and predicted exponents up to ``n_max``."""
    r = plan.r if r is None else r
    ex = force_exponents(plan, r)
    audit = ForceAudit(r)
    sch = schedule(plan, n_max, True)
    for n in range(n_max + 1):
        lnM = sch[n].lnM
        M = math.exp(lnM) if lnM < 700 else math.inf
        pred = {k: math.exp(ex[k] * lnM) for k in ex}
        if n < len(states):
            st = states[n]
            measured, errs = _measure_layer(st, states, r, seed, per_support)
            for k in ("switching",) + TERMS:
                audit.add(n=n, level="field", term=k, exponent=ex[_term_exponent(k)], M=M,
                          predicted=pred[_term_exponent(k)], measured=measured[k],
                          measured_over_predicted=measured[k] / pred[_term_exponent(k)],
                          time_error=errs.get(k, 0.0))
        else:
            for k in ("switching",) + TERMS:
                audit.add(n=n, level="schedule", term=k, exponent=ex[_term_exponent(k)], M=M,
                          predicted=pred[_term_exponent(k)], measured=math.nan,
                          measured_over_predicted=math.nan, time_error=math.nan)
    return audit


def _measure_layer(st, states, r, seed, per_support):
    n = st.n
    prof = st.profile(st.T)
    hs = support_box(prof)
    w = omega_on_axes(prof, *[np.linspace(-hj, hj, N_FINE) for hj in hs])
    sup, semi = _cr(w, tuple(2 * hj / (N_FINE - 1) for hj in hs), r, seed)
    measured = {"switching": sup + semi}
    errs = {}
    if st.static:
        ft = force_residual(n, 1.0, states, per_support)
        nr = ft.norms(r, seed)
        for k in TERMS:
            measured[k] = nr[k][1] * (1.0 - st.T)
        return measured, errs
    vals = {k: [] for k in TERMS}
    for t in st.times:
        nr = force_residual(n, t, states, per_support).norms(r, seed)
        for k in TERMS:
            vals[k].append(nr[k][1])
    for k in TERMS:
        ti = time_integral(st.times, vals[k])
        measured[k], errs[k] = ti.value, ti.error
    return measured, errs


# ---------------------------------------------------------------- Hodge

@dataclass
class HodgeResult:
    f: Grid3
    curl_residual: float       # relative, on the interior
    div_F: float               # relative spectral divergence of F
    l2: float


def _periodic_curl_inverse(F: Grid3):
    """f = curl (-Lap)^-1 F with the Laplacian built from the same
    derivative symbols as ``curl`` (Nyquist odd derivatives are zero), so
    curl f = F exactly for discretely divergence-free, zero-mean F."""
    box = F.box
    d = [_deriv_factor(box, j, 1) for j in range(3)]
    lap = (d[0] ** 2 + d[1] ** 2 + d[2] ** 2).real
    green = np.zeros_like(lap)
    nz = lap != 0
    green[nz] = -1.0 / lap[nz]
    return F.with_data(_irfft(box, curl_hat(box, F.hat()) * green), "force")


def hodge_force(F: Grid3, kernel="periodic", interior=0.5) -> HodgeResult:
    """f with curl f = F, from the Biot-Savart law on the box.  The
    periodic kernel is exact for divergence-free F; ``"free"`` uses the
    truncated Newton kernel and needs a padded box."""
    supF = F.sup()
    if supF == 0:
        z = F.with_data(np.zeros_like(F.data), "force")
        return HodgeResult(z, 0.0, 0.0, 0.0)
    if kernel == "periodic":
        f = _periodic_curl_inverse(F)
    else:
        f = biot_savart_spectral(F, check=False, kernel=kernel)
    cf = curl(f).data
    sl = tuple(slice(int(n * (1 - interior) / 2), int(n * (1 + interior) / 2)) for n in F.box.shape)
    res = float(np.abs(cf - F.data)[(slice(None),) + sl].max() / supF)
    div = float(np.abs(divergence(F).data).max() / supF)
    l2 = float(math.sqrt((f.data ** 2).sum() * F.box.cell_volume))
    return HodgeResult(f, res, div, l2)


def force_curl_form(n, t, states, per_support=None) -> Grid3:
    """Vector potential P on layer n's box with F_n = curl P:

    P = -u x (w + O) - (O*K - U) x w + nu |grad|^alpha u - g_n u,

    using curl(a x b) = b.grad a - a.grad b for divergence-free a, b.
    Its spectral curl is a discretely divergence-free version of the
    pieces in ``force_residual``."""
    st = states[n]
    lf = st.field(t, per_support)
    box, u, w = lf.box, lf.u.data, lf.w.data
    g_n = 0.0 if st.static else st.g_rate(t)
    P = -np.cross(u, w, axis=0) + st.plan.nu * frac_laplacian(lf.u, st.plan.alpha).data - g_n * u
    if n:
        axes = box.axes()
        Om = sum(eval_profile_on(s_.profile(t), s_.n, n, axes) for s_ in states[:n])
        V = sum(eval_grid_on(s_.field(t).u, s_.n, n, axes) for s_ in states[:n])
        V = V - reduced_on_axes(st.U, st.X, axes)
        P -= np.cross(u, Om, axis=0) + np.cross(V, w, axis=0)
    return Grid3(box, P, "force potential")


# ------------------------------------------------------------- blow-up

@dataclass
class BlowupSeries:
    rows: list

    def to_csv(self):
        head = ["n", "lnK_target", "ratio", "partial_sum", "lnK_measured", "grad_u_integral"]
        lines = [",".join(head)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(k, "")) for k in head))
        return "\n".join(lines) + "\n"


def blowup_diagnostic(plan: Plan, n_max, states=(), grad_integrals=None) -> BlowupSeries:
    """ln K_n(T_n) = R^n ln(A N^s) per layer, ratios, partial sums, and
    measured values where layers exist on grids."""
    sch = schedule(plan, n_max, True)
    rows, total = [], 0.0
    for n in range(n_max + 1):
        v = sch[n].K_target_log
        total += v
        row = {"n": n, "lnK_target": v, "partial_sum": total,
               "ratio": v / sch[n - 1].K_target_log if n else math.nan,
               "lnK_measured": math.nan, "grad_u_integral": math.nan}
        if n < len(states) and not states[n].static:
            row["lnK_measured"] = states[n].history(states[n].T)[0]
        if grad_integrals and n in grad_integrals:
            row["grad_u_integral"] = grad_integrals[n]
        rows.append(row)
    return BlowupSeries(rows)


def grad_u_integral(st: LayerState, states, per_support=None):
    """int_{T_n}^1 max |d_j u_i| dt over the support of layer n, for the
    velocity of layers 0..n."""
    vals = [force_residual(st.n, t, states, per_support).grad_u_sup for t in st.times]
    return time_integral(st.times, vals).value


# --------------------------------------------------------- symmetry

def assembled_vorticity(states, t, x, eta=1e-2):
    """sum_n rho_n(t) w_n(x, t), global coordinates."""
    out = 0.0
    for st in states:
        rho = 1.0 if st.static else float(SwitchProfile(st.T, eta)(t))
        out = out + rho * st.omega(x, t)
    return out


def assembled_velocity(states, t, axes, eta=1e-2):
    """Biot-Savart velocity of the assembled layers on a global tensor grid."""
    out = 0.0
    for st in states:
        rho = 1.0 if st.static else float(SwitchProfile(st.T, eta)(t))
        loc = eval_grid_on(st.field(t).u, st.n, 0, axes) if st.n else spectral_eval(st.field(t).u, axes)
        out = out + rho * loc
    return out


def symmetry_defects(states, t, n_side=10, seed=0, frac=0.5):
    """Max relative defects of the axial (vorticity) and polar (velocity)
    reflection laws at n_side^3 seeded points."""
    rng = np.random.default_rng(seed)
    h = min(min(support_box(st.profile(t))) for st in states)
    axes = [np.sort(rng.uniform(-frac * h * 4, frac * h * 4, n_side)) for _ in range(3)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    w = assembled_vorticity(states, t, P)
    u = assembled_velocity(states, t, axes)
    sw, su = np.abs(w).max(), np.abs(u).max()
    dw = du = 0.0
    for i in range(3):
        Q = P.copy()
        Q[..., i] *= -1
        wr = assembled_vorticity(states, t, Q)
        ax = list(axes)
        ax[i] = -axes[i]
        ur = assembled_velocity(states, t, ax)
        for j in range(3):
            sa = 1.0 if i == j else -1.0
            dw = max(dw, float(np.abs(wr[j] - sa * w[j]).max()))
            du = max(du, float(np.abs(ur[j] + sa * u[j]).max()))
    return dw / sw, du / su


# ---------------------------------------------------------- energy

def energy_diagnostic(u_grids, f_grids, times, nu=0.01, alpha=0.0):
    """Each side of
        E(t) - E(t0) + nu int ||grad|^(alpha/2) u|^2 = int u.f
    with trapezoid time quadrature; returns a dict of curves."""
    times = np.asarray(times, float)
    E = np.array([0.5 * float((u.data ** 2).sum()) * u.box.cell_volume for u in u_grids])
    diss = []
    for u in u_grids:
        v = frac_laplacian(u, alpha / 2).data if alpha > 0 else u.data
        diss.append(float((v ** 2).sum()) * u.box.cell_volume)
    work = [float((u.data * f.data).sum()) * u.box.cell_volume for u, f in zip(u_grids, f_grids)]
    cum = lambda v: np.concatenate([[0.0], integrate.cumulative_trapezoid(v, times)]) if len(times) > 1 \
        else np.zeros(1)
    D, W = nu * cum(np.array(diss)), cum(np.array(work))
    lhs = E - E[0] + D
    return {"t": times, "energy": E, "dissipation": D, "work": W, "lhs": lhs, "mismatch": lhs - W}


# ------------------------------------------------ interaction lemmas

def verify_interaction_lemmas(sweep, M0=4.0, L0=2.0, delta=0.1, rule=None, slack=0.25, seed=0,
                              zero_inner=False):
    """Inner and outer interaction estimates for a coarse identity layer
    O (carrier M0, cutoff L0) and a fine identity layer w swept in M.

    inner: |(w*K).grad O|_C0 / ((M + B0) |O|_C1) against -2(1-delta).
    outer: |(O*K - U).grad w|_C0 normalized by (M + B0)(1/L1 + 1/L3)^2
    |O|_C2, with U the reduced velocity of O along the fine layer's axis;
    its ratio across two support sizes is reported as extra columns.
    """
    rule = rule or (lambda m: m ** (2.0 / 3.0))
    coarse = identity_profile(M0, L0, a=0.0 if zero_inner else 1.0)
    cbox = Box((4.0 / L0,) * 3, (64, 64, 64))
    Og = Grid3(cbox, omega_on_axes(coarse, *cbox.axes()))
    Ou = biot_savart_spectral(Og, check=False)
    nO1 = max(float(np.abs(gradient(Og)).max()), Og.sup())
    nO2 = nO1
    for a in range(3):
        for b in range(3):
            o = [0, 0, 0]
            o[a] += 1
            o[b] += 1
            nO2 = max(nO2, float(np.abs(spectral_eval(Og, cbox.axes(), tuple(o))).max()))
    inner = DecayReport("inner", -2 * (1 - delta),
                        "|(w*K).grad O|_Cj <~ (M+B0) sum M^((j1-2)(1-delta)) |O|_C(j2+1)", slack)
    outer = DecayReport("outer", 0.0,
                        "|(O*K-U).grad w|_Cj <~ (M^(j+1)+Bj)(1/L1+1/L3)^2 D^(1-delta) |O|_C2", slack)
    for M in sweep:
        L = rule(M)
        p = identity_profile(M, L)
        box = layer_box(p, 12)
        w = Grid3(box, omega_on_axes(p, *box.axes()))
        u = biot_savart_spectral(w, check=False, kernel="free")
        zone = _zone(box, p)
        axes = box.axes()
        sub = [a[s] for a, s in zip(axes, zone)]
        dO = np.stack([spectral_eval(Og, sub, tuple(int(i == j) for i in range(3))) for j in range(3)], 1)
        us = u.data[(slice(None),) + zone]
        a = sum(us[j] * dO[:, j] for j in range(3))
        dg = diagnostics(p, delta)
        inner.add(M, float(np.abs(a).max()), (M + dg.B0) * nO1, L=L)
        # outer: velocity of O minus its reduced form, against grad w on the support
        supp = _support_slices(box, p)
        ax_s = [a_[s] for a_, s in zip(axes, supp)]
        X = float(ax_s[1].max())
        z = cheb_nodes(65, -X, X)
        zero = np.array([0.0])
        u2 = spectral_eval(Ou, [zero, z, zero])[1, 0, :, 0]
        d1 = spectral_eval(Ou, [zero, z, zero], (1, 0, 0))[0, 0, :, 0]
        d3 = spectral_eval(Ou, [zero, z, zero], (0, 0, 1))[2, 0, :, 0]
        c2, c1, c3 = (ChebInterpolant(-X, X, v) for v in (u2, d1, d3))
        U = ReducedVelocity(lambda x, s, d=0: c2(x, d), lambda x, s, d=0: c1(x, d),
                            lambda x, s, d=0: c3(x, d))
        V = spectral_eval(Ou, ax_s) - reduced_on_axes(U, X, ax_s)
        dw = gradient(w)[(slice(None), slice(None)) + supp]
        b = sum(V[j] * dw[:, j] for j in range(3))
        Lfac = (1 / p.L1 + 1 / p.L3) ** 2
        outer.add(M, float(np.abs(b).max()), (M + dg.B0) * Lfac * nO2, L=L, D=dg.D)
    inner.fit()
    outer.fit()
    return inner, outer
