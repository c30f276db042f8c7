"""Error-decay sweeps in the carrier frequency M for the vortex-layer
velocity and dissipation approximations."""
from __future__ import annotations

import math

import numpy as np

from ..errors import UnderResolved
from ..profile import (LayerProfile, Poly, Reciprocal, identity_profile, omega_on_axes,
                       u_tilde, diagnostics, support_box)
from ..norms import cr_norm
from .core import Box, Grid3, biot_savart_spectral, derivative, gradient, frac_laplacian
from .decay import DecayReport

MAX_N = 256
MAX_POINTS = 2 ** 23


def _next_pow2(x):
    return 1 << max(0, int(math.ceil(math.log2(max(x, 1)))))


def family(name, M, rule=None):
    """Profile family used by the sweeps.

    ``identity``: a=1, g1=g3=1, g2=x2 with L = M^(2/3) unless ``rule``.
    ``curved``: a = 1/g1 with slowly varying g1, g2, g3 (same L rule).
    ``fixed``: identity profiles at L = 2.
    """
    L = (rule or (lambda m: m ** (2.0 / 3.0)))(M)
    if name == "identity":
        return identity_profile(M, L)
    if name == "fixed":
        return identity_profile(M, 2.0 if rule is None else L)
    if name == "curved":
        # g2 is monotone on the whole line so the support stays a single block
        g1 = Poly([1.0, 0.0, 0.2 * L ** 2])
        g2 = Poly([0.0, 0.6, 0.0, 0.05 * L ** 2])
        g3 = Poly([1.0, 0.0, 0.2 * L ** 2])
        return LayerProfile(Reciprocal(g1), g1, g2, g3, float(M), L, L, L, (-1.5 / L, 1.5 / L))
    raise KeyError(f"unknown profile family {name!r}")


def resolving_box(p: LayerProfile, pad=4.0, per_wavelength=8, per_support=32, max_n=MAX_N):
    """Box of half-width ``pad`` times the support half-extent per axis,
    with at least ``per_wavelength`` samples per carrier wavelength and
    ``per_support`` samples across the support."""
    h = support_box(p)
    x = np.linspace(*p.x2_range, 4096)
    k = [0.0, p.M * float(np.abs(p.g2(x, 1)).max()), p.M * float(np.abs(p.g3(x)).max())]
    half, shape = [], []
    for hj, kj in zip(h, k):
        H = pad * hj
        n = max(per_wavelength * 2 * H * kj / (2 * np.pi), per_support * pad)
        n = _next_pow2(n)
        if n > max_n:
            raise UnderResolved(f"needs {n} samples per axis (cap {max_n})")
        half.append(H)
        shape.append(n)
    if np.prod(shape) > MAX_POINTS:
        raise UnderResolved(f"grid {shape} exceeds the memory budget")
    return Box(tuple(half), tuple(shape))


def tight_box(p: LayerProfile, shape=(512, 16, 512)):
    """Periodic box equal to the support box.

    The layer vanishes to all orders at the support edge, so its periodic
    extension is smooth; x1 and x3 get many samples because the bump has
    a slowly decaying spectrum.
    """
    return Box(support_box(p), shape)


def sample_layer(p: LayerProfile, box: Box, e1_only=False):
    w = omega_on_axes(p, *box.axes())
    if e1_only:
        w[2] = 0.0
    return Grid3(box, w, "vorticity")


def support_mask(p: LayerProfile, box: Box):
    """Grid points inside the support box of the layer."""
    h = support_box(p)
    ax = box.axes()
    m = [np.abs(a) < hj for a, hj in zip(ax, h)]
    return m[0][:, None, None] & m[1][None, :, None] & m[2][None, None, :]


def _points(box, mask):
    P = box.points()
    return P[mask]


def _J_tuple(J):
    J = tuple(int(j) for j in J)
    if len(J) != 3 or sum(J) > 1 or min(J) < 0:
        raise ValueError("J must be a multi-index with |J| <= 1")
    return J


def verify_bs_c01(sweep, J=(0, 0, 0), delta=0.1, fam="identity", rule=None, slack=0.25):
    J = _J_tuple(J)
    claim = (sum(J) - 2) * (1 - delta)
    rep = DecayReport("bs-c01", claim, f"|u~_J - d_J(w1 e1*K)| <~ B M^(({sum(J)}-2)(1-delta))", slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p)
        w = sample_layer(p, box, e1_only=True)
        u = biot_savart_spectral(w)
        du = derivative(u, J) if sum(J) else u
        mask = support_mask(p, box)
        approx = u_tilde(p, J, _points(box, mask)).T
        exact = du.data[:, mask].T
        err = float(np.abs(approx - exact).max()) if w.sup() > 0 else 0.0
        dg = diagnostics(p, delta)
        rep.add(M, err, dg.B, L3=p.L3, n=box.shape[2])
    return rep.fit()


def verify_bs_c12(sweep, J=(0, 0, 0), delta=0.1, fam="identity", rule=None, slack=0.25):
    J = _J_tuple(J)
    claim = (sum(J) - 2) * (1 - delta)
    rep = DecayReport("bs-c12", claim,
                      f"|grad u~_J - d_J grad(w1 e1*K)| <~ B1 M^(({sum(J)}-2)(1-delta))", slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p)
        w = sample_layer(p, box, e1_only=True)
        u = biot_savart_spectral(w)
        du = derivative(u, J) if sum(J) else u
        exact = gradient(du)
        approx = gradient(Grid3(box, u_tilde(p, J, box.points()).reshape((3,) + box.shape)))
        mask = support_mask(p, box)
        err = float(np.abs(approx[:, :, mask] - exact[:, :, mask]).max()) if w.sup() > 0 else 0.0
        dg = diagnostics(p, delta)
        rep.add(M, err, dg.B1, L3=p.L3, n=box.shape[2])
    return rep.fit()


def self_interaction(w: Grid3):
    """(u.grad w, w.grad u) for u the Biot-Savart velocity of ``w``, plus
    the sups of u, grad u and grad w for the naive product bound.

    Derivatives are formed one component at a time to keep peak memory
    near a dozen scalar fields.
    """
    u = biot_savart_spectral(w)
    a = np.zeros_like(w.data)
    b = np.zeros_like(w.data)
    sup_du = sup_dw = 0.0
    for i in range(3):
        wi = Grid3(w.box, w.data[i])
        ui = Grid3(w.box, u.data[i])
        for j in range(3):
            o = tuple(int(k == j) for k in range(3))
            dwij = derivative(wi, o).data
            a[i] += u.data[j] * dwij
            sup_dw = max(sup_dw, float(np.abs(dwij).max()))
            del dwij
            duij = derivative(ui, o).data
            b[i] += w.data[j] * duij
            sup_du = max(sup_du, float(np.abs(duij).max()))
            del duij
    sups = {"u": u.sup(), "du": sup_du, "dw": sup_dw, "w": w.sup()}
    return u, sups, Grid3(w.box, a, "u.grad w"), Grid3(w.box, b, "w.grad u")


def verify_quadratic(sweep, r=0.0, delta=0.1, fam="identity", rule=None, slack=0.25, seed=0):
    claim = -2 + 2 * delta
    rep = DecayReport("quadratic", claim,
                      "|u.grad w|_Cr + |w.grad u|_Cr <~ B0^(1-r) B1^r M^(-2+2delta) (M+B0)", slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p)
        w = sample_layer(p, box)
        if w.sup() == 0:
            rep.add(M, 0.0, 1.0, gain=math.nan, M_over_L3=M / p.L3)
            continue
        u, sups, a, b = self_interaction(w)
        err = cr_norm(a, r, seed).value + cr_norm(b, r, seed).value
        # naive product bound without the cancellation
        naive = sups["u"] * sups["dw"] + sups["w"] * sups["du"]
        dg = diagnostics(p, delta)
        norm = dg.B0 ** (1 - r) * dg.B1 ** r * (M + dg.B0)
        rep.add(M, err, norm, gain=float(naive / err), M_over_L3=M / p.L3, n=box.shape[2])
    rep.fit()
    g = [row["gain"] for row in rep.rows]
    rep.notes.append("gain monotone" if all(np.diff(g) > 0) else "gain not monotone")
    return rep


def verify_bs_c1(sweep, delta=0.1, fam="identity", rule=None, slack=0.25):
    """C^1 bound on the full layer velocity: |grad (w*K)| <~ M^delta ... measured
    as the normalized sup of grad u over B0, against the claim 0 + delta."""
    rep = DecayReport("bs-c1", delta, "|w*K|_C1 <~ B0 M^delta", slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p)
        w = sample_layer(p, box)
        u, du = biot_savart_spectral(w, gradient_too=True)
        dg = diagnostics(p, delta)
        rep.add(M, max(u.sup(), float(np.abs(du).max())), dg.B0, n=box.shape[2])
    return rep.fit()


def _direct_far(w: Grid3, probes):
    """Plain node sum of the Biot-Savart kernel; valid far from the support."""
    pts = w.box.points().reshape(-1, 3)
    wv = w.data.reshape(3, -1).T
    keep = np.abs(wv).max(axis=1) > 0
    pts, wv = pts[keep], wv[keep]
    out = np.zeros((len(probes), 3))
    for i, x in enumerate(np.asarray(probes, float)):
        d = x - pts
        r3 = np.linalg.norm(d, axis=1) ** 3
        out[i] = np.cross(wv, d).T @ (1.0 / r3) / (4 * np.pi) * w.box.cell_volume
    return out


def farfield_probes(D, C=10.0, n=14):
    """Probe points at distance C*D along axis and diagonal directions."""
    dirs = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (-1, 0, 0), (0, -1, 0), (0, 0, -1)]
    dirs += [(a, b, c) for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)]
    d = np.array(dirs[:n], float)
    d /= np.linalg.norm(d, axis=1)[:, None]
    return C * D * d


def verify_farfield(sweep, C=10.0, fam="fixed", rule=None, slack=0.0):
    """max |u| at probes |x| = C D; the claim is decay faster than M^-2."""
    rep = DecayReport("farfield", -2.0, "|grad^j (w*K)(x)| <~ M^-n for |x| > C D (n = 2)", slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p, pad=1.0)
        w = sample_layer(p, box)
        D = diagnostics(p).D
        probes = farfield_probes(D, C)
        u = _direct_far(w, probes) if w.sup() > 0 else np.zeros((len(probes), 3))
        l1 = float(np.abs(w.data).sum(axis=0).sum() * box.cell_volume)
        rep.add(M, float(np.abs(u).max()), 1.0, D=D, L1=l1,
                kernel_bound=l1 / (4 * np.pi * ((C - 1) * D) ** 2))
    return rep.fit()


def _nabla_alpha_errors(p, box, alpha, frozen):
    w = sample_layer(p, box, e1_only=True)
    f = Grid3(box, w.data[0], "w1")
    lap = frac_laplacian(f, alpha)
    ax = box.axes()
    x2 = ax[1][None, :, None]
    if frozen:
        sym = (float(p.g2(0.0, 1)) ** 2 + float(p.g3(0.0)) ** 2) ** (alpha / 2)
    else:
        sym = (p.g2(x2, 1) ** 2 + p.g3(x2) ** 2) ** (alpha / 2)
    approx = p.M ** alpha * sym * f.data
    mask = support_mask(p, box)
    return float(np.abs(lap.data - approx)[mask].max())


def verify_nabla_alpha(sweep, alpha=0.06, delta=0.1, fam="identity", rule=None, slack=0.25,
                       frozen=False):
    claim = (alpha - 1) * (1 - delta)
    text = "||grad|^a w1 - M^a (g2'^2+g3^2)^(a/2) w1| <~ B M^((a-1)(1-delta))"
    rep = DecayReport("nabla-alpha" + ("-frozen" if frozen else ""), claim, text, slack)
    for M in sweep:
        p = family(fam, M, rule)
        box = resolving_box(p)
        err = _nabla_alpha_errors(p, box, alpha, frozen)
        dg = diagnostics(p, delta)
        norm = dg.B
        extra = {}
        if frozen:
            x = np.linspace(*p.x2_range, 4096)
            inside = np.abs(p.L2 * p.g2(x)) < 1
            h2 = float(np.abs(x[inside]).max()) if inside.any() else 0.0
            extra["frozen_term"] = M ** alpha * h2 * (dg.sups["g2_2"] + dg.sups["g3_1"])
        rep.add(M, err, norm, **extra)
    return rep.fit()


def nabla_alpha_frozen_gap(M, alpha=0.06, fam="curved", rule=None):
    """Difference between the frozen and unfrozen errors at one M, with the
    extra term it should stay below (up to a constant)."""
    p = family(fam, M, rule)
    box = resolving_box(p)
    e0 = _nabla_alpha_errors(p, box, alpha, False)
    e1 = _nabla_alpha_errors(p, box, alpha, True)
    dg = diagnostics(p)
    x = np.linspace(*p.x2_range, 4096)
    inside = np.abs(p.L2 * p.g2(x)) < 1
    h2 = float(np.abs(x[inside]).max())
    term = M ** alpha * h2 * (dg.sups["g2_2"] + dg.sups["g3_1"])
    return e0, e1, term
