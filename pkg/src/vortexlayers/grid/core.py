"""Uniform periodic boxes, spectral calculus, Biot-Savart and |grad|^alpha."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy import fft
from scipy import ndimage

from ..errors import InsufficientPadding, UnderResolved

_AX = (-3, -2, -1)


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Box:
    """Periodic box [-h, h) per axis sampled at x_i = -h + i*2h/n.

    The origin is a node whenever n is even, and the node set is
    symmetric under x -> -x modulo the period.
    """

    half: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "half", tuple(float(h) for h in self.half))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if not all(_is_pow2(n) for n in self.shape):
            raise ValueError(f"resolutions must be powers of two, got {self.shape}")

    @property
    def spacing(self):
        return tuple(2 * h / n for h, n in zip(self.half, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [-h + np.arange(n) * (2 * h / n) for h, n in zip(self.half, self.shape)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        return np.stack(self.mesh(), axis=-1)

    def wavenumbers(self, real=True):
        """Angular wavenumbers broadcastable against the (r)fftn layout."""
        ks = []
        for j, (h, n) in enumerate(zip(self.half, self.shape)):
            d = 2 * h / n
            k = 2 * np.pi * (fft.rfftfreq(n, d) if (real and j == 2) else fft.fftfreq(n, d))
            sh = [1, 1, 1]
            sh[j] = len(k)
            ks.append(k.reshape(sh))
        return ks

    def padded(self, factor):
        return Box(tuple(h * factor for h in self.half), tuple(n * factor for n in self.shape))

    def to_dict(self):
        return {"half": list(self.half), "shape": list(self.shape)}


@dataclass
class Grid3:
    """Samples of a scalar (shape (n1,n2,n3)) or vector (shape (3,n1,n2,n3))
    field on a Box, with a lazily built spectral companion."""

    box: Box
    data: np.ndarray
    name: str = "field"
    _hat: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape[-3:] != self.box.shape:
            raise ValueError("data shape does not match box")
        if self.data.ndim not in (3, 4):
            raise ValueError("expected scalar or vector samples")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite samples")

    @property
    def is_vector(self):
        return self.data.ndim == 4

    def hat(self):
        if self._hat is None:
            self._hat = fft.rfftn(self.data, axes=_AX)
        return self._hat

    def sup(self):
        return float(np.abs(self.data).max()) if self.data.size else 0.0

    def with_data(self, data, name=None):
        return Grid3(self.box, data, name or self.name)


def sample(box: Box, f, name="field"):
    """Evaluate ``f(points)`` where points has shape (n1,n2,n3,3)."""
    return Grid3(box, f(box.points()), name)


def _irfft(box, h):
    return fft.irfftn(h, s=box.shape, axes=_AX)


def _deriv_factor(box, j, order):
    k = box.wavenumbers()[j]
    m = (1j * k) ** order
    if order % 2 == 1:
        # the Nyquist mode has no well-defined odd derivative
        n = box.shape[j]
        idx = [slice(None)] * 3
        if j == 2:
            idx[2] = slice(-1, None)
        else:
            idx[j] = slice(n // 2, n // 2 + 1)
        m = m.copy()
        m[tuple(idx)] = 0.0
    return m


def derivative(g: Grid3, orders):
    """Spectral partial derivative of multi-index ``orders``."""
    m = 1.0
    for j, o in enumerate(orders):
        if o:
            m = m * _deriv_factor(g.box, j, o)
    if np.isscalar(m):
        return g.with_data(g.data.copy())
    return g.with_data(_irfft(g.box, g.hat() * m))


def gradient(g: Grid3):
    """Scalar -> (3, ...) ; vector -> (3, 3, ...) with [i, j] = d_j g_i."""
    h = g.hat()
    out = [_irfft(g.box, h * _deriv_factor(g.box, j, 1)) for j in range(3)]
    return np.stack(out, axis=-4)


def divergence(v: Grid3):
    h = v.hat()
    s = sum(h[j] * _deriv_factor(v.box, j, 1) for j in range(3))
    return v.with_data(_irfft(v.box, s), "div")


def curl_hat(box, h):
    d = [_deriv_factor(box, j, 1) for j in range(3)]
    return np.stack([d[1] * h[2] - d[2] * h[1],
                     d[2] * h[0] - d[0] * h[2],
                     d[0] * h[1] - d[1] * h[0]])


def curl(v: Grid3):
    return v.with_data(_irfft(v.box, curl_hat(v.box, v.hat())), "curl")


def support_extent(g: Grid3, rel=1e-14):
    """(min, max) coordinate of samples above rel*sup, per axis."""
    mag = np.abs(g.data)
    if g.is_vector:
        mag = mag.max(axis=0)
    top = mag.max()
    if top == 0:
        return [(0.0, 0.0)] * 3
    mask = mag > rel * top
    ext = []
    for j, ax in enumerate(g.box.axes()):
        other = tuple(i for i in range(3) if i != j)
        hit = np.nonzero(mask.any(axis=other))[0]
        ext.append((float(ax[hit[0]]), float(ax[hit[-1]])))
    return ext


def check_padding(g: Grid3, factor=4, rel=1e-13):
    """Support diameter per axis must fit in 1/factor of the box width."""
    for j, ((lo, hi), h, dx) in enumerate(zip(support_extent(g, rel), g.box.half, g.box.spacing)):
        if hi - lo > 2 * h / factor + 2 * dx:
            raise InsufficientPadding(
                f"axis {j + 1}: support width {hi - lo:.4g} exceeds box/{factor} = {2 * h / factor:.4g}")


def zero_pad(g: Grid3, factor):
    if factor == 1:
        return g
    big = g.box.padded(factor)
    out = np.zeros(g.data.shape[:-3] + big.shape)
    sl = tuple(slice((N - n) // 2, (N - n) // 2 + n) for n, N in zip(g.box.shape, big.shape))
    out[(Ellipsis,) + sl] = g.data
    return Grid3(big, out, g.name)


def crop(g: Grid3, box: Box):
    sl = tuple(slice((N - n) // 2, (N - n) // 2 + n) for n, N in zip(box.shape, g.box.shape))
    return Grid3(box, g.data[(Ellipsis,) + sl], g.name)


def _bs_hat(box, wh, L=None):
    k = box.wavenumbers()
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    k2[0, 0, 0] = 1.0
    if L is None:
        green = 1.0 / k2
    else:
        # Fourier transform of 1/(4 pi |x|) cut off at |x| = L
        green = (1.0 - np.cos(L * np.sqrt(k2))) / k2
    uh = curl_hat(box, wh) * green
    uh[:, 0, 0, 0] = 0.0
    return uh


def free_space_cutoff(g: Grid3, rel=1e-13):
    """Kernel truncation radius for exact free-space convolution, or None.

    With support widths s_j and diameter D, a kernel cut at L = 1.05 D is
    exact on the support as long as every period exceeds s_j + L.
    """
    ext = support_extent(g, rel)
    s = np.array([hi - lo for lo, hi in ext]) + np.array(g.box.spacing)
    L = 1.05 * float(np.linalg.norm(s))
    P = 2 * np.array(g.box.half)
    if L == 0 or np.any(P <= s + L):
        return None
    return L


def biot_savart_spectral(w: Grid3, pad=1, check=True, gradient_too=False, kernel="auto"):
    """Velocity of vorticity ``w``: u_hat = i xi x w_hat G_hat.

    ``kernel="periodic"`` uses G_hat = 1/|xi|^2 (zero mode dropped), so
    the free-space answer is only approached through padding.
    ``kernel="free"`` uses the transform of the Newton kernel truncated
    just beyond the support diameter, which is exact on the support when
    the box is padded enough; ``"auto"`` picks it whenever the geometry
    allows. ``pad`` zero-pads by that factor per axis before solving and
    crops the result back. With ``check`` the support must occupy at most
    a quarter of the (padded) box width per axis.
    """
    if not w.is_vector:
        raise ValueError("vorticity must be a vector grid")
    wp = zero_pad(w, pad)
    if check:
        check_padding(wp)
    L = None
    if kernel in ("auto", "free"):
        L = free_space_cutoff(wp)
        if L is None and kernel == "free":
            raise InsufficientPadding("box too small for the truncated free-space kernel")
    uh = _bs_hat(wp.box, wp.hat(), L)
    u = Grid3(wp.box, _irfft(wp.box, uh), "velocity")
    u._hat = uh
    if gradient_too:
        du = Grid3(wp.box, gradient(u).reshape((9,) + wp.box.shape))
        du = crop(du, w.box).data.reshape((3, 3) + w.box.shape)
        return crop(u, w.box), du
    return crop(u, w.box)


def frac_laplacian(g: Grid3, alpha: float):
    """Fourier multiplier |xi|^alpha."""
    if not 0 <= alpha <= 2:
        raise ValueError("alpha must lie in [0, 2]")
    if alpha == 0:
        return g.with_data(g.data.copy())
    k = g.box.wavenumbers()
    m = (k[0] ** 2 + k[1] ** 2 + k[2] ** 2) ** (alpha / 2)
    m[0, 0, 0] = 0.0  # alpha / 2 can underflow to 0 for subnormal alpha
    return g.with_data(_irfft(g.box, g.hat() * m))


def spectral_tail(g: Grid3, frac=1 / 3):
    """Fraction of spectral energy in the outer ``frac`` of each axis band."""
    h = np.abs(g.hat()) ** 2
    if g.is_vector:
        h = h.sum(axis=0)
    total = h.sum()
    if total == 0:
        return 0.0
    k = g.box.wavenumbers()
    kmax = [np.abs(kj).max() for kj in k]
    outer = np.zeros(h.shape, bool)
    for kj, km in zip(k, kmax):
        outer = outer | (np.abs(kj) > (1 - frac) * km)
    return float(h[outer].sum() / total)


def require_resolved(g: Grid3, tol=1e-6):
    t = spectral_tail(g)
    if t > tol:
        raise UnderResolved(f"spectral tail {t:.3g} above {tol:g}")
    return t


# ----------------------------------------------- trigonometric evaluation

def _eval_matrix(x, x0, n, d, order):
    """Rows: trig-interpolation basis at points x for one axis."""
    k = 2 * np.pi * fft.fftfreq(n, d)
    ph = np.outer(np.asarray(x, float) - x0, k)
    E = (1j * k) ** order * np.exp(1j * ph)
    # Nyquist column: symmetric (cosine) part only
    kn = k[n // 2]
    c = np.cos(kn * (np.asarray(x, float) - x0))
    s = np.sin(kn * (np.asarray(x, float) - x0))
    nyq = [c, -kn * s, -kn ** 2 * c, kn ** 3 * s][order % 4] if order < 4 else None
    if nyq is None:
        raise ValueError("order above 3")
    E[:, n // 2] = nyq
    return E


def spectral_eval(g: Grid3, xs, orders=(0, 0, 0)):
    """Evaluate the trigonometric interpolant of ``g`` (or a derivative)
    on the tensor product of coordinate lists ``xs = (x1, x2, x3)``."""
    data = g.data if g.is_vector else g.data[None]
    F = fft.fftn(data, axes=_AX) / np.prod(g.box.shape)
    mats = [_eval_matrix(x, -h, n, 2 * h / n, o)
            for x, h, n, o in zip(xs, g.box.half, g.box.shape, orders)]
    out = np.einsum("cijk,ai->cajk", F, mats[0], optimize=True)
    out = np.einsum("cajk,bj->cabk", out, mats[1], optimize=True)
    out = np.einsum("cabk,dk->cabd", out, mats[2], optimize=True)
    out = out.real
    return out if g.is_vector else out[0]


# ------------------------------------------------------- direct quadrature

def _smoothstep_exp(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def direct_biot_savart(w: Grid3, probes, cutoff_cells=12, n_r=24, n_theta=24, n_phi=48):
    """Biot-Savart integral at arbitrary probes by direct quadrature.

    The kernel is split with a smooth radial partition of unity. The far
    part is summed over grid nodes (the integrand is smooth there). The
    near part is integrated in spherical shells around the probe, where
    the odd kernel cancels exactly on every shell, against a cubic-spline
    interpolant of ``w``.
    """
    probes = np.atleast_2d(np.asarray(probes, float))
    out = np.zeros((len(probes), 3))
    if not np.any(w.data):
        return out
    box = w.box
    dx = max(box.spacing)
    rho = cutoff_cells * dx
    rho1 = 0.5 * rho
    chi = lambda r: 1.0 - _smoothstep_exp((r - rho1) / (rho - rho1))
    X = box.mesh()
    mask = np.abs(w.data).max(axis=0) > 0
    ys = [Xi[mask] for Xi in X]
    wv = [w.data[c][mask] for c in range(3)]
    dV = box.cell_volume
    # near-field rule
    zr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * rho * (zr + 1)
    wr = 0.5 * rho * wr * chi(r)
    zt, wt = np.polynomial.legendre.leggauss(n_theta)
    ph = np.arange(n_phi) * 2 * np.pi / n_phi
    st = np.sqrt(1 - zt ** 2)
    th = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)),
                   np.outer(zt, np.ones_like(ph))], axis=-1).reshape(-1, 3)
    wth = np.outer(wt, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    coeffs = [ndimage.spline_filter(w.data[c], order=5, mode="grid-constant") for c in range(3)]
    for p, x in enumerate(probes):
        d = [x[j] - ys[j] for j in range(3)]
        rr = np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        far = (1.0 - chi(rr))
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(rr > 0, far / np.where(rr > 0, rr, 1.0) ** 3, 0.0)
        cr = np.array([wv[1] * d[2] - wv[2] * d[1],
                       wv[2] * d[0] - wv[0] * d[2],
                       wv[0] * d[1] - wv[1] * d[0]])
        u = (cr * f).sum(axis=1) * dV
        # near field: u += -(1/4pi) int chi(r) int_S2 w(x + r th) x th dOmega dr
        pts = x[None, None, :] + r[:, None, None] * th[None, :, :]
        idx = [(pts[..., j] + box.half[j]) / box.spacing[j] for j in range(3)]
        wi = np.stack([ndimage.map_coordinates(coeffs[c], idx, order=5, mode="grid-constant",
                                               prefilter=False) for c in range(3)], axis=-1)
        cross = np.cross(wi, th[None, :, :])
        near = -np.einsum("r,s,rsc->c", wr, wth, cross)
        out[p] = (u + near) / (4 * np.pi)
    return out
