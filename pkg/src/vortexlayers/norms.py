"""Sup, C^j and sampled Holder norms of grid fields, plus time quadrature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnderResolved
from .grid.core import Grid3, derivative, spectral_tail

N_PAIRS = 100_000


@dataclass
class NormEstimate:
    value: float
    method: str
    samples: int
    rel_accuracy: float = float("nan")
    sup: float = float("nan")
    seminorm: float = float("nan")


def _components(g: Grid3):
    return [g.data[c] for c in range(3)] if g.is_vector else [g.data]


def c_j_norm(g: Grid3, j: int, tail_tol=1e-6, check=True) -> NormEstimate:
    """max over components and over |beta| <= j of sup |d^beta g|."""
    if j not in (0, 1, 2):
        raise ValueError("j must be 0, 1 or 2")
    tail = spectral_tail(g) if (check and j > 0) else 0.0
    if tail > tail_tol:
        raise UnderResolved(f"spectral tail {tail:.3g} above {tail_tol:g}")
    best = float(np.abs(g.data).max())
    orders = [(1, 0, 0), (0, 1, 0), (0, 0, 1)] if j >= 1 else []
    if j == 2:
        orders += [(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)]
    for o in orders:
        best = max(best, float(np.abs(derivative(g, o).data).max()))
    return NormEstimate(best, "spectral-derivative", g.data.size, tail, sup=float(np.abs(g.data).max()))


def _lattice_dirs():
    d = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)])
    d = d[np.any(d != 0, axis=1)]
    # keep one of each +-pair
    keep = [v for v in d if tuple(-v) > tuple(v)]
    return np.array(keep)


def holder_quotient(arrays, spacing, r, seed=0, n_pairs=N_PAIRS):
    """Largest |f(x)-f(y)|/|x-y|^r over nearest-neighbour pairs and
    ``n_pairs`` seeded pairs at dyadic lattice separations."""
    shape = arrays[0].shape
    h = np.asarray(spacing, float)
    best = 0.0
    for f in arrays:
        for ax in range(3):
            if shape[ax] > 1:
                q = np.abs(np.diff(f, axis=ax)).max() / h[ax] ** r
                best = max(best, float(q))
    rng = np.random.default_rng(seed)
    dirs = _lattice_dirs()
    nmax = int(np.log2(max(shape)))
    k = rng.integers(0, max(nmax, 1), n_pairs)
    step = (2 ** k)[:, None] * dirs[rng.integers(0, len(dirs), n_pairs)]
    lo = np.maximum(0, -step)
    hi = np.array(shape)[None, :] - np.maximum(0, step)
    ok = np.all(hi > lo, axis=1)
    step, lo, hi = step[ok], lo[ok], hi[ok]
    base = lo + (rng.random(lo.shape) * (hi - lo)).astype(int)
    other = base + step
    dist = np.sqrt(((step * h) ** 2).sum(axis=1))
    for f in arrays:
        a = f[base[:, 0], base[:, 1], base[:, 2]]
        b = f[other[:, 0], other[:, 1], other[:, 2]]
        if len(a):
            best = max(best, float((np.abs(a - b) / dist ** r).max()))
    return best, int(ok.sum())


def holder_norm(g: Grid3, r: float, seed=0, n_pairs=N_PAIRS) -> NormEstimate:
    """sup|g| + sampled Holder quotient of order r in (0, 1)."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    comps = _components(g)
    sup = float(max(np.abs(f).max() for f in comps))
    semi, used = holder_quotient(comps, g.box.spacing, r, seed, n_pairs)
    return NormEstimate(sup + semi, "pair-sample", used, sup=sup, seminorm=semi)


def cr_norm(g: Grid3, r: float, seed=0, n_pairs=N_PAIRS) -> NormEstimate:
    """C^r for r in [0, 1): plain sup at r = 0."""
    if r == 0:
        return c_j_norm(g, 0, check=False)
    return holder_norm(g, r, seed, n_pairs)


def interpolate_bound(c0, c1, r):
    if c0 < 0 or c1 < 0:
        raise ValueError("norms must be non-negative")
    return c0 ** (1 - r) * c1 ** r


@dataclass
class TimeIntegral:
    value: float
    error: float


def time_integral(t, values) -> TimeIntegral:
    """Trapezoid rule; error estimate from Richardson against the rule on
    every other sample (exact when the sample count allows it)."""
    t = np.asarray(t, float)
    v = np.asarray(values, float)
    if len(t) < 2:
        return TimeIntegral(0.0, 0.0)
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    fine = float(np.trapezoid(v, t)) if hasattr(np, "trapezoid") else float(np.trapz(v, t))
    err = float("nan")
    if len(t) >= 3 and (len(t) - 1) % 2 == 0:
        coarse = float(np.trapezoid(v[::2], t[::2])) if hasattr(np, "trapezoid") else float(np.trapz(v[::2], t[::2]))
        err = abs(fine - coarse) / 3.0
    return TimeIntegral(fine, err)


def norm_curve_csv(t, values, method) -> str:
    """CSV with columns t,value,method."""
    rows = ["t,value,method"]
    rows += [f"{float(a)!r},{float(b)!r},{method}" for a, b in zip(t, values)]
    return "\n".join(rows) + "\n"
