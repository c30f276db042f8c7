"""Scalar parameters of the layered construction and their inequalities.

Everything that grows like ``N**(R**n)`` is kept as a natural log; the
linear value is produced on request and is ``inf`` once it overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

from .errors import AlphaOutOfRange, InfeasibleAtN

NU = 0.01
ALPHA0 = (22.0 - 8.0 * math.sqrt(7.0)) / 9.0


def alpha_max(witness: bool = False):
    """Upper end of the admissible dissipation range.

    With ``witness=True`` also return ``9 a**2 - 44 a + 4`` at the
    returned value, which vanishes up to rounding.
    """
    a = ALPHA0
    if witness:
        return a, 9.0 * a * a - 44.0 * a + 4.0
    return a


def s_of(alpha):
    return (3.0 * alpha + 2.0 - 2.0 * math.sqrt(14.0 * alpha)) / 4.0


def R_of(alpha):
    if alpha == 0:
        return math.inf
    return math.sqrt(2.0 / (7.0 * alpha))


def amp_exponent(alpha):
    """Base-N exponent of A."""
    return math.sqrt(2.0 * alpha / 7.0)


def cutoff_exponent(alpha):
    """Base-N exponent of L: 1 + alpha - s - 2 sqrt(2 alpha / 7)."""
    return 1.0 + alpha - s_of(alpha) - 2.0 * amp_exponent(alpha)


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class Plan:
    alpha: float
    N: float
    R: float
    s: float
    r: float
    C: float = 10.0
    nu: float = NU
    euler: bool = False

    @property
    def lnN(self):
        return math.log(self.N)

    @property
    def a_exp(self):
        return amp_exponent(self.alpha)

    @property
    def l_exp(self):
        return cutoff_exponent(self.alpha)

    @property
    def lnA(self):
        return self.a_exp * self.lnN

    @property
    def lnL(self):
        return self.l_exp * self.lnN

    @property
    def A(self):
        return math.exp(self.lnA)

    @property
    def L(self):
        return math.exp(self.lnL)

    @property
    def ln_ANs(self):
        """ln(A N^s), the per-layer stretching budget before the R^n factor."""
        return self.lnA + self.s * self.lnN

    def to_dict(self):
        d = asdict(self)
        d.update(lnA=self.lnA, lnL=self.lnL, lnN=self.lnN, A=self.A, L=self.L,
                 a_exp=self.a_exp, l_exp=self.l_exp)
        if self.euler:
            d["R"] = None
        return d


def plan(alpha: float, N: float, r: float | None = None, C: float = 10.0) -> Plan:
    """Build the parameter bundle for dissipation order ``alpha`` and base
    frequency ``N``.  ``alpha == 0`` gives the Euler-degenerate plan."""
    alpha = float(alpha)
    if not (0.0 <= alpha < ALPHA0) or math.isnan(alpha):
        raise AlphaOutOfRange(f"alpha={alpha} outside [0, {ALPHA0:.10f})")
    if not N > 1:
        raise ValueError("N must exceed 1")
    s = s_of(alpha)
    if r is None:
        r = s / 2.0
    if not 0.0 < r < s:
        raise ValueError(f"r={r} must lie in (0, s={s})")
    return Plan(alpha=alpha, N=float(N), R=R_of(alpha), s=s, r=float(r), C=float(C),
                euler=(alpha == 0.0))


# ---------------------------------------------------------------- constraints

@dataclass
class Constraint:
    id: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass
class ConstraintReport:
    rows: list = field(default_factory=list)
    euler_degenerate: bool = False

    @property
    def worst_margin(self):
        return min(c.margin for c in self.rows) if self.rows else math.nan

    @property
    def all_pass(self):
        return bool(self.rows) and all(c.passed for c in self.rows)

    def to_csv(self):
        lines = ["constraint_id,lhs,rhs,margin,pass"]
        for c in self.rows:
            lines.append(f"{c.id},{c.lhs:.12g},{c.rhs:.12g},{c.margin:.12g},{int(c.passed)}")
        return "\n".join(lines) + "\n"


def _lt(cid, lhs, rhs):
    m = rhs - lhs
    return Constraint(cid, lhs, rhs, m, m > 0)


def _gt(cid, lhs, rhs):
    m = lhs - rhs
    return Constraint(cid, lhs, rhs, m, m > 0)


def audit_constraints(p: Plan) -> ConstraintReport:
    """Every exponent inequality of the construction, in base-N exponents."""
    rep = ConstraintReport(euler_degenerate=p.euler)
    if p.euler:
        return rep
    al, s, R, r = p.alpha, p.s, p.R, p.r
    a = p.a_exp
    le = p.l_exp
    rep.rows += [
        _lt("a_L_below_5/6", le, 5.0 / 6.0),
        _gt("b_L_above_(1+2/R)/3", le, (1.0 + 2.0 / R) / 3.0),
        _gt("c_L_above_A_N^(1/R+s)", le, a + 1.0 / R + s),
        _lt("d1_r_minus_s", r - s, 0.0),
        _lt("d2_outer_exponent", 2.0 * math.sqrt(14.0 * al) - 2.0 - 3.0 * al + r + 3.0 * s, 0.0),
        _lt("d3_alpha_minus_sqrt(2alpha/7)", al - a, 0.0),
        _gt("e_s_positive", s, 0.0),
    ]
    return rep


def discriminant(alpha):
    """(2s - 1 - alpha)^2 - 12 alpha at s = s(alpha); non-negative."""
    s = s_of(alpha)
    return (2.0 * s - 1.0 - alpha) ** 2 - 12.0 * alpha


def default_delta(p: Plan, r=None):
    r = p.r if r is None else r
    return (p.s - r) / 4.0


def force_exponents(p: Plan, r=None, delta=None):
    """Exponents (base M_n) predicted for the five residual-force terms."""
    r = p.r if r is None else r
    d = default_delta(p, r) if delta is None else delta
    al, s = p.alpha, p.s
    return {
        "switching": r - s,
        "self_interaction": r + 3 * d - s,
        "inner_outer": r - s + 3 * d,
        "outer_inner": 2 * math.sqrt(14 * al) - 2 - 3 * al + r + 3 * s + d * p.l_exp,
        "dissipation": al - p.a_exp + (1 - s) * d,
    }


# ------------------------------------------------------------------- schedule

@dataclass
class LayerScale:
    n: int
    lnM: float
    lnA: float
    lnL: float
    ln_duration: float   # ln(1 - T_n^*)
    K_target_log: float

    @property
    def duration(self):
        return _exp(self.ln_duration)

    @property
    def T_star(self):
        return 1.0 - self.duration

    def to_dict(self):
        return {
            "n": self.n, "lnM": self.lnM, "lnA": self.lnA, "lnL": self.lnL,
            "M": _exp(self.lnM), "A": _exp(self.lnA), "L": _exp(self.lnL),
            "ln_duration": self.ln_duration, "duration": self.duration,
            "T_star": self.T_star, "K_target_log": self.K_target_log,
        }


@dataclass
class LayerSchedule:
    layers: list
    A_above_e: bool
    fits: list          # duration_n < 1, i.e. T_n^* > 0
    flags: list = field(default_factory=list)

    def __getitem__(self, n):
        return self.layers[n]


def schedule(p: Plan, n_max: int, force_override: bool = False) -> LayerSchedule:
    """Per-layer scales in log form.

    ``1 - T_n^* = 34 R^n A^{-R^(n-1)} ln(A N^s)``.  Raises ``InfeasibleAtN``
    unless ``force_override`` when A <= e or layer 0 does not fit in [0,1].
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if p.euler:
        raise InfeasibleAtN("alpha = 0 has no layer schedule (R is infinite)")
    R, lnA, lnL, lnN = p.R, p.lnA, p.lnL, p.lnN
    budget = p.ln_ANs
    layers = []
    for n in range(n_max + 1):
        Rn = R ** n
        ln_dur = math.log(34.0) + n * math.log(R) - R ** (n - 1) * lnA + math.log(budget)
        layers.append(LayerScale(n, Rn * lnN, Rn * lnA, Rn * lnL, ln_dur, Rn * budget))
    fits = [lay.ln_duration < 0 for lay in layers]
    sch = LayerSchedule(layers, p.A > math.e, fits)
    if not sch.A_above_e:
        sch.flags.append(f"A={p.A:.6g} <= e")
    if not fits[0]:
        sch.flags.append(f"1-T_0*={layers[0].duration:.6g} >= 1")
    for n in range(n_max):
        # compare durations in log form: T_star itself rounds to 1 quickly
        if not layers[n + 1].ln_duration < layers[n].ln_duration:
            sch.flags.append(f"T*_{n + 1} <= T*_{n}")
    if (not sch.A_above_e or not fits[0]) and not force_override:
        raise InfeasibleAtN("; ".join(sch.flags))
    return sch


def validity_radius_log(p: Plan, n: int) -> float:
    """ln X for X = N^{-R^(n-1)} P^{-R^n}, P = 6 C ln A."""
    P = 6.0 * p.C * p.lnA
    if P <= 0:
        return math.inf
    return -(p.R ** (n - 1)) * p.lnN - (p.R ** n) * math.log(P)
