"""Log-log slope fits for error-decay sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class DecayReport:
    lemma: str
    claim: float            # claimed exponent of the normalized error in M
    claim_text: str
    slack: float = 0.25
    rows: list = field(default_factory=list)   # dicts with at least M, error, normalized
    slope: float = math.nan
    intercept: float = math.nan
    r2: float = math.nan
    status: str = "pending"
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status in ("pass", "trivial-pass")

    def add(self, M, error, norm, **extra):
        row = {"M": float(M), "error": float(error), "norm": float(norm),
               "normalized": float(error / norm) if norm else math.nan}
        row.update(extra)
        self.rows.append(row)

    def fit(self, min_points=3, r2_min=0.9):
        if len(self.rows) < min_points:
            self.status = "insufficient"
            return self
        M = np.array([r["M"] for r in self.rows])
        y = np.array([r["normalized"] for r in self.rows])
        if np.all(y == 0):
            self.status = "trivial-pass"
            self.notes.append("all errors zero; slope undefined")
            return self
        if np.any(~(y > 0)):
            self.status = "inconclusive"
            self.notes.append("non-positive errors mixed with positive ones")
            return self
        lx, ly = np.log(M), np.log(y)
        A = np.vstack([lx, np.ones_like(lx)]).T
        (k, b), *_ = np.linalg.lstsq(A, ly, rcond=None)
        res = ly - (k * lx + b)
        ss = ((ly - ly.mean()) ** 2).sum()
        self.slope, self.intercept = float(k), float(b)
        self.r2 = float(1 - (res ** 2).sum() / ss) if ss > 0 else 1.0
        if self.r2 < r2_min:
            self.status = "inconclusive"
        else:
            self.status = "pass" if self.slope <= self.claim + self.slack else "fail"
        return self

    def to_csv(self):
        extra = sorted({k for r in self.rows for k in r} - {"M", "error", "norm", "normalized"})
        head = ["lemma", "claim", "M", "error", "norm", "normalized"] + extra
        lines = [",".join(head)]
        for r in self.rows:
            vals = [self.lemma, self.claim_text] + [f"{r[k]:.12g}" for k in ("M", "error", "norm", "normalized")]
            vals += [f"{r.get(k, ''):.12g}" if isinstance(r.get(k), float) else str(r.get(k, "")) for k in extra]
            lines.append(",".join(vals))
        lines.append(f"# slope={self.slope:.6g} r2={self.r2:.6g} claim={self.claim:.6g} "
                     f"slack={self.slack:g} status={self.status}")
        return "\n".join(lines) + "\n"

    def summary(self):
        return (f"{self.lemma}: slope {self.slope:.4f} vs claim {self.claim:.4f}+{self.slack:g}, "
                f"R2 {self.r2:.4f} -> {self.status}")
