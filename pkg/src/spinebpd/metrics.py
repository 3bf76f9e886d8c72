"""Evaluation statistics: Pearson correlation, one-way ANOVA, radial landmark error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError

BETA_TINY = 1e-300
BETA_TOL = 1e-16
BETA_MAX_ITER = 20000


class UndefinedStatisticError(NumericError, ValueError):
    """The statistic has no value for the given input (e.g. a constant sequence)."""


def pearson_r(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError(f"pearson_r needs equal lengths, got {a.size} and {b.size}")
    if a.size < 2:
        raise ContractError("pearson_r needs at least two values")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = np.dot(da, da), np.dot(db, db)
    if saa == 0 or sbb == 0:
        raise UndefinedStatisticError("pearson_r is undefined for a constant sequence")
    r = np.dot(da, db) / math.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


def _betacf(x: float, a: float, b: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < BETA_TINY:
        d = BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = BETA_TINY if abs(d) < BETA_TINY else d
        c = 1.0 + aa / c
        c = BETA_TINY if abs(c) < BETA_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = BETA_TINY if abs(d) < BETA_TINY else d
        c = 1.0 + aa / c
        c = BETA_TINY if abs(c) < BETA_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETA_TOL:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b). Uses the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for x > (a+1)/(a+b+2)."""
    if not (0.0 <= x <= 1.0) or not (a > 0 and b > 0) or not all(map(math.isfinite, (x, a, b))):
        raise ContractError(f"incomplete beta domain violation: x={x}, a={a}, b={b}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(x, a, b) / a
    return 1.0 - math.exp(log_front) * _betacf(1.0 - x, b, a) / b


def f_survival(f: float, df1: float, df2: float) -> float:
    """P(F > f) for an F(df1, df2) variable."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return regularized_incomplete_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0)


def anova_oneway(*groups) -> tuple[float, float]:
    """One-way ANOVA F statistic and p-value over two or more groups.

    Zero within-group variance with a nonzero between-group spread gives ``(inf, 0.0)``.
    """
    if len(groups) < 2:
        raise ContractError("anova_oneway needs at least two groups")
    arrs = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if any(g.size < 2 for g in arrs):
        raise ContractError("every ANOVA group needs at least two values")
    k = len(arrs)
    n_total = sum(g.size for g in arrs)
    grand = sum(g.sum() for g in arrs) / n_total
    ssb = sum(g.size * (g.mean() - grand) ** 2 for g in arrs)
    ssw = sum(np.sum((g - g.mean()) ** 2) for g in arrs)
    df1, df2 = k - 1, n_total - k
    if ssw == 0:
        if ssb == 0:
            return 0.0, 1.0
        return math.inf, 0.0
    f = float((ssb / df1) / (ssw / df2))
    return f, f_survival(f, df1, df2)


def _points(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim == 2:
        arr = arr.reshape(arr.shape[0], -1, 2)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ContractError(f"landmarks must be (m, 2n) or (m, n, 2), got {arr.shape}")
    return arr


def radial_errors(pred, gt, height: int, width: int) -> np.ndarray:
    """(m, n) pixel distances between matching landmarks."""
    p, g = _points(pred), _points(gt)
    if p.shape != g.shape:
        raise ContractError(f"pred shape {p.shape} does not match gt shape {g.shape}")
    d = (p - g) * np.array([width, height], dtype=np.float64)
    return np.sqrt(np.sum(d * d, axis=-1))


def mean_radial_error(pred, gt, height: int, width: int) -> float:
    """Mean Euclidean landmark error in pixels at a height x width resolution."""
    return float(radial_errors(pred, gt, height, width).mean())


@dataclass
class EvalReport:
    pearson_r: float
    anova_f: float
    anova_p: float
    mean_radial_error: float
    per_vertebra: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pearson_r": self.pearson_r,
            "anova_f": self.anova_f,
            "anova_p": self.anova_p,
            "mean_radial_error": self.mean_radial_error,
            "per_vertebra": self.per_vertebra,
        }


def evaluation_report(pred, gt, height: int, width: int, vertebra_names=None) -> EvalReport:
    """Pooled statistics over every coordinate of a split, plus per-vertebra pixel error."""
    p, g = _points(pred), _points(gt)
    r = pearson_r(p.ravel(), g.ravel())
    f, pval = anova_oneway(p.ravel(), g.ravel())
    err = radial_errors(p, g, height, width)
    n_vert = p.shape[1] // 4
    names = list(vertebra_names) if vertebra_names is not None else [str(v + 1) for v in range(n_vert)]
    per_vertebra = [
        {"vertebra": names[v], "mean_radial_error": float(err[:, 4 * v:4 * v + 4].mean()),
         "max_radial_error": float(err[:, 4 * v:4 * v + 4].max())}
        for v in range(n_vert)
    ]
    return EvalReport(r, f, pval, float(err.mean()), per_vertebra)
