"""One-way ANOVA with Bonferroni-corrected pairwise pooled t-tests.

p-values come from the regularized incomplete beta function, evaluated by its
continued fraction (modified Lentz) with the usual symmetry swap for fast
convergence.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "StatsError",
    "GroupSamples",
    "TestResult",
    "PairwiseResult",
    "betainc_regularized",
    "f_sf",
    "t_two_sided_p",
    "one_way_anova",
    "pooled_t_test",
    "bonferroni_adjust",
    "bonferroni_posthoc",
    "compare_groups",
    "write_stats_csv",
    "STATS_HEADER",
]

ALPHA = 0.05


class StatsError(ValueError):
    pass


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise StatsError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise StatsError("beta parameters must be positive")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1) / (a + b + 2):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_regularized(d2 / 2, d1 / 2, d2 / (d2 + d1 * f))


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc_regularized(df / 2, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class GroupSamples:
    label: str
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise StatsError(f"group {self.label!r} has non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TestResult:
    statistic: float  # F
    df_between: int
    df_within: int
    p: float

    @property
    def significant(self) -> bool:
        return self.p < ALPHA


@dataclass(frozen=True)
class PairwiseResult:
    a: str
    b: str
    t: float
    df: int
    p_raw: float
    p_adjusted: float

    @property
    def significant(self) -> bool:
        return self.p_adjusted < ALPHA


def _validate(groups: Sequence[GroupSamples]):
    if len(groups) < 2:
        raise StatsError("need at least two groups")
    for g in groups:
        if g.n < 2:
            raise StatsError(f"group {g.label!r} needs at least two values")


def one_way_anova(groups: Sequence[GroupSamples]) -> TestResult:
    _validate(groups)
    data = [np.asarray(g.values) for g in groups]
    k = len(data)
    n = sum(d.size for d in data)
    grand = np.concatenate(data).mean()
    ss_between = float(sum(d.size * (d.mean() - grand) ** 2 for d in data))
    ss_within = float(sum(((d - d.mean()) ** 2).sum() for d in data))
    dfb, dfw = k - 1, n - k
    if ss_within == 0:
        if ss_between == 0:
            return TestResult(0.0, dfb, dfw, 1.0)
        return TestResult(math.inf, dfb, dfw, 0.0)
    f = (ss_between / dfb) / (ss_within / dfw)
    return TestResult(f, dfb, dfw, f_sf(f, dfb, dfw))


def pooled_t_test(a: GroupSamples, b: GroupSamples) -> tuple[float, int, float]:
    """Two-sample t statistic with pooled variance; returns ``(t, df, two-sided p)``."""
    _validate([a, b])
    x, y = np.asarray(a.values), np.asarray(b.values)
    df = x.size + y.size - 2
    sp2 = (((x - x.mean()) ** 2).sum() + ((y - y.mean()) ** 2).sum()) / df
    diff = x.mean() - y.mean()
    if sp2 == 0:
        if diff == 0:
            return 0.0, df, 1.0
        return math.copysign(math.inf, diff), df, 0.0
    t = float(diff / math.sqrt(sp2 * (1 / x.size + 1 / y.size)))
    return t, df, t_two_sided_p(t, df)


def bonferroni_adjust(p_raw: Sequence[float], m: int | None = None) -> list[float]:
    m = len(p_raw) if m is None else m
    return [min(1.0, p * m) for p in p_raw]


def bonferroni_posthoc(groups: Sequence[GroupSamples]) -> list[PairwiseResult]:
    _validate(groups)
    pairs = list(itertools.combinations(groups, 2))
    raw = [pooled_t_test(a, b) for a, b in pairs]
    adj = bonferroni_adjust([r[2] for r in raw])
    return [PairwiseResult(a.label, b.label, t, df, p, pa) for (a, b), (t, df, p), pa in zip(pairs, raw, adj)]


STATS_HEADER = ("metric", "comparison", "f_or_t", "p_raw", "p_adjusted", "significant")


def compare_groups(metric: str, groups: Sequence[GroupSamples], always_posthoc: bool = False) -> list[tuple]:
    """CSV rows for one metric: the ANOVA row, then post-hoc rows when the ANOVA is significant."""
    res = one_way_anova(groups)
    rows = [(metric, "anova", res.statistic, res.p, res.p, res.significant)]
    if res.significant or always_posthoc:
        for pr in bonferroni_posthoc(groups):
            rows.append((metric, f"{pr.a} vs {pr.b}", pr.t, pr.p_raw, pr.p_adjusted, pr.significant))
    return rows


def write_stats_csv(rows: Iterable[tuple], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for metric, comp, stat, p, pa, sig in rows:
            w.writerow([metric, comp, f"{stat:.6g}", f"{p:.6g}", f"{pa:.6g}", "true" if sig else "false"])
    return path
