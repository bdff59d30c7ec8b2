"""Shared statistical kernels.

2x2 chi-square tests of independence, chi-square tail probabilities,
Benjamini-Hochberg step-up adjustment, and Wilson binomial confidence
intervals. Everything here is pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import betaincinv, gammaincc, ndtri

from srltrace.errors import SrlTraceError


class ZeroMargin(SrlTraceError):
    """A 2x2 table has an empty row or column margin."""


class InvalidP(SrlTraceError):
    """A p-value outside [0, 1] or an FDR level outside (0, 1)."""


class InvalidCounts(SrlTraceError):
    """Binomial counts violate 0 <= successes <= n, n >= 1."""


@dataclass(frozen=True)
class Table2x2:
    """Cell counts with rows = group and columns = condition."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        cells = (self.a, self.b, self.c, self.d)
        if any(x < 0 for x in cells):
            raise InvalidCounts(f"negative cell count in {cells}")
        if sum(cells) < 1:
            raise InvalidCounts("2x2 table must contain at least one observation")


@dataclass(frozen=True)
class BhOutcome:
    """Per-test result of the Benjamini-Hochberg step-up procedure."""

    p: float
    rank: int
    rejected: bool
    q: float
    m: int


def chi2_sf(x: float, df: int) -> float:
    """Upper tail P(X >= x) of the chi-square distribution with df >= 1.

    Computed as the regularized upper incomplete gamma Q(df/2, x/2).
    """
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    if x <= 0.0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def chi2_2x2(t: Table2x2, yates: bool = False) -> tuple[float, int, float]:
    """Pearson chi-square test of independence on a 2x2 table.

    No continuity correction unless ``yates`` is set. Returns
    (statistic, df=1, p).
    """
    n = t.a + t.b + t.c + t.d
    row1, row2 = t.a + t.b, t.c + t.d
    col1, col2 = t.a + t.c, t.b + t.d
    if min(row1, row2, col1, col2) == 0:
        raise ZeroMargin(f"table {t} has an empty margin")
    stat = 0.0
    for obs, rm, cm in ((t.a, row1, col1), (t.b, row1, col2),
                        (t.c, row2, col1), (t.d, row2, col2)):
        expected = rm * cm / n
        dev = abs(obs - expected)
        if yates:
            dev = max(dev - 0.5, 0.0)
        stat += dev * dev / expected
    return stat, 1, chi2_sf(stat, 1)


def bh_adjust(pvalues: list[float], q: float = 0.05) -> list[BhOutcome]:
    """Benjamini-Hochberg step-up procedure at FDR level ``q``.

    Finds the largest k with p_(k) <= k*q/m and rejects every test ranked
    at or below k. Outcomes are returned in the input order; ties in p keep
    input order when ranking (stable sort).
    """
    if not 0.0 < q < 1.0:
        raise InvalidP(f"FDR level must be in (0, 1), got {q}")
    for p in pvalues:
        if not (0.0 <= p <= 1.0):
            raise InvalidP(f"p-value out of range: {p}")
    m = len(pvalues)
    order = sorted(range(m), key=lambda i: pvalues[i])
    k_max = 0
    for rank0, idx in enumerate(order):
        if pvalues[idx] <= (rank0 + 1) * q / m:
            k_max = rank0 + 1
    ranks = [0] * m
    for rank0, idx in enumerate(order):
        ranks[idx] = rank0 + 1
    return [
        BhOutcome(p=pvalues[i], rank=ranks[i], rejected=ranks[i] <= k_max, q=q, m=m)
        for i in range(m)
    ]


def wilson_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Uses z = 1.96 at the default 95% level; other levels take the normal
    quantile. The interval always contains successes/n, and the bounds hit
    0 and 1 exactly at the 0/n and n/n boundaries.
    """
    if n < 1 or not 0 <= successes <= n:
        raise InvalidCounts(f"need 0 <= successes <= n, n >= 1; got {successes}/{n}")
    z = 1.96 if level == 0.95 else float(ndtri(0.5 + level / 2.0))
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2 / (4 * n * n)) / denom
    low = max(0.0, center - half)
    high = min(1.0, center + half)
    if successes == 0:
        low = 0.0
    if successes == n:
        high = 1.0
    return low, high


def exact_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson exact binomial interval, for when Wilson is not wanted."""
    if n < 1 or not 0 <= successes <= n:
        raise InvalidCounts(f"need 0 <= successes <= n, n >= 1; got {successes}/{n}")
    alpha = 1.0 - level
    low = 0.0 if successes == 0 else float(
        betaincinv(successes, n - successes + 1, alpha / 2.0))
    high = 1.0 if successes == n else float(
        betaincinv(successes + 1, n - successes, 1.0 - alpha / 2.0))
    return low, high
