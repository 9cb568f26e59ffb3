"""Diversity metrics and two-sample significance helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..core import AD, MixedTuple
from ..errors import ValidationError

# Significance conventions used in the report tables.
P_STAR = 0.01
P_DOUBLE_STAR = 0.001


@dataclass(frozen=True)
class GroupDiversity:
    """Diversity of one slot group (ads, organics, or all slots).

    multi_subcat_rate: share of impressions where at least one item's
        subcategory differs from the page product's.
    mean_subcat_count: mean number of unique subcategories per tuple.
    herfindahl: mean sum of squared subcategory shares (1 = concentrated,
        1/n = maximally diverse over n items).
    """

    multi_subcat_rate: float
    mean_subcat_count: float
    herfindahl: float


@dataclass(frozen=True)
class DiversityRow:
    ads: GroupDiversity
    organics: GroupDiversity
    overall: GroupDiversity


def group_stats(subcats: Sequence[str], page_subcat: str) -> tuple[bool, int, float]:
    """(any item off the page's subcategory, unique count, Herfindahl)."""
    if not subcats:
        return False, 0, 0.0
    multi = False
    counts: dict[str, int] = {}
    for s in subcats:
        if s != page_subcat:
            multi = True
        counts[s] = counts.get(s, 0) + 1
    n = len(subcats)
    hhi = 0.0
    for c in counts.values():
        share = c / n
        hhi += share * share
    return multi, len(counts), hhi


def tuple_subcats(mixed: MixedTuple) -> tuple[list[str], list[str]]:
    """Ad and organic subcategory lists for one tuple, in slot order."""
    ads = [s.item.subcategory for s in mixed.slots if s.kind == AD]
    orgs = [s.item.subcategory for s in mixed.slots if s.kind != AD]
    return ads, orgs


def diversity_metrics(
    allocations: Sequence[MixedTuple], page_subcats: Sequence[str]
) -> DiversityRow:
    """Average diversity of a list of chosen tuples.

    page_subcats[i] is the subcategory of the product page impression i was
    served on.

    Raises:
        ValidationError: empty input or mismatched lengths.
    """
    if not allocations:
        raise ValidationError("allocations must be nonempty")
    if len(allocations) != len(page_subcats):
        raise ValidationError("allocations and page_subcats must align")
    acc = _DiversityAccumulator()
    for mixed, page in zip(allocations, page_subcats):
        ads, orgs = tuple_subcats(mixed)
        acc.add(ads, orgs, page)
    return acc.row()


class _DiversityAccumulator:
    """Streaming version of diversity_metrics for the treatment runner."""

    __slots__ = ("n", "sums")

    def __init__(self) -> None:
        self.n = 0
        # (multi, unique, hhi) for ads / organics / overall
        self.sums = [0.0] * 9

    def add(self, ad_subcats: Sequence[str], org_subcats: Sequence[str], page: str) -> None:
        self.n += 1
        for offset, group in ((0, ad_subcats), (3, org_subcats), (6, list(ad_subcats) + list(org_subcats))):
            multi, unique, hhi = group_stats(group, page)
            self.sums[offset] += 1.0 if multi else 0.0
            self.sums[offset + 1] += unique
            self.sums[offset + 2] += hhi

    def merge(self, other: "_DiversityAccumulator") -> None:
        self.n += other.n
        for i in range(9):
            self.sums[i] += other.sums[i]

    def row(self) -> DiversityRow:
        if self.n == 0:
            raise ValidationError("no allocations accumulated")
        groups = []
        for offset in (0, 3, 6):
            groups.append(
                GroupDiversity(
                    multi_subcat_rate=self.sums[offset] / self.n,
                    mean_subcat_count=self.sums[offset + 1] / self.n,
                    herfindahl=self.sums[offset + 2] / self.n,
                )
            )
        return DiversityRow(ads=groups[0], organics=groups[1], overall=groups[2])


@dataclass(frozen=True)
class MeanStat:
    """Mean, sample variance, and count of one per-impression metric."""

    mean: float
    var: float
    n: int


def mean_stat(total: float, total_sq: float, n: int) -> MeanStat:
    if n == 0:
        return MeanStat(mean=math.nan, var=math.nan, n=0)
    mean = total / n
    if n < 2:
        return MeanStat(mean=mean, var=0.0, n=n)
    var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    return MeanStat(mean=mean, var=var, n=n)


def two_sample_z(t: MeanStat, c: MeanStat) -> tuple[float, float]:
    """Unpaired z statistic and two-sided p-value for a mean difference."""
    se2 = (t.var / t.n if t.n else math.inf) + (c.var / c.n if c.n else math.inf)
    diff = t.mean - c.mean
    if se2 <= 0.0:
        z = 0.0 if diff == 0.0 else math.inf * (1 if diff > 0 else -1)
    else:
        z = diff / math.sqrt(se2)
    p = math.erfc(abs(z) / math.sqrt(2.0)) if math.isfinite(z) else 0.0
    if diff == 0.0:
        p = 1.0
    return z, p


def significance_marker(p: float) -> str:
    if p < P_DOUBLE_STAR:
        return "**"
    if p < P_STAR:
        return "*"
    return ""
