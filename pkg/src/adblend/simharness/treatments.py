"""Treatment arms: allocation rules evaluated over an epoch.

Every arm is evaluated counterfactually over the same impressions, with
per-impression random streams keyed on (seed, arm, impression index) so
results do not depend on processing order, chunking, or process count.
Accumulation is over fixed-size blocks merged in order, which keeps the
floating-point totals bit-identical for any --threads setting.

Metrics come in expected (ground-truth click probabilities) and realized
(sampled clicks) flavors; CTR metrics are per-slot averages, revenue is a
per-impression total of per-click price times clicks (or click
probability, for the expected flavor).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..allocator import VirtualBid, bids_of, evaluate_selection, optimize_impression, rank_listwise
from ..core import AD, Impression, MixedTuple, build_tuple
from ..ctr import ListwisePredictor, PointwisePredictor, SyntheticJointModel, pointwise_slot_ctrs
from ..errors import ValidationError
from ..payments import GSP, VCG, gsp_payments, vcg_payments
from .config import SimConfig
from .generate import page_subcat_of
from .metrics import DiversityRow, MeanStat, _DiversityAccumulator, mean_stat

STREAM_ARM_BASE = 16
BLOCK_SIZE = 4096

METRICS = (
    "ad_ctr_expected",
    "ad_revenue_expected",
    "org_ctr_expected",
    "ad_ctr_realized",
    "ad_revenue_realized",
    "org_ctr_realized",
)

BASELINE = "baseline"
SHUFFLE = "shuffle"
RANDOM_TOP_X = "random_top_x"
LISTWISE = "listwise"


@dataclass(frozen=True)
class Treatment:
    """One allocation rule.

    baseline: top-k pre-ranked ads in order (the incumbent system).
    shuffle: baseline's ad set in random order.
    random_top_x: k ads sampled uniformly from the top x, random order.
    listwise: composite-objective optimization at virtual bid v.
    """

    name: str
    kind: str
    x: Optional[int] = None
    v: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in (BASELINE, SHUFFLE, RANDOM_TOP_X, LISTWISE):
            raise ValidationError(f"unknown treatment kind {self.kind!r}")
        if self.kind == RANDOM_TOP_X and (self.x is None or self.x < 1):
            raise ValidationError("random_top_x needs x >= 1")
        if self.kind == LISTWISE and self.v is None:
            raise ValidationError("listwise needs a virtual bid")

    @classmethod
    def baseline(cls) -> "Treatment":
        return cls(name=BASELINE, kind=BASELINE)

    @classmethod
    def shuffle(cls) -> "Treatment":
        return cls(name=SHUFFLE, kind=SHUFFLE)

    @classmethod
    def random_top_x(cls, x: int) -> "Treatment":
        return cls(name=f"random_top_{x}", kind=RANDOM_TOP_X, x=x)

    @classmethod
    def listwise(cls, v: float, name: Optional[str] = None) -> "Treatment":
        return cls(name=name or f"listwise(v={v:g})", kind=LISTWISE, v=float(v))


def realize_clicks(
    mixed: MixedTuple, truth_ctrs: Sequence[float], rng: np.random.Generator
) -> tuple[int, ...]:
    """Independent per-slot Bernoulli click outcomes at the given
    ground-truth probabilities."""
    draws = rng.random(len(truth_ctrs))
    return tuple(int(draws[j] < truth_ctrs[j]) for j in range(len(truth_ctrs)))


@dataclass
class ArmStats:
    """Aggregated outcomes of one arm over the epoch."""

    name: str
    sample_size: int
    stats: dict[str, MeanStat]
    diversity: DiversityRow
    subcat_revenue: dict[str, tuple[float, float, int]]  # expected, realized, n


class _BlockStats:
    __slots__ = ("n", "sums", "sumsq", "diversity", "subcat_revenue")

    def __init__(self) -> None:
        self.n = 0
        self.sums = [0.0] * len(METRICS)
        self.sumsq = [0.0] * len(METRICS)
        self.diversity = _DiversityAccumulator()
        self.subcat_revenue: dict[str, list[float]] = {}

    def add(self, obs, ad_subcats, org_subcats, page: str) -> None:
        self.n += 1
        sums, sumsq = self.sums, self.sumsq
        for i, x in enumerate(obs):
            sums[i] += x
            sumsq[i] += x * x
        self.diversity.add(ad_subcats, org_subcats, page)
        cell = self.subcat_revenue.setdefault(page, [0.0, 0.0, 0])
        cell[0] += obs[1]
        cell[1] += obs[4]
        cell[2] += 1

    def merge(self, other: "_BlockStats") -> None:
        self.n += other.n
        for i in range(len(METRICS)):
            self.sums[i] += other.sums[i]
            self.sumsq[i] += other.sumsq[i]
        self.diversity.merge(other.diversity)
        for page, cell in sorted(other.subcat_revenue.items()):
            mine = self.subcat_revenue.setdefault(page, [0.0, 0.0, 0])
            mine[0] += cell[0]
            mine[1] += cell[1]
            mine[2] += cell[2]


def _arm_rng(config: SimConfig, arm_index: int, global_index: int) -> np.random.Generator:
    key = (config.seed, STREAM_ARM_BASE + arm_index, global_index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


_V0 = VirtualBid(0.0)


def _evaluate_impression(
    imp: Impression,
    global_index: int,
    treatment: Treatment,
    config: SimConfig,
    arm_index: int,
    alloc_predictor: ListwisePredictor,
    truth_predictor: ListwisePredictor,
    pricing_predictor: PointwisePredictor,
    scheme: str,
) -> tuple[tuple, list, list, str]:
    rng = _arm_rng(config, arm_index, global_index)
    k = imp.layout.k_ads
    allocation = None
    if treatment.kind == BASELINE:
        indices = list(range(k))
    elif treatment.kind == SHUFFLE:
        indices = [int(i) for i in rng.permutation(k)]
    elif treatment.kind == RANDOM_TOP_X:
        if treatment.x < k:
            raise ValidationError(f"random_top_x needs x >= k_ads, got {treatment.x} < {k}")
        x_eff = min(treatment.x, imp.n_ads)
        indices = [int(i) for i in rng.choice(x_eff, size=k, replace=False)]
    else:  # LISTWISE
        allocation = optimize_impression(
            imp, alloc_predictor, VirtualBid(treatment.v), config.n_prime
        )

    # Ground-truth expectations for the displayed tuple. When the allocator
    # already ran on the truth model its CTRs are reused verbatim.
    if allocation is not None:
        chosen = allocation.chosen
        if alloc_predictor is truth_predictor:
            truth_eval = allocation
        else:
            truth_eval = rank_listwise([chosen], imp, truth_predictor, _V0)
    else:
        truth_eval = evaluate_selection(imp, truth_predictor, _V0, indices)
        chosen = truth_eval.chosen

    bids = bids_of(imp)
    if scheme == VCG and treatment.kind == LISTWISE:
        schedule = vcg_payments(
            imp, alloc_predictor, VirtualBid(treatment.v), config.n_prime, allocation=allocation
        )
    else:
        pricing_ctrs = pointwise_slot_ctrs(pricing_predictor.model, chosen)
        schedule = gsp_payments(
            truth_eval, pricing_ctrs, bids, t=config.gsp_exponent, floor=config.floor_price
        )
    price_of = schedule.price_by_ad()

    truth_ctrs = truth_eval.ctrs
    clicks = realize_clicks(chosen, truth_ctrs, rng)

    exp_rev = 0.0
    real_rev = 0.0
    ad_clicks = 0
    org_clicks = 0
    n_org = 0
    for j, slot in enumerate(chosen.slots):
        if slot.kind == AD:
            price = price_of.get(slot.item.ad_id) or 0.0
            exp_rev += price * truth_ctrs[j]
            real_rev += price * clicks[j]
            ad_clicks += clicks[j]
        else:
            org_clicks += clicks[j]
            n_org += 1

    obs = (
        truth_eval.ad_ctr_sum / k if k else 0.0,
        exp_rev,
        truth_eval.org_ctr_sum / n_org if n_org else 0.0,
        ad_clicks / k if k else 0.0,
        real_rev,
        org_clicks / n_org if n_org else 0.0,
    )
    ad_subcats = [s.item.subcategory for s in chosen.slots if s.kind == AD]
    org_subcats = [s.item.subcategory for s in chosen.slots if s.kind != AD]
    return obs, ad_subcats, org_subcats, page_subcat_of(imp)


def _run_block(args) -> _BlockStats:
    (impressions, start, treatment, config, arm_index, truth, alloc_is_truth,
     alloc_model, scheme) = args
    truth_predictor = ListwisePredictor(truth)
    pricing_predictor = PointwisePredictor(truth)
    alloc_predictor = truth_predictor if alloc_is_truth else ListwisePredictor(alloc_model)
    block = _BlockStats()
    for offset, imp in enumerate(impressions):
        obs, ad_subcats, org_subcats, page = _evaluate_impression(
            imp, start + offset, treatment, config, arm_index,
            alloc_predictor, truth_predictor, pricing_predictor, scheme,
        )
        block.add(obs, ad_subcats, org_subcats, page)
    return block


def run_treatment(
    impressions: Sequence[Impression],
    treatment: Treatment,
    truth: SyntheticJointModel,
    config: SimConfig,
    arm_index: int,
    *,
    alloc_model: Optional[SyntheticJointModel] = None,
    scheme: str = GSP,
    threads: int = 1,
) -> ArmStats:
    """Evaluate one treatment over the epoch and aggregate its metrics.

    alloc_model lets the listwise allocator run on a misspecified model;
    by default it sees the ground truth (perfect-prediction regime).
    """
    if scheme not in (GSP, VCG):
        raise ValidationError(f"unknown payment scheme {scheme!r}")
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")
    alloc_is_truth = alloc_model is None or alloc_model is truth
    payloads = [
        (
            list(impressions[start : start + BLOCK_SIZE]),
            start,
            treatment,
            config,
            arm_index,
            truth,
            alloc_is_truth,
            None if alloc_is_truth else alloc_model,
            scheme,
        )
        for start in range(0, len(impressions), BLOCK_SIZE)
    ]
    if threads == 1 or len(payloads) <= 1:
        blocks = [_run_block(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(_run_block, payloads))

    total = _BlockStats()
    for b in blocks:
        total.merge(b)
    stats = {
        name: mean_stat(float(total.sums[i]), float(total.sumsq[i]), total.n)
        for i, name in enumerate(METRICS)
    }
    return ArmStats(
        name=treatment.name,
        sample_size=total.n,
        stats=stats,
        diversity=total.diversity.row(),
        subcat_revenue={k: (v[0], v[1], v[2]) for k, v in sorted(total.subcat_revenue.items())},
    )
