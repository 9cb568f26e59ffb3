"""Per-ad charges for a chosen allocation under GSP and VCG.

GSP reprices each allocated ad at the minimum bid that preserves its rank
in the weighted-eCPM ordering (bid * pctr^t, pointwise CTRs). VCG charges
each allocated ad the welfare loss its presence imposes on everyone else,
where "everyone else" includes the platform as a pseudo-bidder valuing ad
clicks at the virtual bid; the counterfactual re-optimizes over tuples
generated from the candidate list with the ad removed, keeping the same
top-N' window so the next pre-ranked candidate slides in.

Ads that are not allocated pay nothing and do not appear in the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .allocator import AllocationResult, VirtualBid, optimize_impression
from .core import AD, Impression, PositionLayout
from .errors import ValidationError, ZeroCtrError

GSP = "gsp"
VCG = "vcg"


@dataclass(frozen=True)
class AdPayment:
    """One allocated ad's charge.

    price_per_click is None when the ad's predicted CTR in the winning
    tuple is zero, making the per-click conversion undefined; the expected
    payment is still reported.
    """

    ad_id: str
    price_per_click: Optional[float]
    expected_payment: float


@dataclass(frozen=True)
class PaymentSchedule:
    """Charges for the allocated ads, in slot order of the chosen tuple."""

    scheme: str
    payments: tuple[AdPayment, ...]
    gsp_exponent: Optional[float] = None
    floor_price: float = 0.0

    def payment_for(self, ad_id: str) -> float:
        for p in self.payments:
            if p.ad_id == ad_id:
                return p.expected_payment
        return 0.0

    def price_by_ad(self) -> dict[str, Optional[float]]:
        return {p.ad_id: p.price_per_click for p in self.payments}


def gsp_payments(
    allocation: AllocationResult,
    pointwise_ctrs: Sequence[float],
    bids: Mapping[str, float],
    t: float = 1.0,
    floor: float = 0.0,
) -> PaymentSchedule:
    """Generalized second price over the chosen tuple's ads.

    Ads are ranked by descending bid * pctr^t (stable; slot order breaks
    ties). The ad at rank i pays the smallest per-click price keeping it
    above rank i+1, floored; the last ad pays the floor.

    Raises:
        ValidationError: t < 0 or floor < 0.
        ZeroCtrError: any allocated ad has zero pointwise CTR.
    """
    if t < 0:
        raise ValidationError(f"gsp exponent t must be >= 0, got {t}")
    if floor < 0:
        raise ValidationError(f"floor price must be >= 0, got {floor}")
    chosen = allocation.chosen
    if len(pointwise_ctrs) != len(chosen.slots):
        raise ValidationError("pointwise CTR vector misaligned with chosen tuple")

    entries = []  # (slot order) ad_id, bid, pctr
    for j, slot in enumerate(chosen.slots):
        if slot.kind != AD:
            continue
        ad_id = slot.item.ad_id
        if ad_id not in bids:
            raise ValidationError(f"no bid for ad {ad_id!r}")
        pctr = float(pointwise_ctrs[j])
        if pctr == 0.0:
            raise ZeroCtrError(f"ad {ad_id!r} has zero pointwise CTR; GSP price undefined")
        entries.append((ad_id, float(bids[ad_id]), pctr))

    ranked = sorted(entries, key=lambda e: -(e[1] * e[2] ** t))
    price_of: dict[str, float] = {}
    for i, (ad_id, _bid, pctr) in enumerate(ranked):
        if i + 1 < len(ranked):
            _nid, nbid, npctr = ranked[i + 1]
            price = max(floor, (nbid * npctr**t) / pctr**t)
        else:
            price = floor
        price_of[ad_id] = price

    payments = tuple(
        AdPayment(ad_id=ad_id, price_per_click=price_of[ad_id], expected_payment=price_of[ad_id] * pctr)
        for ad_id, _bid, pctr in entries
    )
    return PaymentSchedule(scheme=GSP, payments=payments, gsp_exponent=t, floor_price=floor)


def _without_candidate(impression: Impression, ad_id: str) -> Impression:
    """The impression as it would arrive had this candidate never bid.

    If too few candidates remain to fill every ad position, the layout
    shrinks to the leading ad positions that can still be filled.
    """
    remaining = tuple(a for a in impression.ads if a.ad_id != ad_id)
    layout = impression.layout
    k = min(layout.k_ads, len(remaining))
    if k == layout.k_ads:
        reduced_layout = layout
    else:
        reduced_layout = PositionLayout(
            total_slots=k + layout.k_orgs,
            ad_positions=layout.ad_positions[:k],
            organic_positions=layout.organic_positions,
        )
    return Impression(
        impression_id=impression.impression_id,
        context_features=impression.context_features,
        ads=remaining,
        organics=impression.organics,
        layout=reduced_layout,
    )


def vcg_payments(
    impression: Impression,
    model,
    v: VirtualBid,
    n_prime: int,
    allocation: Optional[AllocationResult] = None,
) -> PaymentSchedule:
    """VCG charges for the winning tuple of this impression.

    For each allocated ad j, the expected payment is the best achievable
    joint welfare with j removed, minus the welfare the realized tuple
    delivers to everyone but j (the full objective less j's own revenue
    term; the platform's virtual-bid terms stay in). Per-click price is
    the expected payment divided by j's predicted CTR in the winning tuple.
    """
    if allocation is None:
        allocation = optimize_impression(impression, model, v, n_prime)
    chosen = allocation.chosen
    bids = {a.ad_id: a.bid_cpc for a in impression.ads}

    payments = []
    for j, slot in enumerate(chosen.slots):
        if slot.kind != AD:
            continue
        ad_id = slot.item.ad_id
        x_j = allocation.ctrs[j]
        others_realized = allocation.objective_value - bids[ad_id] * x_j
        reduced = _without_candidate(impression, ad_id)
        reduced_n_prime = min(n_prime, reduced.n_ads)
        if reduced.layout.k_ads == 0:
            counterfactual_best = 0.0
        else:
            counterfactual_best = optimize_impression(
                reduced, model, v, reduced_n_prime
            ).objective_value
        expected = counterfactual_best - others_realized
        price = expected / x_j if x_j > 0 else None
        payments.append(AdPayment(ad_id=ad_id, price_per_click=price, expected_payment=expected))

    return PaymentSchedule(scheme=VCG, payments=tuple(payments))
