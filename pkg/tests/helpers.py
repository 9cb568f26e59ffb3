"""Shared test fixtures: random instance generators and independent oracles.

The oracles here deliberately avoid the library's evaluation paths: CTRs
are recomputed with plain Python arithmetic, enumeration uses
itertools.permutations directly, and sums go through math.fsum. Agreement
is asserted within 1e-12, which absorbs the associativity differences.
"""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np

from adblend import (
    AdCandidate,
    Impression,
    InteractionTable,
    OrganicItem,
    PositionLayout,
    SyntheticJointModel,
)

DEFAULT_MULTS = (1.0, 0.9, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55)


def make_instance(
    rng: np.random.Generator,
    n_ads: int = 5,
    k_ads: int = 2,
    k_orgs: int = 2,
    n_organics: int = 3,
    n_subcats: int = 3,
    gamma_same: float | None = None,
    gamma_cross: float | None = None,
    flat_multipliers: bool = False,
    bid_low: float = 0.2,
    bid_high: float = 8.0,
) -> tuple[Impression, SyntheticJointModel]:
    """A random impression plus a random ground-truth model covering it."""
    total = k_ads + k_orgs
    positions = list(rng.permutation(total))
    layout = PositionLayout(
        total_slots=total,
        ad_positions=tuple(int(p) for p in positions[:k_ads]),
        organic_positions=tuple(int(p) for p in positions[k_ads:]),
    )
    subcats = [f"s{i}" for i in range(n_subcats)]
    ads = tuple(
        AdCandidate(
            ad_id=f"a{i}",
            bid_cpc=float(rng.uniform(bid_low, bid_high)),
            subcategory=subcats[int(rng.integers(n_subcats))],
        )
        for i in range(n_ads)
    )
    organics = tuple(
        OrganicItem(item_id=f"o{i}", subcategory=subcats[int(rng.integers(n_subcats))])
        for i in range(n_organics)
    )
    base = {a.ad_id: float(rng.uniform(0.02, 0.4)) for a in ads}
    base.update({o.item_id: float(rng.uniform(0.02, 0.4)) for o in organics})
    gs = float(rng.uniform(0.7, 1.0)) if gamma_same is None else gamma_same
    gc = float(rng.uniform(0.9, 1.15)) if gamma_cross is None else gamma_cross
    mults = tuple([1.0] * total) if flat_multipliers else DEFAULT_MULTS[:total]
    model = SyntheticJointModel(
        base_ctr=base,
        position_multipliers=mults,
        interaction=InteractionTable(default_same=gs, default_cross=gc),
    )
    imp = Impression(
        impression_id="t-0",
        context_features=(0.0,),
        ads=ads,
        organics=organics,
        layout=layout,
    )
    return imp, model


def oracle_slot_ctrs(
    model: SyntheticJointModel, imp: Impression, ad_indices: tuple[int, ...]
) -> list[tuple[str, float, float]]:
    """Per-slot (kind, ctr, bid-or-0) for one arrangement, recomputed from
    first principles. Slots in page-position order."""
    entries = []
    for rank, pos in enumerate(imp.layout.ad_positions):
        ad = imp.ads[ad_indices[rank]]
        entries.append((pos, "ad", ad.subcategory, model.base_ctr[ad.ad_id], ad.bid_cpc))
    for i, pos in enumerate(imp.layout.organic_positions):
        org = imp.organics[i]
        entries.append((pos, "organic", org.subcategory, model.base_ctr[org.item_id], 0.0))
    entries.sort()
    out = []
    for pos, kind, subcat, base, bid in entries:
        x = base * model.position_multipliers[pos]
        factors = []
        for pos2, _k2, subcat2, _b2, _bid2 in entries:
            if pos2 == pos:
                continue
            factors.append(model.interaction.factor(subcat, subcat2))
        x = x * math.prod(factors)
        x = min(max(x, 0.0), 1.0)
        out.append((kind, x, bid))
    return out


def oracle_score(
    model: SyntheticJointModel, imp: Impression, ad_indices: tuple[int, ...], v_a: float
) -> float:
    terms = [
        ctr * (v_a + bid)
        for kind, ctr, bid in oracle_slot_ctrs(model, imp, ad_indices)
        if kind == "ad"
    ]
    return math.fsum(terms)


def oracle_best(
    model: SyntheticJointModel, imp: Impression, v_a: float, n_prime: int | None = None
) -> tuple[float, tuple[int, ...]]:
    """Exhaustive maximizer over all ordered placements of k ads drawn from
    the top n_prime candidates."""
    k = imp.layout.k_ads
    n = imp.n_ads if n_prime is None else n_prime
    best = -math.inf
    best_sel: tuple[int, ...] = ()
    for sel in permutations(range(n), k):
        s = oracle_score(model, imp, sel, v_a)
        if s > best:
            best = s
            best_sel = sel
    return best, best_sel


def oracle_ad_ctr_revenue(
    model: SyntheticJointModel, imp: Impression, ad_indices: tuple[int, ...]
) -> tuple[float, float]:
    slots = oracle_slot_ctrs(model, imp, ad_indices)
    ctr = math.fsum(x for kind, x, _ in slots if kind == "ad")
    rev = math.fsum(x * bid for kind, x, bid in slots if kind == "ad")
    return ctr, rev
