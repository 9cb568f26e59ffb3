"""Synthetic epoch generation: catalog, retrieval, and pre-ranking.

An epoch fixes a catalog of ads and organics (subcategory, base CTR, and
for ads a CPC bid drawn from the per-subcategory bid distribution). Each
impression then lands on a product page with a random subcategory,
retrieves candidates biased toward that subcategory, and pre-ranks the ad
candidates by the baseline weighted eCPM (bid * base_ctr^t). The returned
ground-truth model prices every catalog item, so the same epoch serves as
both the allocator input and the click-generating environment.

Randomness is counter-based: impression i draws from a stream keyed on
(seed, stream tag, i), so generation order, chunking, and parallelism
cannot change the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import AdCandidate, Impression, OrganicItem
from ..ctr import InteractionTable, SyntheticJointModel
from .config import SimConfig, bid_mu_for_subcat, subcat_label

# Stream tags for SeedSequence keys; arms get tags >= 16.
STREAM_CATALOG = 0
STREAM_IMPRESSION = 1


def _rng(*key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Catalog:
    """Fixed item universe for one epoch."""

    ads: tuple[AdCandidate, ...]
    organics: tuple[OrganicItem, ...]
    ad_subcat_codes: np.ndarray
    organic_subcat_codes: np.ndarray
    ad_base: np.ndarray
    organic_base: np.ndarray
    ad_rank_key: np.ndarray  # bid * base^t, the baseline eCPM pre-rank key


def build_catalog(config: SimConfig) -> tuple[Catalog, SyntheticJointModel]:
    rng = _rng(config.seed, STREAM_CATALOG)
    s = config.subcategories

    ad_codes = rng.integers(0, s, size=config.catalog_ads)
    ad_base = np.clip(
        np.exp(rng.normal(config.ctr_mu, config.ctr_sigma, size=config.catalog_ads))
        * config.ctr_scale,
        config.ctr_min,
        config.ctr_max,
    )
    mus = np.array([bid_mu_for_subcat(config, int(c)) for c in ad_codes])
    bids = np.exp(rng.normal(mus, config.bid_sigma)) * config.bid_scale

    org_codes = rng.integers(0, s, size=config.catalog_organics)
    org_base = np.clip(
        np.exp(rng.normal(config.ctr_mu, config.ctr_sigma, size=config.catalog_organics))
        * config.ctr_scale,
        config.ctr_min,
        config.ctr_max,
    )

    ads = tuple(
        AdCandidate(
            ad_id=f"ad-{i:04d}",
            bid_cpc=float(bids[i]),
            subcategory=subcat_label(int(ad_codes[i])),
        )
        for i in range(config.catalog_ads)
    )
    organics = tuple(
        OrganicItem(item_id=f"org-{i:04d}", subcategory=subcat_label(int(org_codes[i])))
        for i in range(config.catalog_organics)
    )

    base_ctr = {a.ad_id: float(ad_base[i]) for i, a in enumerate(ads)}
    base_ctr.update({o.item_id: float(org_base[i]) for i, o in enumerate(organics)})
    truth = SyntheticJointModel(
        base_ctr=base_ctr,
        position_multipliers=config.position_multipliers,
        interaction=InteractionTable(
            default_same=config.gamma_same, default_cross=config.gamma_cross
        ),
    )
    catalog = Catalog(
        ads=ads,
        organics=organics,
        ad_subcat_codes=ad_codes,
        organic_subcat_codes=org_codes,
        ad_base=ad_base,
        organic_base=org_base,
        ad_rank_key=bids * ad_base**config.gsp_exponent,
    )
    return catalog, truth


def _weighted_sample(
    rng: np.random.Generator, weights: np.ndarray, size: int
) -> np.ndarray:
    """Sample `size` distinct indices with probability proportional to
    weights (Gumbel top-k; deterministic given the rng state)."""
    keys = np.log(weights) + rng.gumbel(size=weights.shape[0])
    idx = np.argpartition(-keys, size - 1)[:size] if size < keys.shape[0] else np.arange(keys.shape[0])
    return idx


@dataclass(frozen=True)
class Epoch:
    """A generated impression log plus its ground-truth click model."""

    config: SimConfig
    impressions: tuple[Impression, ...]
    truth: SyntheticJointModel

    def page_subcat(self, index: int) -> str:
        return subcat_label(int(self.impressions[index].context_features[0]))


def page_subcat_of(imp: Impression) -> str:
    """The page product's subcategory; stored by the generator in
    context_features[0]."""
    return subcat_label(int(imp.context_features[0]))


def generate_impression(
    config: SimConfig, catalog: Catalog, index: int, layout=None
) -> Impression:
    if layout is None:
        layout = config.layout()
    rng = _rng(config.seed, STREAM_IMPRESSION, index)
    page = int(rng.integers(0, config.subcategories))

    ad_w = np.where(catalog.ad_subcat_codes == page, config.match_weight, 1.0)
    ad_idx = _weighted_sample(rng, ad_w, config.n_ads)
    # Baseline pre-rank: weighted eCPM descending, catalog index as tie-break.
    ad_idx = sorted(ad_idx.tolist(), key=lambda i: (-catalog.ad_rank_key[i], i))

    org_w = np.where(catalog.organic_subcat_codes == page, config.match_weight, 1.0)
    org_idx = _weighted_sample(rng, org_w, config.n_organics)
    org_idx = sorted(org_idx.tolist(), key=lambda i: (-catalog.organic_base[i], i))

    return Impression(
        impression_id=f"imp-{index:07d}",
        context_features=(float(page),),
        ads=tuple(catalog.ads[i] for i in ad_idx),
        organics=tuple(catalog.organics[i] for i in org_idx),
        layout=layout,
    )


def generate_epoch(config: SimConfig) -> Epoch:
    """Deterministically generate an epoch of impressions.

    Two calls with equal configs produce equal epochs; changing only the
    seed changes content but not schema.
    """
    catalog, truth = build_catalog(config)
    layout = config.layout()
    impressions = tuple(
        generate_impression(config, catalog, i, layout) for i in range(config.n_impressions)
    )
    return Epoch(config=config, impressions=impressions, truth=truth)
