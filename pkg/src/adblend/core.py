"""Domain types, mixed-tuple enumeration, and shared metric utilities.

A page shows a fixed set of positions, some reserved for ads and some for
organic items. A MixedTuple is one concrete arrangement: the top organics
pinned to the organic positions plus an ordered selection of ads in the ad
positions. Enumerating candidate arrangements, and the lift transformation
used in reports, both live here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import UndefinedLiftError, ValidationError

# Per-slot predicted click probabilities, aligned with MixedTuple.slots.
CtrVector = tuple[float, ...]

AD = "ad"
ORGANIC = "organic"


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class AdCandidate:
    """A candidate advertisement with its advertiser-submitted CPC bid.

    Attributes:
        ad_id: Identifier, unique within an impression's candidate list.
        bid_cpc: Cost-per-click bid, strictly positive.
        subcategory: Product subcategory label (drives interaction effects).
        features: Optional numeric feature vector for richer models.
    """

    ad_id: str
    bid_cpc: float
    subcategory: str
    features: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        _check_finite("bid_cpc", self.bid_cpc)
        if self.bid_cpc <= 0:
            raise ValidationError(f"bid_cpc must be > 0, got {self.bid_cpc}")


@dataclass(frozen=True)
class OrganicItem:
    """A ranked organic (non-sponsored) item.

    Attributes:
        item_id: Identifier, unique within an impression's organic list.
        subcategory: Product subcategory label.
        features: Optional numeric feature vector.
    """

    item_id: str
    subcategory: str
    features: tuple[float, ...] = ()


@dataclass(frozen=True)
class PositionLayout:
    """Which page positions hold ads and which hold organics.

    Positions are 0-based page indices. The two position sets must be
    disjoint and together account for every slot on the page.
    """

    total_slots: int
    ad_positions: tuple[int, ...]
    organic_positions: tuple[int, ...]

    def __post_init__(self) -> None:
        ads = tuple(int(p) for p in self.ad_positions)
        orgs = tuple(int(p) for p in self.organic_positions)
        object.__setattr__(self, "ad_positions", ads)
        object.__setattr__(self, "organic_positions", orgs)
        if any(p < 0 for p in ads + orgs):
            raise ValidationError("positions must be nonnegative")
        if len(set(ads)) != len(ads) or len(set(orgs)) != len(orgs):
            raise ValidationError("duplicate position in layout")
        if set(ads) & set(orgs):
            raise ValidationError("ad and organic positions must be disjoint")
        if len(ads) + len(orgs) != self.total_slots:
            raise ValidationError(
                f"|ad_positions| + |organic_positions| = {len(ads) + len(orgs)} "
                f"!= total_slots = {self.total_slots}"
            )

    @property
    def k_ads(self) -> int:
        return len(self.ad_positions)

    @property
    def k_orgs(self) -> int:
        return len(self.organic_positions)


def default_layout() -> PositionLayout:
    """Six-slot page with ads and organics interleaved (ads at 0, 2, 4)."""
    return PositionLayout(total_slots=6, ad_positions=(0, 2, 4), organic_positions=(1, 3, 5))


@dataclass(frozen=True)
class Impression:
    """One user arrival: a pre-ranked ad candidate list plus ranked organics.

    Attributes:
        impression_id: Opaque identifier.
        context_features: Numeric context vector. The simulator stores the
            page product's subcategory code in element 0.
        ads: Candidate ads, pre-ranked by the upstream (baseline) system.
        organics: Ranked organic items.
        layout: Page layout; requires len(ads) >= k_ads and
            len(organics) >= k_orgs.
    """

    impression_id: str
    context_features: tuple[float, ...]
    ads: tuple[AdCandidate, ...]
    organics: tuple[OrganicItem, ...]
    layout: PositionLayout

    def __post_init__(self) -> None:
        if len(self.ads) < self.layout.k_ads:
            raise ValidationError(
                f"impression {self.impression_id}: {len(self.ads)} ads < "
                f"k_ads = {self.layout.k_ads}"
            )
        if len(self.organics) < self.layout.k_orgs:
            raise ValidationError(
                f"impression {self.impression_id}: {len(self.organics)} organics < "
                f"k_orgs = {self.layout.k_orgs}"
            )
        ad_ids = [a.ad_id for a in self.ads]
        if len(set(ad_ids)) != len(ad_ids):
            raise ValidationError(f"impression {self.impression_id}: duplicate ad_id")
        item_ids = [o.item_id for o in self.organics]
        if len(set(item_ids)) != len(item_ids):
            raise ValidationError(f"impression {self.impression_id}: duplicate item_id")

    @property
    def n_ads(self) -> int:
        return len(self.ads)


@dataclass(frozen=True)
class Slot:
    """One filled page position inside a MixedTuple.

    source_index is the item's index into the impression's candidate list
    (ads or organics depending on kind), recording provenance.
    """

    position: int
    kind: str  # AD or ORGANIC
    item: AdCandidate | OrganicItem
    source_index: int


@dataclass(frozen=True)
class MixedTuple:
    """An ordered arrangement of ads and organics over the page positions.

    Slots are sorted by position; CtrVector entries align with this order.
    All tuples generated for one impression share identical organic slots.
    """

    slots: tuple[Slot, ...]

    def ad_slot_indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots) if s.kind == AD)

    def organic_slot_indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots) if s.kind == ORGANIC)

    def ads(self) -> tuple[AdCandidate, ...]:
        return tuple(s.item for s in self.slots if s.kind == AD)  # type: ignore[misc]

    def organics(self) -> tuple[OrganicItem, ...]:
        return tuple(s.item for s in self.slots if s.kind == ORGANIC)  # type: ignore[misc]

    def ad_source_indices(self) -> tuple[int, ...]:
        return tuple(s.source_index for s in self.slots if s.kind == AD)


# Index templates for "place k of the top n candidates, order mattering".
# The structure depends only on (n, k), so it is cached across impressions.
_INDEX_CACHE: dict[tuple[int, int], tuple[tuple[int, ...], ...]] = {}


def ordered_selections(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All ordered k-selections from range(n), lexicographic by sorted
    subset then by permutation. Deterministic; cached."""
    key = (n, k)
    cached = _INDEX_CACHE.get(key)
    if cached is None:
        cached = tuple(
            perm for combo in combinations(range(n), k) for perm in permutations(combo)
        )
        _INDEX_CACHE[key] = cached
    return cached


def organic_slots(impression: Impression) -> tuple[Slot, ...]:
    """The pinned organic slots: top k_orgs organics in rank order."""
    layout = impression.layout
    return tuple(
        Slot(position=pos, kind=ORGANIC, item=impression.organics[i], source_index=i)
        for i, pos in enumerate(layout.organic_positions)
    )


def build_tuple(
    impression: Impression,
    ad_indices: Sequence[int],
    org_slots: tuple[Slot, ...] | None = None,
    ad_positions: Sequence[int] | None = None,
) -> MixedTuple:
    """Assemble a MixedTuple from candidate indices.

    ad_indices[r] is placed at ad_positions[r]; organics are pinned. Slots
    come out sorted by page position.
    """
    layout = impression.layout
    if ad_positions is None:
        ad_positions = layout.ad_positions
    if org_slots is None:
        org_slots = organic_slots(impression)
    ad_indices = [int(i) for i in ad_indices]
    if len(set(ad_indices)) != len(ad_indices):
        raise ValidationError(f"duplicate ad index in {ad_indices}")
    if any(i < 0 or i >= impression.n_ads for i in ad_indices):
        raise ValidationError(f"ad index out of range in {ad_indices}")
    ad_slots = tuple(
        Slot(position=pos, kind=AD, item=impression.ads[i], source_index=i)
        for i, pos in zip(ad_indices, ad_positions)
    )
    slots = tuple(sorted(ad_slots + org_slots, key=lambda s: s.position))
    return MixedTuple(slots=slots)


def generate_tuples(impression: Impression, n_prime: int) -> list[MixedTuple]:
    """Enumerate every mixed tuple drawing ads from the top n_prime candidates.

    Returns exactly k_ads! * C(n_prime, k_ads) tuples. Enumeration order is
    lexicographic over sorted candidate-index subsets, then permutation
    order within each subset, which fixes downstream tie-breaking.

    Raises:
        ValidationError: if n_prime < k_ads or n_prime > len(impression.ads).
    """
    layout = impression.layout
    k = layout.k_ads
    if n_prime < k:
        raise ValidationError(f"n_prime = {n_prime} < k_ads = {k}")
    if n_prime > impression.n_ads:
        raise ValidationError(f"n_prime = {n_prime} > n_ads = {impression.n_ads}")
    org = organic_slots(impression)
    # Ad slot objects are shared across tuples that place the same candidate
    # at the same position; this keeps enumeration cheap for large |Omega|.
    pool = {
        (i, pos): Slot(position=pos, kind=AD, item=impression.ads[i], source_index=i)
        for i in range(n_prime)
        for pos in layout.ad_positions
    }
    out: list[MixedTuple] = []
    for sel in ordered_selections(n_prime, k):
        ad_slots = tuple(pool[(i, pos)] for i, pos in zip(sel, layout.ad_positions))
        slots = tuple(sorted(ad_slots + org, key=lambda s: s.position))
        out.append(MixedTuple(slots=slots))
    return out


def tuple_space_size(n_prime: int, k_ads: int) -> int:
    """Closed form |Omega| = k_ads! * C(n_prime, k_ads)."""
    return math.factorial(k_ads) * math.comb(n_prime, k_ads)


def lift(metric_treatment: float, metric_baseline: float) -> float:
    """Percent lift of a treatment metric over a baseline metric.

    Raises:
        UndefinedLiftError: if the baseline metric is exactly zero.
    """
    if metric_baseline == 0:
        raise UndefinedLiftError("lift undefined for zero baseline metric")
    return 100.0 * (metric_treatment - metric_baseline) / metric_baseline


# ---------------------------------------------------------------------------
# Impression log I/O (JSON lines, one impression per line)
# ---------------------------------------------------------------------------


def impression_to_dict(imp: Impression) -> dict:
    return {
        "impression_id": imp.impression_id,
        "context_features": list(imp.context_features),
        "ads": [
            {
                "ad_id": a.ad_id,
                "bid_cpc": a.bid_cpc,
                "subcategory": a.subcategory,
                "features": list(a.features),
            }
            for a in imp.ads
        ],
        "organics": [
            {
                "item_id": o.item_id,
                "subcategory": o.subcategory,
                "features": list(o.features),
            }
            for o in imp.organics
        ],
        "layout": {
            "total_slots": imp.layout.total_slots,
            "ad_positions": list(imp.layout.ad_positions),
            "organic_positions": list(imp.layout.organic_positions),
        },
    }


def impression_from_dict(doc: Mapping) -> Impression:
    try:
        layout = PositionLayout(
            total_slots=int(doc["layout"]["total_slots"]),
            ad_positions=tuple(doc["layout"]["ad_positions"]),
            organic_positions=tuple(doc["layout"]["organic_positions"]),
        )
        ads = tuple(
            AdCandidate(
                ad_id=str(a["ad_id"]),
                bid_cpc=float(a["bid_cpc"]),
                subcategory=str(a["subcategory"]),
                features=tuple(float(x) for x in a.get("features", ())),
            )
            for a in doc["ads"]
        )
        organics = tuple(
            OrganicItem(
                item_id=str(o["item_id"]),
                subcategory=str(o["subcategory"]),
                features=tuple(float(x) for x in o.get("features", ())),
            )
            for o in doc["organics"]
        )
        return Impression(
            impression_id=str(doc["impression_id"]),
            context_features=tuple(float(x) for x in doc.get("context_features", ())),
            ads=ads,
            organics=organics,
            layout=layout,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed impression record: {exc!r}") from exc


def write_impression_log(path, impressions: Iterable[Impression]) -> int:
    """Write impressions as JSON lines; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for imp in impressions:
            fh.write(json.dumps(impression_to_dict(imp), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def iter_impression_log(path) -> Iterator[Impression]:
    """Yield impressions from a JSON-lines log.

    Raises:
        ValidationError: naming the 1-based line number of any malformed line.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
            try:
                yield impression_from_dict(doc)
            except ValidationError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc


def read_impression_log(path) -> list[Impression]:
    return list(iter_impression_log(path))
