"""Composite-objective scoring and optimal mixed-tuple selection.

A tuple's score is the sum over its ad slots of

    predicted_ctr * (v_a + bid_cpc)

which prices expected ad engagement (via the platform's virtual bid v_a)
and expected ad revenue in the same currency. Selection scans the candidate
tuple list and keeps the first strict maximizer, so enumeration order is
the tie-break.

optimize_impression takes a vectorized shortcut when the model exposes the
index-template hook (the synthetic predictors do); the shortcut reuses the
same arithmetic sequence per slot and is covered by equality tests against
the materialized path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    AD,
    CtrVector,
    Impression,
    MixedTuple,
    build_tuple,
    generate_tuples,
    ordered_selections,
)
from .errors import ValidationError

_SELECTION_ARRAYS: dict[tuple[int, int], np.ndarray] = {}


def _selection_array(n_prime: int, k: int) -> np.ndarray:
    key = (n_prime, k)
    arr = _SELECTION_ARRAYS.get(key)
    if arr is None:
        sels = ordered_selections(n_prime, k)
        arr = np.array(sels, dtype=np.intp).reshape(len(sels), k)
        _SELECTION_ARRAYS[key] = arr
    return arr


@dataclass(frozen=True)
class VirtualBid:
    """The platform's money-per-click valuation of ad engagement.

    v_a is the scalar used by the deployed objective; extra holds optional
    additional virtual bids (e.g. for an organics objective) so vector
    tuning is expressible.
    """

    v_a: float
    extra: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        values = (self.v_a,) + tuple(self.extra)
        for v in values:
            if not math.isfinite(v):
                raise ValidationError(f"virtual bid must be finite, got {v!r}")
        object.__setattr__(self, "v_a", float(self.v_a))
        object.__setattr__(self, "extra", tuple(float(v) for v in self.extra))

    def as_vector(self) -> np.ndarray:
        return np.array((self.v_a,) + self.extra, dtype=np.float64)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "VirtualBid":
        vec = tuple(float(v) for v in vec)
        if not vec:
            raise ValidationError("virtual bid vector must be nonempty")
        return cls(v_a=vec[0], extra=vec[1:])


@dataclass(frozen=True)
class AllocationResult:
    """The winning tuple with its objective decomposition.

    objective_value = v_ia + v_ir up to additive 1e-12, where v_ia is the
    money-metric ad-CTR term (v_a * ad_ctr_sum) and v_ir the expected ad
    revenue term (sum of bid * ctr over ad slots).
    """

    chosen: MixedTuple
    objective_value: float
    v_ia: float
    v_ir: float
    ad_ctr_sum: float
    org_ctr_sum: float
    ctrs: CtrVector


def bids_of(impression: Impression) -> dict[str, float]:
    return {a.ad_id: a.bid_cpc for a in impression.ads}


def ad_ctr_sum(mixed: MixedTuple, ctrs: Sequence[float]) -> float:
    total = 0.0
    for j, slot in enumerate(mixed.slots):
        if slot.kind == AD:
            total += ctrs[j]
    return total


def org_ctr_sum(mixed: MixedTuple, ctrs: Sequence[float]) -> float:
    total = 0.0
    for j, slot in enumerate(mixed.slots):
        if slot.kind != AD:
            total += ctrs[j]
    return total


def ad_revenue_sum(mixed: MixedTuple, ctrs: Sequence[float], bids: Mapping[str, float]) -> float:
    total = 0.0
    for j, slot in enumerate(mixed.slots):
        if slot.kind == AD:
            total += bids[slot.item.ad_id] * ctrs[j]
    return total


def score_tuple(
    mixed: MixedTuple,
    ctrs: Sequence[float],
    bids: Mapping[str, float],
    v: VirtualBid,
) -> float:
    """Composite objective of one tuple: sum over ad slots of ctr * (v_a + bid).

    Raises:
        ValidationError: if an ad in the tuple has no bid entry, or the CTR
            vector is misaligned with the slots.
    """
    if len(ctrs) != len(mixed.slots):
        raise ValidationError(
            f"ctr vector length {len(ctrs)} != slot count {len(mixed.slots)}"
        )
    total = 0.0
    for j, slot in enumerate(mixed.slots):
        if slot.kind == AD:
            ad_id = slot.item.ad_id
            if ad_id not in bids:
                raise ValidationError(f"no bid for ad {ad_id!r}")
            total += ctrs[j] * (v.v_a + bids[ad_id])
    return total


def _result_for(
    mixed: MixedTuple,
    ctrs: Sequence[float],
    bids: Mapping[str, float],
    v: VirtualBid,
    objective: float,
) -> AllocationResult:
    acs = ad_ctr_sum(mixed, ctrs)
    return AllocationResult(
        chosen=mixed,
        objective_value=objective,
        v_ia=v.v_a * acs,
        v_ir=ad_revenue_sum(mixed, ctrs, bids),
        ad_ctr_sum=acs,
        org_ctr_sum=org_ctr_sum(mixed, ctrs),
        ctrs=tuple(float(x) for x in ctrs),
    )


def rank_listwise(
    tuples: Sequence[MixedTuple],
    impression: Impression,
    model,
    v: VirtualBid,
) -> AllocationResult:
    """Scan the tuple list and return the first strict maximizer of the
    composite objective, with the decomposition fields populated.

    Raises:
        ValidationError: if the tuple list is empty.
    """
    if not tuples:
        raise ValidationError("tuple list must be nonempty")
    bids = bids_of(impression)
    batch = getattr(model, "predict_batch", None)
    if batch is not None:
        matrix = batch(impression, tuples)
        rows = [matrix[i] for i in range(len(tuples))]
    else:
        rows = [model.predict(impression, mt) for mt in tuples]
    best_idx = 0
    best_score = -math.inf
    for i, mt in enumerate(tuples):
        s = score_tuple(mt, rows[i], bids, v)
        if s > best_score:
            best_score = s
            best_idx = i
    winner = tuples[best_idx]
    row = [float(x) for x in rows[best_idx]]
    return _result_for(winner, row, bids, v, float(best_score))


def evaluate_selection(
    impression: Impression,
    model,
    v: VirtualBid,
    ad_indices: Sequence[int],
) -> AllocationResult:
    """Score one explicit ad placement (candidate indices in ad-position
    order) without enumerating alternatives. Same decomposition fields as
    optimize_impression, for the tuple given."""
    fast = getattr(model, "ctr_matrix_for_selections", None)
    winner = build_tuple(impression, ad_indices)
    bids = bids_of(impression)
    if fast is None:
        return rank_listwise([winner], impression, model, v)
    selections = np.array([list(ad_indices)], dtype=np.intp).reshape(1, len(ad_indices))
    matrix = fast(impression, impression.n_ads, selections)
    row = [float(x) for x in matrix[0]]
    objective = score_tuple(winner, row, bids, v)
    return _result_for(winner, row, bids, v, objective)


def optimize_impression(
    impression: Impression,
    model,
    v: VirtualBid,
    n_prime: int,
) -> AllocationResult:
    """Enumerate tuples over the top n_prime candidates and select the best.

    Equivalent to rank_listwise(generate_tuples(...)); uses the model's
    index-template hook when available to avoid materializing the full
    tuple list.
    """
    fast = getattr(model, "ctr_matrix_for_selections", None)
    if fast is None:
        return rank_listwise(generate_tuples(impression, n_prime), impression, model, v)

    layout = impression.layout
    k = layout.k_ads
    if n_prime < k:
        raise ValidationError(f"n_prime = {n_prime} < k_ads = {k}")
    if n_prime > impression.n_ads:
        raise ValidationError(f"n_prime = {n_prime} > n_ads = {impression.n_ads}")
    selections = _selection_array(n_prime, k)
    matrix = fast(impression, n_prime, selections)

    # Ad slots occupy fixed columns of the position-sorted slot order; the
    # accumulation below mirrors score_tuple's per-slot sequence exactly.
    ad_cols: list[tuple[int, int]] = []  # (column, ad rank)
    rank_of = {pos: r for r, pos in enumerate(layout.ad_positions)}
    positions = sorted(layout.ad_positions + layout.organic_positions)
    for col, pos in enumerate(positions):
        if pos in rank_of:
            ad_cols.append((col, rank_of[pos]))
    ad_bids = np.array([a.bid_cpc for a in impression.ads[:n_prime]], dtype=np.float64)

    scores = np.zeros(selections.shape[0], dtype=np.float64)
    for col, rank in ad_cols:
        scores += matrix[:, col] * (v.v_a + ad_bids[selections[:, rank]])
    best_idx = int(np.argmax(scores))  # argmax keeps the first maximizer

    winner = build_tuple(impression, [int(i) for i in selections[best_idx]])
    row = [float(x) for x in matrix[best_idx]]
    bids = bids_of(impression)
    objective = score_tuple(winner, row, bids, v)
    return _result_for(winner, row, bids, v, objective)
