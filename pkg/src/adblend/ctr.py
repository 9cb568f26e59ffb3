"""Pluggable CTR prediction for mixed tuples.

Two synthetic predictors stand in for the production click models: a
joint-effects ("listwise") predictor whose per-slot probability depends on
every co-displayed item, and an independence ("pointwise") predictor that
sees each item in isolation. Both are deterministic parameterized functions
over the same SyntheticJointModel parameters, so the pointwise predictor is
exactly the listwise one with every interaction factor forced to 1.

Slot j of a tuple receives

    clamp(base_ctr[item_j] * position_multiplier[pos_j]
          * prod_{k != j} interaction(subcat_j, subcat_k), 0, 1)

with the interaction product skipped in pointwise mode. All prediction
funnels through one array core so that single-tuple and batched calls are
bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import AD, ORGANIC, CtrVector, Impression, MixedTuple, PositionLayout
from .errors import ConfigError, ValidationError


@runtime_checkable
class CtrModel(Protocol):
    """Anything that predicts per-slot CTRs for a mixed tuple."""

    def predict(self, impression: Impression, mixed: MixedTuple) -> CtrVector: ...


@dataclass(frozen=True)
class InteractionTable:
    """Pairwise multiplicative interaction factors keyed by subcategory.

    Lookup order for (affected, neighbor): an exact per-pair override,
    then default_same when the subcategories match, else default_cross.
    Factors < 1 express substitution, > 1 complementarity.
    """

    default_same: float = 1.0
    default_cross: float = 1.0
    pairs: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", dict(self.pairs))
        for name, value in (("default_same", self.default_same), ("default_cross", self.default_cross)):
            if not value > 0:
                raise ValidationError(f"interaction {name} must be > 0, got {value}")
        for pair, value in self.pairs.items():
            if not value > 0:
                raise ValidationError(f"interaction factor for {pair} must be > 0, got {value}")
        key = (self.default_same, self.default_cross, tuple(sorted(self.pairs.items())))
        object.__setattr__(self, "cache_key", key)

    def factor(self, affected: str, neighbor: str) -> float:
        override = self.pairs.get((affected, neighbor))
        if override is not None:
            return override
        return self.default_same if affected == neighbor else self.default_cross


@dataclass(frozen=True)
class SyntheticJointModel:
    """Parameterized synthetic CTR model.

    Attributes:
        base_ctr: item id -> base click probability in (0, 1).
        position_multipliers: per-position factor >= 0, indexed by page
            position; must cover every position a tuple uses.
        interaction: pairwise subcategory interaction factors.
    """

    base_ctr: Mapping[str, float]
    position_multipliers: tuple[float, ...]
    interaction: InteractionTable = field(default_factory=InteractionTable)

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_ctr", dict(self.base_ctr))
        object.__setattr__(
            self, "position_multipliers", tuple(float(m) for m in self.position_multipliers)
        )
        for item, p in self.base_ctr.items():
            if not 0.0 < p < 1.0:
                raise ValidationError(f"base_ctr[{item!r}] must be in (0, 1), got {p}")
        for m in self.position_multipliers:
            if m < 0:
                raise ValidationError(f"position multiplier must be >= 0, got {m}")

    def base_for(self, item_id: str) -> float:
        try:
            return self.base_ctr[item_id]
        except KeyError:
            raise ConfigError(f"no base_ctr entry for item {item_id!r}") from None

    def multiplier_for(self, position: int) -> float:
        if position >= len(self.position_multipliers):
            raise ConfigError(
                f"position {position} has no multiplier "
                f"(model covers {len(self.position_multipliers)} positions)"
            )
        return self.position_multipliers[position]


def _ctr_core(
    base: np.ndarray, mult: np.ndarray, codes: np.ndarray, gmatrix: np.ndarray, joint: bool
) -> np.ndarray:
    """Shared CTR arithmetic on (T, m) arrays.

    The neighbor product runs over slots in ascending order with the own
    slot's factor pinned to exactly 1.0, so batched and single-tuple
    evaluations produce identical floating-point results.
    """
    x = base * mult
    if joint:
        m = x.shape[1]
        pair = gmatrix[codes[:, :, None], codes[:, None, :]]  # (T, m, m)
        diag = np.arange(m)
        pair[:, diag, diag] = 1.0
        x *= np.prod(pair, axis=2)
    np.clip(x, 0.0, 1.0, out=x)
    return x


class _SubcatCoder:
    """Interns subcategory labels and materializes the factor matrix.

    Matrices are memoized per interaction table and label sequence, since
    the same small label universe recurs across impressions.
    """

    _cache: dict[tuple, dict[tuple[str, ...], np.ndarray]] = {}

    def __init__(self, interaction: InteractionTable):
        self._interaction = interaction
        self._codes: dict[str, int] = {}

    def code(self, subcat: str) -> int:
        c = self._codes.get(subcat)
        if c is None:
            c = len(self._codes)
            self._codes[subcat] = c
        return c

    def gmatrix(self) -> np.ndarray:
        labels = tuple(self._codes)
        per_table = self._cache.setdefault(self._interaction.cache_key, {})
        g = per_table.get(labels)
        if g is None:
            n = len(labels)
            g = np.empty((max(n, 1), max(n, 1)), dtype=np.float64)
            for i, a in enumerate(labels):
                for j, b in enumerate(labels):
                    g[i, j] = self._interaction.factor(a, b)
            per_table[labels] = g
        return g


def _tuples_to_arrays(model: SyntheticJointModel, tuples: Sequence[MixedTuple]):
    coder = _SubcatCoder(model.interaction)
    t = len(tuples)
    m = len(tuples[0].slots)
    base = np.empty((t, m), dtype=np.float64)
    codes = np.empty((t, m), dtype=np.intp)
    mult = np.empty(m, dtype=np.float64)
    for j, slot in enumerate(tuples[0].slots):
        mult[j] = model.multiplier_for(slot.position)
    for r, mixed in enumerate(tuples):
        if len(mixed.slots) != m:
            raise ValidationError("all tuples in one batch must have equal slot counts")
        for j, slot in enumerate(mixed.slots):
            item_id = slot.item.ad_id if slot.kind == AD else slot.item.item_id
            base[r, j] = model.base_for(item_id)
            codes[r, j] = coder.code(slot.item.subcategory)
            if r > 0 and slot.position != tuples[0].slots[j].position:
                raise ValidationError("all tuples in one batch must share slot positions")
    return base, mult, codes, coder


def predict_ctr_matrix(
    model: SyntheticJointModel,
    impression: Impression,
    tuples: Sequence[MixedTuple],
    joint: bool,
) -> np.ndarray:
    """CTR matrix (one row per tuple, one column per slot) for a batch."""
    if not tuples:
        return np.zeros((0, 0), dtype=np.float64)
    base, mult, codes, coder = _tuples_to_arrays(model, tuples)
    g = coder.gmatrix() if joint else _NO_INTERACTIONS
    return _ctr_core(base, mult, codes, g, joint)


_NO_INTERACTIONS = np.ones((1, 1), dtype=np.float64)


def pointwise_slot_ctrs(model: SyntheticJointModel, mixed: MixedTuple) -> CtrVector:
    """Scalar fast path for one tuple's pointwise CTRs (base * multiplier,
    clamped); identical values to predict_pointwise."""
    out = []
    for slot in mixed.slots:
        item_id = slot.item.ad_id if slot.kind == AD else slot.item.item_id
        x = model.base_for(item_id) * model.multiplier_for(slot.position)
        out.append(min(max(x, 0.0), 1.0))
    return tuple(out)


def predict_listwise(
    model: SyntheticJointModel, impression: Impression, mixed: MixedTuple
) -> CtrVector:
    """Joint-effects CTR prediction for every slot of one tuple."""
    row = predict_ctr_matrix(model, impression, [mixed], joint=True)[0]
    return tuple(float(v) for v in row)


def predict_pointwise(
    model: SyntheticJointModel, impression: Impression, mixed: MixedTuple
) -> CtrVector:
    """Independence-assumption CTR prediction (interactions ignored)."""
    row = predict_ctr_matrix(model, impression, [mixed], joint=False)[0]
    return tuple(float(v) for v in row)


def _slot_plan(layout: PositionLayout) -> tuple[tuple[int, str, int], ...]:
    """(position, kind, rank) per slot, in page-position order."""
    entries = [(pos, AD, r) for r, pos in enumerate(layout.ad_positions)]
    entries += [(pos, ORGANIC, i) for i, pos in enumerate(layout.organic_positions)]
    entries.sort()
    return tuple(entries)


class _ImpressionTables:
    """Static per-impression arrays for the index-template fast path."""

    __slots__ = ("impression", "ad_base", "ad_code", "org_base", "org_code",
                 "mult", "plan", "gmatrix", "cached_selections", "cached_matrix")

    def __init__(self, model: SyntheticJointModel, impression: Impression,
                 n_prime: int, joint: bool):
        self.cached_selections = None
        self.cached_matrix = None
        layout = impression.layout
        coder = _SubcatCoder(model.interaction)
        self.impression = impression
        self.ad_base = np.array([model.base_for(a.ad_id) for a in impression.ads[:n_prime]])
        self.ad_code = np.array(
            [coder.code(a.subcategory) for a in impression.ads[:n_prime]], dtype=np.intp
        )
        k_orgs = layout.k_orgs
        self.org_base = [model.base_for(o.item_id) for o in impression.organics[:k_orgs]]
        self.org_code = [coder.code(o.subcategory) for o in impression.organics[:k_orgs]]
        self.plan = _slot_plan(layout)
        self.mult = np.array([model.multiplier_for(pos) for pos, _, _ in self.plan])
        self.gmatrix = coder.gmatrix() if joint else _NO_INTERACTIONS


_CACHE_LIMIT = 8192


@dataclass(frozen=True)
class _PredictorBase:
    """Shared machinery for the two predictor views over one model."""

    model: SyntheticJointModel

    joint = True

    def predict(self, impression: Impression, mixed: MixedTuple) -> CtrVector:
        row = predict_ctr_matrix(self.model, impression, [mixed], joint=self.joint)[0]
        return tuple(float(v) for v in row)

    def predict_batch(self, impression: Impression, tuples: Sequence[MixedTuple]) -> np.ndarray:
        return predict_ctr_matrix(self.model, impression, tuples, joint=self.joint)

    def _tables(self, impression: Impression, n_prime: int) -> _ImpressionTables:
        # Keyed by object identity; entries keep the impression alive, so an
        # id can never be reused while its entry exists.
        try:
            cache = self._table_cache  # type: ignore[attr-defined]
        except AttributeError:
            cache = {}
            object.__setattr__(self, "_table_cache", cache)
        key = (id(impression), n_prime)
        entry = cache.get(key)
        if entry is None or entry.impression is not impression:
            if len(cache) >= _CACHE_LIMIT:
                cache.clear()
            entry = _ImpressionTables(self.model, impression, n_prime, self.joint)
            cache[key] = entry
        return entry

    def ctr_matrix_for_selections(
        self, impression: Impression, n_prime: int, selections: np.ndarray
    ) -> np.ndarray:
        """Fast path: CTR matrix for index-template tuples.

        selections is a (T, k_ads) array of candidate indices; row r of the
        result corresponds to placing those ads at the layout's ad positions
        in order, with the usual pinned organics. Bit-identical to
        predict_batch over the materialized tuples.

        The matrix is virtual-bid independent; when the same selections
        object recurs for an impression (the tuner sweeps bids over a fixed
        template) the cached matrix is returned.
        """
        tab = self._tables(impression, n_prime)
        if tab.cached_selections is selections:
            return tab.cached_matrix
        t = selections.shape[0]
        m = len(tab.plan)
        base = np.empty((t, m), dtype=np.float64)
        codes = np.empty((t, m), dtype=np.intp)
        for j, (_pos, kind, rank) in enumerate(tab.plan):
            if kind == AD:
                sel = selections[:, rank]
                base[:, j] = tab.ad_base[sel]
                codes[:, j] = tab.ad_code[sel]
            else:
                base[:, j] = tab.org_base[rank]
                codes[:, j] = tab.org_code[rank]
        matrix = _ctr_core(base, tab.mult, codes, tab.gmatrix, self.joint)
        matrix.flags.writeable = False
        tab.cached_selections = selections
        tab.cached_matrix = matrix
        return matrix


class ListwisePredictor(_PredictorBase):
    """Joint-effects predictor view over a SyntheticJointModel."""

    joint = True


class PointwisePredictor(_PredictorBase):
    """Independence predictor view over the same parameters."""

    joint = False


# ---------------------------------------------------------------------------
# Model configuration document
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"schema_version", "base_ctr", "position_multipliers", "interaction"}
_INTERACTION_KEYS = {"default_same", "default_cross", "pairs"}


def model_to_dict(model: SyntheticJointModel) -> dict:
    pairs: dict[str, dict[str, float]] = {}
    for (a, b), f in model.interaction.pairs.items():
        pairs.setdefault(a, {})[b] = f
    return {
        "schema_version": 1,
        "base_ctr": dict(model.base_ctr),
        "position_multipliers": list(model.position_multipliers),
        "interaction": {
            "default_same": model.interaction.default_same,
            "default_cross": model.interaction.default_cross,
            "pairs": pairs,
        },
    }


def model_from_dict(doc: Mapping) -> SyntheticJointModel:
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    if doc.get("schema_version") != 1:
        raise ConfigError(f"unsupported model schema_version: {doc.get('schema_version')!r}")
    try:
        inter_doc = doc.get("interaction", {})
        unknown = set(inter_doc) - _INTERACTION_KEYS
        if unknown:
            raise ConfigError(f"unknown interaction keys: {sorted(unknown)}")
        pairs = {
            (a, b): float(f)
            for a, row in inter_doc.get("pairs", {}).items()
            for b, f in row.items()
        }
        interaction = InteractionTable(
            default_same=float(inter_doc.get("default_same", 1.0)),
            default_cross=float(inter_doc.get("default_cross", 1.0)),
            pairs=pairs,
        )
        return SyntheticJointModel(
            base_ctr={str(k): float(v) for k, v in doc["base_ctr"].items()},
            position_multipliers=tuple(float(x) for x in doc["position_multipliers"]),
            interaction=interaction,
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"malformed model config: {exc!r}") from exc


def save_model_config(path, model: SyntheticJointModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model_config(path) -> SyntheticJointModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    return model_from_dict(doc)
