"""Synthetic CTR model: formulas, clamps, equivalences, and config I/O."""

import numpy as np
import pytest

from adblend import (
    AdCandidate,
    ConfigError,
    Impression,
    InteractionTable,
    ListwisePredictor,
    OrganicItem,
    PointwisePredictor,
    PositionLayout,
    SyntheticJointModel,
    ValidationError,
    generate_tuples,
    predict_listwise,
    predict_pointwise,
)
from adblend.core import build_tuple
from adblend.ctr import load_model_config, model_from_dict, model_to_dict, save_model_config

from helpers import make_instance


def two_ad_instance(base_a=0.10, base_b=0.10, subcat_b="x", gamma_same=0.9, mults=(1.0, 1.0)):
    layout = PositionLayout(total_slots=2, ad_positions=(0, 1), organic_positions=())
    ads = (
        AdCandidate(ad_id="a", bid_cpc=1.0, subcategory="x"),
        AdCandidate(ad_id="b", bid_cpc=2.0, subcategory=subcat_b),
    )
    imp = Impression(
        impression_id="i", context_features=(), ads=ads, organics=(), layout=layout
    )
    model = SyntheticJointModel(
        base_ctr={"a": base_a, "b": base_b},
        position_multipliers=mults,
        interaction=InteractionTable(default_same=gamma_same, default_cross=1.0),
    )
    return imp, model


def test_independence_case_returns_base_ctrs():
    rng = np.random.default_rng(10)
    imp, model = make_instance(rng, gamma_same=1.0, gamma_cross=1.0, flat_multipliers=True)
    for mixed in generate_tuples(imp, imp.n_ads):
        ctrs = predict_listwise(model, imp, mixed)
        for j, slot in enumerate(mixed.slots):
            item_id = slot.item.ad_id if slot.kind == "ad" else slot.item.item_id
            assert ctrs[j] == model.base_ctr[item_id]


def test_same_subcategory_pair_hand_value():
    imp, model = two_ad_instance()
    mixed = build_tuple(imp, [0, 1])
    ctrs = predict_listwise(model, imp, mixed)
    # 0.10 * 1.0 * 0.9 per slot
    assert ctrs == pytest.approx((0.09, 0.09), abs=1e-15)


def test_clamp_at_one():
    layout = PositionLayout(total_slots=4, ad_positions=(0, 1, 2, 3), organic_positions=())
    ads = tuple(AdCandidate(ad_id=f"a{i}", bid_cpc=1.0, subcategory="x") for i in range(4))
    imp = Impression(impression_id="i", context_features=(), ads=ads, organics=(), layout=layout)
    model = SyntheticJointModel(
        base_ctr={f"a{i}": 0.9 for i in range(4)},
        position_multipliers=(1.0, 1.0, 1.0, 1.0),
        interaction=InteractionTable(default_same=1.3, default_cross=1.0),
    )
    mixed = build_tuple(imp, [0, 1, 2, 3])
    ctrs = predict_listwise(model, imp, mixed)  # 0.9 * 1.3^3 = 1.977 -> clamp
    assert ctrs == (1.0, 1.0, 1.0, 1.0)


def test_pointwise_examples():
    imp, model = two_ad_instance(base_a=0.2, mults=(0.5, 1.0))
    mixed = build_tuple(imp, [0, 1])
    ctrs = predict_pointwise(model, imp, mixed)
    assert ctrs[0] == pytest.approx(0.10, abs=1e-15)
    # pointwise ignores interactions entirely
    imp2, model2 = two_ad_instance(gamma_same=0.5)
    mixed2 = build_tuple(imp2, [0, 1])
    assert predict_pointwise(model2, imp2, mixed2) == pytest.approx((0.10, 0.10), abs=1e-15)


def test_listwise_equals_pointwise_when_factors_one():
    rng = np.random.default_rng(11)
    for _ in range(20):
        imp, model = make_instance(rng, gamma_same=1.0, gamma_cross=1.0)
        for mixed in generate_tuples(imp, min(3, imp.n_ads)):
            lw = predict_listwise(model, imp, mixed)
            pw = predict_pointwise(model, imp, mixed)
            assert lw == pw


def test_outputs_in_unit_interval():
    rng = np.random.default_rng(12)
    for _ in range(30):
        imp, model = make_instance(rng, gamma_cross=1.4)
        for mixed in generate_tuples(imp, min(3, imp.n_ads)):
            for x in predict_listwise(model, imp, mixed):
                assert 0.0 <= x <= 1.0


def test_own_slot_invariant_to_permuting_others_on_equal_multipliers():
    layout = PositionLayout(total_slots=3, ad_positions=(0, 1, 2), organic_positions=())
    ads = (
        AdCandidate(ad_id="a", bid_cpc=1.0, subcategory="x"),
        AdCandidate(ad_id="b", bid_cpc=1.0, subcategory="y"),
        AdCandidate(ad_id="c", bid_cpc=1.0, subcategory="z"),
    )
    imp = Impression(impression_id="i", context_features=(), ads=ads, organics=(), layout=layout)
    model = SyntheticJointModel(
        base_ctr={"a": 0.2, "b": 0.3, "c": 0.1},
        position_multipliers=(0.8, 0.8, 0.8),
        interaction=InteractionTable(
            default_same=0.9, default_cross=1.0, pairs={("x", "y"): 1.2, ("x", "z"): 0.7}
        ),
    )
    # ad 'a' stays at position 0 while b and c swap
    ctrs1 = predict_listwise(model, imp, build_tuple(imp, [0, 1, 2]))
    ctrs2 = predict_listwise(model, imp, build_tuple(imp, [0, 2, 1]))
    assert ctrs1[0] == ctrs2[0]


def test_batch_matches_single_bitwise():
    rng = np.random.default_rng(13)
    imp, model = make_instance(rng, n_ads=5, k_ads=3, k_orgs=2)
    tuples = generate_tuples(imp, 4)
    lp = ListwisePredictor(model)
    matrix = lp.predict_batch(imp, tuples)
    for i, mixed in enumerate(tuples):
        single = lp.predict(imp, mixed)
        assert tuple(float(x) for x in matrix[i]) == single


def test_fast_selection_path_matches_batch_bitwise():
    rng = np.random.default_rng(14)
    for _ in range(10):
        imp, model = make_instance(rng, n_ads=6, k_ads=3, k_orgs=2)
        tuples = generate_tuples(imp, 5)
        for predictor in (ListwisePredictor(model), PointwisePredictor(model)):
            matrix = predictor.predict_batch(imp, tuples)
            selections = np.array([
                tuple(
                    {s.position: s.source_index for s in t.slots if s.kind == "ad"}[p]
                    for p in imp.layout.ad_positions
                )
                for t in tuples
            ], dtype=np.intp)
            fast = predictor.ctr_matrix_for_selections(imp, 5, selections)
            assert np.array_equal(matrix, fast)


def test_missing_base_ctr_is_config_error():
    imp, model = two_ad_instance()
    bad = SyntheticJointModel(
        base_ctr={"a": 0.1},  # no entry for "b"
        position_multipliers=(1.0, 1.0),
        interaction=model.interaction,
    )
    with pytest.raises(ConfigError):
        predict_listwise(bad, imp, build_tuple(imp, [0, 1]))


def test_model_validation():
    with pytest.raises(ValidationError):
        SyntheticJointModel(base_ctr={"a": 0.0}, position_multipliers=(1.0,))
    with pytest.raises(ValidationError):
        SyntheticJointModel(base_ctr={"a": 1.0}, position_multipliers=(1.0,))
    with pytest.raises(ValidationError):
        SyntheticJointModel(base_ctr={"a": 0.5}, position_multipliers=(-0.1,))
    with pytest.raises(ValidationError):
        InteractionTable(default_same=0.0)


def test_model_config_roundtrip(tmp_path):
    model = SyntheticJointModel(
        base_ctr={"a": 0.12, "b": 0.3},
        position_multipliers=(1.0, 0.8),
        interaction=InteractionTable(
            default_same=0.85, default_cross=1.05, pairs={("x", "y"): 1.3}
        ),
    )
    path = tmp_path / "model.json"
    save_model_config(path, model)
    back = load_model_config(path)
    assert back == model


def test_model_config_rejects_unknown_keys():
    doc = model_to_dict(
        SyntheticJointModel(base_ctr={"a": 0.1}, position_multipliers=(1.0,))
    )
    doc["surprise"] = 1
    with pytest.raises(ConfigError):
        model_from_dict(doc)
