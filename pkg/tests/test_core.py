"""Domain types, tuple enumeration, lift, and log I/O."""

import json
import math

import numpy as np
import pytest

from adblend import (
    AdCandidate,
    Impression,
    OrganicItem,
    PositionLayout,
    UndefinedLiftError,
    ValidationError,
    generate_tuples,
    lift,
    read_impression_log,
    tuple_space_size,
    write_impression_log,
)
from adblend.core import impression_from_dict, impression_to_dict

from helpers import make_instance


def test_tuple_count_examples():
    rng = np.random.default_rng(1)
    imp, _ = make_instance(rng, n_ads=5, k_ads=2)
    assert len(generate_tuples(imp, 3)) == 6  # 2! * C(3,2)
    assert len(generate_tuples(imp, 2)) == 2  # the two orderings


def test_no_ads_single_organics_only_tuple():
    rng = np.random.default_rng(2)
    imp, _ = make_instance(rng, n_ads=1, k_ads=0, k_orgs=3, n_organics=4)
    tuples = generate_tuples(imp, 0)
    assert len(tuples) == 1
    assert all(s.kind == "organic" for s in tuples[0].slots)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_tuple_count_closed_form(k):
    rng = np.random.default_rng(3)
    for n_prime in range(k, 9):
        imp, _ = make_instance(rng, n_ads=8, k_ads=k, k_orgs=1, n_organics=1)
        got = len(generate_tuples(imp, n_prime))
        assert got == tuple_space_size(n_prime, k)
        assert got == math.factorial(k) * math.comb(n_prime, k)


def test_organic_slots_identical_across_tuples():
    rng = np.random.default_rng(4)
    imp, _ = make_instance(rng, n_ads=5, k_ads=2, k_orgs=3, n_organics=5)
    tuples = generate_tuples(imp, 4)
    reference = [s for s in tuples[0].slots if s.kind == "organic"]
    for mixed in tuples:
        assert [s for s in mixed.slots if s.kind == "organic"] == reference
    # top k_orgs organics in rank order
    assert [s.item.item_id for s in reference] == ["o0", "o1", "o2"]


def test_generate_tuples_deterministic_and_ordered():
    rng = np.random.default_rng(5)
    imp, _ = make_instance(rng, n_ads=4, k_ads=2)
    a = generate_tuples(imp, 3)
    b = generate_tuples(imp, 3)
    assert a == b
    # lexicographic subsets, then permutations within each subset
    expected_selections = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]
    got_selections = []
    for t in a:
        by_position = {s.position: s.source_index for s in t.slots if s.kind == "ad"}
        got_selections.append(tuple(by_position[p] for p in imp.layout.ad_positions))
    assert got_selections == expected_selections


def test_generate_tuples_argument_errors():
    rng = np.random.default_rng(6)
    imp, _ = make_instance(rng, n_ads=4, k_ads=2)
    with pytest.raises(ValidationError):
        generate_tuples(imp, 1)  # below k_ads
    with pytest.raises(ValidationError):
        generate_tuples(imp, 5)  # above n_ads


def test_lift_examples():
    assert abs(lift(1.06, 1.00) - 6.0) < 1e-12
    assert lift(3.5, 3.5) == 0.0
    assert abs(lift(0.5, 1.0) - (-50.0)) < 1e-12
    with pytest.raises(UndefinedLiftError):
        lift(1.0, 0.0)


def test_type_invariants():
    with pytest.raises(ValidationError):
        AdCandidate(ad_id="a", bid_cpc=0.0, subcategory="s")
    with pytest.raises(ValidationError):
        AdCandidate(ad_id="a", bid_cpc=-1.0, subcategory="s")
    with pytest.raises(ValidationError):
        PositionLayout(total_slots=3, ad_positions=(0, 1), organic_positions=(1,))
    with pytest.raises(ValidationError):
        PositionLayout(total_slots=4, ad_positions=(0, 1), organic_positions=(2,))
    layout = PositionLayout(total_slots=2, ad_positions=(0,), organic_positions=(1,))
    dup = (
        AdCandidate(ad_id="a", bid_cpc=1.0, subcategory="s"),
        AdCandidate(ad_id="a", bid_cpc=2.0, subcategory="s"),
    )
    org = (OrganicItem(item_id="o", subcategory="s"),)
    with pytest.raises(ValidationError):
        Impression(impression_id="i", context_features=(), ads=dup, organics=org, layout=layout)
    with pytest.raises(ValidationError):
        Impression(impression_id="i", context_features=(), ads=dup[:1], organics=(), layout=layout)


def test_log_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    imps = []
    for i in range(5):
        imp, _ = make_instance(rng, n_ads=4, k_ads=2)
        imps.append(
            Impression(
                impression_id=f"imp-{i}",
                context_features=imp.context_features,
                ads=imp.ads,
                organics=imp.organics,
                layout=imp.layout,
            )
        )
    path = tmp_path / "log.jsonl"
    assert write_impression_log(path, imps) == 5
    back = read_impression_log(path)
    assert back == imps


def test_log_field_names_exact(tmp_path):
    rng = np.random.default_rng(8)
    imp, _ = make_instance(rng)
    doc = impression_to_dict(imp)
    assert set(doc) == {"impression_id", "context_features", "ads", "organics", "layout"}
    assert set(doc["ads"][0]) == {"ad_id", "bid_cpc", "subcategory", "features"}
    assert set(doc["organics"][0]) == {"item_id", "subcategory", "features"}
    assert set(doc["layout"]) == {"total_slots", "ad_positions", "organic_positions"}
    assert impression_from_dict(json.loads(json.dumps(doc))) == imp


def test_log_malformed_line_names_line_number(tmp_path):
    rng = np.random.default_rng(9)
    imp, _ = make_instance(rng)
    path = tmp_path / "bad.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps(impression_to_dict(imp)) + "\n")
        fh.write("{not json\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_impression_log(path)
