"""Simulation configuration: environment parameters for synthetic epochs."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Mapping

from ..core import PositionLayout
from ..errors import ConfigError, ValidationError


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the synthetic ad/organic environment.

    One config describes: the page layout, the item catalog (subcategories,
    base-CTR and per-subcategory bid distributions), how candidates are
    retrieved per impression, the ground-truth interaction structure, and
    the payment settings. bid_scale / ctr_scale are the distribution-shift
    levers used by the T2 epoch of the shift experiment.
    """

    seed: int = 20201202
    n_impressions: int = 2000
    n_tune: int = 1500

    # page
    k_ads: int = 3
    k_orgs: int = 3
    ad_positions: tuple[int, ...] = (0, 2, 4)
    organic_positions: tuple[int, ...] = (1, 3, 5)
    position_multipliers: tuple[float, ...] = (1.0, 0.92, 0.85, 0.78, 0.72, 0.66)

    # candidate lists
    n_ads: int = 8
    n_organics: int = 6
    n_prime: int = 6

    # catalog
    subcategories: int = 6
    catalog_ads: int = 320
    catalog_organics: int = 320

    # advertiser bids: lognormal with per-subcategory location offsets
    bid_mu: float = 1.0
    bid_sigma: float = 0.45
    bid_mu_spread: float = 0.5
    bid_scale: float = 1.0

    # base click probabilities: clipped lognormal
    ctr_mu: float = -2.3
    ctr_sigma: float = 0.45
    ctr_min: float = 0.01
    ctr_max: float = 0.5
    ctr_scale: float = 1.0

    # retrieval: page-subcategory items are this much likelier to surface
    match_weight: float = 6.0

    # ground-truth joint effects
    gamma_same: float = 0.78
    gamma_cross: float = 1.05

    # payments
    gsp_exponent: float = 1.0
    floor_price: float = 0.0

    # T2 epoch of the distribution-shift experiment
    shift_bid_scale: float = 0.6
    shift_ctr_scale: float = 1.0
    shift_seed_offset: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "ad_positions", tuple(int(p) for p in self.ad_positions))
        object.__setattr__(
            self, "organic_positions", tuple(int(p) for p in self.organic_positions)
        )
        object.__setattr__(
            self, "position_multipliers", tuple(float(m) for m in self.position_multipliers)
        )
        for name in ("n_impressions", "n_tune", "k_ads", "k_orgs", "n_ads", "n_organics",
                     "n_prime", "subcategories", "catalog_ads", "catalog_organics"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if len(self.ad_positions) != self.k_ads:
            raise ValidationError("ad_positions must have k_ads entries")
        if len(self.organic_positions) != self.k_orgs:
            raise ValidationError("organic_positions must have k_orgs entries")
        if not (self.k_ads <= self.n_prime <= self.n_ads):
            raise ValidationError(
                f"need k_ads <= n_prime <= n_ads, got {self.k_ads}/{self.n_prime}/{self.n_ads}"
            )
        if self.catalog_ads < self.n_ads or self.catalog_organics < self.n_organics:
            raise ValidationError("catalog must be at least as large as a candidate list")
        if max(self.ad_positions + self.organic_positions) >= len(self.position_multipliers):
            raise ValidationError("position_multipliers must cover every page position")
        for name in ("bid_sigma", "ctr_sigma", "bid_scale", "ctr_scale", "match_weight",
                     "gamma_same", "gamma_cross", "shift_bid_scale", "shift_ctr_scale"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if not (0 < self.ctr_min < self.ctr_max < 1):
            raise ValidationError("need 0 < ctr_min < ctr_max < 1")
        if self.gsp_exponent < 0 or self.floor_price < 0:
            raise ValidationError("gsp_exponent and floor_price must be >= 0")

    @property
    def total_slots(self) -> int:
        return self.k_ads + self.k_orgs

    def layout(self) -> PositionLayout:
        return PositionLayout(
            total_slots=self.total_slots,
            ad_positions=self.ad_positions,
            organic_positions=self.organic_positions,
        )

    def shifted(self, *, bid_scale: float = 1.0, ctr_scale: float = 1.0,
                seed_offset: int = 1) -> "SimConfig":
        """A follow-up epoch's config: same environment shape, shifted
        bid/CTR distributions, fresh randomness."""
        return dataclasses.replace(
            self,
            seed=self.seed + seed_offset,
            bid_scale=self.bid_scale * bid_scale,
            ctr_scale=self.ctr_scale * ctr_scale,
        )


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}


def config_to_dict(config: SimConfig) -> dict:
    doc = dataclasses.asdict(config)
    for key in ("ad_positions", "organic_positions", "position_multipliers"):
        doc[key] = list(doc[key])
    doc["schema_version"] = 1
    return doc


def config_from_dict(doc: Mapping) -> SimConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("sim config must be a JSON object")
    if doc.get("schema_version") != 1:
        raise ConfigError(f"unsupported sim config schema_version: {doc.get('schema_version')!r}")
    unknown = set(doc) - _CONFIG_FIELDS - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown sim config keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in doc.items() if k != "schema_version"}
    for key in ("ad_positions", "organic_positions", "position_multipliers"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return SimConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"malformed sim config: {exc}") from exc


def load_sim_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    return config_from_dict(doc)


def save_sim_config(path, config: SimConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def subcat_label(code: int) -> str:
    return f"c{code}"


def bid_mu_for_subcat(config: SimConfig, code: int) -> float:
    """Per-subcategory lognormal location: evenly spread around bid_mu."""
    s = config.subcategories
    if s == 1:
        return config.bid_mu
    frac = code / (s - 1) - 0.5
    return config.bid_mu + 2.0 * config.bid_mu_spread * frac


def check_probability(name: str, value: float) -> float:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must be a probability, got {value}")
    return value
