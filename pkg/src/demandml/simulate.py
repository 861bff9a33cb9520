"""Synthetic cohorts that follow the lab design (BDM, 2AFC and Buy tasks).

Latent values are additive in an item mean, a subject "hunger" shift, a
subject taste for the item's product category and an idiosyncratic taste
shock, plus the bonus cash on the gold and silver items.
Every observed response is a noisy function of those values:

* stated WTP understates value by ``wtp_bias`` and is rounded to 25 cents,
* 2AFC choices are logit in the value gap, and response times shrink as the
  gap grows,
* Buy decisions are logit in (value - price) with scale ``buy_noise_sd``.

Each subject draws from its own RNG substream, so the cohort does not depend
on generation order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .domain import (
    AFC_COLUMNS,
    BUY_COLUMNS,
    MAX_WTP_CENTS,
    SUPPORT_BOUNDS,
    TICK_CENTS,
    WTP_COLUMNS,
    Cohort,
    Item,
    Subject,
)

PAPER_ITEMS = [
    ("BC", "Cliff Bar Peanut Crunch"),
    ("CM", "Chex Mix"),
    ("CK", "Coke"),
    ("GC", "Godiva Dark Chocolate"),
    ("GB", "Green & Blacks Organic Chocolate"),
    ("HS", "Hershey's Chocolate"),
    ("JP", "Justin's Peanut Butter Cup"),
    ("KN", "KIND Nuts & Spices"),
    ("LC", "Luna Choco Cupcake"),
    ("NG", "Naked Green Machine"),
    ("NM", "Naked Mango"),
    ("NB", "Naturally Bare Banana"),
    ("NV", "Nature Valley Crunchy"),
    ("OP", "Organic Peeled Paradise"),
    ("PC", "Pretzel Crisps Original"),
    ("PO", "Pringles Original"),
    ("RB", "Red Bull"),
    ("SB", "Simply Balanced Blueberries"),
    ("SF", "Starbuck's Frappuccino"),
    ("VC", "Vita Coco"),
]

# Product category per catalogue item: 0 bars and snacks, 1 chocolate,
# 2 drinks, 3 fruit.
DEFAULT_ITEM_CATEGORIES = [0, 0, 2, 1, 1, 1, 1, 0, 1, 2, 2, 3, 0, 3, 0, 0, 2, 3, 2, 2]

# Mean dollar value per catalogue item (same order as PAPER_ITEMS).
DEFAULT_ITEM_VALUES = [
    1.70, 1.55, 1.30, 2.25, 2.05, 1.60, 1.90, 1.85, 1.75, 2.60,
    2.85, 1.45, 1.35, 2.30, 1.50, 1.65, 2.10, 2.00, 2.50, 2.20,
]


class ConfigError(ValueError):
    """Invalid or unknown configuration values."""


@dataclass
class SimConfig:
    n_subjects: int = 55
    n_items: int = 20
    seed: int = 0
    item_mean_value: Optional[list] = None
    subject_hunger_sd: float = 0.6
    taste_sd: float = 0.4
    category_taste_sd: float = 0.8
    wtp_bias: float = 0.25
    wtp_noise_sd: float = 0.5
    choice_temperature: float = 0.6
    buy_noise_sd: float = 0.15
    rt_base_ms: float = 900.0
    rt_slope_ms_per_dollar: float = 120.0
    rt_noise_sd: float = 200.0
    gold_bonus: float = 4.00
    silver_bonus: float = 2.00
    # Linear drift in value over trial index (dollars per trial); off by default.
    wtp_drift_per_trial: float = 0.0
    buy_drift_per_trial: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_items < 2:
            raise ConfigError("n_items must be >= 2")
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be >= 1")
        for name in ("subject_hunger_sd", "taste_sd", "category_taste_sd", "wtp_noise_sd", "buy_noise_sd", "rt_noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.wtp_bias < 0:
            raise ConfigError("wtp_bias must be >= 0")
        if self.choice_temperature <= 0:
            raise ConfigError("choice_temperature must be > 0")
        if self.item_mean_value is not None and len(self.item_mean_value) != self.n_items:
            raise ConfigError("item_mean_value must have n_items entries")

    def item_categories(self) -> np.ndarray:
        if self.n_items == len(DEFAULT_ITEM_CATEGORIES):
            return np.array(DEFAULT_ITEM_CATEGORIES)
        return np.arange(self.n_items) % 4

    def item_values(self) -> np.ndarray:
        if self.item_mean_value is not None:
            return np.asarray(self.item_mean_value, dtype=float)
        if self.n_items == len(DEFAULT_ITEM_VALUES):
            return np.array(DEFAULT_ITEM_VALUES)
        return np.linspace(1.3, 2.85, self.n_items)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown simulation keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class LatentTruth:
    values: np.ndarray  # (n_subjects, n_items), dollars, bonus included
    buy_prob: np.ndarray  # true purchase probability per buy row

    def to_frame(self) -> pd.DataFrame:
        S, J = self.values.shape
        s, j = np.divmod(np.arange(S * J), J)
        return pd.DataFrame(
            {"subject_id": s, "item_id": j, "value_cents": np.rint(self.values.ravel() * 100).astype(np.int64)}
        )


def price_grid(support: str) -> list[int]:
    """Posted-price lattice (cents) for one of the LOW, MED or HIGH supports."""
    try:
        lo, hi = SUPPORT_BOUNDS[support]
    except KeyError:
        raise ValueError(f"unknown support {support!r}") from None
    return list(range(lo, hi + 1, TICK_CENTS))


def logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _prob(gap, scale):
    gap = np.asarray(gap, dtype=float)
    if scale == 0:
        return np.where(gap > 0, 1.0, np.where(gap < 0, 0.0, 0.5))
    return logistic(gap / scale)


def _to_lattice(dollars: np.ndarray) -> np.ndarray:
    cents = np.rint(np.asarray(dollars) * 100 / TICK_CENTS).astype(np.int64) * TICK_CENTS
    return np.clip(cents, 0, MAX_WTP_CENTS)


def _simulate_subject(cfg: SimConfig, i: int, rng: np.random.Generator, item_values: np.ndarray):
    J = cfg.n_items
    gold, silver = rng.choice(J, size=2, replace=False)
    hunger = rng.normal(0.0, cfg.subject_hunger_sd)
    taste = rng.normal(0.0, cfg.taste_sd, size=J)
    cats = cfg.item_categories()
    category = rng.normal(0.0, cfg.category_taste_sd, size=cats.max() + 1)[cats]
    v = np.maximum(item_values + hunger + category + taste, 0.0)
    v[gold] += cfg.gold_bonus
    v[silver] += cfg.silver_bonus

    # BDM task: items shown in random order.
    wtp_order = rng.permutation(J)
    wtp_trial = np.empty(J, dtype=np.int64)
    wtp_trial[wtp_order] = np.arange(1, J + 1)
    stated = v - cfg.wtp_bias + rng.normal(0.0, cfg.wtp_noise_sd, size=J) + cfg.wtp_drift_per_trial * (wtp_trial - 1)
    wtp = _to_lattice(stated)

    # 2AFC task: every unordered pair once, random order and side.
    jj, kk = np.triu_indices(J, k=1)
    n_pairs = len(jj)
    order = rng.permutation(n_pairs)
    jj, kk = jj[order], kk[order]
    swap = rng.random(n_pairs) < 0.5
    left = np.where(swap, kk, jj)
    right = np.where(swap, jj, kk)
    gap = v[left] - v[right]
    pick_left = rng.random(n_pairs) < logistic(gap / cfg.choice_temperature)
    chosen = np.where(pick_left, left, right)
    rt = (
        cfg.rt_base_ms
        + cfg.rt_slope_ms_per_dollar / np.maximum(np.abs(gap), 0.05)
        + rng.normal(0.0, cfg.rt_noise_sd, size=n_pairs)
    )
    rt_ms = np.maximum(np.rint(rt), 200).astype(np.int64)
    afc = np.column_stack(
        [np.full(n_pairs, i), left, right, chosen, rt_ms, np.arange(1, n_pairs + 1)]
    )

    # Buy task: stated WTP plus one draw from each support, shuffled.
    items = np.repeat(np.arange(J), 4)
    prices = np.empty(4 * J, dtype=np.int64)
    sources = np.empty(4 * J, dtype=object)
    grids = [np.array(price_grid(s)) for s in ("LOW", "MED", "HIGH")]
    for j in range(J):
        prices[4 * j] = wtp[j]
        sources[4 * j] = "WTP"
        for k, (name, g) in enumerate(zip(("LOW", "MED", "HIGH"), grids), start=1):
            prices[4 * j + k] = g[rng.integers(len(g))]
            sources[4 * j + k] = name
    order = rng.permutation(4 * J)
    items, prices, sources = items[order], prices[order], sources[order]
    trial = np.arange(1, 4 * J + 1)
    value_at_trial = v[items] + cfg.buy_drift_per_trial * (trial - 1)
    p_buy = _prob(value_at_trial - prices / 100.0, cfg.buy_noise_sd)
    bought = (rng.random(4 * J) < p_buy).astype(np.int64)

    wtp_rows = np.column_stack([np.full(J, i), np.arange(J), wtp, wtp_trial])
    buy_rows = (np.full(4 * J, i), items, prices, bought, sources, trial)
    return (gold, silver), v, wtp_rows, afc, buy_rows, p_buy


def simulate_cohort(cfg: SimConfig) -> tuple[Cohort, LatentTruth]:
    """Draw a full cohort and the latent values that generated it."""
    cfg.validate()
    item_values = cfg.item_values()
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_subjects)
    parts = [
        _simulate_subject(cfg, i, np.random.default_rng(ss), item_values) for i, ss in enumerate(streams)
    ]
    J = cfg.n_items
    if J == len(PAPER_ITEMS):
        items = tuple(Item(j, a, n) for j, (a, n) in enumerate(PAPER_ITEMS))
    else:
        items = tuple(Item(j, f"I{j + 1}", f"Item {j + 1}") for j in range(J))
    subjects = tuple(Subject(i, int(p[0][0]), int(p[0][1])) for i, p in enumerate(parts))
    values = np.vstack([p[1] for p in parts])

    wtp = pd.DataFrame(np.vstack([p[2] for p in parts]), columns=WTP_COLUMNS).astype(np.int64)
    afc = pd.DataFrame(np.vstack([p[3] for p in parts]), columns=AFC_COLUMNS).astype(np.int64)
    cols = [np.concatenate([p[4][k] for p in parts]) for k in range(6)]
    buy = pd.DataFrame(
        {
            "subject_id": cols[0].astype(np.int64),
            "item_id": cols[1].astype(np.int64),
            "price_cents": cols[2].astype(np.int64),
            "bought": cols[3].astype(np.int64),
            "price_source": cols[4].astype(object),
            "trial_index": cols[5].astype(np.int64),
        }
    )[BUY_COLUMNS]
    truth = LatentTruth(values=values, buy_prob=np.concatenate([p[5] for p in parts]))
    return Cohort(items=items, subjects=subjects, wtp=wtp, afc=afc, buy=buy), truth
