"""Individual demand curves and revenue-maximizing posted prices.

A demand curve evaluates a fitted model at every price on the 25-cent
lattice from $0.25 to $5.75 for one (subject, item) pair, holding all other
features at that pair's values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .domain import MAX_WTP_CENTS, TICK_CENTS, Cohort
from .features import FeatureMatrix, build_rows
from .learners import FittedModel

PRICE_GRID = np.arange(TICK_CENTS, MAX_WTP_CENTS + 1, TICK_CENTS, dtype=np.int64)
PRICING_COLUMNS = ["subject_id", "item_id", "wtp_cents", "p_star_cents", "rev_wtp", "rev_star"]


@dataclass(frozen=True)
class DemandCurve:
    subject: int
    item: int
    prices: np.ndarray  # cents
    probs: np.ndarray

    @property
    def revenue(self) -> np.ndarray:
        """Expected revenue in dollars at each grid price."""
        return self.prices / 100.0 * self.probs

    def monotonicity_violations(self) -> int:
        """Number of grid steps where the purchase probability rises with price."""
        return int(np.sum(np.diff(self.probs) > 0))

    def reservation_value(self) -> tuple[float, bool]:
        """Lowest price (cents, interpolated) at which the curve crosses 1/2.

        Returns ``(nan, False)`` when the curve never reaches 1/2 from above
        or below.  The flag is True when the curve crosses 1/2 more than once.
        """
        d = self.probs - 0.5
        crossings = []
        for k in range(len(d) - 1):
            a, b = d[k], d[k + 1]
            if a == 0.0:
                crossings.append(float(self.prices[k]))
            elif a * b < 0.0:
                t = a / (a - b)
                crossings.append(float(self.prices[k] + t * (self.prices[k + 1] - self.prices[k])))
        if len(d) and d[-1] == 0.0:
            crossings.append(float(self.prices[-1]))
        if not crossings:
            return float("nan"), False
        return crossings[0], len(crossings) > 1


def revenue_maximizing_price(curve: DemandCurve) -> tuple[int, float]:
    """Exhaustive argmax of price x probability over the grid; ties go to the lowest price."""
    if len(curve.prices) == 0:
        raise ValueError("empty demand curve")
    rev = curve.revenue
    k = int(np.argmax(rev))  # first maximum = lowest price
    return int(curve.prices[k]), float(rev[k])


def _grid_matrix(model: FittedModel, c: Cohort, subjects, items, prices) -> FeatureMatrix:
    subjects = np.asarray(subjects, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    prices = np.asarray(prices, dtype=np.int64)
    space = model.spec.space
    drop = model.drop_item_fixed_effects
    if space is None:
        names, X, tags = [], np.empty((len(subjects), 0)), np.zeros(0, dtype=bool)
    else:
        names, X, tags = build_rows(c, space, subjects, items, prices, drop)
    meta = pd.DataFrame(
        {
            "subject_id": subjects,
            "item_id": items,
            "price_cents": prices,
            "wtp_cents": c.wtp_matrix[subjects, items],
        }
    )
    return FeatureMatrix(space or "", names, X, None, meta, tags, c.n_subjects, c.n_items, drop)


def _all_pairs(c: Cohort):
    s, j = np.divmod(np.arange(c.n_subjects * c.n_items), c.n_items)
    return list(zip(s.tolist(), j.tolist()))


def demand_curves(model: FittedModel, c: Cohort, pairs=None, prices=PRICE_GRID) -> list[DemandCurve]:
    """Demand curves for ``pairs`` (default: every subject-item pair), built per subject."""
    pairs = _all_pairs(c) if pairs is None else [(int(s), int(j)) for s, j in pairs]
    prices = np.asarray(prices, dtype=np.int64)
    G = len(prices)
    out: list[DemandCurve] = []
    by_subject: dict[int, list[int]] = {}
    for s, j in pairs:
        by_subject.setdefault(s, []).append(j)
    curves = {}
    for s, items in by_subject.items():
        items = np.asarray(items)
        fm = _grid_matrix(model, c, np.full(len(items) * G, s), np.repeat(items, G), np.tile(prices, len(items)))
        probs = model.predict(fm).reshape(len(items), G)
        for k, j in enumerate(items.tolist()):
            curves[(s, j)] = DemandCurve(s, j, prices.copy(), probs[k])
    for key in pairs:
        out.append(curves[key])
    return out


def demand_curve(model: FittedModel, c: Cohort, subject: int, item: int) -> DemandCurve:
    return demand_curves(model, c, [(subject, item)])[0]


def _prob_at(curve: DemandCurve, price: int) -> float:
    if price <= 0:
        return 0.0  # a zero price earns nothing whatever the probability
    k = np.searchsorted(curve.prices, price)
    if k >= len(curve.prices) or curve.prices[k] != price:
        raise ValueError(f"price {price} is not on the curve's grid")
    return float(curve.probs[k])


def revenue_comparison(pricing_model: FittedModel, truth_model: FittedModel, c: Cohort, pairs=None):
    """Expected revenue at p = WTP against p = p* for every pair.

    ``p*`` maximizes revenue on the pricing model's curve.  Both prices are
    then scored on the truth model's curve.  Returns the per-pair table and
    a summary dict.
    """
    pairs = _all_pairs(c) if pairs is None else [(int(s), int(j)) for s, j in pairs]
    price_curves = demand_curves(pricing_model, c, pairs)
    truth_curves = price_curves if truth_model is pricing_model else demand_curves(truth_model, c, pairs)
    rows = []
    for pc, tc in zip(price_curves, truth_curves):
        wtp = int(c.wtp_matrix[pc.subject, pc.item])
        p_star, _ = revenue_maximizing_price(pc)
        rev_wtp = wtp / 100.0 * _prob_at(tc, wtp)
        rev_star = p_star / 100.0 * _prob_at(tc, p_star)
        rows.append([pc.subject, pc.item, wtp, p_star, rev_wtp, rev_star])
    df = pd.DataFrame(rows, columns=PRICING_COLUMNS)
    return df, summarize_pricing(df)


def summarize_pricing(df: pd.DataFrame) -> dict:
    gain = df["rev_star"] - df["rev_wtp"]
    delta = (df["p_star_cents"] - df["wtp_cents"]) / 100.0
    mean_wtp = float(df["rev_wtp"].mean())
    mean_star = float(df["rev_star"].mean())
    if df["p_star_cents"].nunique() > 1 and df["wtp_cents"].nunique() > 1:
        corr = float(np.corrcoef(df["p_star_cents"], df["wtp_cents"])[0, 1])
    else:
        corr = float("nan")
    return {
        "n_pairs": int(len(df)),
        "mean_revenue_wtp": mean_wtp,
        "mean_revenue_star": mean_star,
        "gain_pct": 100.0 * (mean_star / mean_wtp - 1.0) if mean_wtp > 0 else float("nan"),
        "share_positive_gain": float(np.mean(gain > 0)),
        "share_nonnegative_gain": float(np.mean(gain >= 0)),
        "corr_p_star_wtp": corr,
        "mean_delta": float(delta.mean()),
        "mean_abs_delta": float(delta.abs().mean()),
    }
