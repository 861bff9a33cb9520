"""Baselines that need no feature matrix: the BDM step rule and a constant rate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..domain import TICK_CENTS


@dataclass(frozen=True)
class BdmBaseline:
    """Step rule with purchase probability ``q`` exactly at the stated WTP."""

    q: float
    fallback: bool = False
    offset_cents: int = 0


def bdm_predict(wtp_cents, price_cents, b: BdmBaseline) -> np.ndarray:
    """1 below the (offset) WTP, ``q`` at it and 0 above it."""
    wtp = np.asarray(wtp_cents, dtype=np.int64) + b.offset_cents
    price = np.asarray(price_cents, dtype=np.int64)
    return np.where(price < wtp, 1.0, np.where(price > wtp, 0.0, b.q))


def fit_bdm(wtp_cents, price_cents, bought) -> BdmBaseline:
    """Estimate ``q`` as the purchase rate on rows priced exactly at WTP.

    Without such rows ``q`` falls back to 0.5 and the result is flagged.
    """
    at = np.asarray(wtp_cents) == np.asarray(price_cents)
    if not at.any():
        warnings.warn("no training rows with price = WTP; using q = 0.5", RuntimeWarning, stacklevel=2)
        return BdmBaseline(0.5, fallback=True)
    return BdmBaseline(float(np.mean(np.asarray(bought)[at])))


def debias_bdm_offset(wtp_cents, price_cents, bought, offsets_cents) -> int:
    """Offset ``x`` minimizing training MSE of the rule buy = 1{WTP - p + x >= 0}.

    Ties go to the smallest offset.
    """
    offsets = sorted(int(x) for x in offsets_cents)
    if not offsets:
        raise ValueError("offsets must be nonempty")
    if any(x % TICK_CENTS for x in offsets):
        raise ValueError("offsets must be multiples of 25 cents")
    surplus = np.asarray(wtp_cents, dtype=np.int64) - np.asarray(price_cents, dtype=np.int64)
    y = np.asarray(bought, dtype=float)
    best, best_err = offsets[0], np.inf
    for x in offsets:
        err = float(np.mean((y - (surplus + x >= 0)) ** 2))
        if err < best_err:
            best, best_err = x, err
    return best


def prob_buy_predict(bought) -> float:
    """The training purchase rate, used as a constant prediction."""
    b = np.asarray(bought, dtype=float)
    if b.size == 0:
        raise ValueError("need at least one training row")
    return float(b.mean())
