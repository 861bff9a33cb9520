import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demandml.learners.baselines import BdmBaseline, bdm_predict, debias_bdm_offset, fit_bdm, prob_buy_predict
from demandml.simulate import SimConfig, simulate_cohort


@pytest.mark.parametrize("price,expected", [(175, 1.0), (225, 0.0), (200, 0.62)])
def test_step_rule(price, expected):
    assert bdm_predict([200], [price], BdmBaseline(0.62))[0] == expected


def test_fit_q():
    b = fit_bdm([100, 100, 150, 150, 200, 300], [100, 50, 150, 300, 200, 300], [1, 0, 1, 1, 0, 1])
    assert b.q == 0.75 and not b.fallback


def test_fit_q_fallback_warns():
    with pytest.warns(RuntimeWarning):
        b = fit_bdm([100, 200], [50, 300], [1, 0])
    assert b.q == 0.5 and b.fallback


def test_prob_buy():
    assert prob_buy_predict([1, 0, 1, 0]) == 0.5
    assert prob_buy_predict([1, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        prob_buy_predict([])


def test_offset_unbiased_noise_free():
    cfg = SimConfig(seed=2, wtp_bias=0.0, wtp_noise_sd=0.0, buy_noise_sd=0.0, subject_hunger_sd=0.0,
                    taste_sd=0.0, category_taste_sd=0.0, item_mean_value=[0.5 + 0.25 * (k % 10) for k in range(20)])
    c, _ = simulate_cohort(cfg)
    b = c.buy
    assert debias_bdm_offset(c.buy_wtp_cents(), b["price_cents"], b["bought"], [0, 25, 50]) == 0


def _exhaustive_offset(surplus, y, offsets):
    errs = {x: np.mean((y - (surplus + x >= 0)) ** 2) for x in offsets}
    best = min(errs.values())
    return min(x for x, e in errs.items() if e == best), errs


def test_offset_with_injected_bias():
    cfg = SimConfig(seed=3, wtp_bias=0.40, wtp_noise_sd=0.1, buy_noise_sd=0.05)
    c, _ = simulate_cohort(cfg)
    b = c.buy
    wtp = c.buy_wtp_cents()
    y = b["bought"].to_numpy().astype(float)
    expected, errs = _exhaustive_offset(wtp - b["price_cents"].to_numpy(), y, [0, 25, 50])
    assert errs[25] < errs[0]
    assert debias_bdm_offset(wtp, b["price_cents"], y, [0, 25, 50]) == expected


def test_offset_ties_go_low():
    # every offset gives the same error
    assert debias_bdm_offset([100], [500], [0], [50, 0, 25]) == 0


def test_offset_validation():
    with pytest.raises(ValueError):
        debias_bdm_offset([100], [100], [1], [10])
    with pytest.raises(ValueError):
        debias_bdm_offset([100], [100], [1], [])


@settings(max_examples=200, deadline=None)
@given(
    wtp=st.integers(0, 23).map(lambda k: 25 * k),
    q=st.floats(0, 1),
    prices=st.lists(st.integers(1, 23).map(lambda k: 25 * k), min_size=2, max_size=20, unique=True),
)
def test_bdm_nonincreasing_in_price(wtp, q, prices):
    prices = sorted(prices)
    p = bdm_predict([wtp] * len(prices), prices, BdmBaseline(q))
    assert np.all(np.diff(p) <= 0)
    assert set(np.unique(p)) <= {0.0, 1.0, q}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 1)), min_size=1, max_size=60))
def test_offset_is_exhaustive_argmin(rows):
    wtp = np.array([25 * r[0] for r in rows])
    price = np.array([25 * r[1] for r in rows])
    y = np.array([r[2] for r in rows], dtype=float)
    offsets = [0, 25, 50, 75]
    expected, _ = _exhaustive_offset(wtp - price, y, offsets)
    assert debias_bdm_offset(wtp, price, y, offsets) == expected
