import numpy as np
import pytest

from demandml.domain import validate_cohort
from demandml.learners.baselines import bdm_predict, BdmBaseline
from demandml.simulate import ConfigError, SimConfig, logistic, price_grid, simulate_cohort


def test_default_cardinalities(cohort):
    assert len(cohort.buy) == 4400
    assert len(cohort.afc) == 10450
    assert len(cohort.wtp) == 1100


def test_same_seed_identical():
    a, ta = simulate_cohort(SimConfig(seed=5, n_subjects=6, n_items=5))
    b, tb = simulate_cohort(SimConfig(seed=5, n_subjects=6, n_items=5))
    assert a == b
    assert np.array_equal(ta.values, tb.values)


def test_different_seed_differs():
    a, _ = simulate_cohort(SimConfig(seed=5, n_subjects=6, n_items=5))
    b, _ = simulate_cohort(SimConfig(seed=6, n_subjects=6, n_items=5))
    assert a != b


@pytest.mark.parametrize(
    "support,expected",
    [
        ("LOW", [25, 50, 75, 100]),
        ("MED", [125, 150, 175, 200]),
        ("HIGH", list(range(225, 576, 25))),
    ],
)
def test_price_grid(support, expected):
    assert price_grid(support) == expected


def test_high_grid_size():
    assert len(price_grid("HIGH")) == 15


def test_unknown_support():
    with pytest.raises(ValueError):
        price_grid("TOP")


def test_noiseless_buy_at_wtp_probability():
    cfg = SimConfig(
        seed=3, n_subjects=20, wtp_bias=0.25, wtp_noise_sd=0.0, subject_hunger_sd=0.0, taste_sd=0.0,
        category_taste_sd=0.0, buy_noise_sd=0.5, gold_bonus=0.0, silver_bonus=0.0,
        item_mean_value=[2.25] * 20,
    )
    c, truth = simulate_cohort(cfg)
    at = (c.buy["price_source"] == "WTP").to_numpy()
    assert np.allclose(truth.buy_prob[at], logistic(0.25 / 0.5))
    assert logistic(0.25 / 0.5) > 0.5


def test_noiseless_unbiased_bdm_exact_off_wtp():
    values = [0.5 + 0.25 * (k % 10) for k in range(20)]
    cfg = SimConfig(
        seed=4, n_subjects=15, wtp_bias=0.0, wtp_noise_sd=0.0, buy_noise_sd=0.0, subject_hunger_sd=0.0,
        taste_sd=0.0, category_taste_sd=0.0, item_mean_value=values,
    )
    c, _ = simulate_cohort(cfg)
    b = c.buy
    wtp = c.buy_wtp_cents()
    pred = bdm_predict(wtp, b["price_cents"], BdmBaseline(0.5))
    off = wtp != b["price_cents"].to_numpy()
    assert off.sum() > 800
    assert np.array_equal(pred[off], b["bought"].to_numpy()[off])


def test_monte_carlo_buy_frequency_at_wtp():
    # 5000 subjects x 20 items = 1e5 trials priced at the stated WTP.
    cfg = SimConfig(
        seed=11, n_subjects=5000, wtp_bias=0.25, wtp_noise_sd=0.0, subject_hunger_sd=0.2, taste_sd=0.2,
        category_taste_sd=0.0, buy_noise_sd=0.5, gold_bonus=0.0, silver_bonus=0.0,
        item_mean_value=[2.5] * 20,
    )
    c, _ = simulate_cohort(cfg)
    at = c.buy["price_source"] == "WTP"
    assert at.sum() == 100_000
    freq = c.buy.loc[at, "bought"].mean()
    assert abs(freq - logistic(0.25 / 0.5)) < 0.03


@pytest.mark.parametrize(
    "kw", [{"n_items": 1}, {"n_subjects": 0}, {"taste_sd": -1.0}, {"wtp_bias": -0.1}, {"choice_temperature": 0.0}]
)
def test_bad_config(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown simulation keys"):
        SimConfig.from_dict({"n_subject": 3})


def test_small_cohorts_valid():
    for n_items in (2, 3, 7):
        c, _ = simulate_cohort(SimConfig(seed=9, n_subjects=3, n_items=n_items))
        assert validate_cohort(c) == []
