import math

import numpy as np
import pytest

from demandml import evaluation as ev
from demandml.evaluation import (
    EvalReport,
    SplitSpec,
    between_item_split,
    between_subject_split,
    demand_trend_diagnostics,
    evaluate,
    purchase_quintiles,
    sample_size_sweep,
    stratified_holdout_split,
    surplus_binned_mse,
)
from demandml.features import assemble_space
from demandml.learners import fit_model
from demandml.learners.linear import FitError
from demandml.simulate import SimConfig, simulate_cohort

CHEAP = ["bdm", "probbuy", "logit_surplus"]


def test_quintile_holdout(cohort):
    train, test = stratified_holdout_split(cohort, 440, np.random.default_rng(0))
    assert len(test) == 440 and len(train) == 3960
    assert not set(train) & set(test)
    assert len(set(train) | set(test)) == 4400
    bins = purchase_quintiles(cohort)[cohort.buy["subject_id"].to_numpy()[test]]
    assert np.bincount(bins, minlength=5).tolist() == [88] * 5


def test_quintiles_balanced(cohort):
    assert np.bincount(purchase_quintiles(cohort)).tolist() == [11] * 5


def test_split_reproducible(cohort):
    a = stratified_holdout_split(cohort, 440, np.random.default_rng(3))
    b = stratified_holdout_split(cohort, 440, np.random.default_rng(3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_holdout_validation(small_cohort):
    with pytest.raises(ValueError, match="smaller"):
        stratified_holdout_split(small_cohort, len(small_cohort.buy))
    with pytest.raises(ValueError, match="divisible"):
        stratified_holdout_split(small_cohort, 12)


def test_between_subject(cohort):
    train, test = between_subject_split(cohort, np.random.default_rng(1))
    assert len(test) == 400
    held = set(cohort.buy["subject_id"].to_numpy()[test])
    assert len(held) == 5
    assert not held & set(cohort.buy["subject_id"].to_numpy()[train])


def test_between_item(cohort):
    train, test = between_item_split(cohort, np.random.default_rng(1))
    assert len(test) == 440
    held = set(cohort.buy["item_id"].to_numpy()[test])
    assert len(held) == 2
    assert not held & set(cohort.buy["item_id"].to_numpy()[train])


def test_split_spec_validation():
    with pytest.raises(ValueError, match="protocol"):
        SplitSpec("leave_one_out")
    with pytest.raises(ValueError):
        SplitSpec(n_repeats=0)
    assert SplitSpec("between_item").drop_item_fixed_effects
    assert SplitSpec("between_subject").size == 5


def test_report_standard_error():
    rep = EvalReport()
    vals = [0.1, 0.12, 0.09, 0.11]
    for v in vals:
        rep.add(("rf", "W", "within_between", 3960, "mse"), v)
    row = rep.summary().iloc[0]
    assert row["mean"] == pytest.approx(np.mean(vals))
    assert row["stderr"] == pytest.approx(np.std(vals, ddof=1) / 2.0)
    assert row["n_repeats"] == 4
    assert rep.mean_se("rf(W)") == pytest.approx((row["mean"], row["stderr"]))
    # repeat order does not matter
    rev = EvalReport()
    for v in reversed(vals):
        rev.add(("rf", "W", "within_between", 3960, "mse"), v)
    assert rev.summary()["mean"].iloc[0] == pytest.approx(row["mean"], abs=1e-15)


def test_probbuy_variance_identity(cohort):
    split = SplitSpec(n_repeats=3, seed=2)
    rep = evaluate(cohort, ["probbuy"], split, metrics=["mse"])
    fm = assemble_space(cohort, "C")
    for r, got in enumerate(rep.get("probbuy")):
        rng, _, _ = ev.repeat_streams(2, r)
        train, test = ev.make_split(cohort, split, rng)
        rt = fm.y[test].mean()
        c = fm.y[train].mean()
        assert got == pytest.approx(rt * (1 - rt) + (c - rt) ** 2, abs=1e-14)


def test_duplicate_models_identical(cohort):
    rep = evaluate(cohort, ["logit_surplus", "bdm"], SplitSpec(n_repeats=2))
    dup = evaluate(cohort, ["logit_surplus", "bdm", "logit_surplus"], SplitSpec(n_repeats=2))
    assert rep.summary().equals(dup.summary())
    assert (dup.summary()["n_repeats"] == 2).all()


def test_threads_identical(cohort):
    models = CHEAP + ["rf(C)"]
    params = {"rf": {"n_trees": 10, "mtry": [12], "min_leaf": [5]}}
    a = evaluate(cohort, models, SplitSpec(n_repeats=3), params=params, n_jobs=1).summary()
    b = evaluate(cohort, models, SplitSpec(n_repeats=3), params=params, n_jobs=3).summary()
    assert a.equals(b)


def test_sweep_full_size_equals_evaluate(cohort):
    params = {"rf": {"n_trees": 10, "mtry": [12], "min_leaf": [5]}}
    models = CHEAP + ["rf(C)"]
    split = SplitSpec(n_repeats=2, seed=5)
    plain = evaluate(cohort, models, split, params=params)
    sweep = sample_size_sweep(cohort, models, split, sizes=[600, 3960], params=params)
    for m in models:
        for metric in ev.METRICS:
            assert np.array_equal(plain.get(m, metric), sweep.get(m, metric, size=3960))
    assert len(sweep.get("bdm", size=600)) == 2


def test_sweep_size_too_large(cohort):
    with pytest.raises(ValueError, match="exceeds"):
        sample_size_sweep(cohort, ["bdm"], SplitSpec(n_repeats=1), sizes=[4000])


def test_between_item_matrices_have_no_item_columns(cohort):
    mats = ev._matrices(cohort, [ev.parse_spec(s) for s in ["rf(WOA)", "logit(W)"]], True)
    for fm in mats.values():
        assert not fm.item_indexed.any()


def test_unknown_metric(cohort):
    with pytest.raises(ValueError, match="unknown metrics"):
        evaluate(cohort, ["bdm"], SplitSpec(n_repeats=1), metrics=["rmse"])


def test_fit_errors_recorded(cohort, monkeypatch):
    real = ev.fit_model

    def flaky(spec, fm, rows, **kw):
        if spec.kind == "logit_surplus":
            raise FitError("outcome has a single class")
        return real(spec, fm, rows, **kw)

    monkeypatch.setattr(ev, "fit_model", flaky)
    rep = evaluate(cohort, ["bdm", "logit_surplus"], SplitSpec(n_repeats=2))
    assert np.all(np.isnan(rep.get("logit_surplus")))
    assert np.all(np.isfinite(rep.get("bdm")))
    assert len(rep.errors) == 2 and "single class" in rep.errors[0]
    row = rep.summary().query("model == 'logit_surplus' and metric == 'mse'").iloc[0]
    assert row["n_repeats"] == 0 and math.isnan(row["mean"])


def test_surplus_bins_bdm_identity(cohort):
    fm = assemble_space(cohort, "C")
    rows = np.arange(fm.n_rows)
    m = fit_model("bdm", fm)
    q = m.estimator.q
    df = surplus_binned_mse(fm, rows, {"bdm": m.predict(fm)})
    for _, r in df.iterrows():
        f = r["purchase_freq"]
        if r["surplus_cents"] > 0:
            expected = 1 - f
        elif r["surplus_cents"] < 0:
            expected = f
        else:
            expected = f * (1 - q) ** 2 + (1 - f) * q**2
        assert r["mse"] == pytest.approx(expected, abs=1e-12)
    assert df["n"].sum() == fm.n_rows


def test_surplus_bins_peak_below_zero():
    c, _ = simulate_cohort(SimConfig(seed=4, n_subjects=400, wtp_bias=0.4, wtp_noise_sd=0.1, buy_noise_sd=0.1))
    fm = assemble_space(c, "C")
    m = fit_model("bdm", fm)
    df = surplus_binned_mse(fm, np.arange(fm.n_rows), {"bdm": m.predict(fm)})
    df = df[df["n"] >= 30]
    peak = int(df.loc[df["mse"].idxmax(), "surplus_cents"])
    assert peak in (-25, -50)
    assert peak < 0


def test_trend_recovery():
    coefs = []
    for seed in range(40):
        c, _ = simulate_cohort(SimConfig(seed=seed, wtp_drift_per_trial=0.01))
        coefs.append(demand_trend_diagnostics(c)[0].coef)
    assert abs(np.mean(coefs) - 0.01) < 0.003


def test_no_trend_without_drift():
    for seed in range(5):
        c, _ = simulate_cohort(SimConfig(seed=seed))
        wtp, buy = demand_trend_diagnostics(c)
        assert abs(wtp.coef / wtp.stderr) < 3
        assert abs(buy.coef / buy.stderr) < 3
        assert 0 <= wtp.p_value <= 1 and 0 <= buy.p_value <= 1


def test_buy_trend_sign():
    c, _ = simulate_cohort(SimConfig(seed=0, n_subjects=200, buy_drift_per_trial=-0.02))
    _, buy = demand_trend_diagnostics(c)
    assert buy.coef < 0 and buy.p_value < 0.01
