"""Acceptance checks runnable as ``demandml acceptance --seed S``.

Each check returns a :class:`CriterionResult`; :func:`run_acceptance`
prints one PASS/FAIL line per check.  ``quick=True`` shrinks repeats and
seeds for smoke runs; its verdicts are not the acceptance verdicts.
"""

from __future__ import annotations

import contextlib
import io
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .features import SPACES, assemble_space, space_size
from .learners import fit_model
from .learners.baselines import debias_bdm_offset
from .learners.forest import fit_random_forest
from .learners.linear import fit_lasso, fit_logit
from .simulate import SimConfig, simulate_cohort

EXPECTED_COLUMNS = {"C": 149, "W": 225, "WO": 625, "A": 360, "AR": 447, "WA": 436, "WOA": 836, "WOAR": 923}
# Forest size used inside the repeated evaluations (the library default is 500).
ACCEPTANCE_TREES = 100


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} [{verdict}] {self.name}: {self.detail} ({self.seconds:.0f}s)"


def _gap_ok(hi, lo, k=2.0):
    """(mean_hi - mean_lo, combined se, passed) for the claim hi > lo by k combined SEs."""
    gap = hi[0] - lo[0]
    se = math.hypot(hi[1], lo[1])
    return gap, se, gap > k * se


# -- 1 ----------------------------------------------------------------------


def check_feature_counts(seed: int = 0) -> CriterionResult:
    c, _ = simulate_cohort(SimConfig(seed=seed))
    got = {s: len(assemble_space(c, s).column_names) for s in SPACES}
    formula = {s: space_size(s, c.n_subjects, c.n_items) for s in SPACES}
    ok = got == EXPECTED_COLUMNS and formula == EXPECTED_COLUMNS
    detail = " ".join(f"{s}={got[s]}" for s in SPACES)
    return CriterionResult(1, "feature-count exactness", ok, detail)


# -- 2 ----------------------------------------------------------------------


def brute_mse(p, y):
    return sum((float(b) - float(a)) ** 2 for a, b in zip(p, y)) / len(y)


def brute_deviance(p, y):
    total = 0.0
    for a, b in zip(p, y):
        a = min(max(float(a), 1e-12), 1 - 1e-12)
        total -= math.log(a) if b == 1 else math.log(1 - a)
    return total


def brute_auc(p, y):
    pos = [a for a, b in zip(p, y) if b == 1]
    neg = [a for a, b in zip(p, y) if b == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def check_metric_oracles(seed: int = 0, n_instances: int = 200) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = {"mse": 0.0, "deviance": 0.0}
    auc_mismatch = 0
    for _ in range(n_instances):
        n = int(rng.integers(2, 21))
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        # coarse grids create ties; exact 0/1 exercise the clipping
        p = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=n) if rng.random() < 0.5 else rng.random(n)
        worst["mse"] = max(worst["mse"], abs(ev.mse(p, y) - brute_mse(p, y)))
        d = brute_deviance(p, y)
        worst["deviance"] = max(worst["deviance"], abs(ev.binomial_deviance(p, y) - d))
        auc_mismatch += ev.auc(p, y) != brute_auc(p, y)
    ok = worst["mse"] < 1e-12 and worst["deviance"] < 1e-12 and auc_mismatch == 0
    detail = f"max|dMSE|={worst['mse']:.1e} max|dDev|={worst['deviance']:.1e} AUC mismatches={auc_mismatch}"
    return CriterionResult(2, "metric oracles", ok, detail)


# -- 3 ----------------------------------------------------------------------


def _toy_logit(seed, n=500, p=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 3.0, size=p) + rng.normal(size=p)
    beta = rng.normal(scale=0.8, size=p)
    eta = (X - X.mean(axis=0)) / X.std(axis=0) @ beta
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return X, y


def check_limit_cases(seed: int = 0) -> CriterionResult:
    X, y = _toy_logit(seed)
    big = fit_lasso(X, y, 1e6)
    d_inf = float(np.max(np.abs(big.predict_proba(X) - y.mean())))
    zero = fit_lasso(X, y, 0.0)
    ref = fit_logit(X, y)
    d_zero = float(np.linalg.norm(zero.coef - ref.coef))
    rng = np.random.default_rng(seed + 1)
    n = 4000
    Xf = rng.normal(size=(n, 4))
    yf = (rng.random(n) < 0.3).astype(float)
    f = fit_random_forest(Xf, yf, n_trees=500, min_leaf_values=[n], seed=seed)
    d_rf = float(np.max(np.abs(f.predict_proba(Xf) - yf.mean())))
    ok = d_inf < 1e-10 and d_zero < 1e-3 and d_rf < 1e-3
    detail = f"lasso(inf) |d|={d_inf:.1e}; lasso(0) vs logit ||d||={d_zero:.1e}; big-leaf forest |d|={d_rf:.1e}"
    return CriterionResult(3, "learner limit cases", ok, detail)


# -- 4 ----------------------------------------------------------------------


def check_bias_recovery(seed: int = 0, n_seeds: int = 10) -> CriterionResult:
    rates, picks = [], []
    for k in range(n_seeds):
        c, _ = simulate_cohort(SimConfig(seed=seed + k, wtp_bias=0.40))
        w = c.buy_wtp_cents()
        p = c.buy["price_cents"].to_numpy()
        b = c.buy["bought"].to_numpy()
        rates.append(float(b[w == p].mean()))
        picks.append(debias_bdm_offset(w, p, b, [0, 25, 50]))
    agree = sum(x in (25, 50) for x in picks)
    ok = min(rates) > 0.55 and agree >= math.ceil(0.8 * n_seeds)
    detail = f"P(buy|surplus=0) min={min(rates):.3f} mean={np.mean(rates):.3f}; offsets={picks} ({agree}/{n_seeds} nonzero)"
    return CriterionResult(4, "bias recovery", ok, detail)


# -- 5 ----------------------------------------------------------------------

ORDER_MODELS = ["probbuy", "bdm", "logit(W)", "rf(WO)", "rf(A)", "rf(WOA)"]


def _ordering_one_seed(seed, n_repeats, n_trees, n_jobs):
    c, _ = simulate_cohort(SimConfig(seed=seed))
    params = {"rf": {"n_trees": n_trees}}
    within = ev.evaluate(c, ORDER_MODELS, ev.SplitSpec("within_between", None, n_repeats, seed), ("mse",), params, n_jobs)
    between = ev.evaluate(
        c, ["rf(WO)", "rf(A)"], ev.SplitSpec("between_subject", None, n_repeats, seed), ("mse",), params, n_jobs
    )
    m = {name: within.mean_se(name) for name in ORDER_MODELS}
    claims = []
    for hi, lo in [("probbuy", "bdm"), ("bdm", "logit(W)"), ("logit(W)", "rf(WO)")]:
        gap, se, ok = _gap_ok(m[hi], m[lo])
        claims.append((f"{hi}>{lo}", gap, se, ok))
    best_single = min(("rf(WO)", "rf(A)"), key=lambda k: m[k][0])
    gap, se, ok = _gap_ok(m[best_single], m["rf(WOA)"])
    claims.append((f"min(rf(WO),rf(A))>rf(WOA)", gap, se, ok))
    infl = {}
    for name in ("rf(WO)", "rf(A)"):
        bm, bs = between.mean_se(name)
        wm, ws = m[name]
        r = bm / wm - 1.0
        infl[name] = (r, (bm / wm) * math.hypot(bs / bm, ws / wm))
    gap, se, ok = _gap_ok(infl["rf(A)"], infl["rf(WO)"])
    claims.append(("inflation rf(A)>rf(WO)", gap, se, ok))
    return m, infl, claims


def check_ordering(seed: int = 0, n_seeds: int = 3, n_repeats: int = 50, n_trees: int = ACCEPTANCE_TREES, n_jobs: int = 1):
    parts, ok = [], True
    for k in range(n_seeds):
        m, infl, claims = _ordering_one_seed(seed + k, n_repeats, n_trees, n_jobs)
        ok &= all(c[3] for c in claims)
        means = " ".join(f"{n}={m[n][0]:.4f}" for n in ORDER_MODELS)
        infl_s = " ".join(f"infl {n}={infl[n][0]:+.1%}" for n in infl)
        bad = [c[0] for c in claims if not c[3]]
        parts.append(f"seed {seed + k}: {means}; {infl_s}; failed={bad or 'none'}")
    return CriterionResult(5, "ordering reproduction", ok, " | ".join(parts))


# -- 6 ----------------------------------------------------------------------


def check_sweep(seed: int = 0, n_repeats: int = 50, n_trees: int = ACCEPTANCE_TREES, n_jobs: int = 1):
    c, _ = simulate_cohort(SimConfig(seed=seed))
    split = ev.SplitSpec("within_between", None, n_repeats, seed)
    rf = ev.sample_size_sweep(c, ["rf(WO)"], split, [600, 3960], ("mse",), {"rf": {"n_trees": n_trees}}, n_jobs)
    bdm = ev.sample_size_sweep(c, ["bdm"], split, ev.PAPER_SIZES, ("mse",), None, n_jobs)
    small, large = rf.mean_se("rf(WO)", size=600), rf.mean_se("rf(WO)", size=3960)
    ok_rf = large[0] <= small[0] - 2 * small[1]
    bm = [bdm.mean_se("bdm", size=s) for s in ev.PAPER_SIZES]
    spread = max(x[0] for x in bm) - min(x[0] for x in bm)
    se_full = bm[-1][1]
    ok_bdm = spread < se_full
    detail = (
        f"rf(WO) 600={small[0]:.4f}({small[1]:.4f}) 3960={large[0]:.4f}({large[1]:.4f}); "
        f"bdm range over {len(bm)} sizes={spread:.5f} vs SE={se_full:.5f}"
    )
    return CriterionResult(6, "sweep behavior", ok_rf and ok_bdm, detail)


# -- 7 ----------------------------------------------------------------------


def check_pricing(seed: int = 0, n_seeds: int = 10, n_trees: int = ACCEPTANCE_TREES):
    from .pricing import revenue_comparison

    params = {"rf": {"n_trees": n_trees}}
    c, _ = simulate_cohort(SimConfig(seed=seed))
    m = fit_model("rf(WO)", assemble_space(c, "WO"), seed=seed, params=params)
    _, self_summary = revenue_comparison(m, m, c)
    ok_self = self_summary["share_nonnegative_gain"] == 1.0
    gains, pos, n_pos, n_all = [], [], 0, 0
    for k in range(n_seeds):
        c, _ = simulate_cohort(SimConfig(seed=seed + k, wtp_bias=0.40))
        pm = fit_model("rf(WO)", assemble_space(c, "WO"), seed=seed + k, params=params)
        tm = fit_model("rf(WOA)", assemble_space(c, "WOA"), seed=seed + k, params=params)
        df, s = revenue_comparison(pm, tm, c)
        gains.append(s["gain_pct"])
        pos.append(s["share_positive_gain"])
        n_pos += int((df["rev_star"] > df["rev_wtp"]).sum())
        n_all += len(df)
    share = n_pos / n_all
    ok = ok_self and min(gains) > 0 and share >= 0.80
    detail = (
        f"self-pricing nonnegative share={self_summary['share_nonnegative_gain']:.3f}; "
        f"gain% per seed min={min(gains):.1f} mean={np.mean(gains):.1f}; positive share pooled={share:.3f} "
        f"(per-seed min={min(pos):.3f})"
    )
    return CriterionResult(7, "pricing", ok, detail)


# -- 8 ----------------------------------------------------------------------


def check_determinism_and_leakage(seed: int = 0) -> CriterionResult:
    from .cli import main

    digests = []
    with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(io.StringIO()):
        tmp = Path(tmp)
        cfg = tmp / "cfg.json"
        cfg.write_text('{"schema_version": 1, "rf": {"n_trees": 20}}')
        data = tmp / "data"
        assert main(["simulate", "--seed", str(seed), "--out", str(data)]) == 0
        for threads in (1, 8):
            out = tmp / f"run{threads}"
            rc = main([
                "evaluate", "--data", str(data), "--out", str(out), "--seed", str(seed),
                "--models", "bdm,probbuy,logit(W),rf(WO)", "--repeats", "4",
                "--threads", str(threads), "--config", str(cfg),
            ])
            assert rc == 0
            digests.append((out / "report.csv").read_bytes())
    identical = digests[0] == digests[1]

    c, _ = simulate_cohort(SimConfig(seed=seed))
    fm_item = assemble_space(c, "WO", drop_item_fixed_effects=True)
    no_item_cols = not fm_item.item_indexed.any() and not any(
        n.startswith("item") or ":item" in n for n in fm_item.column_names
    )
    train, test = ev.stratified_holdout_split(c, 440, np.random.default_rng(seed))
    fm = assemble_space(c, "W")
    leak_free = _train_only(fm, train, test, seed)
    ok = identical and no_item_cols and leak_free
    detail = f"threads 1 vs 8 byte-identical={identical}; between-item item columns absent={no_item_cols}; test rows ignored by fits={leak_free}"
    return CriterionResult(8, "determinism and leakage", ok, detail)


def _train_only(fm, train, test, seed) -> bool:
    """Refit after scrambling the test rows' features and outcomes: nothing may change."""
    import copy

    scrambled = copy.copy(fm)
    rng = np.random.default_rng(seed)
    X = fm.X.copy()
    X[test] = rng.normal(size=(len(test), X.shape[1])) * 100
    y = fm.y.copy()
    y[test] = 1 - y[test]
    scrambled.X, scrambled.y = X, y
    params = {"rf": {"n_trees": 10}, "lasso": {"n_folds": 5}}
    for spec in ("logit(W)", "lasso(W)", "rf(W)", "bdm", "probbuy"):
        a = fit_model(spec, fm, train, seed=seed, params=params)
        b = fit_model(spec, scrambled, train, seed=seed, params=params)
        pa, pb = a.predict(fm, train), b.predict(fm, train)
        if not np.array_equal(pa, pb):
            return False
    return True


CHECKS = {
    1: check_feature_counts,
    2: check_metric_oracles,
    3: check_limit_cases,
    4: check_bias_recovery,
    5: check_ordering,
    6: check_sweep,
    7: check_pricing,
    8: check_determinism_and_leakage,
}


def run_check(number: int, seed: int = 0, quick: bool = False, n_jobs: int = 1) -> CriterionResult:
    t0 = time.time()
    fn = CHECKS[number]
    if number == 5:
        res = fn(seed, n_seeds=1 if quick else 3, n_repeats=5 if quick else 50, n_jobs=n_jobs)
    elif number == 6:
        res = fn(seed, n_repeats=5 if quick else 50, n_jobs=n_jobs)
    elif number == 7:
        res = fn(seed, n_seeds=2 if quick else 10)
    else:
        res = fn(seed)
    res.seconds = time.time() - t0
    return res


def run_acceptance(seed: int = 0, quick: bool = False, n_jobs: int = 1, only: str | None = None) -> bool:
    numbers = sorted(CHECKS) if not only else [int(x) for x in only.split(",")]
    ok = True
    for k in numbers:
        res = run_check(k, seed, quick, n_jobs)
        print(res.line(), flush=True)
        ok &= res.passed
    return ok
