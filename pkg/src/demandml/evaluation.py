"""Holdout protocols, metrics and repeat-averaged reports.

Every repeat draws its randomness from ``SeedSequence([seed, repeat])``,
split into independent streams for the holdout draw, the training-subset
order of a size sweep and the learners' own seeds.  A repeat therefore
produces the same numbers whether it runs first or last, serially or on a
worker thread.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .domain import Cohort
from .features import FeatureMatrix, assemble_space
from .learners import FitError, ModelSpec, fit_model, parse_spec

PROTOCOLS = ("within_between", "between_subject", "between_item")
DEFAULT_HOLDOUT = {"within_between": 440, "between_subject": 5, "between_item": 2}
METRICS = ("mse", "deviance", "auc")
PAPER_SIZES = tuple(range(600, 3961, 200))
CLIP = 1e-12
REPORT_COLUMNS = ["model", "space", "protocol", "size", "metric", "mean", "stderr", "n_repeats"]


# -- metrics ----------------------------------------------------------------


def _pair(pred, y):
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {y.shape}")
    if pred.size == 0:
        raise ValueError("need at least one row")
    return pred, y


def mse(pred, y) -> float:
    pred, y = _pair(pred, y)
    return float(np.mean((y - pred) ** 2))


def binomial_deviance(pred, y) -> float:
    """Negative binomial log-likelihood, with predictions clipped to [1e-12, 1 - 1e-12]."""
    pred, y = _pair(pred, y)
    p = np.clip(pred, CLIP, 1.0 - CLIP)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def auc(pred, y) -> float:
    """Mann-Whitney AUC with ties counted one half."""
    pred, y = _pair(pred, y)
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both outcome classes")
    ranks = pd.Series(pred).rank(method="average").to_numpy()
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


METRIC_FUNCS = {"mse": mse, "deviance": binomial_deviance, "auc": auc}


# -- splits -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    protocol: str = "within_between"
    holdout: int | None = None
    n_repeats: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {list(PROTOCOLS)}")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if self.holdout is not None and self.holdout < 1:
            raise ValueError("holdout must be >= 1")

    @property
    def size(self) -> int:
        return self.holdout if self.holdout is not None else DEFAULT_HOLDOUT[self.protocol]

    @property
    def drop_item_fixed_effects(self) -> bool:
        return self.protocol == "between_item"


def repeat_streams(seed: int, repeat: int):
    """(split rng, subset rng, learner seed) for one repeat."""
    a, b, c = np.random.SeedSequence([int(seed), int(repeat)]).spawn(3)
    learner_seed = int(c.generate_state(1, dtype=np.uint32)[0])
    return np.random.default_rng(a), np.random.default_rng(b), learner_seed


def purchase_quintiles(c: Cohort) -> np.ndarray:
    """Quintile bin (0..4) of every subject by purchase rate over all of its Buy rows."""
    rate = c.buy.groupby("subject_id")["bought"].mean().reindex(range(c.n_subjects)).to_numpy()
    order = np.lexsort((np.arange(c.n_subjects), rate))
    bins = np.empty(c.n_subjects, dtype=np.int64)
    bins[order] = np.arange(c.n_subjects) * 5 // c.n_subjects
    return bins


def stratified_holdout_split(c: Cohort, holdout: int = 440, rng=None):
    """Draw ``holdout / 5`` Buy rows from each purchase-rate quintile of subjects."""
    rng = np.random.default_rng(rng)
    n = len(c.buy)
    if holdout >= n:
        raise ValueError("holdout must be smaller than the dataset")
    if holdout % 5:
        raise ValueError("holdout must be divisible by 5")
    per = holdout // 5
    row_bin = purchase_quintiles(c)[c.buy["subject_id"].to_numpy()]
    test = []
    for b in range(5):
        rows = np.flatnonzero(row_bin == b)
        if len(rows) < per:
            raise ValueError(f"quintile {b} has {len(rows)} rows, fewer than {per}")
        test.append(rng.choice(rows, size=per, replace=False))
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def _group_split(values: np.ndarray, n_groups: int, k: int, rng):
    held = rng.choice(n_groups, size=k, replace=False)
    mask = np.isin(values, held)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def between_subject_split(c: Cohort, rng=None, n_subjects: int = 5):
    """All Buy rows of ``n_subjects`` random subjects form the test set."""
    if c.n_subjects < n_subjects + 1:
        raise ValueError("need more subjects than the holdout")
    return _group_split(c.buy["subject_id"].to_numpy(), c.n_subjects, n_subjects, np.random.default_rng(rng))


def between_item_split(c: Cohort, rng=None, n_items: int = 2):
    """All Buy rows of ``n_items`` random items form the test set."""
    if c.n_items < n_items + 1:
        raise ValueError("need more items than the holdout")
    return _group_split(c.buy["item_id"].to_numpy(), c.n_items, n_items, np.random.default_rng(rng))


def make_split(c: Cohort, split: SplitSpec, rng):
    if split.protocol == "within_between":
        return stratified_holdout_split(c, split.size, rng)
    if split.protocol == "between_subject":
        return between_subject_split(c, rng, split.size)
    return between_item_split(c, rng, split.size)


# -- reports ----------------------------------------------------------------


@dataclass
class EvalReport:
    """Per-repeat metric values keyed by (model, space, protocol, size, metric)."""

    values: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def add(self, key, value):
        self.values.setdefault(key, []).append(value)

    def summary(self) -> pd.DataFrame:
        rows = []
        for (model, space, protocol, size, metric), vals in self.values.items():
            v = np.asarray(vals, dtype=float)
            v = v[np.isfinite(v)]
            k = len(v)
            mean = float(np.mean(v)) if k else float("nan")
            se = float(np.std(v, ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
            rows.append([model, space, protocol, size, metric, mean, se, k])
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def get(self, model: str, metric: str = "mse", size=None, protocol=None) -> np.ndarray:
        for (m, sp, pr, sz, me), vals in self.values.items():
            name = f"{m}({sp})" if sp else m
            if name == model and me == metric and (size is None or sz == size) and (protocol is None or pr == protocol):
                return np.asarray(vals, dtype=float)
        raise KeyError((model, metric, size, protocol))

    def mean_se(self, model: str, metric: str = "mse", size=None, protocol=None) -> tuple[float, float]:
        v = self.get(model, metric, size, protocol)
        v = v[np.isfinite(v)]
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))

    def to_csv(self, path) -> None:
        write_report(self.summary(), path)


def write_report(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def _space_key(spec: ModelSpec) -> str:
    # space-free models read only row metadata; the core space carries it
    return spec.space or "C"


def _matrices(c: Cohort, specs, drop_items: bool) -> dict[str, FeatureMatrix]:
    out = {}
    for s in specs:
        key = _space_key(s)
        if key not in out:
            fm = assemble_space(c, key, drop_items)
            if drop_items and fm.item_indexed.any():
                raise AssertionError("between-item matrix still holds item-indexed columns")
            out[key] = fm
    return out


def _score(pred, y, metrics):
    out = {}
    for m in metrics:
        try:
            out[m] = METRIC_FUNCS[m](pred, y)
        except ValueError:
            out[m] = float("nan")
    return out


def _run_repeat(c, specs, mats, split, repeat, sizes, metrics, params):
    rng_split, rng_sub, learner_seed = repeat_streams(split.seed, repeat)
    train, test = make_split(c, split, rng_split)
    order = train[rng_sub.permutation(len(train))]
    results = []
    for size in sizes:
        n = len(train) if size is None else size
        if n > len(train):
            raise ValueError(f"training size {n} exceeds the pool of {len(train)} rows")
        rows = train if n == len(train) else np.sort(order[:n])
        for spec in specs:
            fm = mats[_space_key(spec)]
            try:
                model = fit_model(spec, fm, rows, seed=learner_seed, params=params)
                pred = model.predict(fm, test)
                scores = _score(pred, fm.y[test], metrics)
                err = None
            except (FitError, ValueError, np.linalg.LinAlgError) as exc:
                scores = {m: float("nan") for m in metrics}
                err = f"{spec.name} repeat {repeat} size {n}: {exc}"
            results.append((spec, n, scores, err))
    return results


def _collect(split, specs, sizes, metrics, runs) -> EvalReport:
    rep = EvalReport()
    for results in runs:
        for spec, n, scores, err in results:
            for m in metrics:
                rep.add((spec.kind, spec.space or "", split.protocol, n, m), scores[m])
            if err:
                rep.errors.append(err)
    return rep


def _resolve(models):
    # a repeated entry would fit the same model twice and double its repeat count
    specs = [parse_spec(m) if isinstance(m, str) else m for m in models]
    return list(dict.fromkeys(specs))


def _check_metrics(metrics):
    metrics = tuple(metrics)
    bad = [m for m in metrics if m not in METRIC_FUNCS]
    if bad:
        raise ValueError(f"unknown metrics {bad}; choose from {list(METRICS)}")
    return metrics


def _map_repeats(fn, n_repeats, n_jobs):
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            return list(ex.map(fn, range(n_repeats)))
    return [fn(r) for r in range(n_repeats)]


def evaluate(
    c: Cohort,
    models,
    split: SplitSpec,
    metrics=METRICS,
    params: dict | None = None,
    n_jobs: int = 1,
) -> EvalReport:
    """Fit every model on each repeat's training rows and score it on the test rows.

    Fit failures are recorded in ``report.errors`` and leave a NaN for that
    repeat instead of aborting the run.
    """
    specs = _resolve(models)
    metrics = _check_metrics(metrics)
    mats = _matrices(c, specs, split.drop_item_fixed_effects)
    runs = _map_repeats(
        lambda r: _run_repeat(c, specs, mats, split, r, [None], metrics, params), split.n_repeats, n_jobs
    )
    return _collect(split, specs, [None], metrics, runs)


def sample_size_sweep(
    c: Cohort,
    models,
    split: SplitSpec,
    sizes=PAPER_SIZES,
    metrics=METRICS,
    params: dict | None = None,
    n_jobs: int = 1,
) -> EvalReport:
    """Evaluate on nested training subsets of each size with a fixed test set per repeat."""
    specs = _resolve(models)
    metrics = _check_metrics(metrics)
    sizes = sorted(int(s) for s in sizes)
    if not sizes or sizes[0] < 1:
        raise ValueError("sizes must be positive")
    mats = _matrices(c, specs, split.drop_item_fixed_effects)
    runs = _map_repeats(
        lambda r: _run_repeat(c, specs, mats, split, r, sizes, metrics, params), split.n_repeats, n_jobs
    )
    return _collect(split, specs, sizes, metrics, runs)


# -- plot data and diagnostics ----------------------------------------------


def surplus_binned_mse(fm: FeatureMatrix, rows, predictions: dict[str, np.ndarray]) -> pd.DataFrame:
    """Purchase rate and per-model MSE for each exact surplus (WTP - price) value.

    Returns long-format rows ``surplus_cents, n, purchase_freq, model, mse``.
    """
    rows = np.asarray(rows)
    meta = fm.meta.iloc[rows]
    sur = meta["wtp_cents"].to_numpy() - meta["price_cents"].to_numpy()
    y = fm.y[rows].astype(float)
    out = []
    for s in np.unique(sur):
        sel = sur == s
        freq = float(y[sel].mean())
        for name, pred in predictions.items():
            p = np.asarray(pred)[sel]
            out.append([int(s), int(sel.sum()), freq, name, float(np.mean((y[sel] - p) ** 2))])
    return pd.DataFrame(out, columns=["surplus_cents", "n", "purchase_freq", "model", "mse"])


def _wald_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass(frozen=True)
class TrendResult:
    coef: float
    stderr: float
    p_value: float


def demand_trend_diagnostics(c: Cohort) -> tuple[TrendResult, TrendResult]:
    """Linear trends over trial order: OLS of WTP (dollars) and a logit of Buy decisions.

    Both slopes come with two-sided Wald p-values from the normal
    approximation.
    """
    t = c.wtp["trial_index"].to_numpy(dtype=float)
    w = c.wtp["wtp_cents"].to_numpy(dtype=float) / 100.0
    if np.ptp(t) == 0:
        raise ValueError("constant BDM trial index")
    A = np.column_stack([np.ones_like(t), t])
    beta, *_ = np.linalg.lstsq(A, w, rcond=None)
    resid = w - A @ beta
    sigma2 = resid @ resid / (len(w) - 2)
    cov = sigma2 * np.linalg.inv(A.T @ A)
    se = math.sqrt(cov[1, 1])
    wtp_trend = TrendResult(float(beta[1]), se, _wald_p(beta[1] / se))

    tb = c.buy["trial_index"].to_numpy(dtype=float)
    yb = c.buy["bought"].to_numpy(dtype=float)
    if np.ptp(tb) == 0:
        raise ValueError("constant Buy trial index")
    B = np.column_stack([np.ones_like(tb), tb])
    theta = np.zeros(2)
    for _ in range(100):
        mu = 1.0 / (1.0 + np.exp(-(B @ theta)))
        H = (B.T * (mu * (1 - mu))) @ B
        step = np.linalg.solve(H, B.T @ (yb - mu))
        theta += step
        if np.max(np.abs(step)) < 1e-12:
            break
    mu = 1.0 / (1.0 + np.exp(-(B @ theta)))
    cov = np.linalg.inv((B.T * (mu * (1 - mu))) @ B)
    se = math.sqrt(cov[1, 1])
    buy_trend = TrendResult(float(theta[1]), se, _wald_p(theta[1] / se))
    return wtp_trend, buy_trend
