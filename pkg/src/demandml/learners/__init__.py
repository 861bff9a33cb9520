"""Purchase-probability learners behind one ``fit_model`` / ``predict`` API.

A model is named by a spec string: ``"bdm"``, ``"probbuy"`` and
``"logit_surplus"`` need no feature space, while ``"logit(W)"``,
``"lasso(WO)"`` or ``"rf(WOA)"`` fit on the named space.

>>> parse_spec("rf(WO)")
ModelSpec(kind='rf', space='WO')
>>> parse_specs("bdm, logit(W)")
[ModelSpec(kind='bdm', space=None), ModelSpec(kind='logit', space='W')]
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from ..features import SPACES, FeatureMatrix
from .baselines import BdmBaseline, bdm_predict, debias_bdm_offset, fit_bdm, prob_buy_predict
from .forest import FittedForest, fit_random_forest, variable_importance
from .linear import FitError, FittedLinearModel, fit_lasso, fit_lasso_cv, fit_logit, soft_threshold

KINDS = ("bdm", "probbuy", "logit", "logit_surplus", "lasso", "rf")
SPACE_FREE = ("bdm", "probbuy", "logit_surplus")

__all__ = [
    "KINDS",
    "BdmBaseline",
    "FitError",
    "FittedForest",
    "FittedLinearModel",
    "FittedModel",
    "ModelSpec",
    "bdm_predict",
    "debias_bdm_offset",
    "fit_bdm",
    "fit_lasso",
    "fit_lasso_cv",
    "fit_logit",
    "fit_logit_surplus",
    "fit_model",
    "fit_random_forest",
    "parse_spec",
    "parse_specs",
    "prob_buy_predict",
    "soft_threshold",
    "surplus_design",
    "variable_importance",
]

_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([A-Z]+)\s*\))?\s*$")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    space: str | None = None

    @property
    def name(self) -> str:
        return f"{self.kind}({self.space})" if self.space else self.kind

    def __str__(self) -> str:
        return self.name


def parse_spec(text: str) -> ModelSpec:
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse model spec {text!r}")
    kind, space = m.group(1), m.group(2)
    if kind not in KINDS:
        raise ValueError(f"unknown model {kind!r}; choose from {list(KINDS)}")
    if kind in SPACE_FREE:
        if space is not None:
            raise ValueError(f"model {kind!r} takes no feature space")
    else:
        if space is None:
            raise ValueError(f"model {kind!r} needs a feature space, e.g. {kind}(W)")
        if space not in SPACES:
            raise ValueError(f"unknown feature space {space!r}; choose from {sorted(SPACES)}")
    return ModelSpec(kind, space)


def parse_specs(text: str) -> list[ModelSpec]:
    """Comma-separated specs; commas inside parentheses are not expected."""
    return [parse_spec(t) for t in text.split(",") if t.strip()]


def surplus_design(fm: FeatureMatrix, rows=None) -> tuple[list[str], np.ndarray]:
    """Surplus logit design: surplus, item effects, surplus x item, subject effects, surplus x subject.

    Surplus is (WTP - price) in dollars.  Item columns are left out when the
    matrix was assembled without item fixed effects.
    """
    meta = fm.meta if rows is None else fm.meta.iloc[rows]
    s = meta["subject_id"].to_numpy()
    j = meta["item_id"].to_numpy()
    sur = (meta["wtp_cents"].to_numpy() - meta["price_cents"].to_numpy()) / 100.0
    names = ["surplus"]
    cols = [sur[:, None]]
    if not fm.drop_item_fixed_effects:
        item = np.eye(fm.n_items)[j][:, 1:]
        inames = [f"item{k + 1}" for k in range(1, fm.n_items)]
        names += inames + [f"surplus:{n}" for n in inames]
        cols += [item, sur[:, None] * item]
    subj = np.eye(fm.n_subjects)[s][:, 1:]
    snames = [f"subject{k + 1}" for k in range(1, fm.n_subjects)]
    names += snames + [f"surplus:{n}" for n in snames]
    cols += [subj, sur[:, None] * subj]
    return names, np.hstack(cols)


def fit_logit_surplus(fm: FeatureMatrix, rows=None) -> FittedLinearModel:
    names, X = surplus_design(fm, rows)
    y = fm.y if rows is None else fm.y[rows]
    return fit_logit(X, y, names)


@dataclass
class FittedModel:
    """A fitted learner together with the columns it expects at predict time."""

    spec: ModelSpec
    estimator: object
    columns: list[str] | None
    drop_item_fixed_effects: bool = False
    info: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.spec.name

    def _design(self, fm: FeatureMatrix, rows):
        if self.spec.kind == "logit_surplus":
            names, X = surplus_design(fm, rows)
        else:
            names = fm.column_names
            X = fm.X if rows is None else fm.X[rows]
        if names != self.columns:
            raise ValueError(
                f"model/space mismatch: {self.name} was fit on {len(self.columns)} columns, "
                f"got {fm.space} with {len(names)}"
            )
        return X

    def predict(self, fm: FeatureMatrix, rows=None) -> np.ndarray:
        """Purchase probabilities for the selected rows of ``fm``."""
        kind = self.spec.kind
        meta = fm.meta if rows is None else fm.meta.iloc[rows]
        if kind == "bdm":
            return bdm_predict(meta["wtp_cents"].to_numpy(), meta["price_cents"].to_numpy(), self.estimator)
        if kind == "probbuy":
            return np.full(len(meta), float(self.estimator))
        return self.estimator.predict_proba(self._design(fm, rows))


DEFAULT_PARAMS = {
    "rf": {"n_trees": 500, "mtry": None, "min_leaf": [1, 5, 10]},
    "lasso": {"n_folds": 10},
}


def _params(kind: str, params: dict | None) -> dict:
    out = dict(DEFAULT_PARAMS.get(kind, {}))
    if params and kind in params:
        unknown = set(params[kind]) - set(out)
        if unknown:
            raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
        out.update(params[kind])
    return out


def fit_model(
    spec: ModelSpec | str,
    fm: FeatureMatrix,
    rows=None,
    seed: int = 0,
    params: dict | None = None,
    n_jobs: int = 1,
) -> FittedModel:
    """Fit ``spec`` on the given rows of ``fm``.

    ``fm`` must be the spec's feature space (any space for the space-free
    models, which read only the row metadata).  ``params`` overrides the
    per-kind defaults in :data:`DEFAULT_PARAMS`.
    """
    if isinstance(spec, str):
        spec = parse_spec(spec)
    if spec.space is not None and fm.space != spec.space:
        raise ValueError(f"model/space mismatch: {spec.name} given a {fm.space} matrix")
    meta = fm.meta if rows is None else fm.meta.iloc[rows]
    y = fm.y if rows is None else fm.y[rows]
    kind = spec.kind
    drop = fm.drop_item_fixed_effects
    if kind == "bdm":
        est = fit_bdm(meta["wtp_cents"].to_numpy(), meta["price_cents"].to_numpy(), y)
        return FittedModel(spec, est, None, drop, {"q": est.q, "fallback": est.fallback})
    if kind == "probbuy":
        r = prob_buy_predict(y)
        return FittedModel(spec, r, None, drop, {"r": r})
    if kind == "logit_surplus":
        names, X = surplus_design(fm, rows)
        est = fit_logit(X, y, names)
        return FittedModel(spec, est, names, drop, {"converged": est.convergence.converged})
    X = fm.X if rows is None else fm.X[rows]
    names = list(fm.column_names)
    if kind == "logit":
        est = fit_logit(X, y, names)
        info = {
            "converged": est.convergence.converged,
            "rank_deficient": est.convergence.rank_deficient,
            "separated": est.convergence.separated,
        }
    elif kind == "lasso":
        p = _params(kind, params)
        est = fit_lasso_cv(X, y, names, n_folds=p["n_folds"], seed=seed)
        info = {"lambda": est.penalty, "nonzero": est.n_nonzero}
    elif kind == "rf":
        p = _params(kind, params)
        est = fit_random_forest(
            X, y, names, n_trees=p["n_trees"], mtry_values=p["mtry"], min_leaf_values=p["min_leaf"],
            seed=seed, n_jobs=n_jobs,
        )
        est.space = spec.space
        info = {"mtry": est.mtry, "min_leaf": est.min_leaf, "oob_mse": est.oob_error}
    else:  # pragma: no cover - parse_spec rejects unknown kinds
        raise ValueError(kind)
    return FittedModel(spec, est, names, drop, info)
