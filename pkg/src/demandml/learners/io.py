"""Versioned JSON serialization of fitted models.

Arrays are stored as base64 of their little-endian bytes with dtype and
shape, so a round trip is exact.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from . import FittedModel, ModelSpec
from .baselines import BdmBaseline
from .forest import FittedForest, _Trees
from .linear import Convergence, FittedLinearModel

FORMAT = "demandml-model"
VERSION = 1


def _enc(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    dt = a.dtype.newbyteorder("<")
    return {
        "dtype": dt.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype(dt, copy=False).tobytes()).decode("ascii"),
    }


def _dec(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def _estimator_to_dict(m: FittedModel) -> dict:
    e = m.estimator
    kind = m.spec.kind
    if kind == "bdm":
        return {"q": e.q, "fallback": e.fallback, "offset_cents": e.offset_cents}
    if kind == "probbuy":
        return {"r": float(e)}
    if kind in ("logit", "logit_surplus", "lasso"):
        return {
            "coef": _enc(e.coef),
            "intercept": e.intercept,
            "mean": _enc(e.mean),
            "sd": _enc(e.sd),
            "convergence": vars(e.convergence),
            "penalty": e.penalty,
            "cv": e.cv,
        }
    t = e.trees
    return {
        "trees": {k: _enc(getattr(t, k)) for k in t.__dataclass_fields__},
        "inbag": _enc(e.inbag),
        "n_trees": e.n_trees,
        "mtry": e.mtry,
        "min_leaf": e.min_leaf,
        "oob_error": e.oob_error,
        "seed": e.seed,
        "tuning": e.tuning,
        "space": e.space,
    }


def to_dict(m: FittedModel) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "model": m.spec.name,
        "kind": m.spec.kind,
        "space": m.spec.space,
        "columns": m.columns,
        "drop_item_fixed_effects": m.drop_item_fixed_effects,
        "info": m.info,
        "estimator": _estimator_to_dict(m),
    }


def from_dict(d: dict) -> FittedModel:
    if d.get("format") != FORMAT:
        raise ValueError("not a demandml model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')!r}")
    spec = ModelSpec(d["kind"], d["space"])
    e = d["estimator"]
    kind = spec.kind
    cols = d["columns"]
    if kind == "bdm":
        est = BdmBaseline(e["q"], e["fallback"], e["offset_cents"])
    elif kind == "probbuy":
        est = e["r"]
    elif kind in ("logit", "logit_surplus", "lasso"):
        est = FittedLinearModel(
            cols, _dec(e["coef"]), e["intercept"], _dec(e["mean"]), _dec(e["sd"]),
            Convergence(**e["convergence"]), e["penalty"], e["cv"],
        )
    else:
        trees = _Trees(**{k: _dec(v) for k, v in e["trees"].items()})
        est = FittedForest(
            cols, trees, _dec(e["inbag"]), e["n_trees"], e["mtry"], e["min_leaf"],
            e["oob_error"], e["seed"], e["tuning"], e["space"],
        )
    return FittedModel(spec, est, cols, d["drop_item_fixed_effects"], d["info"])


def save_model(m: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(to_dict(m), sort_keys=True) + "\n")


def load_model(path) -> FittedModel:
    return from_dict(json.loads(Path(path).read_text()))
