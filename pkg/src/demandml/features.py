"""Feature groups and the named feature spaces built from a cohort.

Each Buy observation (subject i, item j, price p) becomes one row.  Five
groups of columns can be stacked:

========  =====================================================  =========
group     content                                                55 x 20
========  =====================================================  =========
core      price polynomial, item / subject indicators and          149
          their price interactions
wtp       polynomial of the row's WTP and its interactions          76
otherwtp  the subject's whole WTP vector and its item interactions 400
afc       pairwise choices, choice shares, ranks and interactions  211
rt        response times, their choice interactions, summaries      87
========  =====================================================  =========

Money enters in dollars and response times in seconds.  Indicator groups
omit the first subject and the first item.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .domain import Cohort

GROUPS = ("core", "wtp", "otherwtp", "afc", "rt")
SPACES = {
    "C": ("core",),
    "W": ("core", "wtp"),
    "WO": ("core", "wtp", "otherwtp"),
    "A": ("core", "afc"),
    "AR": ("core", "afc", "rt"),
    "WA": ("core", "wtp", "afc"),
    "WOA": ("core", "wtp", "otherwtp", "afc"),
    "WOAR": ("core", "wtp", "otherwtp", "afc", "rt"),
}


def group_sizes(n_subjects: int, n_items: int) -> dict[str, int]:
    S, J = n_subjects, n_items
    return {
        "core": 3 + 2 * (J - 1) + 2 * (S - 1),
        "wtp": 3 + (J - 1) + (S - 1),
        "otherwtp": J + J * (J - 1),
        "afc": 2 * J + 2 * (1 + (J - 1) + (S - 1)) + 3 + J,
        "rt": 4 * J + 6 + 1,
    }


def space_size(space: str, n_subjects: int, n_items: int) -> int:
    sizes = group_sizes(n_subjects, n_items)
    return sum(sizes[g] for g in SPACES[space])


@dataclass
class Block:
    names: list[str] = field(default_factory=list)
    cols: list[np.ndarray] = field(default_factory=list)
    item_indexed: list[bool] = field(default_factory=list)

    def add(self, name, col, item_indexed=False):
        self.names.append(name)
        self.cols.append(col)
        self.item_indexed.append(item_indexed)

    def add_many(self, names, mat, item_indexed=False):
        for k, name in enumerate(names):
            self.add(name, mat[:, k], item_indexed)


@dataclass
class FeatureMatrix:
    """Dense design matrix with one row per observation key.

    ``meta`` carries subject_id, item_id, price_cents and wtp_cents for every
    row (plus trial_index / price_source when rows come from Buy trials).
    """

    space: str
    column_names: list[str]
    X: np.ndarray
    y: np.ndarray | None
    meta: pd.DataFrame
    item_indexed: np.ndarray
    n_subjects: int
    n_items: int
    drop_item_fixed_effects: bool = False

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def frame(self) -> pd.DataFrame:
        """Meta columns followed by the features, as written by ``featurize``."""
        lead = pd.DataFrame(
            {
                "subject_id": self.meta["subject_id"].to_numpy(),
                "item_id": self.meta["item_id"].to_numpy(),
                "price_cents": self.meta["price_cents"].to_numpy(),
                "bought": self.y if self.y is not None else np.zeros(self.n_rows, dtype=np.int64),
            }
        )
        return pd.concat([lead, pd.DataFrame(self.X, columns=self.column_names)], axis=1)


class _Keys:
    """Per-row lookups shared by the group builders."""

    def __init__(self, cohort: Cohort, subjects, items, prices_cents):
        self.c = cohort
        self.s = np.asarray(subjects, dtype=np.int64)
        self.j = np.asarray(items, dtype=np.int64)
        self.price = np.asarray(prices_cents, dtype=float) / 100.0
        S, J = cohort.n_subjects, cohort.n_items
        self.S, self.J = S, J
        self.item_ind = np.eye(J)[self.j][:, 1:]
        self.subj_ind = np.eye(S)[self.s][:, 1:]
        self.item_names = [f"item{k + 1}" for k in range(1, J)]
        self.subj_names = [f"subject{k + 1}" for k in range(1, S)]

    def interact(self, block: Block, base: np.ndarray, base_name: str):
        block.add_many([f"{base_name}:{n}" for n in self.item_names], base[:, None] * self.item_ind, True)
        block.add_many([f"{base_name}:{n}" for n in self.subj_names], base[:, None] * self.subj_ind)


def _afc_summaries(c: Cohort):
    """Choice shares, share dispersion and within-subject ranks (1 = most chosen)."""
    cache = c._cache
    if "afc_summ" not in cache:
        J = c.n_items
        wins = c.choice_tensor.sum(axis=2).astype(float)
        frac = wins / (J - 1)
        std = frac.std(axis=1, ddof=1)
        rank = np.empty_like(wins, dtype=float)
        for i in range(c.n_subjects):
            # descending share, ties by ascending item id
            order = np.lexsort((np.arange(J), -wins[i]))
            rank[i, order] = np.arange(1, J + 1)
        cache["afc_summ"] = (frac, std, rank)
    return cache["afc_summ"]


def _rt_summaries(c: Cohort):
    cache = c._cache
    if "rt_summ" not in cache:
        sec = c.afc["rt_ms"].to_numpy() / 1000.0
        s = c.afc["subject_id"].to_numpy()
        df = pd.DataFrame({"s": s, "rt": sec}).groupby("s")["rt"]
        mean = df.mean().reindex(range(c.n_subjects)).to_numpy()
        sd = df.std(ddof=1).reindex(range(c.n_subjects)).fillna(0.0).to_numpy()
        mx = df.max().reindex(range(c.n_subjects)).to_numpy()
        cache["rt_summ"] = (mean, sd, mx)
    return cache["rt_summ"]


def _poly(block: Block, x: np.ndarray, name: str):
    block.add(name, x)
    block.add(f"{name}^2", x**2)
    block.add(f"{name}^3", x**3)


def build_core(k: _Keys) -> Block:
    b = Block()
    _poly(b, k.price, "price")
    b.add_many(k.item_names, k.item_ind, True)
    b.add_many(k.subj_names, k.subj_ind)
    k.interact(b, k.price, "price")
    return b


def build_wtp(k: _Keys) -> Block:
    b = Block()
    w = k.c.wtp_matrix[k.s, k.j] / 100.0
    _poly(b, w, "wtp")
    k.interact(b, w, "wtp")
    return b


def build_otherwtp(k: _Keys) -> Block:
    b = Block()
    wall = k.c.wtp_matrix[k.s] / 100.0
    b.add_many([f"wtp_item{m + 1}" for m in range(k.J)], wall)
    for m in range(k.J):
        b.add_many(
            [f"wtp_item{m + 1}:{n}" for n in k.item_names], wall[:, m : m + 1] * k.item_ind, True
        )
    return b


def build_afc(k: _Keys) -> Block:
    b = Block()
    frac, std, rank = _afc_summaries(k.c)
    choice = k.c.choice_tensor[k.s, k.j, :].astype(float)
    b.add_many([f"chosen_over{m + 1}" for m in range(k.J)], choice)
    b.add_many([f"share_item{m + 1}" for m in range(k.J)], frac[k.s])
    own = frac[k.s, k.j]
    b.add("share", own)
    k.interact(b, own, "share")
    _poly(b, std[k.s], "share_sd")
    b.add_many([f"rank_item{m + 1}" for m in range(k.J)], rank[k.s])
    own_rank = rank[k.s, k.j]
    b.add("rank", own_rank)
    k.interact(b, own_rank, "rank")
    return b


def build_rt(k: _Keys) -> Block:
    b = Block()
    rt = k.c.rt_tensor[k.s, k.j, :]
    choice = k.c.choice_tensor[k.s, k.j, :].astype(float)
    b.add_many([f"rt_vs{m + 1}" for m in range(k.J)], rt)
    b.add_many([f"rt_vs{m + 1}^2" for m in range(k.J)], rt**2)
    b.add_many([f"rt_vs{m + 1}:chosen" for m in range(k.J)], rt * choice)
    b.add_many([f"rt_vs{m + 1}^2:chosen" for m in range(k.J)], rt**2 * choice)
    mean, sd, mx = _rt_summaries(k.c)
    _poly(b, mean[k.s], "rt_mean")
    _poly(b, sd[k.s], "rt_sd")
    m = mx[k.s][:, None]
    signed = (m - rt) / m * (2.0 * choice - 1.0)
    signed[np.arange(len(k.j)), k.j] = 0.0  # the item is never paired with itself
    b.add("rt_signed_speed", signed.sum(axis=1))
    return b


BUILDERS = {"core": build_core, "wtp": build_wtp, "otherwtp": build_otherwtp, "afc": build_afc, "rt": build_rt}


def _check_space(space: str):
    if space not in SPACES:
        raise ValueError(f"unknown feature space {space!r}; choose from {sorted(SPACES)}")


def build_rows(
    cohort: Cohort,
    space: str,
    subjects,
    items,
    prices_cents,
    drop_item_fixed_effects: bool = False,
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Feature rows for arbitrary (subject, item, price) keys.

    Returns ``(column_names, X, item_indexed)``.
    """
    _check_space(space)
    k = _Keys(cohort, subjects, items, prices_cents)
    names: list[str] = []
    cols: list[np.ndarray] = []
    tags: list[bool] = []
    for g in SPACES[space]:
        blk = BUILDERS[g](k)
        names += blk.names
        cols += blk.cols
        tags += blk.item_indexed
    n = len(k.s)
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    X = np.ascontiguousarray(X, dtype=float)
    tags = np.array(tags, dtype=bool)
    if drop_item_fixed_effects:
        keep = ~tags
        X = np.ascontiguousarray(X[:, keep])
        names = [nm for nm, kp in zip(names, keep) if kp]
        tags = tags[keep]
    return names, X, tags


def assemble_space(cohort: Cohort, space: str, drop_item_fixed_effects: bool = False) -> FeatureMatrix:
    """One row per Buy trial, in buy.csv order."""
    key = ("space", space, drop_item_fixed_effects)
    if key in cohort._cache:
        return cohort._cache[key]
    b = cohort.buy
    names, X, tags = build_rows(
        cohort,
        space,
        b["subject_id"].to_numpy(),
        b["item_id"].to_numpy(),
        b["price_cents"].to_numpy(),
        drop_item_fixed_effects,
    )
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    meta = pd.DataFrame(
        {
            "subject_id": b["subject_id"].to_numpy(),
            "item_id": b["item_id"].to_numpy(),
            "price_cents": b["price_cents"].to_numpy(),
            "wtp_cents": cohort.buy_wtp_cents(),
            "trial_index": b["trial_index"].to_numpy(),
            "price_source": b["price_source"].to_numpy(),
        }
    )
    fm = FeatureMatrix(
        space=space,
        column_names=names,
        X=X,
        y=b["bought"].to_numpy().astype(np.int64),
        meta=meta,
        item_indexed=tags,
        n_subjects=cohort.n_subjects,
        n_items=cohort.n_items,
        drop_item_fixed_effects=drop_item_fixed_effects,
    )
    cohort._cache[key] = fm
    return fm
