import numpy as np
import pandas as pd
import pytest

from demandml.domain import make_cohort
from demandml.features import SPACES, assemble_space, build_rows, group_sizes, space_size
from demandml.simulate import SimConfig, simulate_cohort

TABLE_SIZES = {"C": 149, "W": 225, "WO": 625, "A": 360, "AR": 447, "WA": 436, "WOA": 836, "WOAR": 923}


def _with(c, **frames):
    parts = dict(items=c.items, subjects=c.subjects, wtp=c.wtp, afc=c.afc, buy=c.buy)
    parts.update(frames)
    return make_cohort(**parts)


def _row(c, space, s, j, price):
    names, X, _ = build_rows(c, space, [s], [j], [price])
    return dict(zip(names, X[0]))


@pytest.mark.parametrize("space", sorted(SPACES))
def test_space_sizes(cohort, space):
    fm = assemble_space(cohort, space)
    assert fm.X.shape == (4400, TABLE_SIZES[space])
    assert space_size(space, 55, 20) == TABLE_SIZES[space]
    assert len(set(fm.column_names)) == len(fm.column_names)


def test_group_sizes_55x20():
    assert group_sizes(55, 20) == {"core": 149, "wtp": 76, "otherwtp": 400, "afc": 211, "rt": 87}


def test_single_subject_two_items():
    c, _ = simulate_cohort(SimConfig(seed=0, n_subjects=1, n_items=2))
    fm = assemble_space(c, "C")
    assert fm.X.shape[1] == 5
    assert fm.column_names == ["price", "price^2", "price^3", "item2", "price:item2"]


def test_price_cubed(cohort):
    assert _row(cohort, "C", 0, 0, 200)["price^3"] == 8.0


def test_zero_wtp_row(small_cohort):
    w = small_cohort.wtp.copy()
    w.loc[(w["subject_id"] == 4) & (w["item_id"] == 3), "wtp_cents"] = 0
    c = _with(small_cohort, wtp=w)
    names, X, _ = build_rows(c, "W", [4], [3], [150])
    core = len(build_rows(c, "C", [4], [3], [150])[0])
    assert np.all(X[0, core:] == 0.0)
    assert len(names) - core == group_sizes(12, 6)["wtp"]


def test_constant_wtp_vector(small_cohort):
    w = small_cohort.wtp.copy()
    w.loc[w["subject_id"] == 2, "wtp_cents"] = 175
    c = _with(small_cohort, wtp=w)
    row = _row(c, "WO", 2, 1, 100)
    assert all(row[f"wtp_item{m + 1}"] == 1.75 for m in range(6))


def test_dominant_item_share_and_rank(cohort):
    a = cohort.afc.copy()
    s, item = 7, 4  # zero-based item 4 is item5
    mask = (a["subject_id"] == s) & ((a["left_item"] == item) | (a["right_item"] == item))
    assert mask.sum() == 19
    a.loc[mask, "chosen_item"] = item
    c = _with(cohort, afc=a)
    row = _row(c, "A", s, 0, 100)
    assert row["share_item5"] == 1.0
    assert row["rank_item5"] == 1.0
    own = _row(c, "A", s, item, 100)
    assert own["share"] == 1.0 and own["rank"] == 1.0


def test_equal_rts(small_cohort):
    a = small_cohort.afc.copy()
    a.loc[a["subject_id"] == 1, "rt_ms"] = 800
    c = _with(small_cohort, afc=a)
    row = _row(c, "AR", 1, 2, 100)
    assert row["rt_sd"] == 0.0
    assert row["rt_signed_speed"] == 0.0
    assert row["rt_mean"] == pytest.approx(0.8)


@pytest.mark.parametrize(
    "big,small,extra",
    [("W", "C", "wtp"), ("WO", "W", "otherwtp"), ("A", "C", "afc"), ("AR", "A", "rt"),
     ("WA", "W", "afc"), ("WOA", "WO", "afc"), ("WOAR", "WOA", "rt")],
)
def test_space_unions(small_cohort, big, small, extra):
    nb = build_rows(small_cohort, big, [0], [0], [100])[0]
    ns = build_rows(small_cohort, small, [0], [0], [100])[0]
    assert nb[: len(ns)] == ns
    assert len(nb) - len(ns) == group_sizes(12, 6)[extra]


def test_drop_item_fixed_effects(cohort):
    fm = assemble_space(cohort, "C", drop_item_fixed_effects=True)
    assert fm.X.shape[1] == 111
    assert not fm.item_indexed.any()
    assert not any("item" in n for n in fm.column_names)
    full = assemble_space(cohort, "WOA")
    dropped = assemble_space(cohort, "WOA", drop_item_fixed_effects=True)
    assert dropped.X.shape[1] == full.X.shape[1] - int(full.item_indexed.sum())


def test_build_rows_matches_assemble(small_cohort):
    fm = assemble_space(small_cohort, "WOAR")
    b = small_cohort.buy
    names, X, tags = build_rows(small_cohort, "WOAR", b["subject_id"], b["item_id"], b["price_cents"])
    assert names == fm.column_names
    assert np.array_equal(X, fm.X)
    assert np.array_equal(tags, fm.item_indexed)
    assert np.array_equal(fm.y, b["bought"].to_numpy())


def test_frame_layout(small_cohort):
    df = assemble_space(small_cohort, "W").frame()
    assert list(df.columns[:4]) == ["subject_id", "item_id", "price_cents", "bought"]
    assert len(df) == len(small_cohort.buy)


def test_unknown_space(small_cohort):
    with pytest.raises(ValueError, match="unknown feature space"):
        assemble_space(small_cohort, "XYZ")
