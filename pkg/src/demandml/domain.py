"""Data model for the three elicitation tasks and their CSV persistence.

A :class:`Cohort` bundles the item catalogue, the subjects (with their bonus
items) and the three task tables:

* ``wtp``  -- one stated willingness-to-pay per (subject, item)
* ``afc``  -- one two-alternative forced choice per unordered item pair
* ``buy``  -- four posted-price purchase decisions per (subject, item)

All money is held as integer US cents on a 25-cent lattice.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

TICK_CENTS = 25
MAX_WTP_CENTS = 575
PRICE_SOURCES = ("WTP", "LOW", "MED", "HIGH")
SUPPORT_BOUNDS = {"LOW": (25, 100), "MED": (125, 200), "HIGH": (225, 575)}

WTP_COLUMNS = ["subject_id", "item_id", "wtp_cents", "trial_index"]
AFC_COLUMNS = ["subject_id", "left_item", "right_item", "chosen_item", "rt_ms", "trial_index"]
BUY_COLUMNS = ["subject_id", "item_id", "price_cents", "bought", "price_source", "trial_index"]

FILES = ("items.csv", "subjects.csv", "wtp.csv", "afc.csv", "buy.csv")


class CohortError(Exception):
    """Raised when cohort data cannot be read or fails validation."""


def is_money(cents) -> bool:
    return int(cents) == cents and cents >= 0 and cents % TICK_CENTS == 0


def dollars_to_cents(dollars: float) -> int:
    """Round a dollar amount to the nearest lattice point, in cents."""
    return int(round(dollars * 100 / TICK_CENTS)) * TICK_CENTS


@dataclass(frozen=True)
class Item:
    item_id: int
    abbrev: str
    name: str


@dataclass(frozen=True)
class Subject:
    subject_id: int
    gold_item: int
    silver_item: int


@dataclass(frozen=True)
class WtpRecord:
    subject: int
    item: int
    wtp: int
    trial_index: int


@dataclass(frozen=True)
class AfcTrial:
    subject: int
    left: int
    right: int
    chosen: int
    rt_ms: int
    trial_index: int


@dataclass(frozen=True)
class BuyTrial:
    subject: int
    item: int
    price: int
    bought: bool
    price_source: str
    trial_index: int


def _frame(rows, columns) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=columns)
    for col in columns:
        if col != "price_source":
            df[col] = df[col].astype(np.int64)
    return df


def wtp_frame(records: Iterable[WtpRecord]) -> pd.DataFrame:
    return _frame([(r.subject, r.item, r.wtp, r.trial_index) for r in records], WTP_COLUMNS)


def afc_frame(trials: Iterable[AfcTrial]) -> pd.DataFrame:
    return _frame(
        [(t.subject, t.left, t.right, t.chosen, t.rt_ms, t.trial_index) for t in trials],
        AFC_COLUMNS,
    )


def buy_frame(trials: Iterable[BuyTrial]) -> pd.DataFrame:
    return _frame(
        [(t.subject, t.item, t.price, int(t.bought), t.price_source, t.trial_index) for t in trials],
        BUY_COLUMNS,
    )


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable container for one experiment's worth of task data.

    The task tables are pandas frames whose columns follow the CSV schemas
    (``WTP_COLUMNS``, ``AFC_COLUMNS``, ``BUY_COLUMNS``).  Treat them as
    read-only; derived matrices are cached on first access.
    """

    items: tuple[Item, ...]
    subjects: tuple[Subject, ...]
    wtp: pd.DataFrame
    afc: pd.DataFrame
    buy: pd.DataFrame
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.items == other.items
            and self.subjects == other.subjects
            and self.wtp.equals(other.wtp)
            and self.afc.equals(other.afc)
            and self.buy.equals(other.buy)
        )

    __hash__ = None

    @cached_property
    def wtp_matrix(self) -> np.ndarray:
        """Stated WTP in cents, shape (n_subjects, n_items)."""
        m = np.zeros((self.n_subjects, self.n_items), dtype=np.int64)
        m[self.wtp["subject_id"].to_numpy(), self.wtp["item_id"].to_numpy()] = self.wtp["wtp_cents"].to_numpy()
        return m

    @cached_property
    def choice_tensor(self) -> np.ndarray:
        """``choice[i, j, k] = 1`` when subject i chose item j over item k."""
        S, J = self.n_subjects, self.n_items
        c = np.zeros((S, J, J), dtype=np.int8)
        afc = self.afc
        s = afc["subject_id"].to_numpy()
        chosen = afc["chosen_item"].to_numpy()
        other = np.where(chosen == afc["left_item"].to_numpy(), afc["right_item"].to_numpy(), afc["left_item"].to_numpy())
        c[s, chosen, other] = 1
        return c

    @cached_property
    def rt_tensor(self) -> np.ndarray:
        """Response time in seconds for the (j, k) pairing, symmetric, zero diagonal."""
        S, J = self.n_subjects, self.n_items
        rt = np.zeros((S, J, J))
        afc = self.afc
        s = afc["subject_id"].to_numpy()
        left = afc["left_item"].to_numpy()
        right = afc["right_item"].to_numpy()
        sec = afc["rt_ms"].to_numpy() / 1000.0
        rt[s, left, right] = sec
        rt[s, right, left] = sec
        return rt

    def buy_wtp_cents(self) -> np.ndarray:
        """Stated WTP of each Buy row's subject-item, in buy.csv order."""
        return self.wtp_matrix[self.buy["subject_id"].to_numpy(), self.buy["item_id"].to_numpy()]


def validate_cohort(c: Cohort) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out: list[str] = []
    S, J = c.n_subjects, c.n_items
    if J < 2:
        out.append(f"cohort: need at least 2 items, got {J}")
    for k, it in enumerate(c.items):
        if it.item_id != k:
            out.append(f"items.csv row {k}: item_id {it.item_id} breaks dense 0-based numbering")
    for k, sub in enumerate(c.subjects):
        if sub.subject_id != k:
            out.append(f"subjects.csv row {k}: subject_id {sub.subject_id} breaks dense 0-based numbering")
        if not (0 <= sub.gold_item < J and 0 <= sub.silver_item < J):
            out.append(f"subject {sub.subject_id}: bonus item outside [0, {J})")
        if sub.gold_item == sub.silver_item:
            out.append(f"subject {sub.subject_id}: gold_item equals silver_item")

    def ref_check(df, name, col, n):
        bad = df.index[(df[col] < 0) | (df[col] >= n)]
        for r in bad[:5]:
            out.append(f"{name} row {r}: unknown {col} {df.at[r, col]}")
        if len(bad) > 5:
            out.append(f"{name}: {len(bad) - 5} more unknown {col} references")
        return len(bad) == 0

    # wtp
    w = c.wtp
    ok_refs = ref_check(w, "wtp", "subject_id", S) & ref_check(w, "wtp", "item_id", J)
    for r in w.index[(w["wtp_cents"] % TICK_CENTS != 0) | (w["wtp_cents"] < 0)]:
        out.append(f"wtp row {r}: wtp_cents {w.at[r, 'wtp_cents']} not multiple of 25 (or negative)")
    for r in w.index[w["wtp_cents"] > MAX_WTP_CENTS]:
        out.append(f"wtp row {r}: wtp_cents {w.at[r, 'wtp_cents']} above {MAX_WTP_CENTS}")
    for r in w.index[(w["trial_index"] < 1) | (w["trial_index"] > J)]:
        out.append(f"wtp row {r}: trial_index {w.at[r, 'trial_index']} outside [1, {J}]")
    if ok_refs:
        counts = w.groupby(["subject_id", "item_id"]).size()
        for (s, j), n in counts[counts != 1].items():
            out.append(f"wtp (subject {s}, item {j}): {n} records, expected 1")
        if len(counts) != S * J:
            out.append(f"wtp: {len(counts)} subject-item pairs covered, expected {S * J}")

    # afc
    a = c.afc
    ok_refs = (
        ref_check(a, "afc", "subject_id", S)
        & ref_check(a, "afc", "left_item", J)
        & ref_check(a, "afc", "right_item", J)
    )
    for r in a.index[a["left_item"] == a["right_item"]]:
        out.append(f"afc row {r}: left_item equals right_item")
    for r in a.index[(a["chosen_item"] != a["left_item"]) & (a["chosen_item"] != a["right_item"])]:
        out.append(f"afc row {r}: chosen_item not one of the pair")
    for r in a.index[a["rt_ms"] <= 0]:
        out.append(f"afc row {r}: rt_ms must be positive")
    for r in a.index[a["trial_index"] < 1]:
        out.append(f"afc row {r}: trial_index must be >= 1")
    if ok_refs:
        lo = np.minimum(a["left_item"], a["right_item"])
        hi = np.maximum(a["left_item"], a["right_item"])
        pairs = pd.DataFrame({"s": a["subject_id"], "lo": lo, "hi": hi})
        counts = pairs.groupby(["s", "lo", "hi"]).size()
        for (s, j, k), n in counts[counts != 1].items():
            out.append(f"afc (subject {s}, pair {j}-{k}): {n} trials, expected 1")
        expected = S * J * (J - 1) // 2
        if len(counts) != expected:
            out.append(f"afc: {len(counts)} subject-pairs covered, expected {expected}")

    # buy
    b = c.buy
    ok_refs = ref_check(b, "buy", "subject_id", S) & ref_check(b, "buy", "item_id", J)
    for r in b.index[(b["price_cents"] % TICK_CENTS != 0) | (b["price_cents"] < 0)]:
        out.append(f"buy row {r}: price_cents {b.at[r, 'price_cents']} not multiple of 25 (or negative)")
    for r in b.index[~b["bought"].isin([0, 1])]:
        out.append(f"buy row {r}: bought must be 0 or 1")
    for r in b.index[~b["price_source"].isin(PRICE_SOURCES)]:
        out.append(f"buy row {r}: unknown price_source {b.at[r, 'price_source']!r}")
    for r in b.index[b["trial_index"] < 1]:
        out.append(f"buy row {r}: trial_index must be >= 1")
    for src, (lo_c, hi_c) in SUPPORT_BOUNDS.items():
        m = (b["price_source"] == src) & ((b["price_cents"] < lo_c) | (b["price_cents"] > hi_c))
        for r in b.index[m]:
            out.append(f"buy row {r}: {src} price {b.at[r, 'price_cents']} outside [{lo_c}, {hi_c}]")
    if ok_refs:
        counts = b.groupby(["subject_id", "item_id"]).size()
        for (s, j), n in counts[counts != 4].items():
            out.append(f"buy (subject {s}, item {j}): {n} trials, expected 4")
        if len(counts) != S * J:
            out.append(f"buy: {len(counts)} subject-item pairs covered, expected {S * J}")
        at_wtp = b[b["price_source"] == "WTP"]
        n_wtp = at_wtp.groupby(["subject_id", "item_id"]).size()
        for (s, j), n in n_wtp[n_wtp != 1].items():
            out.append(f"buy (subject {s}, item {j}): {n} WTP-sourced trials, expected 1")
        if len(w) and ok_refs:
            wm = np.full((S, J), -1, dtype=np.int64)
            wm[w["subject_id"].to_numpy(), w["item_id"].to_numpy()] = w["wtp_cents"].to_numpy()
            stated = wm[at_wtp["subject_id"].to_numpy(), at_wtp["item_id"].to_numpy()]
            for r, p, s_ in zip(at_wtp.index, at_wtp["price_cents"].to_numpy(), stated):
                if p != s_:
                    out.append(f"buy row {r}: WTP-sourced price {p} differs from stated WTP {s_}")
    return out


def make_cohort(items, subjects, wtp, afc, buy) -> Cohort:
    """Build a cohort from record sequences or ready-made frames."""

    def as_frame(x, builder, columns):
        if isinstance(x, pd.DataFrame):
            return x[columns].reset_index(drop=True)
        return builder(x)

    return Cohort(
        items=tuple(items),
        subjects=tuple(subjects),
        wtp=as_frame(wtp, wtp_frame, WTP_COLUMNS),
        afc=as_frame(afc, afc_frame, AFC_COLUMNS),
        buy=as_frame(buy, buy_frame, BUY_COLUMNS),
    )


# -- CSV persistence ---------------------------------------------------------


def save_cohort(c: Cohort, dir_path) -> list[Path]:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / f for f in FILES]
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["item_id", "abbrev", "name"])
        wr.writerows((it.item_id, it.abbrev, it.name) for it in c.items)
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["subject_id", "gold_item", "silver_item"])
        wr.writerows((s.subject_id, s.gold_item, s.silver_item) for s in c.subjects)
    for path, df in zip(paths[2:], (c.wtp, c.afc, c.buy)):
        df.to_csv(path, index=False, lineterminator="\n")
    return paths


def _read_rows(path: Path, header: list[str], types: list) -> list[tuple]:
    if not path.exists():
        raise CohortError(f"missing file: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        try:
            got = next(rd)
        except StopIteration:
            raise CohortError(f"{path.name}: empty file") from None
        if got != header:
            raise CohortError(f"{path.name}:1: header {got} != expected {header}")
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortError(f"{path.name}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append(tuple(t(v) for t, v in zip(types, row)))
            except ValueError as exc:
                raise CohortError(f"{path.name}:{lineno}: malformed row ({exc})") from None
    return rows


def load_cohort(dir_path) -> Cohort:
    """Read the five cohort CSVs from ``dir_path`` and validate them.

    Raises
    ------
    CohortError
        On a missing file, a malformed row (message carries ``file:line``)
        or any invariant violation.
    """
    d = Path(dir_path)
    items = [Item(*r) for r in _read_rows(d / "items.csv", ["item_id", "abbrev", "name"], [int, str, str])]
    subjects = [
        Subject(*r) for r in _read_rows(d / "subjects.csv", ["subject_id", "gold_item", "silver_item"], [int, int, int])
    ]
    wtp = _read_rows(d / "wtp.csv", WTP_COLUMNS, [int] * 4)
    afc = _read_rows(d / "afc.csv", AFC_COLUMNS, [int] * 6)
    buy = _read_rows(d / "buy.csv", BUY_COLUMNS, [int, int, int, int, str, int])
    c = Cohort(
        items=tuple(items),
        subjects=tuple(subjects),
        wtp=_frame(wtp, WTP_COLUMNS),
        afc=_frame(afc, AFC_COLUMNS),
        buy=_frame(buy, BUY_COLUMNS),
    )
    problems = validate_cohort(c)
    if problems:
        head = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise CohortError(f"cohort in {os.fspath(d)} failed validation: {head}{more}")
    return c
