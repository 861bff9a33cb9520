import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demandml.evaluation import auc, binomial_deviance, mse


def test_mse_examples():
    assert mse([0.5, 0.5], [1, 0]) == 0.25
    assert mse([1, 0, 1], [1, 0, 1]) == 0.0
    # (0 + 1 + 0.62^2) / 3
    assert mse([1, 0, 0.62], [1, 1, 0]) == pytest.approx(0.46147, abs=5e-6)


def test_deviance_examples():
    n = 7
    assert binomial_deviance([0.5] * n, [1, 0, 1, 1, 0, 0, 1]) == pytest.approx(n * math.log(2), rel=1e-14)
    assert binomial_deviance([1.0, 0.0], [1, 0]) < 1e-10
    # a certain but wrong prediction is clipped, not infinite
    assert binomial_deviance([0.0], [1]) == pytest.approx(-math.log(1e-12), rel=1e-12)
    assert binomial_deviance([0.0], [1]) == pytest.approx(27.631, abs=1e-3)


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3], [1, 0, 0]) == 1.0
    assert auc([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.4] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.1, 0.9], [1, 0]) == 0.0


def test_auc_needs_both_classes():
    with pytest.raises(ValueError):
        auc([0.2, 0.3], [1, 1])


def test_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        mse([0.1], [1, 0])


def _brute_auc(pred, y):
    pos = [p for p, t in zip(pred, y) if t == 1]
    neg = [p for p, t in zip(pred, y) if t == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def _brute_dev(pred, y):
    total = 0.0
    for p, t in zip(pred, y):
        p = min(max(p, 1e-12), 1 - 1e-12)
        total -= math.log(p) if t == 1 else math.log(1 - p)
    return total


# Predictions drawn from a coarse grid so ties are common.
_cases = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.62, 0.75, 0.9, 1.0]) | st.floats(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(_cases)
def test_metrics_match_brute_force(case):
    pred, y = case
    assert mse(pred, y) == pytest.approx(sum((t - p) ** 2 for p, t in zip(pred, y)) / len(y), abs=1e-12)
    assert binomial_deviance(pred, y) == pytest.approx(_brute_dev(pred, y), rel=1e-10, abs=1e-9)
    if 0 < sum(y) < len(y):
        assert auc(pred, y) == pytest.approx(_brute_auc(pred, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(_cases, st.randoms(use_true_random=False))
def test_metrics_permutation_invariant(case, rnd):
    pred, y = case
    idx = list(range(len(y)))
    rnd.shuffle(idx)
    p2, y2 = [pred[i] for i in idx], [y[i] for i in idx]
    assert mse(p2, y2) == pytest.approx(mse(pred, y), abs=1e-15)
    if 0 < sum(y) < len(y):
        assert auc(p2, y2) == auc(pred, y)


@settings(max_examples=100, deadline=None)
@given(_cases)
def test_auc_invariant_to_positive_scaling(case):
    pred, y = case
    if 0 < sum(y) < len(y):
        assert auc(np.asarray(pred) * 4.0, y) == pytest.approx(auc(pred, y), abs=1e-12)
