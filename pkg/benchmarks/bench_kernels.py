"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py --trees 20 --repeat 3

Both backends run the same workloads on a simulated cohort and must give
identical forests; the script reports the best wall time of each.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from demandml import _backend
from demandml.features import assemble_space
from demandml.learners.forest import fit_random_forest, variable_importance
from demandml.learners.linear import _lasso_path, _scaled, lambda_max, lambda_path, standardize
from demandml.simulate import SimConfig, simulate_cohort


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--space", default="W", help="feature space (default W)")
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n-subjects", type=int, default=55)
    args = ap.parse_args(argv)

    if not _backend.COMPILED:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    c, _ = simulate_cohort(SimConfig(seed=1, n_subjects=args.n_subjects))
    fm = assemble_space(c, args.space)
    X, y = fm.X, fm.y.astype(float)
    mean, sd = standardize(X)
    Z, _ = _scaled(X, mean, sd)
    lams = lambda_path(lambda_max(Z, y), n_lambda=20)
    print(f"{args.space}: {X.shape[0]} rows x {X.shape[1]} columns, {args.trees} trees")

    results = {}
    for name in ("cython", "python"):
        fit = lambda: fit_random_forest(  # noqa: E731
            X, y, n_trees=args.trees, mtry_values=[max(1, X.shape[1] // 3)], min_leaf_values=[1, 5], seed=0, backend=name
        )
        t_fit, forest = best_of(fit, args.repeat)
        t_pred, pred = best_of(lambda: forest.predict_proba(X, backend=name), args.repeat)
        t_imp, _ = best_of(lambda: variable_importance(forest, X, y, backend=name), args.repeat)
        t_lasso, _ = best_of(lambda: _lasso_path(Z, y, lams, tol=1e-7, backend=name), args.repeat)
        results[name] = (t_fit, t_pred, t_imp, t_lasso, pred)

    same = np.array_equal(results["cython"][4], results["python"][4])
    print(f"{'kernel':<22}{'cython':>10}{'python':>10}{'speedup':>10}")
    for k, label in enumerate(["forest fit + OOB", "forest predict", "permutation importance", "lasso path (20)"]):
        a, b = results["cython"][k], results["python"][k]
        print(f"{label:<22}{a:>9.3f}s{b:>9.3f}s{b / a:>9.1f}x")
    print(f"identical predictions: {same}")


if __name__ == "__main__":
    main()
