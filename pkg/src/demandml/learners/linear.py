"""Logistic regression by IRLS and the cross-validated lasso-logit.

Both learners standardize columns on the training rows, drop columns that
are constant there, and keep the standardization with the fitted model so
prediction reuses it exactly.  Coefficients are stored on the standardized
scale; :meth:`FittedLinearModel.unstandardized` maps them back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import _backend
from ..simulate import logistic

RIDGE = 1e-8
MAX_ITER = 100
SCORE_TOL = 1e-8
SEPARATION_ETA = 25.0  # |logit| beyond this is probability 0 or 1 to ~1e-11
N_LAMBDA = 100
LAMBDA_RATIO = 1e-4


class FitError(ValueError):
    """Input that no linear fit can use (one outcome class, non-finite values)."""


@dataclass
class Convergence:
    converged: bool
    iterations: int
    rank_deficient: bool
    separated: bool = False


@dataclass
class FittedLinearModel:
    columns: list[str]
    coef: np.ndarray  # standardized scale, 0 for dropped columns
    intercept: float
    mean: np.ndarray
    sd: np.ndarray  # 0 marks a column dropped as constant
    convergence: Convergence
    penalty: float | None = None
    cv: dict = field(default_factory=dict)

    @property
    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.columns, self.coef.tolist()))

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.coef))

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} columns, got {X.shape[1]}")
        keep = self.sd > 0
        Z = (X[:, keep] - self.mean[keep]) / self.sd[keep]
        return self.intercept + Z @ self.coef[keep]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return logistic(self.linear_predictor(X))

    def unstandardized(self) -> tuple[float, dict[str, float]]:
        """Intercept and per-column coefficients in the original units."""
        keep = self.sd > 0
        beta = np.zeros_like(self.coef)
        beta[keep] = self.coef[keep] / self.sd[keep]
        b0 = self.intercept - float(np.sum(beta[keep] * self.mean[keep]))
        return b0, dict(zip(self.columns, beta.tolist()))


def soft_threshold(z: float, lam: float) -> float:
    """Minimizer of (b - z)^2 / 2 + lam * |b|."""
    return float(np.sign(z) * max(abs(z) - lam, 0.0))


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise FitError("X and y have inconsistent shapes")
    if len(y) < 2:
        raise FitError("need at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise FitError("non-finite feature values")
    if not np.all((y == 0) | (y == 1)):
        raise FitError("outcomes must be 0/1")
    if y.min() == y.max():
        raise FitError("outcome has a single class")
    return X, y


def standardize(X: np.ndarray):
    """Training-row mean and population sd; constant columns get sd 0."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    sd = np.where(const, 0.0, sd)
    return mean, sd


def _scaled(X, mean, sd):
    keep = sd > 0
    return (X[:, keep] - mean[keep]) / sd[keep], keep


def _penalized_dev(eta, y, beta, ridge):
    # mean deviance / 2 plus ridge on the slopes
    nll = np.mean(np.logaddexp(0.0, eta) - y * eta)
    return nll + 0.5 * ridge * float(beta @ beta)


def irls(Z: np.ndarray, y: np.ndarray, ridge: float = RIDGE, max_iter: int = MAX_ITER, tol: float = SCORE_TOL):
    """Newton/IRLS on the mean log-likelihood with a ridge on the slopes.

    Returns ``(intercept, beta, converged, iterations)``.  Convergence is
    declared when the largest entry of the mean-scaled score drops below
    ``tol``; a step that raises the penalized deviance is halved.
    """
    n, p = Z.shape
    A = np.column_stack([np.ones(n), Z])
    theta = np.zeros(p + 1)
    ybar = y.mean()
    theta[0] = np.log(ybar / (1.0 - ybar))
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    eta = A @ theta
    obj = _penalized_dev(eta, y, theta[1:], ridge)
    converged = False
    it = 0
    while it < max_iter:
        mu = logistic(eta)
        score = A.T @ (y - mu) / n - pen * theta
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        it += 1
        w = mu * (1.0 - mu)
        H = (A.T * w) @ A / n + np.diag(pen)
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = theta + t * step
            ceta = A @ cand
            cobj = _penalized_dev(ceta, y, cand[1:], ridge)
            if cobj <= obj + 1e-15 * abs(obj):
                break
            t *= 0.5
        theta, eta, obj = cand, ceta, cobj
    return float(theta[0]), theta[1:].copy(), converged, it


def _rank_deficient(Z: np.ndarray) -> bool:
    if Z.shape[1] == 0:
        return False
    A = np.column_stack([np.ones(len(Z)), Z])
    ev = np.linalg.eigvalsh(A.T @ A)
    return bool(ev[0] <= 1e-10 * ev[-1])


def fit_logit(X: np.ndarray, y: np.ndarray, columns: list[str] | None = None) -> FittedLinearModel:
    """Maximum-likelihood logit on standardized columns.

    A fixed ridge of ``1e-8`` on the standardized slopes keeps the Newton
    system solvable when columns are collinear; such fits carry
    ``rank_deficient=True``.  Separable data never converges, so the
    coefficients stop at the iteration cap with ``converged=False``.
    Under separation the ridge keeps the slopes finite but fitted
    probabilities reach 0 or 1 numerically; those fits carry
    ``separated=True``.
    """
    X, y = _check_inputs(X, y)
    if columns is None:
        columns = [f"x{k}" for k in range(X.shape[1])]
    mean, sd = standardize(X)
    Z, keep = _scaled(X, mean, sd)
    b0, beta, converged, it = irls(Z, y)
    coef = np.zeros(X.shape[1])
    coef[keep] = beta
    eta = b0 + Z @ beta
    separated = bool(np.any(np.abs(eta) > SEPARATION_ETA))
    conv = Convergence(converged, it, _rank_deficient(Z), separated)
    if not converged:
        warnings.warn("logit did not converge (possible separation)", RuntimeWarning, stacklevel=2)
    elif separated:
        warnings.warn("fitted probabilities numerically 0 or 1 (separation)", RuntimeWarning, stacklevel=2)
    return FittedLinearModel(list(columns), coef, b0, mean, sd, conv)


# -- lasso ------------------------------------------------------------------


def lambda_max(Z: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every slope is zero (intercept at the base rate)."""
    if Z.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Z.T @ (y - y.mean()))) / len(y))


def lambda_path(lmax: float, n_lambda: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    if lmax <= 0:
        return np.zeros(1)
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * ratio), n_lambda))


def _lasso_path(Z, y, lambdas, tol=1e-12, max_outer=100, max_sweeps=100000, early_stop=False, backend=None):
    """Warm-started glmnet-style path; returns intercepts (L,) and slopes (L, p).

    Each penalty runs outer IRLS steps around a coordinate-descent solve of
    the weighted least-squares subproblem.  With ``early_stop`` the path
    halts once the fit explains 99.9% of the null deviance or the explained
    fraction stops moving, and the remaining entries repeat the last fit.
    """
    k = _backend.get(backend)
    n, p = Z.shape
    Zf = np.asfortranarray(Z)
    ybar = y.mean()
    null_b0 = np.log(ybar / (1.0 - ybar))
    null_dev = _mean_deviance(np.full(n, null_b0), y)
    b0 = np.array([null_b0])
    beta = np.zeros(p)
    out_b0 = np.empty(len(lambdas))
    out_beta = np.zeros((len(lambdas), p))
    lmax = lambda_max(Z, y)
    prev_frac = 0.0
    li = 0
    for li, lam in enumerate(lambdas):
        if lam >= lmax:
            beta[:] = 0.0
            b0[0] = null_b0
        else:
            for _ in range(max_outer):
                eta = b0[0] + Zf @ beta
                mu = logistic(eta)
                w = np.maximum(mu * (1.0 - mu), 1e-5)
                r = np.ascontiguousarray(y - mu)
                xwx = np.ascontiguousarray((w @ (Zf * Zf)) / n)
                old_b0, old_beta = b0[0], beta.copy()
                k.cd_wls_lasso(Zf, np.ascontiguousarray(w), r, beta, b0, xwx, float(lam), tol, max_sweeps)
                # same weighted-change criterion as the inner solver
                dlx = float(np.max(xwx * (beta - old_beta) ** 2)) if p else 0.0
                dlx = max(dlx, float(np.mean(w)) * (b0[0] - old_b0) ** 2)
                if dlx < tol:
                    break
        out_b0[li] = b0[0]
        out_beta[li] = beta
        if early_stop and li > 0 and lam < lmax:
            frac = 1.0 - _mean_deviance(b0[0] + Zf @ beta, y) / null_dev
            if frac > 0.999 or frac - prev_frac < 1e-5 * frac:
                out_b0[li + 1 :] = b0[0]
                out_beta[li + 1 :] = beta
                break
            prev_frac = frac
    return out_b0, out_beta


def _mean_deviance(eta, y):
    return float(2.0 * np.mean(np.logaddexp(0.0, eta) - y * eta))


def fit_lasso(
    X: np.ndarray, y: np.ndarray, lam: float, columns: list[str] | None = None, backend: str | None = None
) -> FittedLinearModel:
    """Lasso-logit at one fixed penalty (on the standardized scale)."""
    X, y = _check_inputs(X, y)
    if lam < 0:
        raise FitError("penalty must be >= 0")
    if columns is None:
        columns = [f"x{k}" for k in range(X.shape[1])]
    mean, sd = standardize(X)
    Z, keep = _scaled(X, mean, sd)
    lmax = lambda_max(Z, y)
    path = lambda_path(lmax) if lmax > 0 else np.zeros(1)
    path = np.concatenate([path[path > lam], [lam]])
    b0s, betas = _lasso_path(Z, y, path, backend=backend)
    coef = np.zeros(X.shape[1])
    coef[keep] = betas[-1]
    conv = Convergence(True, len(path), False)
    return FittedLinearModel(list(columns), coef, float(b0s[-1]), mean, sd, conv, penalty=float(lam))


def stratified_folds(y: np.ndarray, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold label per row, dealing each outcome class round-robin after a shuffle."""
    fold = np.empty(len(y), dtype=np.int64)
    start = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (start + np.arange(len(idx))) % n_folds
        start = (start + len(idx)) % n_folds
    return fold


def fit_lasso_cv(
    X: np.ndarray,
    y: np.ndarray,
    columns: list[str] | None = None,
    n_folds: int = 10,
    lambdas: np.ndarray | None = None,
    seed: int = 0,
    tol: float = 1e-7,
    backend: str | None = None,
) -> FittedLinearModel:
    """Lasso-logit with the penalty chosen by stratified k-fold cross-validation.

    The penalty path is fixed from all training rows.  Each fold re-derives
    its own standardization from its own training part.  The selected
    penalty minimizes mean validation deviance (ties go to the larger
    penalty) and the model is refit on all rows at that penalty.
    """
    X, y = _check_inputs(X, y)
    n = len(y)
    if n < n_folds:
        raise FitError(f"need at least {n_folds} rows for {n_folds}-fold CV")
    if columns is None:
        columns = [f"x{k}" for k in range(X.shape[1])]
    mean, sd = standardize(X)
    Z, keep = _scaled(X, mean, sd)
    if lambdas is None:
        lambdas = lambda_path(lambda_max(Z, y))
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    fold = stratified_folds(y.astype(int), n_folds, np.random.default_rng(seed))
    cv_dev = np.zeros((n_folds, len(lambdas)))
    for f in range(n_folds):
        tr, va = fold != f, fold == f
        ytr = y[tr]
        if ytr.min() == ytr.max():
            # degenerate fold: constant prediction at every penalty
            p0 = np.clip(ytr.mean(), 1e-12, 1 - 1e-12)
            cv_dev[f] = _mean_deviance(np.full(va.sum(), np.log(p0 / (1 - p0))), y[va])
            continue
        fm, fs = standardize(X[tr])
        Ztr, fk = _scaled(X[tr], fm, fs)
        Zva, _ = _scaled(X[va], fm, fs)
        b0s, betas = _lasso_path(Ztr, ytr, lambdas, tol=tol, early_stop=True, backend=backend)
        eta = b0s[None, :] + Zva @ betas.T
        cv_dev[f] = [_mean_deviance(eta[:, li], y[va]) for li in range(len(lambdas))]
    mean_dev = cv_dev.mean(axis=0)
    best = int(np.flatnonzero(mean_dev == mean_dev.min())[0])  # path is descending: first = largest
    b0s, betas = _lasso_path(Z, y, lambdas[: best + 1], tol=tol, early_stop=True, backend=backend)
    coef = np.zeros(X.shape[1])
    coef[keep] = betas[-1]
    conv = Convergence(True, best + 1, False)
    cv = {
        "lambdas": lambdas.tolist(),
        "mean_deviance": mean_dev.tolist(),
        "se_deviance": (cv_dev.std(axis=0, ddof=1) / np.sqrt(n_folds)).tolist(),
        "selected": best,
    }
    return FittedLinearModel(
        list(columns), coef, float(b0s[-1]), mean, sd, conv, penalty=float(lambdas[best]), cv=cv
    )
