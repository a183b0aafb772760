"""Plug-in nuisance fits: propensity scores and per-arm outcome regressions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DEFAULT_EPS, Sample, expit
from .errors import DegenerateDesign, EmptySupport, FitFailure, SingularDesign

RIDGE_COND_LIMIT = 1e12
RIDGE_SCALE = 1e-8


class CellTable:
    """Finite-support cells: exact equality of covariate rows defines a cell."""

    def __init__(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        self.values, self.index = np.unique(x, axis=0, return_inverse=True)
        self.index = self.index.reshape(-1)
        self._lookup = {tuple(row): i for i, row in enumerate(self.values.tolist())}

    def __len__(self):
        return self.values.shape[0]

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        """Cell indices for the rows of ``x``; unseen rows raise :class:`EmptySupport`."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        out = np.empty(x.shape[0], dtype=np.intp)
        for i, row in enumerate(x.tolist()):
            try:
                out[i] = self._lookup[tuple(row)]
            except KeyError:
                raise EmptySupport(f"covariate value {row} was not seen in the fitted sample") from None
        return out

    def means(self, values: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell means of ``values`` over units selected by ``mask`` and the unit counts."""
        w = np.ones(self.index.shape[0]) if mask is None else np.asarray(mask, dtype=float)
        counts = np.bincount(self.index, weights=w, minlength=len(self))
        sums = np.bincount(self.index, weights=w * values, minlength=len(self))
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums / counts, counts


# --------------------------------------------------------------------------
# propensity


class PropensityKind(str, enum.Enum):
    CELL_FREQUENCIES = "cells"
    LOGISTIC_MLE = "logistic"


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """A fitted propensity map ``p_hat``; call it on an ``(n, K)`` array.

    ``converged`` is False for a logistic fit that failed, and for a cell
    table in which some cell lacks an arm.
    """

    kind: PropensityKind
    predict: Callable[[np.ndarray], np.ndarray]
    converged: bool
    iterations: int = 0
    coefficients: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return self.predict(x)


def fit_propensity(sample: Sample, kind="logistic", eps: float = DEFAULT_EPS, tol: float = 1e-10,
                   max_iter: int = 100) -> PropensityFit:
    """Fit ``p_hat`` by cell frequencies or by logistic maximum likelihood.

    Raises
    ------
    FitFailure
        The logistic likelihood has no finite maximizer (separation) or Newton
        iterations did not converge.
    """
    kind = PropensityKind(kind)
    if kind is PropensityKind.CELL_FREQUENCIES:
        return _fit_cell_frequencies(sample, eps)
    return _fit_logistic(sample, eps, tol, max_iter)


def _fit_cell_frequencies(sample: Sample, eps: float) -> PropensityFit:
    table = CellTable(sample.x)
    frac, counts = table.means(sample.d.astype(float))
    raw = frac.copy()
    frac = np.clip(frac, eps, 1 - eps)

    def predict(x):
        return frac[table.cell_of(x)]

    complete = bool(np.all((raw > 0) & (raw < 1)))
    return PropensityFit(
        PropensityKind.CELL_FREQUENCIES,
        predict,
        converged=complete,
        diagnostics={"cells": float(len(table)), "cells_missing_arm": float(np.sum((raw == 0) | (raw == 1)))},
    )


def _fit_logistic(sample: Sample, eps: float, tol: float, max_iter: int) -> PropensityFit:
    z = np.column_stack([np.ones(sample.n), sample.x])
    d = sample.d.astype(float)
    n = sample.n
    beta = np.zeros(z.shape[1])

    def loglik(b):
        eta = z @ b
        return float(np.sum(d * eta - np.logaddexp(0.0, eta))) / n

    ll = loglik(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(z @ beta)
        grad = z.T @ (d - p) / n
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        hess = (z * (p * (1 - p))[:, None]).T @ z / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise FitFailure("logistic Hessian is singular") from None
        # step halving keeps the log-likelihood monotone
        for _ in range(50):
            cand = beta + step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-15:
                break
            step = step / 2
        beta, ll = cand, ll_new
    if not converged:
        raise FitFailure(f"logistic MLE did not converge in {max_iter} Newton iterations")
    p = expit(z @ beta)
    if np.any(p <= eps) or np.any(p >= 1 - eps):
        raise FitFailure("logistic MLE drives fitted propensities to the boundary (separation)")
    coef = beta.copy()
    coef.setflags(write=False)

    def predict(x):
        return expit(coef[0] + x @ coef[1:])

    return PropensityFit(PropensityKind.LOGISTIC_MLE, predict, True, it, coef,
                         {"loglik": ll * n})


# --------------------------------------------------------------------------
# outcome regression


class RegressionKind(str, enum.Enum):
    CELL_MEANS = "cells"
    LINEAR_LEAST_SQUARES = "linear"


@dataclass(frozen=True, eq=False)
class OutcomeRegression:
    """Fitted per-arm conditional mean predictors ``beta_t_hat``, ``beta_c_hat``."""

    kind: RegressionKind
    predict_t: Callable[[np.ndarray], np.ndarray]
    predict_c: Callable[[np.ndarray], np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, t: float = 0.0, c: float = 0.0) -> "OutcomeRegression":
        return cls(RegressionKind.LINEAR_LEAST_SQUARES,
                   lambda x: np.full(np.shape(x)[0], float(t)),
                   lambda x: np.full(np.shape(x)[0], float(c)))


def fit_outcome_regression(sample: Sample, kind="linear") -> OutcomeRegression:
    """Fit per-arm predictors of ``E[Y | X, D]``.

    ``"cells"`` uses within-cell arm means, imputing the arm-pooled cell mean
    where a cell lacks an arm.  ``"linear"`` is an affine least-squares fit
    per arm; a moment matrix with condition number above 1e12 gets a ridge of
    ``1e-8 * trace / dim`` on its diagonal.
    """
    kind = RegressionKind(kind)
    if sample.n_treated == 0 or sample.n_control == 0:
        raise DegenerateDesign("outcome regression needs both arms")
    if kind is RegressionKind.CELL_MEANS:
        return _fit_cell_means(sample)
    coef_t, ridged_t = _affine_fit(sample.x[sample.d == 1], sample.y[sample.d == 1])
    coef_c, ridged_c = _affine_fit(sample.x[sample.d == 0], sample.y[sample.d == 0])
    return OutcomeRegression(
        kind,
        lambda x: coef_t[0] + np.asarray(x, dtype=float).reshape(np.shape(x)[0], -1) @ coef_t[1:],
        lambda x: coef_c[0] + np.asarray(x, dtype=float).reshape(np.shape(x)[0], -1) @ coef_c[1:],
        {"ridge_t": float(ridged_t), "ridge_c": float(ridged_c),
         "coef_t": coef_t.tolist(), "coef_c": coef_c.tolist()},
    )


def _fit_cell_means(sample: Sample) -> OutcomeRegression:
    table = CellTable(sample.x)
    treated = sample.d == 1
    mean_t, n_t = table.means(sample.y, treated)
    mean_c, n_c = table.means(sample.y, ~treated)
    pooled, _ = table.means(sample.y)
    mean_t = np.where(n_t > 0, mean_t, pooled)
    mean_c = np.where(n_c > 0, mean_c, pooled)
    return OutcomeRegression(
        RegressionKind.CELL_MEANS,
        lambda x: mean_t[table.cell_of(x)],
        lambda x: mean_c[table.cell_of(x)],
        {"cells": float(len(table)), "imputed_t": float(np.sum(n_t == 0)), "imputed_c": float(np.sum(n_c == 0))},
    )


def _affine_fit(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    z = np.column_stack([np.ones(x.shape[0]), x])
    m = z.T @ z
    rhs = z.T @ y
    ridged = False
    if not np.isfinite(np.linalg.cond(m)) or np.linalg.cond(m) > RIDGE_COND_LIMIT:
        m = m + RIDGE_SCALE * np.trace(m) / m.shape[0] * np.eye(m.shape[0])
        ridged = True
        if not np.isfinite(np.linalg.cond(m)) or np.linalg.cond(m) > RIDGE_COND_LIMIT:
            raise SingularDesign("least-squares moment matrix is singular after the ridge fallback")
    coef = np.linalg.solve(m, rhs)
    coef.setflags(write=False)
    return coef, ridged
