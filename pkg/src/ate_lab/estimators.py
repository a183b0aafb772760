"""Average treatment effect estimators.

Six estimators are exposed under string identifiers (see :data:`ESTIMATORS`):

* ``ipw_known`` / ``ipw_estimated``: normalized inverse propensity weighting
  with the known or a fitted propensity score.
* ``imputation_known`` / ``imputation_estimated``: finite-support imputation
  from within-cell empirical moments.
* ``kps``: known-propensity estimator with an outcome-regression correction.
* ``lm``: known-propensity IPW linearly corrected by the weighted covariate
  imbalance between arms.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import (
    EstimateResult,
    Sample,
    checked_propensities,
    propensities,
    weighted_group_means,
)
from .errors import DegenerateDesign, EmptyCellArm, FitFailure
from .nuisance import (
    CellTable,
    OutcomeRegression,
    PropensityFit,
    fit_outcome_regression,
    fit_propensity,
)

#: Eigenvalues below this fraction of the largest are dropped when solving for alpha.
PINV_RCOND = 1e-10


def _require_arms(sample: Sample):
    if sample.n_treated == 0 or sample.n_control == 0:
        raise DegenerateDesign(
            f"both arms must be non-empty (treated={sample.n_treated}, control={sample.n_control})"
        )


def _ipw_result(sample: Sample, p: np.ndarray, name: str, **extra) -> EstimateResult:
    _require_arms(sample)
    m_t, m_c = weighted_group_means(sample, p, sample.y)
    d = sample.d == 1
    diagnostics = {
        "treated_mean": float(m_t[0]),
        "control_mean": float(m_c[0]),
        "weight_sum_t": float(np.sum(1.0 / p[d])),
        "weight_sum_c": float(np.sum(1.0 / (1.0 - p[~d]))),
        **extra,
    }
    return EstimateResult(float(m_t[0] - m_c[0]), name, sample.n_treated, sample.n_control,
                          diagnostics=diagnostics)


def ipw_known(sample: Sample, ps) -> EstimateResult:
    """IPW contrast using the known propensity score, weights normalized per arm."""
    return _ipw_result(sample, propensities(sample, ps), "ipw_known")


def ipw_estimated(sample: Sample, fit: PropensityFit | str = "logistic") -> EstimateResult:
    """IPW contrast with a fitted propensity score.

    ``fit`` is a :class:`PropensityFit` or a strategy name passed to
    :func:`fit_propensity`.
    """
    if not isinstance(fit, PropensityFit):
        fit = fit_propensity(sample, fit)
    if not fit.converged:
        raise FitFailure(f"{fit.kind.value} propensity fit is incomplete: {fit.diagnostics}")
    return _ipw_result(sample, fit(sample.x), "ipw_estimated", fit_iterations=float(fit.iterations))


def imputation_finite_support(sample: Sample, ps=None) -> EstimateResult:
    """Finite-support imputation estimator.

    With ``ps`` given, the known propensity divides the within-cell means of
    ``D*Y`` and ``(1-D)*Y``; with ``ps=None`` the within-cell treated fraction
    is used instead, which requires every cell to contain both arms.
    """
    _require_arms(sample)
    table = CellTable(sample.x)
    d = sample.d.astype(float)
    e_dy, _ = table.means(d * sample.y)
    e_cy, _ = table.means((1.0 - d) * sample.y)
    if ps is None:
        e_d, _ = table.means(d)
        if np.any((e_d <= 0) | (e_d >= 1)):
            bad = int(np.flatnonzero((e_d <= 0) | (e_d >= 1))[0])
            raise EmptyCellArm(f"cell {table.values[bad].tolist()} lacks the "
                               f"{'treated' if e_d[bad] <= 0 else 'control'} arm")
        q = e_d[table.index]
        name = "imputation_estimated"
    else:
        q = checked_propensities(sample, ps)
        name = "imputation_known"
    terms = e_dy[table.index] / q - e_cy[table.index] / (1.0 - q)
    return EstimateResult(float(np.mean(terms)), name, sample.n_treated, sample.n_control,
                          diagnostics={"cells": float(len(table))})


def imputation_known(sample: Sample, ps) -> EstimateResult:
    return imputation_finite_support(sample, ps)


def imputation_estimated(sample: Sample) -> EstimateResult:
    return imputation_finite_support(sample, None)


def kps(sample: Sample, ps, reg: OutcomeRegression | str = "linear") -> EstimateResult:
    """Known-propensity-score estimator with regression correction.

    ``reg`` is a fitted :class:`OutcomeRegression` or a strategy name passed
    to :func:`fit_outcome_regression`.
    """
    p = checked_propensities(sample, ps)
    if not isinstance(reg, OutcomeRegression):
        reg = fit_outcome_regression(sample, reg)
    d = sample.d.astype(float)
    y = sample.y
    bt = np.asarray(reg.predict_t(sample.x), dtype=float)
    bc = np.asarray(reg.predict_c(sample.x), dtype=float)
    terms = d * y / p - (1 - d) * y / (1 - p) - (d - p) * (bt / p - bc / (1 - p))
    return EstimateResult(float(np.mean(terms)), "kps", sample.n_treated, sample.n_control,
                          diagnostics={"regression": reg.kind.value})


def x_ipw(sample: Sample, ps) -> np.ndarray:
    """Weighted treated-minus-control covariate means, shape ``(K,)``."""
    _require_arms(sample)
    m_t, m_c = weighted_group_means(sample, ps, sample.x)
    return m_t - m_c


def asycov_xx_hat(sample: Sample, ps) -> np.ndarray:
    """Sample estimate of the asymptotic covariance of ``x_ipw`` (K x K, PSD)."""
    p = checked_propensities(sample, ps)
    xc = sample.x - sample.x.mean(axis=0)
    w = 1.0 / (p * (1.0 - p))
    return (xc * w[:, None]).T @ xc / sample.n


def asycov_xb_hat(sample: Sample, ps) -> np.ndarray:
    """Sample estimate of the asymptotic covariance between ``x_ipw`` and IPW, shape ``(K,)``.

    The potential outcomes in the population formula appear only behind the
    ``D`` and ``1 - D`` masks, so the observed outcome stands in for both.
    """
    p = checked_propensities(sample, ps)
    d = sample.d.astype(float)
    y = sample.y
    n = sample.n
    m_t = np.sum(d * y / p) / n
    m_c = np.sum((1 - d) * y / (1 - p)) / n
    xc = sample.x - sample.x.mean(axis=0)
    r = d / p**2 * (y - m_t) + (1 - d) / (1 - p) ** 2 * (y - m_c)
    return xc.T @ r / n


def pseudo_solve(a: np.ndarray, b: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric PSD ``a`` via a truncated eigendecomposition.

    Directions with eigenvalue at most ``rcond * max eigenvalue`` contribute
    nothing to ``x``, so ``b - a @ x`` is orthogonal to the retained range.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    vals, vecs = np.linalg.eigh((a + a.T) / 2)
    top = vals.max(initial=0.0)
    if top <= 0:
        return np.zeros_like(b)
    keep = vals > rcond * top
    proj = vecs[:, keep].T @ b
    return vecs[:, keep] @ (proj / vals[keep])


def lm(sample: Sample, ps) -> EstimateResult:
    """Linearly modified IPW: ``ipw_known - alpha_hat @ x_ipw``."""
    p = checked_propensities(sample, ps)
    base = ipw_known(sample, p)
    imbalance = x_ipw(sample, p)
    alpha = pseudo_solve(asycov_xx_hat(sample, p), asycov_xb_hat(sample, p))
    alpha.setflags(write=False)
    return EstimateResult(
        base.estimate - float(alpha @ imbalance), "lm", sample.n_treated, sample.n_control,
        alpha_hat=alpha,
        diagnostics={"ipw_known": base.estimate, **{f"x_ipw_{j + 1}": float(v) for j, v in enumerate(imbalance)}},
    )


ESTIMATORS: dict[str, Callable[..., EstimateResult]] = {
    "ipw_known": ipw_known,
    "ipw_estimated": ipw_estimated,
    "imputation_known": imputation_known,
    "imputation_estimated": imputation_estimated,
    "kps": kps,
    "lm": lm,
}

#: Estimators that need the known propensity score.
KNOWN_PS = frozenset({"ipw_known", "imputation_known", "kps", "lm"})


def estimate(name: str, sample: Sample, ps=None, *, propensity_fit="logistic",
             regression="linear") -> EstimateResult:
    """Run the estimator registered as ``name``.

    ``ps`` is required for the known-propensity estimators; ``propensity_fit``
    configures ``ipw_estimated`` and ``regression`` configures ``kps``.
    """
    if name not in ESTIMATORS:
        raise KeyError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}")
    if name in KNOWN_PS and ps is None:
        raise ValueError(f"{name} needs the known propensity score")
    if name == "ipw_estimated":
        return ipw_estimated(sample, propensity_fit)
    if name == "imputation_estimated":
        return imputation_estimated(sample)
    if name == "kps":
        return kps(sample, ps, regression)
    return ESTIMATORS[name](sample, ps)
