"""Simulation study: logistic-propensity linear-outcome DGP, R(theta, t) and replications.

The DGP has covariates ``X = (I, U, C)`` drawn iid, propensity
``expit(gamma @ X + logit_intercept)`` with ``gamma = (t, t, 0)`` by default,
and potential outcomes ``Y^T = a1 + c1 @ X + sigma_t * e_T`` and
``Y^C = a0 + c0(theta) @ X + sigma_c * e_C`` where
``c0(theta) = (0, sin theta, cos theta)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import asymptotics as asy
from .core import LogisticPropensity, Role, Sample
from .errors import AteLabError, DegenerateDenominator, UnsupportedModel
from .estimators import estimate
from .rng import DEFAULT_SEED, derive_seed, stream

#: Published propensity-strength grids per covariate law.
TABLE_GRIDS = {"uniform": (2.0, 1.0, 0.5), "normal": (1.0, 0.5, 0.25)}
#: Published average reduction proportions R(t).
PUBLISHED_R = {
    ("uniform", 2.0): 0.8302, ("uniform", 1.0): 0.9022, ("uniform", 0.5): 0.9652,
    ("normal", 1.0): 0.8445, ("normal", 0.5): 0.9141, ("normal", 0.25): 0.9708,
}
DEFAULT_THETA_GRID = 64


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the simulation DGP.

    ``gamma`` and ``c0`` default to ``(t, t, 0)`` and ``(0, sin theta, cos theta)``;
    set them explicitly to study other designs (e.g. an inert instrument).
    """

    covariate_dist: str = "uniform"
    t: float = 1.0
    theta: float = 0.0
    a0: float = 0.0
    a1: float = 0.0
    c1: tuple[float, float, float] = (0.0, 0.0, 1.0)
    logit_intercept: float = 1.0
    sigma_t: float = 1.0
    sigma_c: float = 1.0
    gamma: tuple[float, float, float] | None = None
    c0: tuple[float, float, float] | None = None

    def __post_init__(self):
        asy.CoordinateDist(self.covariate_dist)
        object.__setattr__(self, "c1", tuple(float(v) for v in self.c1))
        for name in ("gamma", "c0"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(u) for u in v))
        if len(self.c1) != 3 or (self.gamma is not None and len(self.gamma) != 3) or (
                self.c0 is not None and len(self.c0) != 3):
            raise ValueError("c1, c0 and gamma are 3-vectors over (I, U, C)")
        if self.sigma_t < 0 or self.sigma_c < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @property
    def gamma_vec(self) -> np.ndarray:
        return np.array(self.gamma if self.gamma is not None else (self.t, self.t, 0.0))

    @property
    def c0_vec(self) -> np.ndarray:
        if self.c0 is not None:
            return np.array(self.c0)
        return np.array([0.0, math.sin(self.theta), math.cos(self.theta)])

    @property
    def c1_vec(self) -> np.ndarray:
        return np.array(self.c1)

    @property
    def true_ate(self) -> float:
        # every covariate law used here has mean zero
        return self.a1 - self.a0

    def propensity(self) -> LogisticPropensity:
        return LogisticPropensity(self.gamma_vec, self.logit_intercept)

    def population_model(self) -> asy.PopulationModel:
        ps = self.propensity()
        c1, c0 = self.c1_vec, self.c0_vec
        a1, a0 = self.a1, self.a0
        vt, vc = self.sigma_t**2, self.sigma_c**2
        return asy.PopulationModel.independent(
            [self.covariate_dist] * 3,
            ps,
            lambda x: a1 + x @ c1,
            lambda x: a0 + x @ c0,
            lambda x: np.full(x.shape[0], vt),
            lambda x: np.full(x.shape[0], vc),
            means=asy.PopulationMeans(a1, a0, np.zeros(3)),
        )


ROLES = (Role.INSTRUMENT, Role.CONFOUNDER, Role.OUTCOME_PREDICTOR)


def generate_sample(config: DgpConfig, n: int, seed: int = DEFAULT_SEED) -> tuple[Sample, LogisticPropensity]:
    """Draw ``n`` units from the DGP; returns the sample and its true propensity."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = stream(seed, "sample")
    law = asy.CoordinateDist(config.covariate_dist)
    x = law.sample(rng, (n, 3))
    ps = config.propensity()
    d = (rng.uniform(size=n) < ps(x)).astype(np.int8)
    e = rng.standard_normal((n, 2))
    y_t = config.a1 + x @ config.c1_vec + config.sigma_t * e[:, 0]
    y_c = config.a0 + x @ config.c0_vec + config.sigma_c * e[:, 1]
    return Sample(d, np.where(d == 1, y_t, y_c), x, ROLES), ps


# --------------------------------------------------------------------------
# asymptotic reduction ratio


def r_theta_asymptotic(config: DgpConfig, draws: int = asy.DEFAULT_DRAWS, seed: int = DEFAULT_SEED,
                       tolerance: float = 3.0) -> asy.MomentEstimate:
    """Share of the IPW excess over the bound that the LM correction removes.

    Raises :class:`DegenerateDenominator` when the excess is within
    ``tolerance`` standard errors of zero.
    """
    ratio, exc = asy.reduction_ratio(config.population_model(), draws, seed)
    if not exc.value > tolerance * exc.std_error:
        raise DegenerateDenominator(
            f"IPW excess {exc.value:.3g} is within {tolerance} SE ({exc.std_error:.3g}) of zero"
        )
    return ratio


@dataclass(frozen=True)
class RCurve:
    """R(theta, t) over a periodic theta grid and its average R(t)."""

    t: float
    covariate_dist: str
    thetas: np.ndarray
    r_values: np.ndarray  # NaN where the denominator degenerated
    std_errors: np.ndarray
    r_average: float
    r_average_se: float
    method: str = "asymptotic"
    excluded: tuple[int, ...] = ()


def _theta_grid(size: int) -> np.ndarray:
    if size < 8:
        raise ValueError("theta grid needs at least 8 points")
    return 2.0 * math.pi * np.arange(size) / size


def _average(curve_vals, curve_se):
    ok = np.isfinite(curve_vals)
    m = int(ok.sum())
    if m == 0:
        return math.nan, math.nan
    avg = math.fsum(curve_vals[ok].tolist()) / m
    se = math.sqrt(math.fsum((curve_se[ok] ** 2).tolist())) / m
    return avg, se


def r_average(config: DgpConfig, t: float | None = None, theta_grid_size: int = DEFAULT_THETA_GRID,
              draws: int = asy.DEFAULT_DRAWS, seed: int = DEFAULT_SEED, workers: int = 1) -> RCurve:
    """R(theta, t) on a uniform periodic grid and its rectangle-rule average.

    ``config.theta`` is ignored; grid point ``k`` uses seed stream
    ``derive_seed(seed, "theta", k)``.
    """
    if t is not None:
        config = replace(config, t=float(t))
    thetas = _theta_grid(theta_grid_size)

    def point(k):
        try:
            r = r_theta_asymptotic(replace(config, theta=float(thetas[k])), draws, derive_seed(seed, "theta", k))
            return r.value, r.std_error
        except DegenerateDenominator:
            return math.nan, math.nan

    results = _map(point, range(theta_grid_size), workers)
    vals = np.array([r[0] for r in results])
    ses = np.array([r[1] for r in results])
    avg, se = _average(vals, ses)
    return RCurve(config.t, config.covariate_dist, thetas, vals, ses, avg, se, "asymptotic",
                  tuple(int(k) for k in np.flatnonzero(~np.isfinite(vals))))


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# finite-sample replications


@dataclass(frozen=True)
class ReplicationResult:
    estimator_name: str
    n: int
    seed_base: int
    estimates: np.ndarray
    replication_index: np.ndarray
    failures: tuple[tuple[int, str], ...] = field(default=())

    @property
    def reps(self) -> int:
        return len(self.estimates) + len(self.failures)

    def n_variance(self) -> float:
        """``n`` times the replication variance of the estimates."""
        return self.n * float(np.var(self.estimates, ddof=1))

    def rmse(self, truth: float) -> float:
        return math.sqrt(math.fsum(((self.estimates - truth) ** 2).tolist()) / len(self.estimates))

    def mean(self) -> float:
        return math.fsum(self.estimates.tolist()) / len(self.estimates)


def run_replications(config: DgpConfig, estimator_names: Sequence[str], n: int, reps: int,
                     seed: int = DEFAULT_SEED, *, propensity_fit="logistic", regression="linear",
                     workers: int = 1) -> dict[str, ReplicationResult]:
    """Run each estimator on ``reps`` independent samples of size ``n``.

    Replication ``r`` draws its sample with seed ``derive_seed(seed, r)``.
    Estimator errors are recorded per replication and never abort the sweep.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    names = list(estimator_names)

    def one(r):
        sample, ps = generate_sample(config, n, derive_seed(seed, r))
        out = {}
        for name in names:
            try:
                out[name] = estimate(name, sample, ps, propensity_fit=propensity_fit,
                                     regression=regression).estimate
            except AteLabError as exc:
                out[name] = f"{type(exc).__name__}: {exc}"
        return out

    rows = _map(one, range(reps), workers)
    results = {}
    for name in names:
        ok = [(r, row[name]) for r, row in enumerate(rows) if not isinstance(row[name], str)]
        bad = tuple((r, row[name]) for r, row in enumerate(rows) if isinstance(row[name], str))
        results[name] = ReplicationResult(
            name, n, seed, np.array([v for _, v in ok]), np.array([r for r, _ in ok], dtype=int), bad
        )
    return results


@dataclass(frozen=True)
class VarianceCheck:
    estimator_name: str
    n: int
    n_variance: float
    asymptotic: asy.MomentEstimate
    failures: int

    @property
    def ratio(self) -> float:
        return self.n_variance / self.asymptotic.value


def asymptotic_variance(config: DgpConfig, estimator_name: str, draws: int = asy.DEFAULT_DRAWS,
                        seed: int = DEFAULT_SEED) -> asy.MomentEstimate:
    """Asymptotic variance of ``ipw_known``, ``lm`` or ``imputation_known`` under ``config``."""
    model = config.population_model()
    if estimator_name == "ipw_known":
        return asy.asyvar_ipw_known(model, draws, seed)
    if estimator_name == "lm":
        return asy.summarize(model, draws, seed).asyvar_lm
    if estimator_name == "imputation_known":
        if config.covariate_dist != "ternary":
            raise UnsupportedModel("imputation_known needs finite-support (ternary) covariates")
        return asy.asyvar_imp_known(model, draws, seed)
    raise ValueError(f"no asymptotic variance for {estimator_name!r}")


def finite_sample_variance_check(config: DgpConfig, estimator_name: str, n: int, reps: int,
                                 seed: int = DEFAULT_SEED, draws: int = asy.DEFAULT_DRAWS,
                                 workers: int = 1) -> VarianceCheck:
    """Compare ``n * Var(estimates)`` over replications with the asymptotic variance."""
    target = asymptotic_variance(config, estimator_name, draws, seed)
    res = run_replications(config, [estimator_name], n, reps, seed, workers=workers)[estimator_name]
    return VarianceCheck(estimator_name, n, res.n_variance(), target, len(res.failures))


def rmse_ratio(config: DgpConfig, estimator_name: str, n_small: int, n_large: int, reps: int,
               seed: int = DEFAULT_SEED, workers: int = 1) -> float:
    """RMSE at ``n_large`` divided by RMSE at ``n_small``; about ``sqrt(n_small / n_large)``."""
    truth = config.true_ate
    small = run_replications(config, [estimator_name], n_small, reps, derive_seed(seed, "small"),
                             workers=workers)[estimator_name]
    large = run_replications(config, [estimator_name], n_large, reps, derive_seed(seed, "large"),
                             workers=workers)[estimator_name]
    return large.rmse(truth) / small.rmse(truth)


def r_theta_finite_sample(config: DgpConfig, n: int, reps: int, seed: int = DEFAULT_SEED,
                          draws: int = asy.DEFAULT_DRAWS, workers: int = 1) -> float:
    """Replication analogue of R(theta, t): ``(nVar_ipw - nVar_lm) / (nVar_ipw - bound)``."""
    res = run_replications(config, ["ipw_known", "lm"], n, reps, seed, workers=workers)
    bound = asy.efficiency_bound(config.population_model(), draws, seed).value
    v_ipw, v_lm = res["ipw_known"].n_variance(), res["lm"].n_variance()
    return (v_ipw - v_lm) / (v_ipw - bound)


def r_curve_finite_sample(config: DgpConfig, n: int, reps: int, theta_grid_size: int = DEFAULT_THETA_GRID,
                          seed: int = DEFAULT_SEED, draws: int = asy.DEFAULT_DRAWS, workers: int = 1) -> RCurve:
    """Finite-sample cross-check of :func:`r_average`; standard errors are not estimated."""
    thetas = _theta_grid(theta_grid_size)
    vals = np.array([
        r_theta_finite_sample(replace(config, theta=float(th)), n, reps, derive_seed(seed, "theta", k), draws, workers)
        for k, th in enumerate(thetas)
    ])
    ses = np.zeros_like(vals)
    avg, _ = _average(vals, ses)
    return RCurve(config.t, config.covariate_dist, thetas, vals, np.full_like(vals, np.nan), avg, math.nan,
                  "finite_sample")
