"""Population-level variances by Monte Carlo integration against an analytic model.

All moments for a given ``(model, draws, seed)`` are integrated over one
covariate draw stream, so differences between operations called with the
same seed are paired (common random numbers) and their standard errors come
from the per-draw differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import UnsupportedModel
from .estimators import pseudo_solve
from .rng import DEFAULT_SEED, stream

DEFAULT_DRAWS = 1_000_000
DEFAULT_QUADRATURE_NODES = 64
#: Relative floor on the ratio's standard error, covering floating-point rounding.
RATIO_SE_FLOOR = 1e-12
#: Rows x quadrature nodes evaluated at once inside projected maps.
_BLOCK = 1 << 20

VectorMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MomentEstimate:
    """A Monte Carlo expectation with its standard error and draw count."""

    value: float
    std_error: float
    draws: int

    @classmethod
    def from_terms(cls, terms: np.ndarray) -> "MomentEstimate":
        terms = np.asarray(terms, dtype=float)
        n = terms.shape[0]
        se = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(terms)), se, n)

    def __float__(self):
        return self.value

    def combined_se(self, other: "MomentEstimate") -> float:
        """Standard error of a difference of two independent estimates."""
        return math.hypot(self.std_error, other.std_error)


class CoordinateDist(str, enum.Enum):
    """Marginal law of one covariate coordinate."""

    UNIFORM = "uniform"  # U[-1, 1]
    NORMAL = "normal"  # N(0, 1)
    TERNARY = "ternary"  # uniform on {-1, 0, 1}

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self is CoordinateDist.UNIFORM:
            return rng.uniform(-1.0, 1.0, size)
        if self is CoordinateDist.NORMAL:
            return rng.standard_normal(size)
        return rng.integers(-1, 2, size).astype(float)

    def quadrature(self, nodes: int = DEFAULT_QUADRATURE_NODES) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and probability weights integrating against this law."""
        if self is CoordinateDist.UNIFORM:
            z, w = np.polynomial.legendre.leggauss(nodes)
            return z, w / 2.0
        if self is CoordinateDist.NORMAL:
            z, w = np.polynomial.hermite_e.hermegauss(nodes)
            return z, w / math.sqrt(2.0 * math.pi)
        return np.array([-1.0, 0.0, 1.0]), np.full(3, 1.0 / 3.0)

    @property
    def mean(self) -> float:
        return 0.0


@dataclass(frozen=True)
class PopulationMeans:
    beta_t: float
    beta_c: float
    mean_x: np.ndarray
    beta_t_se: float = 0.0
    beta_c_se: float = 0.0
    mean_x_se: np.ndarray | None = None

    @property
    def beta(self) -> float:
        return self.beta_t - self.beta_c


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """An analytic data-generating process for ``(X, D, Y^T, Y^C)``.

    Every map takes an ``(n, K)`` covariate array and returns ``n`` values.
    ``coordinates`` declares the covariates independent with the listed
    marginals; it is required by :func:`marginalize`.  When ``means`` is not
    given, the population means of the outcomes and of ``X`` are estimated
    once by Monte Carlo from a stream independent of every operation seed.
    """

    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    propensity: VectorMap
    beta_t: VectorMap
    beta_c: VectorMap
    var_t: VectorMap
    var_c: VectorMap
    dim: int
    coordinates: tuple[CoordinateDist, ...] | None = None
    means: PopulationMeans | None = None
    moment_draws: int = DEFAULT_DRAWS
    moment_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.coordinates is not None:
            coords = tuple(CoordinateDist(c) for c in self.coordinates)
            if len(coords) != self.dim:
                raise ValueError("coordinates must list one law per covariate")
            object.__setattr__(self, "coordinates", coords)
        if self.means is None:
            object.__setattr__(self, "means", self._mc_means())

    @classmethod
    def independent(cls, coordinates: Sequence[CoordinateDist | str], propensity, beta_t, beta_c,
                    var_t, var_c, **kwargs) -> "PopulationModel":
        """A model whose covariates are independent with the given marginals."""
        coords = tuple(CoordinateDist(c) for c in coordinates)

        def sample_x(rng, n):
            return np.column_stack([c.sample(rng, n) for c in coords])

        return cls(sample_x, propensity, beta_t, beta_c, var_t, var_c, len(coords), coords, **kwargs)

    def _mc_means(self) -> PopulationMeans:
        x = self.draw(self.moment_draws, self.moment_seed, "population-means")
        bt = MomentEstimate.from_terms(self.beta_t(x))
        bc = MomentEstimate.from_terms(self.beta_c(x))
        mx = x.mean(axis=0)
        mx_se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
        return PopulationMeans(bt.value, bc.value, mx, bt.std_error, bc.std_error, mx_se)

    def draw(self, draws: int, seed: int, label: str = "covariates") -> np.ndarray:
        if draws < 1:
            raise ValueError("draws must be >= 1")
        x = np.asarray(self.sample_x(stream(seed, label), draws), dtype=float)
        return x.reshape(draws, self.dim)

    def with_noise(self, var_t: VectorMap, var_c: VectorMap) -> "PopulationModel":
        return replace(self, var_t=var_t, var_c=var_c)


def constant_model(p: float = 0.5, beta_t: float = 0.0, beta_c: float = 0.0, var_t: float = 1.0,
                   var_c: float = 1.0, dim: int = 1) -> PopulationModel:
    """A model with constant propensity, conditional means and variances."""

    def const(v):
        return lambda x: np.full(x.shape[0], float(v))

    return PopulationModel.independent(
        [CoordinateDist.UNIFORM] * dim, const(p), const(beta_t), const(beta_c), const(var_t), const(var_c),
        means=PopulationMeans(float(beta_t), float(beta_c), np.zeros(dim)),
    )


# --------------------------------------------------------------------------
# per-draw integrands


class Evaluated(NamedTuple):
    """Model maps evaluated once on a draw array."""

    x: np.ndarray
    p: np.ndarray
    bt: np.ndarray
    bc: np.ndarray
    vt: np.ndarray
    vc: np.ndarray
    means: "PopulationMeans"


def evaluate(model: PopulationModel, x: np.ndarray) -> Evaluated:
    return Evaluated(x, *_maps(model, x), model.means)


def _maps(model: PopulationModel, x: np.ndarray):
    return (model.propensity(x), model.beta_t(x), model.beta_c(x), model.var_t(x), model.var_c(x))


def bound_terms(ev: Evaluated) -> np.ndarray:
    return ev.vt / ev.p + ev.vc / (1 - ev.p) + (ev.bt - ev.bc - ev.means.beta) ** 2


def imp_terms(ev: Evaluated) -> np.ndarray:
    return (ev.vt + ev.bt**2) / ev.p + (ev.vc + ev.bc**2) / (1 - ev.p) - ev.means.beta**2


def ipw_terms(ev: Evaluated) -> np.ndarray:
    m = ev.means
    return (ev.vt + (ev.bt - m.beta_t) ** 2) / ev.p + (ev.vc + (ev.bc - m.beta_c) ** 2) / (1 - ev.p)


def imp_excess_terms(ev: Evaluated) -> np.ndarray:
    p = ev.p
    return (np.sqrt((1 - p) / p) * ev.bt + np.sqrt(p / (1 - p)) * ev.bc) ** 2


def ipw_excess_terms(ev: Evaluated) -> np.ndarray:
    p, m = ev.p, ev.means
    return (np.sqrt((1 - p) / p) * (ev.bt - m.beta_t) + np.sqrt(p / (1 - p)) * (ev.bc - m.beta_c)) ** 2


# --------------------------------------------------------------------------
# moments


def efficiency_bound(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Semi-parametric efficiency bound ``E[s_T^2/p + s_C^2/(1-p) + (b(X) - b)^2]``."""
    return MomentEstimate.from_terms(bound_terms(evaluate(model, model.draw(draws, seed))))


def asyvar_imp_known(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Asymptotic variance of the finite-support imputation estimator with known propensity."""
    return MomentEstimate.from_terms(imp_terms(evaluate(model, model.draw(draws, seed))))


def asyvar_ipw_known(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Asymptotic variance of normalized IPW with known propensity."""
    return MomentEstimate.from_terms(ipw_terms(evaluate(model, model.draw(draws, seed))))


def imp_excess(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Excess of ``asyvar_imp_known`` over the bound, integrated directly as a mean square."""
    return MomentEstimate.from_terms(imp_excess_terms(evaluate(model, model.draw(draws, seed))))


def ipw_excess(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Excess of ``asyvar_ipw_known`` over the bound, integrated directly as a mean square."""
    return MomentEstimate.from_terms(ipw_excess_terms(evaluate(model, model.draw(draws, seed))))


@dataclass(frozen=True)
class LmGain:
    """Population covariances behind the LM correction and the variance it removes.

    ``gain`` is ``asycov_xb @ inv(asycov_xx) @ asycov_xb``; its standard
    error comes from the linearization ``2 alpha @ db - alpha @ dA @ alpha``.
    """

    gain: MomentEstimate
    asycov_xx: np.ndarray
    asycov_xb: np.ndarray
    alpha: np.ndarray
    influence: np.ndarray = field(repr=False)


def lm_covariances(ev: Evaluated) -> LmGain:
    p, m = ev.p, ev.means
    xc = ev.x - m.mean_x
    w = 1.0 / (p * (1 - p))
    f = (ev.bt - m.beta_t) / p + (ev.bc - m.beta_c) / (1 - p)
    n = xc.shape[0]
    a = (xc * w[:, None]).T @ xc / n
    b = xc.T @ f / n
    alpha = pseudo_solve(a, b)
    proj = xc @ alpha
    influence = 2 * proj * f - w * proj**2
    se = float(np.std(influence, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return LmGain(MomentEstimate(float(b @ alpha), se, n), a, b, alpha, influence)


def lm_gain(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> MomentEstimate:
    """Reduction of asymptotic variance achieved by the LM correction over known-PS IPW."""
    return lm_covariances(evaluate(model, model.draw(draws, seed))).gain


@dataclass(frozen=True)
class PopulationSummary:
    """All population quantities of one model on one shared draw set."""

    bound: MomentEstimate
    asyvar_imp: MomentEstimate
    asyvar_ipw: MomentEstimate
    ipw_excess: MomentEstimate
    imp_excess: MomentEstimate
    lm: LmGain
    ratio: MomentEstimate

    @property
    def asyvar_lm(self) -> MomentEstimate:
        return MomentEstimate(self.asyvar_ipw.value - self.lm.gain.value,
                              self.asyvar_ipw.combined_se(self.lm.gain), self.asyvar_ipw.draws)


def summarize(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED) -> PopulationSummary:
    """Bound, asymptotic variances, LM gain and reduction ratio from one draw set."""
    ev = evaluate(model, model.draw(draws, seed))
    exc, lmc, ratio = _reduction(ev)
    return PopulationSummary(
        MomentEstimate.from_terms(bound_terms(ev)),
        MomentEstimate.from_terms(imp_terms(ev)),
        MomentEstimate.from_terms(ipw_terms(ev)),
        exc,
        MomentEstimate.from_terms(imp_excess_terms(ev)),
        lmc,
        ratio,
    )


def _reduction(ev: Evaluated) -> tuple[MomentEstimate, LmGain, MomentEstimate]:
    excess = ipw_excess_terms(ev)
    lmc = lm_covariances(ev)
    exc = MomentEstimate.from_terms(excess)
    n = excess.shape[0]
    if exc.value > 0 and n > 1:
        r = lmc.gain.value / exc.value
        se = float(np.std((lmc.influence - r * excess) / exc.value, ddof=1) / math.sqrt(n))
        # identical numerator and denominator terms leave only rounding error
        ratio = MomentEstimate(r, max(se, RATIO_SE_FLOOR * max(1.0, abs(r))), n)
    else:
        ratio = MomentEstimate(math.nan, math.inf, n)
    return exc, lmc, ratio


def reduction_ratio(model: PopulationModel, draws: int = DEFAULT_DRAWS,
                    seed: int = DEFAULT_SEED) -> tuple[MomentEstimate, MomentEstimate]:
    """``lm_gain / ipw_excess`` on one draw set, with the excess itself.

    The ratio's standard error is the delta-method one for a ratio of two
    means sharing draws; it is NaN with infinite error when the excess is
    not positive.
    """
    exc, _, ratio = _reduction(evaluate(model, model.draw(draws, seed)))
    return ratio, exc


# --------------------------------------------------------------------------
# covariate projections


@dataclass(frozen=True, eq=False)
class CovariateProjection:
    """A model restricted to the covariates ``kept_indices``.

    ``model`` integrates the dropped coordinates out of the parent's maps:
    propensity and conditional means by quadrature, conditional variances by
    the law of total variance.  Its covariate draws are the kept columns of
    the parent's draws, so paired comparisons share random numbers.
    """

    parent: PopulationModel
    kept_indices: tuple[int, ...]
    model: PopulationModel


def marginalize(model: PopulationModel, kept_indices: Sequence[int],
                nodes: int = DEFAULT_QUADRATURE_NODES) -> CovariateProjection:
    if model.coordinates is None:
        raise UnsupportedModel("marginalization needs independent covariate coordinates")
    kept = tuple(sorted(int(i) for i in kept_indices))
    if not kept or any(i < 0 or i >= model.dim for i in kept):
        raise ValueError(f"kept indices {kept} out of range for dimension {model.dim}")
    dropped = [i for i in range(model.dim) if i not in kept]
    if dropped:
        rules = [model.coordinates[i].quadrature(nodes) for i in dropped]
        grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        z = np.column_stack([g.reshape(-1) for g in grids])
        wq = np.ones(z.shape[0])
        for g in np.meshgrid(*[r[1] for r in rules], indexing="ij"):
            wq = wq * g.reshape(-1)
    else:
        z = np.zeros((1, 0))
        wq = np.ones(1)
    q = z.shape[0]

    def integrate(xk: np.ndarray):
        # returns E[p], E[bt], E[bc], E[vt] + Var[bt], E[vc] + Var[bc] given the kept coordinates
        xk = np.asarray(xk, dtype=float)
        n = xk.shape[0]
        out = np.empty((5, n))
        step = max(1, _BLOCK // q)
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            full = np.empty((hi - lo, q, model.dim))
            full[:, :, list(kept)] = xk[lo:hi, None, :]
            if dropped:
                full[:, :, dropped] = z[None, :, :]
            full = full.reshape(-1, model.dim)
            p, bt, bc, vt, vc = (a.reshape(hi - lo, q) for a in _maps(model, full))
            mt, mc = bt @ wq, bc @ wq
            out[0, lo:hi] = p @ wq
            out[1, lo:hi] = mt
            out[2, lo:hi] = mc
            out[3, lo:hi] = vt @ wq + np.maximum((bt**2) @ wq - mt**2, 0.0)
            out[4, lo:hi] = vc @ wq + np.maximum((bc**2) @ wq - mc**2, 0.0)
        return out

    cache: dict = {}

    def component(j):
        # consecutive calls on the same draw array reuse one quadrature pass
        def f(xk):
            hit = cache.get("last")
            if hit is None or hit[0] is not xk:
                hit = (xk, integrate(xk))
                cache["last"] = hit
            return hit[1][j]
        return f

    parent_sample = model.sample_x

    def sample_x(rng, n):
        return np.asarray(parent_sample(rng, n), dtype=float).reshape(n, model.dim)[:, list(kept)]

    m = model.means
    means = PopulationMeans(
        m.beta_t, m.beta_c, np.asarray(m.mean_x)[list(kept)], m.beta_t_se, m.beta_c_se,
        None if m.mean_x_se is None else np.asarray(m.mean_x_se)[list(kept)],
    )
    projected = PopulationModel(
        sample_x, component(0), component(1), component(2), component(3), component(4),
        len(kept), tuple(model.coordinates[i] for i in kept), means,
    )
    return CovariateProjection(model, kept, projected)


@dataclass(frozen=True)
class CovariateCheck:
    name: str
    description: str
    difference: float
    std_error: float
    passed: bool


@dataclass(frozen=True)
class CovariateComparison:
    """Bound and known-PS variances under ``X``, ``X0`` (no outcome predictor) and ``X1`` (no instrument)."""

    quantities: dict  # (set_name, quantity_name) -> MomentEstimate
    checks: tuple[CovariateCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


COVARIATE_SETS = ("X", "X0", "X1")
QUANTITIES = ("bound", "asyvar_imp_known", "asyvar_ipw_known")


def compare_covariate_sets(model: PopulationModel, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED,
                           instrument: int = 0, confounder: int = 1, outcome_predictor: int = 2,
                           nodes: int = DEFAULT_QUADRATURE_NODES, tolerance: float = 3.0) -> CovariateComparison:
    """Evaluate how dropping the outcome predictor or the instrument changes the variances.

    Differences are paired over one shared draw set and tested at
    ``tolerance`` standard errors of the paired difference.
    """
    if model.dim != 3 or sorted((instrument, confounder, outcome_predictor)) != [0, 1, 2]:
        raise UnsupportedModel("comparison needs a three-coordinate (instrument, confounder, outcome predictor) model")
    models = {
        "X": model,
        "X0": marginalize(model, [instrument, confounder], nodes).model,
        "X1": marginalize(model, [confounder, outcome_predictor], nodes).model,
    }
    terms = {}
    for set_name, sub in models.items():
        ev = evaluate(sub, sub.draw(draws, seed))
        terms[set_name, "bound"] = bound_terms(ev)
        terms[set_name, "asyvar_imp_known"] = imp_terms(ev)
        terms[set_name, "asyvar_ipw_known"] = ipw_terms(ev)
    quantities = {k: MomentEstimate.from_terms(v) for k, v in terms.items()}

    def diff(a, b):
        est = MomentEstimate.from_terms(terms[a] - terms[b])
        # floor for pairs that coincide draw by draw
        floor = 1e-12 * (1.0 + abs(quantities[b].value))
        return est.value, max(est.std_error, floor / tolerance)

    checks = []
    d, se = diff(("X0", "bound"), ("X", "bound"))
    checks.append(CovariateCheck("drop_predictor_bound", "bound(X0) >= bound(X)", d, se, d >= -tolerance * se))
    for q in ("asyvar_imp_known", "asyvar_ipw_known"):
        d, se = diff(("X0", q), ("X", q))
        checks.append(CovariateCheck(f"drop_predictor_{q}", f"{q}(X0) == {q}(X)", d, se, abs(d) <= tolerance * se))
    d, se = diff(("X1", "bound"), ("X", "bound"))
    checks.append(CovariateCheck("drop_instrument_bound", "bound(X1) <= bound(X)", d, se, d <= tolerance * se))
    for q in ("asyvar_imp_known", "asyvar_ipw_known"):
        d, se = diff(("X1", q), ("X", q))
        checks.append(CovariateCheck(f"drop_instrument_{q}", f"{q}(X1) <= {q}(X)", d, se, d <= tolerance * se))
    return CovariateComparison(quantities, tuple(checks))
