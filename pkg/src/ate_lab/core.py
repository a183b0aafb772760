"""Observational samples, propensity maps and the normalized-weight kernel.

A :class:`Sample` stores the observed triples ``(D_i, Y_i, X_i)`` as numpy
arrays.  Covariate vectors are the rows of ``Sample.x``; per-coordinate roles
(instrument, confounder, outcome predictor) are sample-level metadata and
never change what an estimator computes.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from .errors import DegenerateDesign, OverlapViolation, ValidationError

#: Default overlap margin: propensities must lie strictly inside (eps, 1 - eps).
DEFAULT_EPS = 1e-6


class Role(str, enum.Enum):
    INSTRUMENT = "instrument"
    CONFOUNDER = "confounder"
    OUTCOME_PREDICTOR = "outcome_predictor"


@dataclass(frozen=True)
class Unit:
    """A single observation."""

    d: int
    y: float
    x: tuple[float, ...]

    def __post_init__(self):
        if self.d not in (0, 1):
            raise ValidationError(f"treatment indicator must be 0 or 1, got {self.d!r}")
        if not math.isfinite(self.y):
            raise ValidationError("outcome must be finite")
        if not all(math.isfinite(v) for v in self.x):
            raise ValidationError("covariates must be finite")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """An immutable collection of ``n`` units sharing covariate dimension ``K``.

    Parameters
    ----------
    d : array_like of int, shape (n,)
        Treatment indicators in {0, 1}.
    y : array_like of float, shape (n,)
        Observed outcomes.
    x : array_like of float, shape (n, K) or (n,)
        Covariates; a 1-d array is read as ``K = 1``.
    roles : sequence of Role, optional
        One role label per covariate column.
    """

    d: np.ndarray
    y: np.ndarray
    x: np.ndarray
    roles: tuple[Role, ...] | None = None

    def __post_init__(self):
        d = np.asarray(self.d)
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if d.ndim != 1 or y.ndim != 1 or x.ndim != 2:
            raise ValidationError("d and y must be 1-d, x must be 1-d or 2-d")
        n = d.shape[0]
        if y.shape[0] != n or x.shape[0] != n:
            raise ValidationError("d, y and x must have the same number of rows")
        if n < 2:
            raise ValidationError(f"a sample needs at least 2 units, got {n}")
        if not np.all((d == 0) | (d == 1)):
            raise ValidationError("treatment indicators must be 0 or 1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("outcomes and covariates must be finite")
        roles = self.roles
        if roles is not None:
            roles = tuple(Role(r) for r in roles)
            if len(roles) != x.shape[1]:
                raise ValidationError(
                    f"roles has length {len(roles)}, covariates have dimension {x.shape[1]}"
                )
        object.__setattr__(self, "d", _frozen(d.astype(np.int8)))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "roles", roles)

    @classmethod
    def from_units(cls, units: Sequence[Unit], roles=None) -> "Sample":
        dims = {len(u.x) for u in units}
        if len(dims) > 1:
            raise ValidationError(f"units have mixed covariate dimensions {sorted(dims)}")
        return cls(
            d=[u.d for u in units],
            y=[u.y for u in units],
            x=np.array([u.x for u in units], dtype=float).reshape(len(units), -1),
            roles=roles,
        )

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def __len__(self) -> int:
        return self.n

    def units(self) -> Iterator[Unit]:
        for d, y, x in zip(self.d, self.y, self.x):
            yield Unit(int(d), float(y), tuple(float(v) for v in x))

    def take(self, index) -> "Sample":
        """Rows ``index`` as a new sample (used for permutations and subsets)."""
        return Sample(self.d[index], self.y[index], self.x[index], self.roles)

    def project(self, columns: Sequence[int]) -> "Sample":
        """Keep only the covariate ``columns``."""
        columns = list(columns)
        roles = None if self.roles is None else tuple(self.roles[c] for c in columns)
        return Sample(self.d, self.y, self.x[:, columns], roles)


class PropensityFunction:
    """A known propensity map ``x -> P(D = 1 | X = x)``.

    ``func`` receives an ``(n, K)`` array and returns ``n`` probabilities.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], overlap_margin: float = DEFAULT_EPS):
        if overlap_margin < 0 or overlap_margin >= 0.5:
            raise ValueError("overlap_margin must lie in [0, 0.5)")
        self._func = func
        self.overlap_margin = float(overlap_margin)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return np.asarray(self._func(x), dtype=float).reshape(x.shape[0])

    @classmethod
    def constant(cls, p: float, overlap_margin: float = DEFAULT_EPS) -> "PropensityFunction":
        return cls(lambda x: np.full(x.shape[0], float(p)), overlap_margin)

    def __repr__(self):
        return f"{type(self).__name__}(func={self._func!r}, overlap_margin={self.overlap_margin})"


class LogisticPropensity(PropensityFunction):
    """``p(x) = 1 / (1 + exp(-(intercept + coef @ x)))``."""

    def __init__(self, coef: Sequence[float], intercept: float = 0.0, overlap_margin: float = DEFAULT_EPS):
        self.coef = np.asarray(coef, dtype=float).reshape(-1)
        self.intercept = float(intercept)
        super().__init__(self._eval, overlap_margin)

    def _eval(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.coef.shape[0]:
            raise ValidationError(
                f"logistic propensity has {self.coef.shape[0]} slopes, covariates have dimension {x.shape[1]}"
            )
        return expit(self.intercept + x @ self.coef)

    def __repr__(self):
        return f"LogisticPropensity(coef={self.coef.tolist()}, intercept={self.intercept})"


def propensities(sample: Sample, ps) -> np.ndarray:
    """Evaluate ``ps`` on the sample, or pass through a per-unit array."""
    if isinstance(ps, PropensityFunction) or callable(ps):
        p = ps(sample.x)
    else:
        p = np.asarray(ps, dtype=float)
    if p.shape != (sample.n,):
        raise ValidationError(f"expected {sample.n} propensities, got shape {p.shape}")
    return p


def checked_propensities(sample: Sample, ps, eps: float | None = None) -> np.ndarray:
    """Propensities on the sample; raises :class:`OverlapViolation` outside the band."""
    if eps is None:
        eps = getattr(ps, "overlap_margin", DEFAULT_EPS)
    p = propensities(sample, ps)
    bad = np.flatnonzero(~((p > eps) & (p < 1 - eps)))
    if bad.size:
        i = int(bad[0])
        raise OverlapViolation(
            f"propensity {p[i]!r} of unit {i} lies outside ({eps}, {1 - eps})"
            + (f"; {bad.size} units in total" if bad.size > 1 else "")
        )
    return p


@dataclass(frozen=True)
class Violation:
    kind: str  # "overlap" or "degenerate_design"
    unit: int | None = None
    value: float | None = None
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_sample(sample: Sample, ps: PropensityFunction) -> ValidationReport:
    """Check overlap and non-degeneracy; never raises.

    Unconfoundedness cannot be checked from data and is not attempted.
    """
    out = []
    eps = getattr(ps, "overlap_margin", DEFAULT_EPS)
    p = propensities(sample, ps)
    for i in np.flatnonzero(~((p > eps) & (p < 1 - eps))):
        out.append(Violation("overlap", int(i), float(p[i]), f"p = {p[i]!r} outside ({eps}, {1 - eps})"))
    if sample.n_treated == 0 or sample.n_control == 0:
        arm = "treated" if sample.n_treated == 0 else "control"
        out.append(Violation("degenerate_design", message=f"{arm} arm is empty"))
    return ValidationReport(tuple(out))


def weighted_group_means(sample: Sample, ps, values) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-propensity weighted means per arm, weights normalized to one.

    Parameters
    ----------
    sample : Sample
    ps : PropensityFunction or array_like
        Known propensity map, or precomputed per-unit propensities.
    values : array_like, shape (n,) or (n, m)
        The per-unit quantity to average.

    Returns
    -------
    treated, control : ndarray, shape (m,)
        ``sum(D v / p) / sum(D / p)`` and ``sum((1-D) v / (1-p)) / sum((1-D) / (1-p))``.
    """
    p = propensities(sample, ps)
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != sample.n:
        raise ValidationError(f"values has {v.shape[0]} rows, sample has {sample.n}")
    d = sample.d.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_t = np.where(sample.d == 1, d / p, 0.0)
        w_c = np.where(sample.d == 0, (1.0 - d) / (1.0 - p), 0.0)
    s_t, s_c = w_t.sum(), w_c.sum()
    if not (s_t > 0 and math.isfinite(s_t)):
        raise DegenerateDesign(f"treated weight sum is {s_t!r}")
    if not (s_c > 0 and math.isfinite(s_c)):
        raise DegenerateDesign(f"control weight sum is {s_c!r}")
    return w_t @ v / s_t, w_c @ v / s_c


@dataclass(frozen=True)
class EstimateResult:
    """An ATE point estimate with diagnostics.

    ``alpha_hat`` is populated only by the linearly modified estimator.
    """

    estimate: float
    estimator_name: str
    n_treated: int
    n_control: int
    alpha_hat: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.estimate):
            raise ValidationError(f"{self.estimator_name} produced a non-finite estimate")
        if (self.alpha_hat is not None) != (self.estimator_name == "lm"):
            raise ValidationError("alpha_hat is present exactly for the lm estimator")

    @property
    def n(self) -> int:
        return self.n_treated + self.n_control


def read_sample_csv(path) -> Sample:
    """Read a sample from a CSV file with header ``d,y,x1,...,xK``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        k = len(header) - 2
        expected = ["d", "y"] + [f"x{j}" for j in range(1, k + 1)]
        if k < 1 or header != expected:
            raise ValidationError(f"{path}:1: header must be d,y,x1,...,xK, got {','.join(header)}")
        d, y, x = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                di = int(row[0])
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ValidationError(f"{path}:{line}: {exc}") from None
            if di not in (0, 1):
                raise ValidationError(f"{path}:{line}: d must be 0 or 1, got {di}")
            if not all(math.isfinite(v) for v in vals):
                raise ValidationError(f"{path}:{line}: non-finite value")
            d.append(di)
            y.append(vals[0])
            x.append(vals[1:])
    if len(d) < 2:
        raise ValidationError(f"{path}: a sample needs at least 2 rows, got {len(d)}")
    return Sample(d, y, np.array(x, dtype=float))


def write_sample_csv(sample: Sample, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "y"] + [f"x{j}" for j in range(1, sample.k + 1)])
        for d, y, x in zip(sample.d, sample.y, sample.x):
            w.writerow([int(d), repr(float(y))] + [repr(float(v)) for v in x])
