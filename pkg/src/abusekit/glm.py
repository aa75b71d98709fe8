"""Poisson log-link GLM: design matrices, IRLS fitting, tests, predictions.

The response y_i is modeled as Poisson with mean lambda_i where
ln(lambda_i) = beta_0 + sum_j x_ij beta_j (+ one dummy per non-reference
level of each fixed-effect factor). Coefficients are maximum-likelihood
estimates obtained by iteratively reweighted least squares on the
canonical log link; standard errors come from the inverse Fisher
information at the optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg, special, stats

from .ingest import Dataset, STRING_COLUMNS

INTERCEPT = "intercept"

#: Wald-test star thresholds (two-sided p): *, **, ***.
STAR_THRESHOLDS = (0.05, 0.01, 0.001)


class DesignError(ValueError):
    """Raised when a design matrix cannot be built as requested."""


class SeparationError(RuntimeError):
    """Raised when the Poisson MLE lies at -inf on the log scale."""


class PredictionError(ValueError):
    """Raised when covariates passed to predict() are incomplete or unknown."""


@dataclass(frozen=True)
class ModelSpec:
    """Declarative regression specification.

    ``predictors`` are numeric columns entering linearly; every column in
    ``fixed_effects`` is dummy-coded with one indicator per non-reference
    level (reference = lexicographically first level).
    """

    response: str
    predictors: tuple[str, ...] = ()
    fixed_effects: tuple[str, ...] = ()
    include_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "fixed_effects", tuple(self.fixed_effects))
        if self.response in self.predictors:
            raise ValueError(f"response {self.response!r} also appears as predictor")
        if len(set(self.predictors)) != len(self.predictors):
            raise ValueError("duplicate predictor names")
        if len(set(self.fixed_effects)) != len(self.fixed_effects):
            raise ValueError("duplicate fixed-effect names")


def dummy_name(factor: str, level: str) -> str:
    return f"{factor}[{level}]"


@dataclass
class DesignMatrix:
    """Numeric expansion of a ModelSpec over one dataset."""

    columns: list[str]
    X: np.ndarray
    y: np.ndarray
    spec: ModelSpec
    factor_levels: dict[str, list[str]]
    dropped: list[tuple[str, str]]
    excluded_rows: int
    row_index: np.ndarray

    @property
    def n(self) -> int:
        return int(self.X.shape[0])


def build_design(d: Dataset, spec: ModelSpec, collinearity_rtol: float = 1e-8) -> DesignMatrix:
    """Expand a model spec into a full-column-rank design matrix.

    Rows with a missing value in any used column are excluded (the count
    is recorded). Factor levels are dummy-coded with the reference level
    dropped; columns that are all zero after exclusion, or numerically in
    the span of earlier columns, are dropped and logged. Column order is
    intercept, predictors in spec order, then each factor's non-reference
    levels in lexicographic order.
    """
    used = (spec.response,) + spec.predictors + spec.fixed_effects
    cols = {name: d.column(name) for name in used}
    for name in (spec.response,) + spec.predictors:
        if name in STRING_COLUMNS:
            raise DesignError(f"column {name!r} is not numeric")

    keep = [
        i
        for i in range(len(d))
        if all(cols[name][i] is not None for name in used)
    ]
    excluded = len(d) - len(keep)
    if not keep:
        raise DesignError("empty design: every row has a missing value in a used column")

    y = np.array([cols[spec.response][i] for i in keep], dtype=float)
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DesignError(f"response {spec.response!r} must hold non-negative integers")

    factor_levels: dict[str, list[str]] = {}
    candidate: list[tuple[str, np.ndarray]] = []
    if spec.include_intercept:
        candidate.append((INTERCEPT, np.ones(len(keep))))
    for name in spec.predictors:
        candidate.append((name, np.array([float(cols[name][i]) for i in keep])))
    for factor in spec.fixed_effects:
        values = [str(cols[factor][i]) for i in keep]
        levels = sorted(set(values))
        if len(levels) < 2:
            raise DesignError(
                f"fixed effect {factor!r} has a single level after exclusions"
            )
        factor_levels[factor] = levels
        for level in levels[1:]:
            candidate.append(
                (dummy_name(factor, level), np.array([1.0 if v == level else 0.0 for v in values]))
            )

    if not candidate:
        raise DesignError("empty design: no intercept and no predictors")

    # Greedy rank filter in column order: a column numerically inside the
    # span of the columns kept before it is dropped, so earlier spec terms
    # always win over later ones.
    kept_names: list[str] = []
    kept_cols: list[np.ndarray] = []
    dropped: list[tuple[str, str]] = []
    basis: list[np.ndarray] = []
    for name, col in candidate:
        norm = np.linalg.norm(col)
        if norm == 0.0:
            dropped.append((name, "all-zero column"))
            continue
        v = col.astype(float)
        for _ in range(2):  # re-orthogonalize for numerical safety
            for q in basis:
                v = v - q * (q @ v)
        resid = np.linalg.norm(v)
        if resid <= collinearity_rtol * norm:
            dropped.append((name, "collinear with earlier columns"))
            continue
        basis.append(v / resid)
        kept_names.append(name)
        kept_cols.append(col)

    if not kept_names:
        raise DesignError("empty design: all columns dropped")

    return DesignMatrix(
        columns=kept_names,
        X=np.column_stack(kept_cols),
        y=y,
        spec=spec,
        factor_levels=factor_levels,
        dropped=dropped,
        excluded_rows=excluded,
        row_index=np.array(keep, dtype=int),
    )


def log_likelihood(y, lam) -> float:
    """Poisson log-likelihood sum(-lambda_i + y_i ln lambda_i - ln y_i!).

    ``ln y!`` is evaluated through the log-gamma function; the
    ``y_i ln lambda_i`` term uses the xlogy convention so a zero count
    contributes exactly ``-lambda_i``.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if y.shape != lam.shape:
        raise ValueError("y and lambda must have equal length")
    if np.any(lam <= 0):
        raise ValueError("lambda must be strictly positive")
    return float(np.sum(-lam + special.xlogy(y, lam) - special.gammaln(y + 1.0)))


def _poisson_deviance(y: np.ndarray, lam: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = special.xlogy(y, y / lam) - (y - lam)
    return float(2.0 * np.sum(terms))


def aic(log_likelihood: float, n_parameters: int) -> float:
    """Akaike information criterion: 2 * #estimated coefficients - 2 * LL."""
    return 2.0 * n_parameters - 2.0 * log_likelihood


@dataclass(frozen=True)
class FitOptions:
    """Convergence controls for the IRLS loop."""

    max_iterations: int = 100
    deviance_rtol: float = 1e-8
    score_atol: float = 1e-6
    separation_threshold: float = 30.0
    max_halvings: int = 32


@dataclass
class FitResult:
    """Fitted Poisson GLM: estimates, uncertainty and convergence record."""

    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    fitted: np.ndarray
    y: np.ndarray
    log_likelihood: float
    aic: float
    n: int
    k: int
    converged: bool
    iterations: int
    spec: ModelSpec
    factor_levels: dict[str, list[str]] = field(default_factory=dict)
    dropped: list[tuple[str, str]] = field(default_factory=list)
    excluded_rows: int = 0
    row_index: np.ndarray | None = None
    separated: bool = False
    messages: list[str] = field(default_factory=list)

    @property
    def n_parameters(self) -> int:
        return len(self.coefficients)


def fit_poisson(dm: DesignMatrix, opts: FitOptions = FitOptions()) -> FitResult:
    """Maximize the Poisson log-likelihood by IRLS on the canonical link.

    Starts from beta = 0 with the intercept at ln(mean(y) + 0.1), solves
    the weighted normal equations each step, and halves the step while the
    deviance increases. Converged means the relative deviance change fell
    below ``deviance_rtol`` and every score component |X_c'(y - lambda)|
    below ``score_atol``. Any coefficient beyond ``separation_threshold``
    in magnitude marks the fit as separated (a log-mean below -30 is
    numerically zero).

    Raises
    ------
    SeparationError
        If the response is identically zero with an intercept present
        (the MLE lies at -inf; nothing is estimable).
    """
    X = np.asarray(dm.X, dtype=float)
    y = np.asarray(dm.y, dtype=float)
    n, p = X.shape
    has_intercept = bool(dm.columns) and dm.columns[0] == INTERCEPT

    if has_intercept and y.sum() == 0:
        raise SeparationError("all responses are zero: intercept MLE at -inf")

    beta = np.zeros(p)
    if has_intercept:
        beta[0] = np.log(y.mean() + 0.1)
    eta = X @ beta
    lam = np.exp(eta)
    dev = _poisson_deviance(y, lam)

    converged = False
    messages: list[str] = []
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        w = np.clip(lam, 1e-10, None)
        z = eta + (y - lam) / w
        Xw = X * w[:, None]
        H = X.T @ Xw
        g = Xw.T @ z
        try:
            target = linalg.solve(H, g, assume_a="pos")
        except linalg.LinAlgError:
            target = np.linalg.lstsq(H, g, rcond=None)[0]
        step = target - beta

        # Step-halving: shrink toward the current iterate until the
        # deviance stops increasing.
        alpha = 1.0
        accepted = False
        for _ in range(opts.max_halvings):
            cand = beta + alpha * step
            with np.errstate(over="ignore"):
                eta_c = X @ cand
                lam_c = np.exp(eta_c)
            if np.all(np.isfinite(lam_c)) and np.all(lam_c > 0):
                dev_c = _poisson_deviance(y, lam_c)
                if dev_c <= dev + 1e-12 * (1.0 + abs(dev)):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            messages.append("step-halving failed to reduce the deviance")
            break

        rel_change = abs(dev - dev_c) / (0.1 + abs(dev_c))
        beta, eta, lam, dev = cand, eta_c, lam_c, dev_c
        score = X.T @ (y - lam)
        if rel_change < opts.deviance_rtol and np.max(np.abs(score)) < opts.score_atol:
            converged = True
            break

    if not converged and not messages:
        messages.append(f"no convergence within {opts.max_iterations} iterations")

    separated = bool(np.any(np.abs(beta) > opts.separation_threshold))
    if separated:
        worst = dm.columns[int(np.argmax(np.abs(beta)))]
        messages.append(
            f"separation suspected: |coefficient| > {opts.separation_threshold:g} "
            f"for {worst!r}"
        )
    # Exact check: a non-negative column whose active rows carry zero counts
    # has score -sum(c*lambda) < 0 everywhere, so its MLE sits at -inf no
    # matter where the iteration stopped.
    for j, name in enumerate(dm.columns):
        col = X[:, j]
        if name != INTERCEPT and np.all(col >= 0) and col.max() > 0 and col @ y == 0:
            separated = True
            messages.append(f"separation: column {name!r} only active where y = 0")

    # Standard errors from the inverse Fisher information at the optimum.
    H = X.T @ (X * lam[:, None])
    try:
        cov = linalg.inv(H)
    except linalg.LinAlgError:
        cov = linalg.pinv(H)
        messages.append("Fisher information singular: pseudo-inverse standard errors")
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    ll = log_likelihood(y, lam)
    k = p - (1 if has_intercept else 0)
    return FitResult(
        coefficients=dict(zip(dm.columns, beta.tolist())),
        standard_errors=dict(zip(dm.columns, se.tolist())),
        fitted=lam,
        y=dm.y.copy(),
        log_likelihood=ll,
        aic=aic(ll, p),
        n=n,
        k=k,
        converged=converged,
        iterations=iterations,
        spec=dm.spec,
        factor_levels=dict(dm.factor_levels),
        dropped=list(dm.dropped),
        excluded_rows=dm.excluded_rows,
        row_index=dm.row_index.copy(),
        separated=separated,
        messages=messages,
    )


def score_vector(dm: DesignMatrix, fit: FitResult) -> np.ndarray:
    """Score X'(y - lambda_hat); near zero componentwise at the optimum."""
    return dm.X.T @ (dm.y - fit.fitted)


def predict(fit: FitResult, x: Mapping[str, object]) -> float:
    """Expected count exp(linear predictor) at the named covariate values.

    ``x`` supplies a numeric value per surviving predictor and a level per
    fixed-effect factor. Levels resolve to their dummy columns; a level
    whose dummy was dropped (or the reference level) contributes zero.
    """
    lp = 0.0
    coefs = fit.coefficients
    if INTERCEPT in coefs:
        lp += coefs[INTERCEPT]
    for name in fit.spec.predictors:
        if name not in coefs:
            continue  # dropped as collinear; contributes nothing
        if name not in x:
            raise PredictionError(f"missing covariate {name!r}")
        lp += coefs[name] * float(x[name])  # type: ignore[arg-type]
    for factor in fit.spec.fixed_effects:
        if factor not in x:
            raise PredictionError(f"missing level for fixed effect {factor!r}")
        level = str(x[factor])
        levels = fit.factor_levels.get(factor, [])
        if level not in levels:
            raise PredictionError(f"unknown level {level!r} for fixed effect {factor!r}")
        lp += coefs.get(dummy_name(factor, level), 0.0)
    return float(np.exp(lp))


@dataclass(frozen=True)
class WaldTest:
    """Wald z-test of one coefficient against zero."""

    name: str
    estimate: float
    se: float
    z: float | None
    p: float | None
    stars: str
    available: bool = True


def star_label(p: float) -> str:
    """Significance stars: * p<0.05, ** p<0.01, *** p<0.001."""
    if p < STAR_THRESHOLDS[2]:
        return "***"
    if p < STAR_THRESHOLDS[1]:
        return "**"
    if p < STAR_THRESHOLDS[0]:
        return "*"
    return ""


def wald_tests(fit: FitResult) -> list[WaldTest]:
    """Per-coefficient z-statistics and two-sided normal p-values.

    A coefficient with a zero or non-finite standard error is reported
    with the test marked unavailable instead of failing the whole table.
    """
    out = []
    for name, estimate in fit.coefficients.items():
        se = fit.standard_errors[name]
        if not np.isfinite(se) or se <= 0:
            out.append(WaldTest(name, estimate, se, None, None, "", available=False))
            continue
        z = estimate / se
        p = float(2.0 * stats.norm.sf(abs(z)))
        out.append(WaldTest(name, estimate, se, float(z), p, star_label(p)))
    return out
