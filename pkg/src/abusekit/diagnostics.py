"""Goodness-of-fit: dispersion, deviance, pseudo-R2, comparative rankings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .glm import INTERCEPT, FitResult, dummy_name
from .ingest import Dataset


class DiagnosticsError(ValueError):
    """Raised when a diagnostic is undefined for the given inputs."""


@dataclass(frozen=True)
class DispersionReport:
    """Pearson chi-square dispersion estimate phi = chi2 / (n - k - 1)."""

    phi_hat: float
    chi_square: float
    df: int


@dataclass(frozen=True)
class FitAssessment:
    """Dispersion-penalized pseudo-R2 of a fit against a nested baseline."""

    deviance_model: float
    deviance_baseline: float
    pseudo_r2: float
    baseline_kind: str  # "intercept_only" | "fixed_effects_only" | "self"
    phi_hat: float
    k_penalty: int


@dataclass(frozen=True)
class ProviderScore:
    """Observed-vs-predicted comparison for one provider."""

    provider_id: str
    observed: int
    predicted: float
    ratio: float
    pearson_residual: float
    better_than_average: bool


def dispersion(y, lambda_hat, k: int) -> DispersionReport:
    """Estimate the dispersion parameter from the Pearson chi-square.

    phi_hat = sum_i (y_i - lambda_i)^2 / lambda_i, divided by n - k - 1,
    where ``k`` counts the fitted covariates excluding the intercept. For
    an intercept-only fit (k = 0, lambda = mean(y)) this equals the sample
    variance over the mean exactly.

    Raises
    ------
    DiagnosticsError
        If df = n - k - 1 <= 0 or any lambda_i <= 0.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lambda_hat, dtype=float)
    if np.any(lam <= 0):
        raise DiagnosticsError("lambda_hat must be strictly positive")
    df = int(y.size) - k - 1
    if df <= 0:
        raise DiagnosticsError(f"non-positive degrees of freedom (n={y.size}, k={k})")
    chi2 = float(np.sum((y - lam) ** 2 / lam))
    return DispersionReport(phi_hat=chi2 / df, chi_square=chi2, df=df)


def deviance(y, lambda_hat) -> float:
    """Poisson deviance 2 sum[y ln(y/lambda) - (y - lambda)].

    The y = 0 limit is handled analytically: a zero count contributes
    exactly 2 * lambda_i.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lambda_hat, dtype=float)
    if np.any(lam <= 0):
        raise DiagnosticsError("lambda_hat must be strictly positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = special.xlogy(y, y / lam) - (y - lam)
    return float(2.0 * np.sum(terms))


def _baseline_kind(fit: FitResult, baseline: FitResult) -> str:
    if baseline.spec == fit.spec:
        # a model against itself: R2 = -k*phi/D <= 0 (the pure penalty)
        return "self"
    if baseline.spec.predictors:
        raise DiagnosticsError(
            "baseline must be intercept-only or fixed-effects-only (no predictors)"
        )
    if not baseline.spec.fixed_effects:
        return "intercept_only"
    if not set(baseline.spec.fixed_effects) <= set(fit.spec.fixed_effects):
        raise DiagnosticsError("baseline fixed effects are not nested in the fit")
    return "fixed_effects_only"


def pseudo_r2(fit: FitResult, baseline: FitResult) -> FitAssessment:
    """Dispersion-adjusted pseudo-R2: 1 - (D_model + k*phi) / D_baseline.

    ``phi`` is the fitted model's own dispersion estimate. Against an
    intercept-only baseline ``k`` counts every non-intercept coefficient;
    against a fixed-effects-only baseline ``k`` counts only the predictor
    coefficients added beyond the baseline (the conservative variant). The
    value is at most 1 and may be negative when the penalty outweighs the
    deviance actually explained.
    """
    if fit.n != baseline.n or not np.array_equal(fit.y, baseline.y):
        raise DiagnosticsError("fit and baseline were estimated on different rows")
    kind = _baseline_kind(fit, baseline)
    d_model = deviance(fit.y, fit.fitted)
    d_base = deviance(baseline.y, baseline.fitted)
    if d_base == 0:
        raise DiagnosticsError("baseline deviance is zero (already-perfect baseline)")
    if kind in ("intercept_only", "self"):
        k_penalty = fit.k
    else:
        dummies = {
            dummy_name(f, lvl)
            for f in fit.spec.fixed_effects
            for lvl in fit.factor_levels.get(f, [])
        }
        k_penalty = sum(
            1 for c in fit.coefficients if c != INTERCEPT and c not in dummies
        )
    phi = dispersion(fit.y, fit.fitted, fit.k).phi_hat
    r2 = 1.0 - (d_model + k_penalty * phi) / d_base
    return FitAssessment(
        deviance_model=d_model,
        deviance_baseline=d_base,
        pseudo_r2=r2,
        baseline_kind=kind,
        phi_hat=phi,
        k_penalty=k_penalty,
    )


def rank_providers(d: Dataset, fit: FitResult) -> list[ProviderScore]:
    """Comparative ranking of observed against model-predicted counts.

    Scores are sorted by Pearson residual ascending, so the providers
    doing best relative to their structural prediction come first. A
    provider observed below its prediction is flagged better-than-average.
    """
    if fit.row_index is None or len(fit.row_index) != fit.n:
        raise DiagnosticsError("fit does not carry row indices for this dataset")
    if len(d) <= int(np.max(fit.row_index)):
        raise DiagnosticsError("fit rows do not cover the given dataset")
    ids = d.provider_ids()
    scores = []
    for pos, row in enumerate(fit.row_index):
        observed = int(fit.y[pos])
        predicted = float(fit.fitted[pos])
        scores.append(
            ProviderScore(
                provider_id=ids[row],
                observed=observed,
                predicted=predicted,
                ratio=observed / predicted,
                pearson_residual=float((observed - predicted) / np.sqrt(predicted)),
                better_than_average=observed < predicted,
            )
        )
    return sorted(scores, key=lambda s: (s.pearson_residual, s.provider_id))
