"""Rendering and serialization: run manifests, tables, result documents.

Every emitted document embeds a run manifest (command, input digests,
resolved options, tool version, seed) so outputs are auditable and
byte-identical across reruns with identical inputs. Tables render as
Markdown for humans and delimited text for machines; structured results
serialize as JSON with full float precision.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import __version__
from .diagnostics import DispersionReport, FitAssessment, ProviderScore
from .glm import INTERCEPT, FitResult, WaldTest, wald_tests
from .ingest import ColumnSummary
from .scenarios import ScenarioRow
from .sim import SimulationResult, SimulationSummary

STAR_FOOTNOTE = (
    "Significance: * p<0.05; ** p<0.01; *** p<0.001 "
    "(fixed convention; the 0.1/0.05/0.01 variant is not used). "
    "Standard errors in brackets."
)

#: Human labels for rendered tables.
COLUMN_LABELS = {
    "assigned_ips_log10": "Assigned IPs (log10)",
    "hosting_ips_log10": "IPs hosting domains (log10)",
    "hosted_domains_log10": "Hosted domains (log10)",
    "pct_shared": "Domains on shared IPs (%)",
    "abuse_count": "Abuse count",
    "price_per_year": "Price per year (USD)",
    "popularity_index": "Popularity index",
    "time_in_business": "Time in business (years)",
    "ict_dev_index": "ICT development index",
    "wordpress_use": "WordPress use",
    INTERCEPT: "Constant",
}


def label_for(column: str) -> str:
    return COLUMN_LABELS.get(column, column)


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Provenance record embedded in every output document."""

    command: str
    inputs: Mapping[str, str]  # path -> sha256
    options: Mapping[str, object]
    tool_version: str = __version__
    rng_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "inputs": dict(sorted(self.inputs.items())),
            "options": _jsonable(dict(self.options)),
            "tool_version": self.tool_version,
            "rng_seed": self.rng_seed,
        }

    def comment_line(self) -> str:
        return "manifest " + json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ":")
        )


def build_manifest(
    command: str,
    input_paths: Sequence[str],
    options: Mapping[str, object],
    rng_seed: int | None = None,
) -> RunManifest:
    return RunManifest(
        command=command,
        inputs={str(p): sha256_file(p) for p in input_paths},
        options=dict(options),
        rng_seed=rng_seed,
    )


def _jsonable(value):
    """Recursively coerce a value into JSON-safe types (no NaN/inf)."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        try:
            return _jsonable(value.item())
        except (AttributeError, ValueError):
            pass
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    return str(value)


def json_document_text(doc: Mapping, manifest: RunManifest) -> str:
    payload = {"manifest": manifest.to_dict(), **_jsonable(dict(doc))}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json_document(path, doc: Mapping, manifest: RunManifest) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json_document_text(doc, manifest))


def write_text_document(path, text: str, manifest: RunManifest, comment: str = "#") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{comment} {manifest.comment_line()}\n")
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _fmt(value: float, decimals: int = 3) -> str:
    if value is None or not math.isfinite(value):
        return "NA"
    return f"{value:,.{decimals}f}"


def _csv_line(cells: Sequence[object], delimiter: str = ",") -> str:
    out = io.StringIO()
    csv.writer(out, delimiter=delimiter, lineterminator="\n").writerow(cells)
    return out.getvalue()


def _full(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value)) if math.isfinite(value) else "NA"
    return str(value)


def render_describe(
    summaries: Sequence[ColumnSummary], fmt: str = "csv", delimiter: str = ","
) -> str:
    """Render descriptive statistics in min/mean/median/max/sd layout."""
    if fmt == "md":
        lines = [
            "| variable | min | mean | median | max | sd | n |",
            "| --- | ---: | ---: | ---: | ---: | ---: | ---: |",
        ]
        for s in summaries:
            sd = _fmt(s.sd) + (" (single value)" if s.single_value else "")
            lines.append(
                f"| {label_for(s.name)} | {_fmt(s.min)} | {_fmt(s.mean)} "
                f"| {_fmt(s.median)} | {_fmt(s.max)} | {sd} | {s.n:,} |"
            )
        return "\n".join(lines) + "\n"
    header = ["variable", "n", "n_missing", "min", "mean", "median", "max", "sd", "single_value"]
    rows = [_csv_line(header, delimiter)]
    for s in summaries:
        rows.append(
            _csv_line(
                [s.name, s.n, s.n_missing, _full(s.min), _full(s.mean),
                 _full(s.median), _full(s.max), _full(s.sd), int(s.single_value)],
                delimiter,
            )
        )
    return "".join(rows)


def describe_document(summaries: Sequence[ColumnSummary]) -> dict:
    return {
        "columns": [
            {
                "name": s.name,
                "n": s.n,
                "n_missing": s.n_missing,
                "min": s.min,
                "mean": s.mean,
                "median": s.median,
                "max": s.max,
                "sd": s.sd,
                "single_value": s.single_value,
            }
            for s in summaries
        ]
    }


def scenarios_document(rows: Sequence[ScenarioRow]) -> dict:
    return {
        "rows": [
            {
                "scenario": r.scenario,
                "variable": r.variable,
                "delta": r.delta,
                "multiplier": r.multiplier,
                "baseline_lambda": r.baseline_lambda,
                "incremented_lambda": r.incremented_lambda,
                "absolute_change": r.absolute_change,
            }
            for r in rows
        ]
    }


@dataclass
class ModelColumn:
    """One fitted model plus its diagnostics, ready for side-by-side tables."""

    label: str
    fit: FitResult
    dispersion: DispersionReport | None = None
    assessments: list[FitAssessment] = field(default_factory=list)
    source_label: str = ""

    @property
    def tests(self) -> dict[str, WaldTest]:
        return {t.name: t for t in wald_tests(self.fit)}


def _coefficient_cell(column: ModelColumn, term: str) -> str:
    if term not in column.fit.coefficients:
        return ""
    test = column.tests[term]
    if not test.available:
        return f"{_fmt(test.estimate)} (SE unavailable)"
    return f"{test.estimate:,.3f}{test.stars} ({test.se:,.3f})"


def _assessment_by_kind(column: ModelColumn, kind: str) -> FitAssessment | None:
    for a in column.assessments:
        if a.baseline_kind == kind:
            return a
    return None


def render_fit_table(columns: Sequence[ModelColumn], fmt: str = "md", delimiter: str = ",") -> str:
    """Side-by-side regression table in the stepwise journal layout.

    Coefficient rows carry stars and bracketed standard errors; fixed
    effects appear as Yes/No rows rather than per-dummy coefficients
    (those stay available in the JSON documents and delimited output).
    """
    terms: list[str] = []
    factors: list[str] = []
    for col in columns:
        for name in col.fit.spec.predictors:
            if name not in terms:
                terms.append(name)
        for factor in col.fit.spec.fixed_effects:
            if factor not in factors:
                factors.append(factor)
    has_intercept = any(INTERCEPT in c.fit.coefficients for c in columns)

    if fmt == "md":
        head = "| | " + " | ".join(f"({i})" for i in range(1, len(columns) + 1)) + " |"
        rule = "| --- |" + " ---: |" * len(columns)
        lines = [head, rule]
        for term in terms:
            cells = [_coefficient_cell(c, term) for c in columns]
            lines.append(f"| {label_for(term)} | " + " | ".join(cells) + " |")
        if has_intercept:
            cells = [_coefficient_cell(c, INTERCEPT) for c in columns]
            lines.append(f"| {label_for(INTERCEPT)} | " + " | ".join(cells) + " |")
        for factor in factors:
            cells = [
                "Yes" if factor in c.fit.spec.fixed_effects else "No" for c in columns
            ]
            lines.append(f"| {factor} fixed effects | " + " | ".join(cells) + " |")
        stat_rows = [
            ("Observations", lambda c: f"{c.fit.n:,}"),
            ("Log likelihood", lambda c: _fmt(c.fit.log_likelihood)),
            ("AIC", lambda c: _fmt(c.fit.aic)),
            ("Dispersion", lambda c: _fmt(c.dispersion.phi_hat) if c.dispersion else ""),
            ("Pseudo R2", _pseudo_cell),
            ("Total pseudo R2", _total_pseudo_cell),
        ]
        for name, getter in stat_rows:
            cells = [getter(c) for c in columns]
            if any(cells):
                lines.append(f"| {name} | " + " | ".join(cells) + " |")
        footer = [f"\n{STAR_FOOTNOTE}"]
        kinds = sorted(
            {a.baseline_kind for c in columns for a in c.assessments}
        )
        if kinds:
            footer.append(f"Pseudo R2 baseline(s): {', '.join(kinds)}.")
        return "\n".join(lines) + "\n" + "\n".join(footer) + "\n"

    header = ["model", "term", "estimate", "se", "z", "p", "stars"]
    rows = [_csv_line(header, delimiter)]
    for col in columns:
        for term, test in col.tests.items():
            rows.append(
                _csv_line(
                    [col.label, term, _full(test.estimate), _full(test.se),
                     _full(test.z), _full(test.p), test.stars],
                    delimiter,
                )
            )
        stats: list[tuple[str, object]] = [
            ("n_observations", col.fit.n),
            ("log_likelihood", col.fit.log_likelihood),
            ("aic", col.fit.aic),
            ("converged", int(col.fit.converged)),
        ]
        if col.dispersion:
            stats.append(("dispersion", col.dispersion.phi_hat))
        for a in col.assessments:
            key = (
                "pseudo_r2"
                if a.baseline_kind == "intercept_only"
                else "pseudo_r2_fixed_effects_baseline"
            )
            stats.append((key, a.pseudo_r2))
        for name, value in stats:
            rows.append(_csv_line([col.label, name, _full(value), "", "", "", ""], delimiter))
    rows.append(_csv_line(["#", STAR_FOOTNOTE, "", "", "", "", ""], delimiter))
    return "".join(rows)


def _pseudo_cell(column: ModelColumn) -> str:
    # Models with fixed effects report the conservative (fixed-effects
    # baseline) value here; the intercept-only value moves to "Total".
    kind = "fixed_effects_only" if column.fit.spec.fixed_effects else "intercept_only"
    a = _assessment_by_kind(column, kind)
    return _fmt(a.pseudo_r2) if a else ""


def _total_pseudo_cell(column: ModelColumn) -> str:
    if not column.fit.spec.fixed_effects:
        return ""
    a = _assessment_by_kind(column, "intercept_only")
    return _fmt(a.pseudo_r2) if a else ""


def fit_document(column: ModelColumn) -> dict:
    """JSON-shaped fit result consumed by downstream tooling."""
    fit = column.fit
    doc = {
        "model": column.label,
        "source_label": column.source_label,
        "n": fit.n,
        "k": fit.k,
        "n_parameters": fit.n_parameters,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "separated": fit.separated,
        "messages": list(fit.messages),
        "excluded_rows": fit.excluded_rows,
        "dropped_columns": [list(item) for item in fit.dropped],
        "log_likelihood": fit.log_likelihood,
        "aic": fit.aic,
        "spec": {
            "response": fit.spec.response,
            "predictors": list(fit.spec.predictors),
            "fixed_effects": list(fit.spec.fixed_effects),
            "include_intercept": fit.spec.include_intercept,
        },
        "coefficients": [
            {
                "term": t.name,
                "estimate": t.estimate,
                "se": t.se,
                "z": t.z,
                "p": t.p,
                "stars": t.stars,
                "available": t.available,
            }
            for t in wald_tests(fit)
        ],
        "star_thresholds": [0.05, 0.01, 0.001],
    }
    if column.dispersion:
        doc["dispersion"] = {
            "phi_hat": column.dispersion.phi_hat,
            "chi_square": column.dispersion.chi_square,
            "df": column.dispersion.df,
        }
    if column.assessments:
        doc["assessments"] = [
            {
                "baseline_kind": a.baseline_kind,
                "pseudo_r2": a.pseudo_r2,
                "deviance_model": a.deviance_model,
                "deviance_baseline": a.deviance_baseline,
                "phi_hat": a.phi_hat,
                "k_penalty": a.k_penalty,
            }
            for a in column.assessments
        ]
    return doc


def render_rankings(scores: Sequence[ProviderScore], delimiter: str = ",") -> str:
    """Plot-ready observed-vs-predicted rows, best relative performers first."""
    header = [
        "rank", "provider_id", "predicted", "observed",
        "ratio", "pearson_residual", "better_than_average",
    ]
    rows = [_csv_line(header, delimiter)]
    for rank, s in enumerate(scores, start=1):
        rows.append(
            _csv_line(
                [rank, s.provider_id, _full(s.predicted), s.observed,
                 _full(s.ratio), _full(s.pearson_residual), int(s.better_than_average)],
                delimiter,
            )
        )
    return "".join(rows)


def render_scenarios(rows: Sequence[ScenarioRow], fmt: str = "csv", delimiter: str = ",") -> str:
    if fmt == "md":
        lines = [
            "| scenario | variable | delta | multiplier | baseline | incremented | change |",
            "| --- | --- | ---: | ---: | ---: | ---: | ---: |",
        ]
        for r in rows:
            lines.append(
                f"| {r.scenario} | {label_for(r.variable)} | {_fmt(r.delta, 2)} "
                f"| {_fmt(r.multiplier)} | {_fmt(r.baseline_lambda)} "
                f"| {_fmt(r.incremented_lambda)} | {_fmt(r.absolute_change)} |"
            )
        return "\n".join(lines) + "\n"
    header = [
        "scenario", "variable", "delta", "multiplier",
        "baseline_lambda", "incremented_lambda", "absolute_change",
    ]
    out = [_csv_line(header, delimiter)]
    for r in rows:
        out.append(
            _csv_line(
                [r.scenario, r.variable, _full(r.delta), _full(r.multiplier),
                 _full(r.baseline_lambda), _full(r.incremented_lambda),
                 _full(r.absolute_change)],
                delimiter,
            )
        )
    return "".join(out)


def render_simulation_samples(res: SimulationResult, delimiter: str = ",") -> str:
    """Per-replicate dispersion, coefficient and SE samples as delimited rows."""
    header = (
        ["replicate", "dispersion"]
        + [f"coef:{n}" for n in res.coefficient_names]
        + [f"se:{n}" for n in res.coefficient_names]
    )
    rows = [_csv_line(header, delimiter)]
    for rep in range(len(res.dispersion_samples)):
        phi = res.dispersion_samples[rep]
        cells: list[object] = [rep, "" if math.isnan(phi) else _full(float(phi))]
        for matrix in (res.coefficient_samples, res.se_samples):
            for j in range(len(res.coefficient_names)):
                v = matrix[rep, j]
                cells.append("" if math.isnan(v) else _full(float(v)))
        rows.append(_csv_line(cells, delimiter))
    return "".join(rows)


def simulation_summary_document(summary: SimulationSummary, res: SimulationResult) -> dict:
    return {
        "replicates": len(res.dispersion_samples),
        "n_successful": summary.n_successful,
        "n_failed": summary.n_failed,
        "failures": [[idx, reason] for idx, reason in res.failures],
        "dispersion": {
            "mean": summary.dispersion_mean,
            "q025": summary.dispersion_q025,
            "q975": summary.dispersion_q975,
            "histogram_edges": [float(e) for e in summary.histogram_edges],
            "histogram_counts": [int(c) for c in summary.histogram_counts],
        },
        "coefficients": [
            {
                "term": c.name,
                "n": c.n,
                "mean": c.mean,
                "q025": c.q025,
                "q975": c.q975,
                "reference": c.reference,
                "reference_deviation": c.reference_deviation,
            }
            for c in summary.coefficients
        ],
        "config": {
            "n": res.config.n,
            "true_size_mean": res.config.true_size_mean,
            "true_size_sd": res.config.true_size_sd,
            "link_slope": res.config.link_slope,
            "link_intercept": res.config.resolved_intercept,
            "target_mean": res.config.target_mean,
            "noise": {k: list(v) for k, v in res.config.noise.items()},
            "replicates": res.config.replicates,
            "rng_seed": res.config.rng_seed,
        },
    }
