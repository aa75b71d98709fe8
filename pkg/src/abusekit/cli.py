"""Command-line entry point for the abuse count-data modeling pipeline.

Subcommands: describe, features, twins, fit, diagnostics, scenarios,
rank, simulate, pipeline. Every command is deterministic in its inputs,
flags and seed; each artifact embeds a run manifest with the digests of
all inputs. Exit codes: 0 = all requested artifacts written, 2 = invalid
input or options, 1 = unexpected failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, features, ingest, scenarios, sim, twins
from .glm import (
    INTERCEPT,
    DesignError,
    ModelSpec,
    PredictionError,
    SeparationError,
    build_design,
    fit_poisson,
)
from .report import (
    ModelColumn,
    RunManifest,
    build_manifest,
    describe_document,
    fit_document,
    json_document_text,
    render_describe,
    render_fit_table,
    render_rankings,
    render_scenarios,
    render_simulation_samples,
    scenarios_document,
    simulation_summary_document,
    write_json_document,
    write_text_document,
)

USAGE_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    SeparationError,
    PredictionError,
    DesignError,
    configparser.Error,
)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage label."""


def _parse_schema(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValueError(f"--schema entries must be canonical=column, got {part!r}")
        canonical, col = part.split("=", 1)
        out[canonical.strip()] = col.strip()
    return out


def _split(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _subset(d: ingest.Dataset, rows: np.ndarray) -> ingest.Dataset:
    return ingest.Dataset(
        records=tuple(d.records[i] for i in rows), source_label=d.source_label
    )


def _fit_column(sub: ingest.Dataset, spec: ModelSpec, label: str, baseline_mode: str,
                cache: dict) -> ModelColumn:
    """Fit one model on a pre-subset dataset and attach its diagnostics."""
    fit = fit_poisson(build_design(sub, spec))
    column = ModelColumn(label=label, fit=fit, source_label=sub.source_label)
    try:
        column.dispersion = diagnostics.dispersion(fit.y, fit.fitted, fit.k)
    except diagnostics.DiagnosticsError:
        column.dispersion = None

    baseline_specs = []
    if spec.fixed_effects and baseline_mode in ("fe", "both"):
        baseline_specs.append(ModelSpec(spec.response, (), spec.fixed_effects))
    if baseline_mode in ("intercept", "both"):
        baseline_specs.append(ModelSpec(spec.response, (), ()))
    for bspec in baseline_specs:
        if bspec == spec:
            continue  # the model is its own baseline; R2 is 0 by construction
        key = (bspec.predictors, bspec.fixed_effects)
        if key not in cache:
            cache[key] = fit_poisson(build_design(sub, bspec))
        try:
            column.assessments.append(diagnostics.pseudo_r2(fit, cache[key]))
        except diagnostics.DiagnosticsError:
            pass
    return column


def _run_fits(d: ingest.Dataset, spec: ModelSpec, stepwise: bool,
              baseline_mode: str) -> tuple[list[ModelColumn], int]:
    """Fit the requested model(s) on a common row set.

    All models (stepwise or single) are estimated on the rows complete for
    the widest specification, so their likelihoods, AICs and pseudo-R2
    values stay comparable.
    """
    dm = build_design(d, spec)
    sub = _subset(d, dm.row_index)
    specs: list[tuple[str, ModelSpec]] = []
    if stepwise:
        for j in range(len(spec.predictors) + 1):
            specs.append((f"({j + 1})", replace(spec, predictors=spec.predictors[:j])))
    else:
        specs.append(("(1)", spec))
    cache: dict = {}
    columns = [
        _fit_column(sub, s, label, baseline_mode, cache) for label, s in specs
    ]
    return columns, dm.excluded_rows


def _write_manifested_csv(path: Path, text: str, manifest: RunManifest) -> None:
    write_text_document(path, text, manifest)


def _option_echo(args: argparse.Namespace, skip=("out_dir", "func", "command")) -> dict:
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None
    }


# ---------------------------------------------------------------- describe


def cmd_describe(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    columns = _split(args.columns) or (
        "assigned_ips_log10",
        "hosting_ips_log10",
        "hosted_domains_log10",
        "pct_shared",
        "abuse_count",
    )
    summaries = ingest.describe(d, columns)
    manifest = build_manifest("describe", [args.input], _option_echo(args))
    if args.format == "json":
        text = json_document_text(describe_document(summaries), manifest)
    else:
        text = f"# {manifest.comment_line()}\n" + render_describe(
            summaries, fmt=args.format, delimiter=args.delimiter
        )
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"describe.{args.format}").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- features


def _build_features(args) -> tuple[ingest.Dataset, features.FeatureReport]:
    allocations = features.load_allocations(args.allocations, args.delimiter)
    observations = features.load_observations(args.observations, args.delimiter)
    abuse = features.load_abuse(args.abuse, args.delimiter)
    table, rep = features.build_provider_table(
        allocations, observations, abuse, source_label=args.source_label
    )
    if args.enrichment:
        rows = features.load_enrichment(args.enrichment, args.delimiter)
        merge_cols = [c for c in ingest.OPTIONAL_COLUMNS if c != "twin_id"]
        table = features.merge_enrichment(table, rows, merge_cols)
    return table, rep


def cmd_features(args) -> int:
    table, rep = _build_features(args)
    inputs = [args.allocations, args.observations, args.abuse]
    if args.enrichment:
        inputs.append(args.enrichment)
    manifest = build_manifest("features", inputs, _option_echo(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_table(
        table, out / "providers.csv", args.delimiter, [manifest.comment_line()]
    )
    write_json_document(
        out / "features_report.json",
        {
            "n_providers": rep.n_providers,
            "skipped_observations": rep.skipped_observations,
            "skipped_abuse_records": rep.skipped_abuse_records,
            "zero_domain_providers": rep.zero_domain_providers,
        },
        manifest,
    )
    return 0


# ---------------------------------------------------------------- twins


def _read_seed_ids(path) -> list[str]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    if not out:
        raise ValueError(f"{path}: no seed provider ids")
    return out


def _resolve_seeds(args, d: ingest.Dataset) -> list[str]:
    if args.seeds:
        return _read_seed_ids(args.seeds)
    if args.sample_seeds:
        return twins.sample_seed_ids(d, args.sample_seeds, args.seed or 0)
    raise ValueError("provide --seeds FILE or --sample-seeds N")


def _pairings_csv(pairings, delimiter: str) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["twin_id", "seed_id", "match_id", "distance"])
    for p in pairings:
        w.writerow([p.twin_id, p.seed_id, p.match_id, repr(p.distance)])
    return buf.getvalue()


def _match(args, d: ingest.Dataset) -> list[twins.TwinPairing]:
    seed_ids = _resolve_seeds(args, d)
    known = set(d.provider_ids())
    unknown = [s for s in seed_ids if s not in known]
    if unknown:
        raise ValueError(f"seed ids not in dataset: {unknown[:5]}")
    seed_set = set(seed_ids)
    S = ingest.Dataset(
        records=tuple(r for r in d if r.provider_id in seed_set),
        source_label=d.source_label,
    )
    cfg = twins.MatchingConfig(
        variables=_split(args.match_vars) or twins.DEFAULT_MATCH_VARIABLES,
        standardize=args.standardize,
        allow_reuse=not args.no_reuse,
    )
    return twins.match_twins(S, d, cfg)


def cmd_twins(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    pairings = _match(args, d)
    manifest = build_manifest(
        "twins",
        [args.input] + ([args.seeds] if args.seeds else []),
        _option_echo(args),
        rng_seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifested_csv(out / "pairings.csv", _pairings_csv(pairings, args.delimiter), manifest)
    return 0


# ---------------------------------------------------------------- fit / diagnostics


def _model_spec(args) -> ModelSpec:
    return ModelSpec(
        response=args.response,
        predictors=_split(args.predictors),
        fixed_effects=_split(args.fixed_effects),
        include_intercept=not args.no_intercept,
    )


def _baseline_mode(args, spec: ModelSpec) -> str:
    if args.baseline == "fe":
        if not spec.fixed_effects:
            raise ValueError("--baseline fe requires --fixed-effects")
        return "fe"
    return args.baseline


def cmd_fit(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    spec = _model_spec(args)
    columns, excluded = _run_fits(d, spec, args.stepwise, _baseline_mode(args, spec))
    manifest = build_manifest("fit", [args.input], _option_echo(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json_document(
        out / "fit.json",
        {"rows_excluded_for_missing": excluded, "models": [fit_document(c) for c in columns]},
        manifest,
    )
    write_json_document(
        out / "assessment.json",
        {
            "models": [
                {
                    "model": c.label,
                    "dispersion": None
                    if c.dispersion is None
                    else {
                        "phi_hat": c.dispersion.phi_hat,
                        "chi_square": c.dispersion.chi_square,
                        "df": c.dispersion.df,
                    },
                    "assessments": [
                        {
                            "baseline_kind": a.baseline_kind,
                            "pseudo_r2": a.pseudo_r2,
                            "deviance_model": a.deviance_model,
                            "deviance_baseline": a.deviance_baseline,
                            "phi_hat": a.phi_hat,
                            "k_penalty": a.k_penalty,
                        }
                        for a in c.assessments
                    ],
                }
                for c in columns
            ]
        },
        manifest,
    )
    if args.format != "json":  # fit.json above already carries everything
        write_text_document(
            out / f"fit_table.{args.format}",
            render_fit_table(columns, fmt=args.format, delimiter=args.delimiter),
            manifest,
        )
    return 0


def cmd_diagnostics(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    spec = _model_spec(args)
    columns, excluded = _run_fits(d, spec, False, _baseline_mode(args, spec))
    manifest = build_manifest("diagnostics", [args.input], _option_echo(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    column = columns[0]
    write_json_document(
        out / "assessment.json",
        {
            "model": column.label,
            "rows_excluded_for_missing": excluded,
            "n": column.fit.n,
            "deviance_model": diagnostics.deviance(column.fit.y, column.fit.fitted),
            "dispersion": None
            if column.dispersion is None
            else {
                "phi_hat": column.dispersion.phi_hat,
                "chi_square": column.dispersion.chi_square,
                "df": column.dispersion.df,
            },
            "assessments": [
                {
                    "baseline_kind": a.baseline_kind,
                    "pseudo_r2": a.pseudo_r2,
                    "deviance_model": a.deviance_model,
                    "deviance_baseline": a.deviance_baseline,
                    "phi_hat": a.phi_hat,
                    "k_penalty": a.k_penalty,
                }
                for a in column.assessments
            ],
        },
        manifest,
    )
    return 0


# ---------------------------------------------------------------- scenarios / rank


def cmd_scenarios(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    spec = _model_spec(args)
    columns, _ = _run_fits(d, spec, False, "intercept")
    fit = columns[0].fit
    specs = scenarios.builtin_scenarios(d, [p for p in spec.predictors if p in fit.coefficients])
    rows = scenarios.scenario_table(fit, specs)
    manifest = build_manifest("scenarios", [args.input], _option_echo(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        write_json_document(out / "scenarios.json", scenarios_document(rows), manifest)
    else:
        write_text_document(
            out / f"scenarios.{args.format}",
            render_scenarios(rows, fmt=args.format, delimiter=args.delimiter),
            manifest,
        )
    return 0


def cmd_rank(args) -> int:
    d = ingest.load_table(args.input, _parse_schema(args.schema), args.delimiter)
    spec = _model_spec(args)
    dm = build_design(d, spec)
    fit = fit_poisson(dm)
    scores = diagnostics.rank_providers(d, fit)
    manifest = build_manifest("rank", [args.input], _option_echo(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifested_csv(out / "rankings.csv", render_rankings(scores, args.delimiter), manifest)
    return 0


# ---------------------------------------------------------------- simulate


def _noise_pair(text: str, where: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"{where}: expected 'mu, sigma', got {text!r}")
    return float(parts[0]), float(parts[1])


def load_sim_config(path) -> tuple[sim.SimulationConfig, dict[str, float] | None]:
    """Parse a simulation config (INI-style key = value sections)."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh, source=str(path))

    kwargs: dict = {}
    pop = parser["population"] if parser.has_section("population") else {}
    for key, cast in (("n", int), ("true_size_mean", float), ("true_size_sd", float)):
        if key in pop:
            kwargs[key] = cast(pop[key])
    link = parser["link"] if parser.has_section("link") else {}
    if "slope" in link:
        kwargs["link_slope"] = float(link["slope"])
    if "intercept" in link:
        kwargs["link_intercept"] = float(link["intercept"])
    if "target_mean" in link:
        kwargs["target_mean"] = float(link["target_mean"])
    if parser.has_section("noise"):
        noise_section = parser["noise"]
        preset = noise_section.get("preset")
        if preset == "measured":
            kwargs["noise"] = dict(sim.MEASURED_NOISE)
        elif preset == "zero" or preset is None:
            kwargs["noise"] = {c: (0.0, 0.0) for c in sim.PROXY_COLUMNS}
        else:
            raise ValueError(f"{path}: unknown noise preset {preset!r}")
        for col in sim.PROXY_COLUMNS:
            if col in noise_section:
                kwargs["noise"][col] = _noise_pair(noise_section[col], f"[noise] {col}")
    run = parser["run"] if parser.has_section("run") else {}
    if "replicates" in run:
        kwargs["replicates"] = int(run["replicates"])
    if "rng_seed" in run:
        kwargs["rng_seed"] = int(run["rng_seed"])

    reference = None
    if parser.has_section("reference"):
        reference = {
            (INTERCEPT if key == "intercept" else key): float(value)
            for key, value in parser["reference"].items()
        }
    return sim.SimulationConfig(**kwargs), reference


def cmd_simulate(args) -> int:
    if args.config:
        cfg, reference = load_sim_config(args.config)
    else:
        cfg, reference = sim.SimulationConfig(), None
    if args.preset == "measured":
        cfg = cfg.with_measured_noise()
    elif args.preset == "zero":
        cfg = replace(cfg, noise={c: (0.0, 0.0) for c in sim.PROXY_COLUMNS})
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.n is not None:
        overrides["n"] = args.n
    if overrides:
        cfg = replace(cfg, **overrides)

    result = sim.run_monte_carlo(cfg, reference)
    summary = sim.summarize(result)
    manifest = build_manifest(
        "simulate",
        [args.config] if args.config else [],
        _option_echo(args),
        rng_seed=cfg.rng_seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifested_csv(out / "samples.csv", render_simulation_samples(result), manifest)
    write_json_document(
        out / "summary.json", simulation_summary_document(summary, result), manifest
    )
    return 0


# ---------------------------------------------------------------- pipeline


def cmd_pipeline(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [args.allocations, args.observations, args.abuse, args.enrichment]
    if args.seeds:
        inputs.append(args.seeds)
    if args.abuse_alt:
        inputs.append(args.abuse_alt)
    manifest = build_manifest("pipeline", inputs, _option_echo(args), rng_seed=args.seed)

    def stage(name, fn):
        try:
            return fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(f"[stage:{name}] {type(exc).__name__}: {exc}") from exc

    table, _rep = stage("features", lambda: _build_features(args))
    stage(
        "features",
        lambda: ingest.write_table(
            table, out / "providers.csv", args.delimiter, [manifest.comment_line()]
        ),
    )

    pairings = stage("twins", lambda: _match(args, table))
    stage(
        "twins",
        lambda: _write_manifested_csv(
            out / "pairings.csv", _pairings_csv(pairings, args.delimiter), manifest
        ),
    )

    spec = _model_spec(args)
    required = list(_split(args.required) or spec.predictors)
    twin_data = stage(
        "listwise-exclusion", lambda: twins.listwise_exclude(pairings, table, required)
    )
    stage(
        "listwise-exclusion",
        lambda: ingest.write_table(
            twin_data, out / "twin_dataset.csv", args.delimiter, [manifest.comment_line()]
        ),
    )

    def fit_and_write(data: ingest.Dataset, suffix: str) -> ModelColumn:
        columns, excluded = _run_fits(data, spec, args.stepwise, "both")
        write_json_document(
            out / f"fit{suffix}.json",
            {
                "source_label": data.source_label,
                "rows_excluded_for_missing": excluded,
                "models": [fit_document(c) for c in columns],
            },
            manifest,
        )
        ext = "md" if args.format == "md" else "csv"
        write_text_document(
            out / f"fit_table{suffix}.{ext}",
            render_fit_table(columns, fmt=args.format, delimiter=args.delimiter),
            manifest,
        )
        return columns[-1]

    column = stage("fit", lambda: fit_and_write(twin_data, ""))

    if args.abuse_alt:

        def alt_fit() -> ModelColumn:
            alt_records = features.load_abuse(args.abuse_alt, args.delimiter)
            allocations = features.load_allocations(args.allocations, args.delimiter)
            counts = features.attribute_abuse(
                alt_records, features.AllocationIndex(allocations)
            ).counts
            alt_twin = ingest.Dataset(
                records=tuple(
                    replace(r, abuse_count=counts.get(r.provider_id, 0))
                    for r in twin_data
                ),
                source_label="alt-feed",
            )
            return fit_and_write(alt_twin, "_alt")

        stage("fit-alt", alt_fit)

    def write_scenarios():
        surviving = [p for p in spec.predictors if p in column.fit.coefficients]
        specs = scenarios.builtin_scenarios(twin_data, surviving)
        rows = scenarios.scenario_table(column.fit, specs)
        ext = "md" if args.format == "md" else "csv"
        write_text_document(
            out / f"scenarios.{ext}",
            render_scenarios(rows, fmt=args.format, delimiter=args.delimiter),
            manifest,
        )

    stage("scenarios", write_scenarios)

    stage(
        "rank",
        lambda: _write_manifested_csv(
            out / "rankings.csv",
            render_rankings(diagnostics.rank_providers(twin_data, column.fit), args.delimiter),
            manifest,
        ),
    )
    return 0


# ---------------------------------------------------------------- parser


def _add_table_args(p, with_out_dir=True):
    p.add_argument("--input", required=True, help="provider table (delimited text)")
    p.add_argument("--schema", help="canonical=column mappings, comma separated")
    p.add_argument("--delimiter", default=",", help="cell separator (default ,)")
    if with_out_dir:
        p.add_argument("--out-dir", required=True, help="directory for artifacts")


def _add_model_args(p):
    p.add_argument("--response", default="abuse_count", help="response column")
    p.add_argument("--predictors", help="comma-separated predictor columns")
    p.add_argument("--fixed-effects", help="comma-separated factor columns")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument(
        "--baseline",
        choices=["intercept", "fe", "both"],
        default="both",
        help="baseline(s) for pseudo-R2 (default: both where applicable)",
    )
    p.add_argument(
        "--format",
        choices=["md", "csv", "json"],
        default="md",
        help="table rendering; json emits structured documents only",
    )


def _add_matching_args(p):
    p.add_argument("--seeds", help="file with one seed provider_id per line")
    p.add_argument("--sample-seeds", type=int, help="sample N seeds uniformly instead")
    p.add_argument("--match-vars", help="matching variables (default: structural four)")
    p.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="z-score matching variables on the population (default on)",
    )
    p.add_argument("--no-reuse", action="store_true", help="forbid match reuse")
    p.add_argument("--seed", type=int, help="seed for --sample-seeds")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abusekit",
        description="Count-data modeling of abuse concentrations across hosting providers.",
    )
    parser.add_argument("--version", action="version", version=f"abusekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="descriptive statistics of a provider table")
    _add_table_args(p, with_out_dir=False)
    p.add_argument("--columns", help="columns to summarize (default: the model columns)")
    p.add_argument("--format", choices=["md", "csv", "json"], default="csv")
    p.add_argument("--out-dir", help="write describe.{csv,md,json} here instead of stdout")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("features", help="build the provider table from raw inputs")
    p.add_argument("--allocations", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--abuse", required=True)
    p.add_argument("--enrichment", help="optional per-provider enrichment table")
    p.add_argument("--source-label", default="abuse")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("twins", help="nearest-neighbor statistical twins")
    _add_table_args(p)
    _add_matching_args(p)
    p.set_defaults(func=cmd_twins)

    p = sub.add_parser("fit", help="fit Poisson GLM(s), render a regression table")
    _add_table_args(p)
    _add_model_args(p)
    p.add_argument("--stepwise", action="store_true", help="fit the nested sequence")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnostics", help="dispersion, deviance and pseudo-R2")
    _add_table_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_diagnostics)

    p = sub.add_parser("scenarios", help="baseline scenarios and partial effects")
    _add_table_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("rank", help="observed-vs-predicted provider ranking")
    _add_table_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("simulate", help="noisy size-proxy Monte Carlo study")
    p.add_argument("--config", help="INI config (population/link/noise/run sections)")
    p.add_argument("--preset", choices=["zero", "measured"], help="noise preset override")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="population size override")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="end-to-end run on raw inputs")
    p.add_argument("--allocations", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--abuse", required=True)
    p.add_argument("--abuse-alt", help="alternative abuse feed for cross-validation")
    p.add_argument("--enrichment", required=True)
    p.add_argument("--source-label", default="abuse")
    p.add_argument("--delimiter", default=",")
    _add_matching_args(p)
    p.add_argument("--required", help="columns forcing twin-level list-wise exclusion")
    p.add_argument("--response", default="abuse_count")
    p.add_argument("--predictors", required=True)
    p.add_argument("--fixed-effects", default="twin_id")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--stepwise", action="store_true")
    p.add_argument("--format", choices=["md", "csv"], default="md")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"abusekit: {exc}", file=sys.stderr)
        cause = exc.__cause__
        return 2 if isinstance(cause, USAGE_ERRORS) else 1
    except USAGE_ERRORS as exc:
        if isinstance(exc, configparser.Error):
            message = str(exc)  # keeps the offending line numbers
        else:
            message = exc.args[0] if exc.args else str(exc)
        print(f"abusekit: error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
