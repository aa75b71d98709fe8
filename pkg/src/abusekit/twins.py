"""Statistical-twin sampling: distances, nearest-neighbor matches, exclusion.

Costly-to-collect variables are gathered only for a small set of seed
providers and, for each seed, its closest structural look-alike in the
population. Modeling the resulting pairs with a per-twin fixed effect
controls for the selection and for between-pair level differences.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ingest import Dataset

#: Default matching space: the four structural variables.
DEFAULT_MATCH_VARIABLES = (
    "assigned_ips_log10",
    "hosting_ips_log10",
    "hosted_domains_log10",
    "pct_shared",
)


class MatchingError(ValueError):
    """Raised when matching preconditions fail (e.g. no eligible match)."""


@dataclass(frozen=True)
class MatchingConfig:
    """Controls for the twin search.

    With ``standardize`` the distance space is z-scored per variable using
    the population's mean and sample sd, so percent-scale variables do not
    drown the log-scale ones. ``allow_reuse`` lets one population provider
    become the match of several seeds.
    """

    variables: tuple[str, ...] = DEFAULT_MATCH_VARIABLES
    standardize: bool = True
    allow_reuse: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise ValueError("matching requires at least one variable")


@dataclass(frozen=True)
class TwinPairing:
    """A seed provider, its nearest population match and their distance."""

    twin_id: str
    seed_id: str
    match_id: str
    distance: float


@dataclass
class DistanceResult:
    """Distance matrix |S| x |T| plus the exclusions made to compute it."""

    matrix: np.ndarray
    seed_ids: list[str]
    population_ids: list[str]
    excluded_seed_ids: list[str]
    excluded_population_ids: list[str]
    excluded_variables: list[str]
    variables: list[str]


def _matching_rows(d: Dataset, variables) -> tuple[list[str], np.ndarray, list[str]]:
    ids, rows, excluded = [], [], []
    cols = {v: d.column(v) for v in variables}
    for i, rec in enumerate(d):
        values = [cols[v][i] for v in variables]
        if any(val is None for val in values):
            excluded.append(rec.provider_id)
        else:
            ids.append(rec.provider_id)
            rows.append([float(v) for v in values])
    return ids, np.array(rows, dtype=float).reshape(len(ids), len(variables)), excluded


def distance_matrix(S: Dataset, T: Dataset, cfg: MatchingConfig = MatchingConfig()) -> DistanceResult:
    """Euclidean distances between every seed and every population provider.

    Standardization parameters (mean, n-1 sd) are computed on the
    population T. A variable with zero variance in T cannot be z-scored;
    it is excluded from the distance and reported.
    """
    seed_ids, seed_x, seed_excluded = _matching_rows(S, cfg.variables)
    pop_ids, pop_x, pop_excluded = _matching_rows(T, cfg.variables)
    if not seed_ids or not pop_ids:
        raise MatchingError("no rows with complete matching variables")

    variables = list(cfg.variables)
    excluded_vars: list[str] = []
    if cfg.standardize:
        mean = pop_x.mean(axis=0)
        sd = pop_x.std(axis=0, ddof=1) if len(pop_ids) > 1 else np.zeros(len(variables))
        usable = sd > 0
        excluded_vars = [v for v, ok in zip(variables, usable) if not ok]
        if not np.any(usable):
            raise MatchingError("every matching variable has zero variance in T")
        variables = [v for v, ok in zip(variables, usable) if ok]
        seed_x = (seed_x[:, usable] - mean[usable]) / sd[usable]
        pop_x = (pop_x[:, usable] - mean[usable]) / sd[usable]

    diff = seed_x[:, None, :] - pop_x[None, :, :]
    matrix = np.sqrt(np.sum(diff * diff, axis=2))
    return DistanceResult(
        matrix=matrix,
        seed_ids=seed_ids,
        population_ids=pop_ids,
        excluded_seed_ids=seed_excluded,
        excluded_population_ids=pop_excluded,
        excluded_variables=excluded_vars,
        variables=variables,
    )


def twin_label(seed_id: str) -> str:
    return f"twin:{seed_id}"


def match_twins(
    S: Dataset, T: Dataset, cfg: MatchingConfig = MatchingConfig()
) -> list[TwinPairing]:
    """Pair each seed with its minimum-distance non-self population provider.

    Ties on the minimum distance break to the lexicographically smallest
    provider_id, making the result deterministic. Seeds may share a match
    unless ``allow_reuse`` is off, in which case matches are consumed in
    seed order.

    Raises
    ------
    MatchingError
        For a seed with no eligible match left.
    """
    dres = distance_matrix(S, T, cfg)
    pop_ids = np.array(dres.population_ids)
    used: set[str] = set()
    pairings = []
    for si, seed_id in enumerate(dres.seed_ids):
        dist = dres.matrix[si]
        eligible = pop_ids != seed_id
        if not cfg.allow_reuse and used:
            eligible &= ~np.isin(pop_ids, sorted(used))
        if not np.any(eligible):
            raise MatchingError(f"seed {seed_id!r} has no eligible match")
        best = np.min(dist[eligible])
        tied = (dist == best) & eligible
        match_id = min(pop_ids[tied])
        used.add(match_id)
        pairings.append(
            TwinPairing(
                twin_id=twin_label(seed_id),
                seed_id=seed_id,
                match_id=str(match_id),
                distance=float(best),
            )
        )
    return pairings


def listwise_exclude(
    pairings: list[TwinPairing], d: Dataset, required: list[str]
) -> Dataset:
    """Twin-level list-wise exclusion, emitting twin fixed-effect labels.

    A twin survives only if both members have every ``required`` column
    non-missing; surviving members are emitted in pairing order (seed then
    match), each carrying the pair's twin_id. A provider matched into two
    twins appears once per twin.
    """
    by_id = {}
    for rec in d:
        by_id.setdefault(rec.provider_id, rec)
    records = []
    for pairing in pairings:
        members = []
        for pid in (pairing.seed_id, pairing.match_id):
            if pid not in by_id:
                raise MatchingError(f"pairing references unknown provider {pid!r}")
            members.append(by_id[pid])
        if all(getattr(m, col) is not None for m in members for col in required):
            records.extend(replace(m, twin_id=pairing.twin_id) for m in members)
    return Dataset(records=tuple(records), source_label=d.source_label)


def sample_seed_ids(d: Dataset, n_seeds: int, rng_seed: int) -> list[str]:
    """Uniform random seed selection without replacement (helper for experiments)."""
    ids = d.provider_ids()
    if not 1 <= n_seeds <= len(ids):
        raise ValueError(f"cannot sample {n_seeds} seeds from {len(ids)} providers")
    rng = np.random.default_rng([rng_seed])
    return [str(s) for s in rng.choice(ids, size=n_seeds, replace=False)]
