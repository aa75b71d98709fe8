"""Loading, validating and summarizing provider/abuse datasets.

Datasets are delimiter-separated text files with a header row, UTF-8
encoded, "." as decimal separator and empty cells for missing values.
Lines starting with "#" are treated as comments (run manifests are
embedded that way) and skipped.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

#: Columns that must be present (directly or through the schema mapping)
#: in every provider table.
REQUIRED_COLUMNS = (
    "provider_id",
    "assigned_ips_log10",
    "hosting_ips_log10",
    "hosted_domains_log10",
    "pct_shared",
    "abuse_count",
)

#: Enrichment columns; picked up when present, missing otherwise.
OPTIONAL_COLUMNS = (
    "country",
    "price_per_year",
    "popularity_index",
    "time_in_business",
    "ict_dev_index",
    "wordpress_use",
    "twin_id",
)

#: Columns holding strings rather than numbers.
STRING_COLUMNS = ("provider_id", "country", "twin_id")

#: Numeric columns that must be non-negative when present.
NONNEGATIVE_COLUMNS = (
    "assigned_ips_log10",
    "hosting_ips_log10",
    "hosted_domains_log10",
    "price_per_year",
    "popularity_index",
    "time_in_business",
    "ict_dev_index",
)


class LoadError(ValueError):
    """Raised when an input file violates the table contract."""


@dataclass(frozen=True)
class ProviderRecord:
    """One hosting provider: structural variables, enrichment and abuse count."""

    provider_id: str
    assigned_ips_log10: float
    hosting_ips_log10: float
    hosted_domains_log10: float
    pct_shared: float
    abuse_count: int
    country: str | None = None
    price_per_year: float | None = None
    popularity_index: float | None = None
    time_in_business: float | None = None
    ict_dev_index: float | None = None
    wordpress_use: float | None = None
    twin_id: str | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable, ordered collection of provider records.

    ``source_label`` names the origin of ``abuse_count`` (e.g. which abuse
    feed produced it) so fits on alternative feeds stay distinguishable.
    """

    records: tuple[ProviderRecord, ...]
    source_label: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ProviderRecord]:
        return iter(self.records)

    def column(self, name: str) -> list:
        """Return the named column as a list, ``None`` marking missing values."""
        if name not in _FIELD_NAMES:
            raise KeyError(f"unknown column {name!r}")
        return [getattr(r, name) for r in self.records]

    def numeric(self, name: str) -> np.ndarray:
        """Return a numeric column as float array with NaN for missing values."""
        if name in STRING_COLUMNS:
            raise TypeError(f"column {name!r} is not numeric")
        vals = self.column(name)
        return np.array([math.nan if v is None else float(v) for v in vals])

    def provider_ids(self) -> list[str]:
        return [r.provider_id for r in self.records]


_FIELD_NAMES = tuple(f.name for f in fields(ProviderRecord))


@dataclass(frozen=True)
class ColumnSummary:
    """Five-number descriptive summary of one numeric column."""

    name: str
    n: int
    n_missing: int
    min: float
    mean: float
    median: float
    max: float
    sd: float
    single_value: bool = False


def log10_transform(x):
    """Base-10 log transform for skewed counts, with a zero floor.

    Computes ``log10(max(x, 1))`` so that raw counts of 0 and 1 both map
    to 0.0; this reproduces the observed 0 minima of the log-scale size
    variables without producing -inf.

    Parameters
    ----------
    x : float or array-like, >= 0

    Raises
    ------
    ValueError
        If any input is negative.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("log10_transform requires non-negative input")
    out = np.log10(np.maximum(arr, 1.0))
    return float(out) if np.ndim(x) == 0 else out


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise LoadError(
            f"row {row}: non-numeric value {text!r} in column {column!r}"
        ) from None


def _parse_cell(column: str, text: str, row: int):
    text = text.strip()
    if text == "":
        return None
    if column in STRING_COLUMNS:
        return text
    value = _parse_float(text, column, row)
    if column == "abuse_count":
        if value < 0 or value != int(value):
            raise LoadError(
                f"row {row}: column 'abuse_count' must be a non-negative "
                f"integer, got {text!r}"
            )
        return int(value)
    if column == "pct_shared" and not 0.0 <= value <= 100.0:
        raise LoadError(f"row {row}: 'pct_shared' must lie in [0, 100], got {text!r}")
    if column == "wordpress_use" and not 0.0 <= value <= 1.0:
        raise LoadError(f"row {row}: 'wordpress_use' must lie in [0, 1], got {text!r}")
    if column in NONNEGATIVE_COLUMNS and value < 0:
        raise LoadError(f"row {row}: column {column!r} must be >= 0, got {text!r}")
    return value


def load_table(
    path,
    schema: Mapping[str, str] | None = None,
    delimiter: str = ",",
    source_label: str = "",
) -> Dataset:
    """Load a provider table from a delimited file.

    Parameters
    ----------
    path : str or Path
        File to read.
    schema : mapping, optional
        Maps canonical column names (``provider_id``, ``abuse_count``, ...)
        to the column names used in the file. Unmapped canonical names
        default to themselves; optional columns absent from both schema and
        header load as missing.
    delimiter : str
        Cell separator, comma by default.

    Raises
    ------
    LoadError
        On a missing required column, a non-numeric cell in a numeric
        column or a duplicate provider key, each reported with its row
        number (physical line, header = row 1).
    """
    schema = dict(schema or {})
    unknown = set(schema) - set(REQUIRED_COLUMNS) - set(OPTIONAL_COLUMNS)
    if unknown:
        raise LoadError(f"schema maps unknown canonical columns: {sorted(unknown)}")

    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(_skip_comments(fh), delimiter=delimiter)
        try:
            header = next(rows)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        positions: dict[str, int] = {}
        for canonical in REQUIRED_COLUMNS + OPTIONAL_COLUMNS:
            file_col = schema.get(canonical, canonical)
            if file_col in header:
                positions[canonical] = header.index(file_col)
            elif canonical in REQUIRED_COLUMNS or canonical in schema:
                raise LoadError(f"{path}: missing required column {file_col!r}")

        records: list[ProviderRecord] = []
        seen: set[tuple] = set()
        for lineno, raw in enumerate(rows, start=2):
            if not raw:
                continue
            values = {}
            for canonical, idx in positions.items():
                cell = raw[idx] if idx < len(raw) else ""
                values[canonical] = _parse_cell(canonical, cell, lineno)
            for required in ("provider_id", "abuse_count"):
                if values.get(required) is None:
                    raise LoadError(
                        f"row {lineno}: missing value in required column {required!r}"
                    )
            # Twin datasets repeat providers (one row per twin slot), so the
            # uniqueness key includes twin_id when that column is present.
            key = (values["provider_id"], values.get("twin_id"))
            if key in seen:
                raise LoadError(
                    f"row {lineno}: duplicate provider_id {values['provider_id']!r}"
                )
            seen.add(key)
            records.append(ProviderRecord(**values))

    return Dataset(records=tuple(records), source_label=source_label)


def _skip_comments(lines: Iterable[str]) -> Iterator[str]:
    for line in lines:
        if not line.lstrip().startswith("#"):
            yield line


def write_table(
    d: Dataset,
    path,
    delimiter: str = ",",
    comment_lines: Sequence[str] = (),
) -> None:
    """Serialize a dataset back to delimited text (round-trip exact).

    Floats are written with ``repr`` so ``load_table(write_table(d))``
    reproduces every field bit-for-bit. ``comment_lines`` are emitted as
    ``#``-prefixed lines before the header.
    """
    present = [
        c
        for c in REQUIRED_COLUMNS + OPTIONAL_COLUMNS
        if c in REQUIRED_COLUMNS or any(getattr(r, c) is not None for r in d)
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(present)
        for rec in d:
            writer.writerow([_format_cell(getattr(rec, c)) for c in present])


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def describe(d: Dataset, columns: Sequence[str]) -> list[ColumnSummary]:
    """Per-column descriptive statistics (min, mean, median, max, sd).

    Missing values are excluded per column; ``sd`` is the sample standard
    deviation (n-1 denominator). A column with a single non-missing value
    reports sd 0 with ``single_value`` set.
    """
    out = []
    for name in columns:
        if name in STRING_COLUMNS:
            raise ValueError(f"column {name!r} is not numeric")
        vals = d.numeric(name)
        # sort so the summary is exactly permutation-invariant over rows
        present = np.sort(vals[~np.isnan(vals)])
        if present.size == 0:
            raise ValueError(f"column {name!r} has no non-missing values")
        single = present.size == 1
        out.append(
            ColumnSummary(
                name=name,
                n=int(present.size),
                n_missing=int(vals.size - present.size),
                min=float(present.min()),
                mean=float(present.mean()),
                median=float(np.median(present)),
                max=float(present.max()),
                sd=0.0 if single else float(present.std(ddof=1)),
                single_value=single,
            )
        )
    return out
