"""Explanatory-variable construction from offline allocation/DNS/abuse files.

All inputs arrive as delimited files: IP allocations (provider_id with an
inclusive address range), hosting observations (domain, ip) and abuse
records (domain, ip). IP addresses are accepted in dotted-quad or plain
integer form and normalized to integers internally.
"""
from __future__ import annotations

import bisect
import csv
import ipaddress
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .ingest import (
    OPTIONAL_COLUMNS,
    REQUIRED_COLUMNS,
    Dataset,
    ProviderRecord,
    _parse_cell,
    log10_transform,
)

#: An IP address is "shared" when it hosts more than this many domains.
SHARED_DOMAIN_THRESHOLD = 10


class AllocationError(ValueError):
    """Raised when IP allocations overlap or cannot be parsed."""


@dataclass(frozen=True)
class IpAllocation:
    """A contiguous IP range (inclusive) allocated to one provider."""

    provider_id: str
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise AllocationError(
                f"allocation for {self.provider_id!r}: start > end"
            )

    @property
    def size(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class HostingObservation:
    """One (second-level domain, hosting IP) observation."""

    domain: str
    ip: int


@dataclass(frozen=True)
class AbuseRecord:
    """One abused second-level domain seen on an IP, optionally timestamped."""

    domain: str
    ip: int
    timestamp: str | None = None


def parse_ip(text) -> int:
    """Normalize a dotted-quad or integer IP representation to an integer."""
    if isinstance(text, int):
        return text
    text = text.strip()
    if "." in text:
        try:
            return int(ipaddress.IPv4Address(text))
        except ipaddress.AddressValueError as exc:
            raise AllocationError(f"invalid IP address {text!r}: {exc}") from None
    try:
        return int(text)
    except ValueError:
        raise AllocationError(f"invalid IP address {text!r}") from None


class AllocationIndex:
    """Sorted disjoint-interval index mapping IPs to providers.

    Lookups are a binary search over range starts, logarithmic per IP, so
    population-scale observation files stay cheap to attribute.
    """

    def __init__(self, allocations: Iterable[IpAllocation]):
        ranges = sorted(allocations, key=lambda a: a.start)
        for prev, cur in zip(ranges, ranges[1:]):
            if cur.start <= prev.end:
                raise AllocationError(
                    f"overlapping allocations: {prev.provider_id!r} "
                    f"[{prev.start}, {prev.end}] and {cur.provider_id!r} "
                    f"[{cur.start}, {cur.end}]"
                )
        self._ranges = ranges
        self._starts = [a.start for a in ranges]
        self.provider_ids = sorted({a.provider_id for a in ranges})

    def lookup(self, ip: int) -> str | None:
        """Return the provider owning ``ip``, or ``None`` if unallocated."""
        pos = bisect.bisect_right(self._starts, ip) - 1
        if pos >= 0 and self._ranges[pos].start <= ip <= self._ranges[pos].end:
            return self._ranges[pos].provider_id
        return None

    def assigned_size(self, provider_id: str) -> int:
        return sum(a.size for a in self._ranges if a.provider_id == provider_id)


def classify_shared_ip(domain_count: int) -> bool:
    """True iff an IP hosting ``domain_count`` domains counts as shared (> 10)."""
    return domain_count > SHARED_DOMAIN_THRESHOLD


@dataclass
class SharedIpStats:
    """Per-provider percent-shared values plus attribution bookkeeping."""

    values: dict[str, float]
    zero_domain_providers: set[str] = field(default_factory=set)
    skipped: int = 0


def pct_shared(
    observations: Sequence[HostingObservation], index: AllocationIndex
) -> SharedIpStats:
    """Percentage of each provider's distinct domains seen on shared IPs.

    An IP is shared when it hosts more than 10 distinct domains (counted
    over the supplied observation file). For each provider the value is
    100 * |distinct domains on >=1 shared IP| / |distinct domains|; a
    provider with no attributable domains reports 0 and is flagged.
    Observations whose IP matches no allocation are skipped and tallied.
    """
    domains_per_ip: dict[int, set[str]] = defaultdict(set)
    provider_domains: dict[str, set[str]] = defaultdict(set)
    provider_of_ip: dict[int, str | None] = {}
    skipped = 0
    for obs in observations:
        owner = provider_of_ip.get(obs.ip)
        if obs.ip not in provider_of_ip:
            owner = index.lookup(obs.ip)
            provider_of_ip[obs.ip] = owner
        if owner is None:
            skipped += 1
            continue
        domains_per_ip[obs.ip].add(obs.domain)
        provider_domains[owner].add(obs.domain)

    shared_ips = {ip for ip, doms in domains_per_ip.items() if classify_shared_ip(len(doms))}
    shared_domains: dict[str, set[str]] = defaultdict(set)
    for ip in shared_ips:
        shared_domains[provider_of_ip[ip]].update(domains_per_ip[ip])

    values: dict[str, float] = {}
    zero_domain: set[str] = set()
    for provider in index.provider_ids:
        total = provider_domains.get(provider, set())
        if not total:
            values[provider] = 0.0
            zero_domain.add(provider)
        else:
            values[provider] = 100.0 * len(shared_domains.get(provider, set())) / len(total)
    return SharedIpStats(values=values, zero_domain_providers=zero_domain, skipped=skipped)


def popularity_index(ranks: Iterable[int], list_size: int = 1_000_000) -> float:
    """Popularity score: sum of base-10 logs of the reversed ranks.

    Rank 1 (most popular) reverses to ``list_size``, the last rank to 1,
    so a provider hosting only the least popular ranked domain scores 0.

    Raises
    ------
    ValueError
        If any rank falls outside [1, list_size].
    """
    total = 0.0
    for rank in ranks:
        if not 1 <= rank <= list_size:
            raise ValueError(f"rank {rank} outside [1, {list_size}]")
        total += log10_transform(list_size + 1 - rank)
    return total


@dataclass
class AttributionResult:
    """Distinct abused domains per provider plus the unattributable tally."""

    counts: dict[str, int]
    skipped: int = 0


def attribute_abuse(
    abuse: Sequence[AbuseRecord], index: AllocationIndex
) -> AttributionResult:
    """Count distinct abused second-level domains per provider.

    A domain observed on several IPs of the same provider counts once for
    that provider. Records whose IP matches no allocation are tallied
    separately; allocations are disjoint, so no record can be attributed
    to two providers.
    """
    per_provider: dict[str, set[str]] = defaultdict(set)
    skipped = 0
    for rec in abuse:
        owner = index.lookup(rec.ip)
        if owner is None:
            skipped += 1
        else:
            per_provider[owner].add(rec.domain)
    counts = {p: len(per_provider.get(p, set())) for p in index.provider_ids}
    return AttributionResult(counts=counts, skipped=skipped)


@dataclass
class FeatureReport:
    """Bookkeeping emitted alongside a constructed provider table."""

    n_providers: int
    skipped_observations: int
    skipped_abuse_records: int
    zero_domain_providers: int


def build_provider_table(
    allocations: Sequence[IpAllocation],
    observations: Sequence[HostingObservation],
    abuse: Sequence[AbuseRecord],
    source_label: str = "",
) -> tuple[Dataset, FeatureReport]:
    """Assemble the modeling dataset from raw offline inputs.

    Produces one record per allocated provider with the four structural
    variables (log10 assigned IPs, log10 hosting IPs, log10 hosted
    domains, percent shared) and the attributed abuse count.
    """
    index = AllocationIndex(allocations)
    shared = pct_shared(observations, index)
    attribution = attribute_abuse(abuse, index)

    hosting_ips: dict[str, set[int]] = defaultdict(set)
    hosted_domains: dict[str, set[str]] = defaultdict(set)
    for obs in observations:
        owner = index.lookup(obs.ip)
        if owner is not None:
            hosting_ips[owner].add(obs.ip)
            hosted_domains[owner].add(obs.domain)

    records = []
    for provider in index.provider_ids:
        records.append(
            ProviderRecord(
                provider_id=provider,
                assigned_ips_log10=log10_transform(index.assigned_size(provider)),
                hosting_ips_log10=log10_transform(len(hosting_ips.get(provider, ()))),
                hosted_domains_log10=log10_transform(len(hosted_domains.get(provider, ()))),
                pct_shared=shared.values[provider],
                abuse_count=attribution.counts[provider],
            )
        )
    report = FeatureReport(
        n_providers=len(records),
        skipped_observations=shared.skipped,
        skipped_abuse_records=attribution.skipped,
        zero_domain_providers=len(shared.zero_domain_providers),
    )
    return Dataset(records=tuple(records), source_label=source_label), report


def merge_enrichment(d: Dataset, rows: dict[str, dict], columns: Sequence[str]) -> Dataset:
    """Merge enrichment columns (price, country, ...) into a provider table.

    ``rows`` maps provider_id to a dict of enrichment values; providers
    absent from the mapping keep missing values.
    """
    merged = []
    for rec in d:
        extra = rows.get(rec.provider_id, {})
        updates = {c: extra.get(c) for c in columns if extra.get(c) is not None}
        merged.append(replace(rec, **updates) if updates else rec)
    return Dataset(records=tuple(merged), source_label=d.source_label)


def _read_rows(path, delimiter: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = (l for l in fh if not l.lstrip().startswith("#"))
        rows = list(csv.reader(lines, delimiter=delimiter))
    if not rows:
        raise AllocationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _column(header: list[str], name: str, path) -> int:
    if name not in header:
        raise AllocationError(f"{path}: missing required column {name!r}")
    return header.index(name)


def load_allocations(path, delimiter: str = ",") -> list[IpAllocation]:
    """Read allocations from columns provider_id, ip_start, ip_end."""
    header, rows = _read_rows(path, delimiter)
    pid = _column(header, "provider_id", path)
    lo = _column(header, "ip_start", path)
    hi = _column(header, "ip_end", path)
    return [
        IpAllocation(row[pid].strip(), parse_ip(row[lo]), parse_ip(row[hi]))
        for row in rows
        if row
    ]


def load_observations(path, delimiter: str = ",") -> list[HostingObservation]:
    """Read hosting observations from columns domain, ip."""
    header, rows = _read_rows(path, delimiter)
    dom = _column(header, "domain", path)
    ip = _column(header, "ip", path)
    return [HostingObservation(row[dom].strip(), parse_ip(row[ip])) for row in rows if row]


def load_abuse(path, delimiter: str = ",") -> list[AbuseRecord]:
    """Read abuse records from columns domain, ip and optional timestamp."""
    header, rows = _read_rows(path, delimiter)
    dom = _column(header, "domain", path)
    ip = _column(header, "ip", path)
    ts = header.index("timestamp") if "timestamp" in header else None
    out = []
    for row in rows:
        if not row:
            continue
        stamp = row[ts].strip() if ts is not None and ts < len(row) else None
        out.append(AbuseRecord(row[dom].strip(), parse_ip(row[ip]), stamp or None))
    return out


def load_enrichment(path, delimiter: str = ",") -> dict[str, dict]:
    """Read an enrichment table keyed by provider_id.

    Canonical columns go through the same cell validation as provider
    tables (ranges, numeric parsing); empty cells are missing; unknown
    columns are ignored.
    """
    known = set(REQUIRED_COLUMNS) | set(OPTIONAL_COLUMNS)
    header, rows = _read_rows(path, delimiter)
    pid = _column(header, "provider_id", path)
    out: dict[str, dict] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        values = {}
        for idx, name in enumerate(header):
            if idx == pid or idx >= len(row) or name not in known:
                continue
            parsed = _parse_cell(name, row[idx], lineno)
            if parsed is not None:
                values[name] = parsed
        out[row[pid].strip()] = values
    return out
