"""Promote flagged clusters to confirmed malicious campaigns.

Verdicts come from a pluggable provider: a file-based blocklist (exact
normalised-URL match), a scripted mock for tests, or an HTTP-style
adapter shell with a request-rate budget. Lookups are cached per run
(optionally journaled to disk so interrupted runs resume) and retried
with exponential backoff; a provider that stays down yields "unknown"
verdicts, which count as not-detected but are reported separately —
detections are never fabricated.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .clusterer import FLAGGED, Cluster, classify_cluster
from .jsonlio import iter_jsonl, dump_line, provenance_header
from .urlkit import normalize_url

if TYPE_CHECKING:  # pragma: no cover
    from .metrics import CampaignMetrics

THREAT_MALWARE = "MALWARE"
THREAT_SOCIAL_ENGINEERING = "SOCIAL_ENGINEERING"
THREAT_TYPES = frozenset({THREAT_MALWARE, THREAT_SOCIAL_ENGINEERING})

KIND_SINGLE_URL = "single-url"
KIND_MULTI_URL = "multi-url"

STATUS_CONFIRMED = "confirmed"
STATUS_NOT_CONFIRMED = "not-confirmed"
STATUS_INDETERMINATE = "indeterminate"


class ProviderUnavailable(RuntimeError):
    """The verdict provider could not answer a batch."""


class BlocklistFormatError(ValueError):
    """A blocklist line does not match the expected format."""


@dataclass(frozen=True, slots=True)
class Verdict:
    """Provider answer for one normalised URL.

    Empty ``threat_types`` means the provider did not confirm the URL;
    ``unknown`` marks answers synthesised after provider failure, which
    are reported separately from clean empties.
    """

    url: str
    threat_types: frozenset[str]
    checked_at: int
    unknown: bool = False

    @property
    def confirmed(self) -> bool:
        return bool(self.threat_types)


def campaign_id_for(content_hash: str) -> str:
    """Short display identifier: first four hash bytes as two hex pairs."""
    return f"{content_hash[:4]}-{content_hash[4:8]}"


@dataclass(slots=True)
class Campaign:
    """A flagged cluster confirmed to contain at least one bad URL."""

    cluster: Cluster
    verdicts: dict[str, Verdict]
    kind: str
    campaign_id: str
    metrics: "CampaignMetrics | None" = None

    @property
    def content_hash(self) -> str:
        return self.cluster.content_hash


@dataclass(slots=True)
class ClusterVerification:
    status: str
    campaign: Campaign | None
    unknown_count: int = 0


def parse_blocklist_lines(lines: Iterable[str]) -> tuple[dict[str, frozenset[str]], int]:
    """Parse blocklist text: ``<url>TAB<threat[,threat]>`` per line.

    ``#`` comments and blank lines are skipped; a ``# snapshot: <epoch>``
    comment pins the verdict timestamp so downstream outputs stay
    reproducible. URLs are normalised on load.
    """
    entries: dict[str, frozenset[str]] = {}
    snapshot_time = 0
    for line_no, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            comment = line.lstrip()[1:].strip()
            if comment.startswith("snapshot:"):
                value = comment[len("snapshot:"):].strip()
                if value.lstrip("-").isdigit():
                    snapshot_time = int(value)
            continue
        if "\t" not in line:
            raise BlocklistFormatError(f"line {line_no}: expected <url>TAB<threat-types>")
        url, _, types_text = line.partition("\t")
        types = frozenset(t.strip().upper() for t in types_text.split(",") if t.strip())
        bad = types - THREAT_TYPES
        if bad or not types:
            raise BlocklistFormatError(f"line {line_no}: unknown threat types {sorted(bad) or '(none)'}")
        entries[normalize_url(url)] = types
    return entries, snapshot_time


class FileBlocklistProvider:
    """Verdicts by exact normalised-URL match against a blocklist file."""

    def __init__(self, entries: dict[str, frozenset[str]], verdict_time: int = 0,
                 source: str = "inline"):
        self._entries = entries
        self.verdict_time = verdict_time
        self.source = source

    @classmethod
    def from_file(cls, path) -> "FileBlocklistProvider":
        with open(path, "r", encoding="utf-8") as f:
            entries, snapshot_time = parse_blocklist_lines(f)
        return cls(entries, snapshot_time, source=str(path))

    def __len__(self) -> int:
        return len(self._entries)

    def query(self, urls: list[str]) -> list[frozenset[str]]:
        get = self._entries.get
        empty: frozenset[str] = frozenset()
        return [get(u, empty) for u in urls]


class ScriptedMockProvider:
    """Test double: fixed verdicts, with optional scripted failures."""

    def __init__(self, verdicts: dict[str, Iterable[str]] | None = None,
                 fail_times: int = 0, verdict_time: int = 0):
        self._verdicts = {u: frozenset(t) for u, t in (verdicts or {}).items()}
        self.fail_times = fail_times
        self.verdict_time = verdict_time
        self.calls = 0

    def query(self, urls: list[str]) -> list[frozenset[str]]:
        self.calls += 1
        if self.calls <= self.fail_times:
            raise ProviderUnavailable(f"scripted failure {self.calls}/{self.fail_times}")
        empty: frozenset[str] = frozenset()
        return [self._verdicts.get(u, empty) for u in urls]


class RateLimiter:
    """Sliding-window budget of ``budget`` acquisitions per ``interval``
    seconds. Thread-safe; clock and sleep are injectable for tests."""

    def __init__(self, budget: int, interval: float,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if budget < 1 or interval <= 0:
            raise ValueError("rate budget must be >= 1 per positive interval")
        self.budget = budget
        self.interval = interval
        self._clock = clock
        self._sleep = sleep
        self._window: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._window and now - self._window[0] >= self.interval:
                    self._window.popleft()
                if len(self._window) < self.budget:
                    self._window.append(now)
                    return
                wait = self.interval - (now - self._window[0])
            self._sleep(max(wait, 0.0))


class HttpVerdictProvider:
    """Adapter shell for a network blocklist service.

    A real client plugs in as ``transport`` (a callable taking the URL
    batch and returning a mapping url -> threat-type list); without one,
    every query raises ProviderUnavailable. Requests pass through a
    rate-limit budget given as (requests, interval_seconds).
    """

    def __init__(self, transport: Callable[[list[str]], dict] | None = None,
                 rate: tuple[int, float] = (10, 1.0), verdict_time: int = 0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self._transport = transport
        self._limiter = RateLimiter(rate[0], rate[1], clock, sleep)
        self.verdict_time = verdict_time

    def query(self, urls: list[str]) -> list[frozenset[str]]:
        self._limiter.acquire()
        if self._transport is None:
            raise ProviderUnavailable("no transport configured")
        try:
            answer = self._transport(list(urls))
        except ProviderUnavailable:
            raise
        except Exception as exc:
            raise ProviderUnavailable(str(exc)) from exc
        empty: frozenset[str] = frozenset()
        return [frozenset(answer.get(u, empty)) for u in urls]


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.1
    factor: float = 2.0
    sleep: Callable[[float], None] = time.sleep

    def delay_for(self, attempt: int) -> float:
        return self.base_delay * self.factor**attempt


class VerdictCache:
    """Per-run verdict cache keyed by normalised URL.

    Thread-safe. With a journal path, resolved verdicts append to a
    JSONL journal and are reloaded on construction, so an interrupted
    run resumes without re-querying. Unknown verdicts are neither cached
    nor journaled — a later batch may still succeed.
    """

    def __init__(self, journal_path=None):
        self._map: dict[str, Verdict] = {}
        self._lock = threading.Lock()
        self._journal = None
        if journal_path is not None:
            try:
                for row in iter_jsonl(journal_path):
                    v = Verdict(row["url"], frozenset(row["threat_types"]), row["checked_at"])
                    self._map[v.url] = v
            except FileNotFoundError:
                pass
            new_file = not self._map
            self._journal = open(journal_path, "a", encoding="utf-8")
            if new_file and self._journal.tell() == 0:
                self._journal.write(dump_line(provenance_header()) + "\n")

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    def __len__(self) -> int:
        return len(self._map)

    def get_many(self, urls: Iterable[str]) -> dict[str, Verdict]:
        with self._lock:
            return {u: self._map[u] for u in urls if u in self._map}

    def put_many(self, verdicts: Iterable[Verdict]) -> None:
        with self._lock:
            lines = []
            for v in verdicts:
                if v.unknown:
                    continue
                self._map[v.url] = v
                lines.append(dump_line({
                    "url": v.url,
                    "threat_types": sorted(v.threat_types),
                    "checked_at": v.checked_at,
                }))
            if self._journal is not None and lines:
                self._journal.write("\n".join(lines) + "\n")
                self._journal.flush()


def lookup(provider, urls: Iterable[str], cache: VerdictCache | None = None,
           retry: RetryPolicy | None = None) -> list[Verdict]:
    """Resolve a verdict per URL, order-preserving.

    Cache hits skip the provider; a failing provider is retried with
    exponential backoff and, if still down, the batch comes back as
    unknown verdicts rather than aborting the pipeline.
    """
    url_list = list(urls)
    if not url_list:
        raise ValueError("lookup of an empty URL batch")
    if cache is None:
        cache = VerdictCache()
    if retry is None:
        retry = RetryPolicy()
    found = cache.get_many(url_list)
    missing = list(dict.fromkeys(u for u in url_list if u not in found))
    if missing:
        try:
            types = _query_with_retry(provider, missing, retry)
        except ProviderUnavailable:
            now = provider.verdict_time
            for u in missing:
                found[u] = Verdict(u, frozenset(), now, unknown=True)
        else:
            fresh = [Verdict(u, t, provider.verdict_time) for u, t in zip(missing, types)]
            cache.put_many(fresh)
            found.update((v.url, v) for v in fresh)
    return [found[u] for u in url_list]


def _query_with_retry(provider, urls: list[str], retry: RetryPolicy) -> list[frozenset[str]]:
    last_error: ProviderUnavailable | None = None
    for attempt in range(max(retry.attempts, 1)):
        if attempt:
            retry.sleep(retry.delay_for(attempt - 1))
        try:
            return provider.query(urls)
        except ProviderUnavailable as exc:
            last_error = exc
    raise last_error if last_error else ProviderUnavailable("no attempts made")


def verify_cluster(cluster: Cluster, provider, cache: VerdictCache | None = None,
                   retry: RetryPolicy | None = None) -> ClusterVerification:
    """Check every unique URL of a flagged cluster against the provider.

    Confirmed means at least one URL carries a non-empty threat set; a
    cluster whose URLs all came back unknown is not-confirmed but marked
    indeterminate so it is never silently dropped.
    """
    if classify_cluster(cluster) != FLAGGED:
        raise ValueError("only flagged clusters are verified")
    urls = sorted(cluster.unique_urls)
    verdicts = lookup(provider, urls, cache, retry)
    unknown_count = sum(1 for v in verdicts if v.unknown)
    if any(v.confirmed for v in verdicts):
        kind = KIND_SINGLE_URL if len(urls) == 1 else KIND_MULTI_URL
        campaign = Campaign(
            cluster=cluster,
            verdicts={v.url: v for v in verdicts},
            kind=kind,
            campaign_id=campaign_id_for(cluster.content_hash),
        )
        return ClusterVerification(STATUS_CONFIRMED, campaign, unknown_count)
    status = STATUS_INDETERMINATE if unknown_count == len(urls) else STATUS_NOT_CONFIRMED
    return ClusterVerification(status, None, unknown_count)


@dataclass(slots=True)
class VerificationReport:
    campaigns: list[Campaign] = field(default_factory=list)
    flagged_seen: int = 0
    confirmed: int = 0
    not_confirmed: int = 0
    indeterminate: int = 0
    unknown_urls: int = 0

    def counters(self) -> dict[str, int]:
        return {
            "flagged_seen": self.flagged_seen,
            "confirmed": self.confirmed,
            "not_confirmed": self.not_confirmed,
            "indeterminate": self.indeterminate,
            "unknown_urls": self.unknown_urls,
        }


def verify_clusters(clusters: Iterable[Cluster], provider,
                    cache: VerdictCache | None = None,
                    retry: RetryPolicy | None = None,
                    max_inflight: int = 1) -> VerificationReport:
    """Verify many flagged clusters; input order is preserved.

    ``max_inflight`` > 1 issues lookups from a bounded thread pool;
    results are identical to the sequential path.
    """
    if cache is None:
        cache = VerdictCache()
    report = VerificationReport()

    def check(cluster: Cluster) -> ClusterVerification:
        return verify_cluster(cluster, provider, cache, retry)

    if max_inflight > 1:
        with ThreadPoolExecutor(max_workers=max_inflight) as pool:
            outcomes = list(pool.map(check, clusters))
    else:
        outcomes = [check(c) for c in clusters]

    for outcome in outcomes:
        report.flagged_seen += 1
        report.unknown_urls += outcome.unknown_count
        if outcome.status == STATUS_CONFIRMED:
            report.confirmed += 1
            report.campaigns.append(outcome.campaign)
        elif outcome.status == STATUS_INDETERMINATE:
            report.indeterminate += 1
        else:
            report.not_confirmed += 1
    return report


def campaign_export_row(campaign: Campaign) -> dict:
    cluster = campaign.cluster
    return {
        "campaign_id": campaign.campaign_id,
        "content_hash": cluster.content_hash,
        "kind": campaign.kind,
        "submission_count": cluster.submission_count,
        "positives_sum": cluster.positives_sum,
        "url_stats": {u: list(v) for u, v in sorted(cluster.per_url_flag_counts.items())},
        "verdicts": {
            u: {
                "threat_types": sorted(v.threat_types),
                "checked_at": v.checked_at,
                "unknown": v.unknown,
            }
            for u, v in sorted(campaign.verdicts.items())
        },
    }


def campaign_from_row(row: dict) -> Campaign:
    """Rebuild a Campaign from its export row (inverse of the export)."""
    cluster = Cluster(
        content_hash=row["content_hash"],
        submission_count=row["submission_count"],
        positives_sum=row["positives_sum"],
        per_url_flag_counts={u: list(v) for u, v in row["url_stats"].items()},
    )
    verdicts = {
        u: Verdict(u, frozenset(v["threat_types"]), v["checked_at"], v.get("unknown", False))
        for u, v in row["verdicts"].items()
    }
    return Campaign(
        cluster=cluster,
        verdicts=verdicts,
        kind=row["kind"],
        campaign_id=row["campaign_id"],
    )
