"""Higher-level campaign analyses.

Brand impersonation (token hits in sub-domain or domain, whitelisting
the brand's real registrable domains), TLS usage, payload-extension
census, torrent-pointer detection, embedded system-tool scanning for
fileless delivery chains, and temporal submission profiles with a
weekly-trend slope.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from urllib.parse import unquote

from .fmt import render_pct
from .ingest import SubmissionRecord
from .urlkit import ParsedUrl, SuffixTable, extract_extension
from .verifier import Campaign
from .metrics import parse_or_opaque

CHUNK_LABELS = ("00-08", "08-16", "16-24")


@dataclass(frozen=True, slots=True)
class BrandRule:
    """Tokens that mark a brand lure, plus its real registrable domains."""

    brand: str
    tokens: tuple[str, ...]
    legitimate_domains: frozenset[str]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"brand rule {self.brand!r} has no tokens")


@dataclass(frozen=True, slots=True)
class ImpersonationHit:
    url: str
    brand: str
    matched_tokens: tuple[str, ...]
    location: tuple[str, ...]  # subset of ("subdomain", "domain")


@dataclass(frozen=True, slots=True)
class ToolNameTable:
    """Lowercase system-tool and action tokens to scan URLs for."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("tool table is empty")


def load_brand_rules(source) -> list[BrandRule]:
    """Brand rules from a JSON array of {brand, tokens, legitimate_domains}."""
    if isinstance(source, (str, bytes)):
        data = json.loads(source)
    else:
        data = json.load(source)
    rules = []
    for item in data:
        rules.append(BrandRule(
            brand=item["brand"],
            tokens=tuple(t.lower() for t in item["tokens"]),
            legitimate_domains=frozenset(d.lower() for d in item.get("legitimate_domains", [])),
        ))
    return rules


def load_brand_rules_file(path) -> list[BrandRule]:
    with open(path, "r", encoding="utf-8") as f:
        return load_brand_rules(f)


def bundled_brand_rules() -> list[BrandRule]:
    text = resources.files("urlcampaigns.data").joinpath("brand_rules.json").read_text("utf-8")
    return load_brand_rules(text)


def load_tool_table(lines: Iterable[str]) -> ToolNameTable:
    """Tool tokens from plain text, one per line; '#' comments ignored.
    Duplicates collapse; first-seen order is kept."""
    tokens: dict[str, None] = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens[line.lower()] = None
    return ToolNameTable(tuple(tokens))


def load_tool_table_file(path) -> ToolNameTable:
    with open(path, "r", encoding="utf-8") as f:
        return load_tool_table(f)


def bundled_tool_table() -> ToolNameTable:
    text = resources.files("urlcampaigns.data").joinpath("tool_tokens.txt").read_text("utf-8")
    return load_tool_table(text.splitlines())


def brand_impersonation(parsed_by_url: Mapping[str, ParsedUrl],
                        rules: Iterable[BrandRule]) -> list[ImpersonationHit]:
    """Token hits against sub-domain/domain of each URL.

    A URL whose registrable domain belongs to the rule's legitimate set
    never produces a hit for that brand.
    """
    hits = []
    for url in sorted(parsed_by_url):
        parsed = parsed_by_url[url]
        sub = parsed.subdomain.lower()
        dom = parsed.domain.lower()
        registrable = parsed.registrable_domain.lower()
        for rule in rules:
            if registrable in rule.legitimate_domains:
                continue
            matched = []
            in_sub = in_dom = False
            for token in rule.tokens:
                hit_sub = token in sub
                hit_dom = token in dom
                if hit_sub or hit_dom:
                    matched.append(token)
                    in_sub = in_sub or hit_sub
                    in_dom = in_dom or hit_dom
            if matched:
                location = tuple(name for name, present in
                                 (("subdomain", in_sub), ("domain", in_dom)) if present)
                hits.append(ImpersonationHit(url, rule.brand, tuple(matched), location))
    return hits


@dataclass(frozen=True, slots=True)
class TlsBreakdown:
    https_count: int
    http_count: int
    other_count: int

    @property
    def ratio(self) -> Fraction | None:
        """https share over http+https only; other schemes sit outside."""
        web = self.https_count + self.http_count
        if web == 0:
            return None
        return Fraction(self.https_count, web)

    @property
    def ratio_pct(self) -> str | None:
        r = self.ratio
        return None if r is None else render_pct(r.numerator, r.denominator)


def tls_ratio(parsed_urls: Iterable[ParsedUrl]) -> TlsBreakdown:
    https = http = other = 0
    for p in parsed_urls:
        if p.scheme == "https":
            https += 1
        elif p.scheme == "http":
            http += 1
        else:
            other += 1
    return TlsBreakdown(https, http, other)


def extension_census(parsed_urls: Iterable[ParsedUrl]) -> dict[str, int]:
    """Counts of path file extensions over unique URLs; no-extension
    URLs are simply absent."""
    census: Counter[str] = Counter()
    for p in parsed_urls:
        ext = extract_extension(p)
        if ext is not None:
            census[ext] += 1
    return dict(census)


def torrent_pointer_scan(url: str) -> bool:
    """True when the URL points into torrent distribution: a .torrent
    path, a magnet-link marker, or a tracker announce segment."""
    s = url.split("#", 1)[0]
    i = s.find("://")
    rest = s[i + 3:] if i > 0 else s
    slash = rest.find("/")
    pathquery = rest[slash:].lower() if slash != -1 else ""
    path = pathquery.split("?", 1)[0]
    return (path.endswith(".torrent")
            or "magnet:?xt=" in pathquery
            or "/announce" in pathquery)


def embedded_command_scan(url: str, table: ToolNameTable) -> list[str]:
    """Tool/action tokens embedded in the raw URL, ordered by first
    occurrence. The URL is percent-decoded exactly once before the
    case-insensitive substring match."""
    decoded = unquote(url).lower()
    found = []
    for token in table.tokens:
        pos = decoded.find(token)
        if pos != -1:
            found.append((pos, token))
    found.sort()
    return [token for _, token in found]


@dataclass(slots=True)
class TemporalProfile:
    """Submission volumes in three 8-hour UTC chunks per day, plus an
    ordinary-least-squares slope over weekly mean daily volumes."""

    buckets: dict[tuple[str, str], int]
    daily_totals: dict[str, int]
    weekly_means: list[float]
    slope: float | None

    def bucket_rows(self) -> list[dict]:
        return [
            {"date": date, "chunk": chunk, "count": self.buckets[(date, chunk)]}
            for date, chunk in sorted(self.buckets)
        ]


def chunk_of_hour(hour: int) -> str:
    return CHUNK_LABELS[hour // 8]


def temporal_profile(records: Iterable[SubmissionRecord]) -> TemporalProfile:
    """Bucket scan times by (UTC date, 8-hour chunk) and fit the weekly
    trend. Weeks are consecutive 7-day windows from the first scan date;
    in-range days without records count as zero volume. Fewer than two
    weeks leaves the slope undefined."""
    buckets: Counter[tuple[str, str]] = Counter()
    day_ordinals: Counter[int] = Counter()
    for rec in records:
        dt = datetime.fromtimestamp(rec.scan_time, tz=timezone.utc)
        buckets[(dt.date().isoformat(), chunk_of_hour(dt.hour))] += 1
        day_ordinals[dt.date().toordinal()] += 1
    if not day_ordinals:
        return TemporalProfile({}, {}, [], None)
    first = min(day_ordinals)
    last = max(day_ordinals)
    weeks: dict[int, list[int]] = {}
    for ordinal in range(first, last + 1):
        weeks.setdefault((ordinal - first) // 7, []).append(day_ordinals.get(ordinal, 0))
    weekly_means = [sum(days) / len(days) for _, days in sorted(weeks.items())]
    slope = _ols_slope(weekly_means) if len(weekly_means) >= 2 else None
    daily_totals = {
        datetime.fromordinal(o).date().isoformat(): n for o, n in sorted(day_ordinals.items())
    }
    return TemporalProfile(dict(buckets), daily_totals, weekly_means, slope)


def _ols_slope(values: Sequence[float]) -> float:
    n = len(values)
    x_mean = (n - 1) / 2
    y_mean = sum(values) / n
    sxy = sum((i - x_mean) * (v - y_mean) for i, v in enumerate(values))
    sxx = sum((i - x_mean) ** 2 for i in range(n))
    return sxy / sxx


def campaign_insight_row(campaign: Campaign, table: SuffixTable,
                         rules: Iterable[BrandRule],
                         tools: ToolNameTable) -> dict:
    """One export row of all per-campaign insight scans."""
    urls = sorted(campaign.cluster.unique_urls)
    parsed_by_url = {u: parse_or_opaque(u, table) for u in urls}
    parsed = list(parsed_by_url.values())
    tls = tls_ratio(parsed)
    torrent_count = sum(1 for u in urls if torrent_pointer_scan(u))
    commands = []
    for u in urls:
        tokens = embedded_command_scan(u, tools)
        if tokens:
            commands.append({"url": u, "tokens": tokens})
    return {
        "campaign_id": campaign.campaign_id,
        "size": len(urls),
        "tls": {
            "https": tls.https_count,
            "http": tls.http_count,
            "other": tls.other_count,
            "ratio_pct": tls.ratio_pct,
        },
        "extensions": dict(sorted(extension_census(parsed).items())),
        "torrent": {
            "count": torrent_count,
            "ratio_pct": render_pct(torrent_count, len(urls)),
        },
        "impersonation": [
            {
                "url": hit.url,
                "brand": hit.brand,
                "tokens": list(hit.matched_tokens),
                "location": list(hit.location),
            }
            for hit in brand_impersonation(parsed_by_url, rules)
        ],
        "commands": commands,
    }
