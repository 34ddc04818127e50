"""Campaign metric suite and corpus-level aggregates.

Definitions: U is the count of unique URLs in a campaign, S the count
of submissions. Source distribution U/S measures how aggressively URLs
rotate; the footprint mu*U + (1-mu)*S blends attacker scale (URLs) and
victim scale (submissions); domain / sub-domain diversity divide the
unique label counts by U. Ratios stay exact (integer pairs) until
rendering, and corpus-level ratio means are means of per-campaign
ratios, not ratios of sums.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

from .fmt import render_pct
from .jsonlio import write_jsonl
from .urlkit import ParsedUrl, SuffixTable, UrlParseError, parse_url
from .verifier import KIND_SINGLE_URL, Campaign, Verdict


@dataclass(frozen=True, slots=True)
class UrlLengthStats:
    mean: float
    stddev: float  # population
    q1: float
    median: float
    q3: float

    def as_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "stddev": self.stddev,
                "q1": self.q1, "median": self.median, "q3": self.q3}


@dataclass(frozen=True, slots=True)
class CampaignMetrics:
    campaign_id: str
    kind: str
    size: int            # U
    submissions: int     # S
    mu: float
    footprint: float
    source_distribution: Fraction
    unique_domains: int
    unique_subdomains: int
    domain_diversity: Fraction
    subdomain_diversity: Fraction
    confirmed_urls: int
    gsb_detection_rate: Fraction
    mean_vendor_flags: float
    url_length: UrlLengthStats


def footprint(size: int, submissions: int, mu: float = 0.5) -> float:
    """Blended scale measure mu*U + (1-mu)*S."""
    if size < 1 or submissions < size:
        raise ValueError("need submissions >= size >= 1")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    return mu * size + (1.0 - mu) * submissions


def source_distribution(size: int, submissions: int) -> Fraction:
    """Exact U/S ratio; 1 means every submission used a fresh URL."""
    if size < 1 or submissions < size:
        raise ValueError("need submissions >= size >= 1")
    return Fraction(size, submissions)


def domain_diversity(parsed_urls: Sequence[ParsedUrl]) -> Fraction:
    """Unique registrable labels (suffix excluded) over URL count."""
    if not parsed_urls:
        raise ValueError("no URLs")
    return Fraction(len({p.domain for p in parsed_urls}), len(parsed_urls))


def subdomain_diversity(parsed_urls: Sequence[ParsedUrl]) -> Fraction:
    """Unique sub-domain strings over URL count; empty is one value."""
    if not parsed_urls:
        raise ValueError("no URLs")
    return Fraction(len({p.subdomain for p in parsed_urls}), len(parsed_urls))


def _quantile(sorted_values: Sequence[float], q: float) -> float:
    # linear interpolation between order statistics at position (n-1)*q
    position = (len(sorted_values) - 1) * q
    lower = math.floor(position)
    rest = position - lower
    if rest == 0.0:
        return float(sorted_values[lower])
    return sorted_values[lower] + rest * (sorted_values[lower + 1] - sorted_values[lower])


def length_stats(values: Iterable[float]) -> UrlLengthStats:
    data = sorted(float(v) for v in values)
    if not data:
        raise ValueError("no values")
    n = len(data)
    mean = sum(data) / n
    variance = sum((v - mean) ** 2 for v in data) / n
    return UrlLengthStats(
        mean=mean,
        stddev=math.sqrt(variance),
        q1=_quantile(data, 0.25),
        median=_quantile(data, 0.5),
        q3=_quantile(data, 0.75),
    )


def url_length_stats(urls: Iterable[str]) -> UrlLengthStats:
    """Descriptive stats over character lengths of normalised URLs."""
    return length_stats(len(u) for u in urls)


def detection_metrics(campaign: Campaign,
                      verdicts: dict[str, Verdict] | None = None) -> tuple[Fraction, float]:
    """(provider detection rate confirmed/U, mean vendor flags S-wise)."""
    cluster = campaign.cluster
    urls = cluster.unique_urls
    vmap = campaign.verdicts if verdicts is None else verdicts
    missing = [u for u in urls if u not in vmap]
    if missing:
        raise ValueError(f"verdict map missing {len(missing)} campaign URLs")
    confirmed = sum(1 for u in urls if vmap[u].confirmed)
    rate = Fraction(confirmed, len(urls))
    mean_flags = cluster.positives_sum / cluster.submission_count
    return rate, mean_flags


def parse_or_opaque(url: str, table: SuffixTable) -> ParsedUrl:
    """Parse a URL, degrading to an opaque one-part host on failure so
    diversity denominators always stay U."""
    try:
        return parse_url(url, table)
    except UrlParseError:
        return ParsedUrl("", "", url, "", "")


def compute_campaign_metrics(campaign: Campaign, table: SuffixTable,
                             mu: float = 0.5) -> CampaignMetrics:
    cluster = campaign.cluster
    urls = sorted(cluster.unique_urls)
    size = len(urls)
    submissions = cluster.submission_count
    parsed = [parse_or_opaque(u, table) for u in urls]
    _, mean_flags = detection_metrics(campaign)
    unique_domains = len({p.domain for p in parsed})
    unique_subdomains = len({p.subdomain for p in parsed})
    confirmed = sum(1 for u in urls if campaign.verdicts[u].confirmed)
    return CampaignMetrics(
        campaign_id=campaign.campaign_id,
        kind=campaign.kind,
        size=size,
        submissions=submissions,
        mu=mu,
        footprint=footprint(size, submissions, mu),
        source_distribution=source_distribution(size, submissions),
        unique_domains=unique_domains,
        unique_subdomains=unique_subdomains,
        domain_diversity=Fraction(unique_domains, size),
        subdomain_diversity=Fraction(unique_subdomains, size),
        confirmed_urls=confirmed,
        gsb_detection_rate=Fraction(confirmed, size),
        mean_vendor_flags=mean_flags,
        url_length=url_length_stats(urls),
    )


def metrics_export_row(m: CampaignMetrics) -> dict:
    """Export row: raw counts plus percentages rendered at 2 decimals."""
    return {
        "campaign_id": m.campaign_id,
        "kind": m.kind,
        "size": m.size,
        "submissions": m.submissions,
        "mu": m.mu,
        "footprint": m.footprint,
        "source_distribution_pct": render_pct(m.size, m.submissions),
        "unique_domains": m.unique_domains,
        "unique_subdomains": m.unique_subdomains,
        "domain_diversity_pct": render_pct(m.unique_domains, m.size),
        "subdomain_diversity_pct": render_pct(m.unique_subdomains, m.size),
        "confirmed_urls": m.confirmed_urls,
        "gsb_detection_rate_pct": render_pct(m.confirmed_urls, m.size),
        "mean_vendor_flags": m.mean_vendor_flags,
        "url_length": m.url_length.as_dict(),
    }


def metrics_from_row(row: dict) -> CampaignMetrics:
    ul = row["url_length"]
    return CampaignMetrics(
        campaign_id=row["campaign_id"],
        kind=row["kind"],
        size=row["size"],
        submissions=row["submissions"],
        mu=row["mu"],
        footprint=row["footprint"],
        source_distribution=Fraction(row["size"], row["submissions"]),
        unique_domains=row["unique_domains"],
        unique_subdomains=row["unique_subdomains"],
        domain_diversity=Fraction(row["unique_domains"], row["size"]),
        subdomain_diversity=Fraction(row["unique_subdomains"], row["size"]),
        confirmed_urls=row["confirmed_urls"],
        gsb_detection_rate=Fraction(row["confirmed_urls"], row["size"]),
        mean_vendor_flags=row["mean_vendor_flags"],
        url_length=UrlLengthStats(ul["mean"], ul["stddev"], ul["q1"], ul["median"], ul["q3"]),
    )


def write_metrics_export(path, metrics: Iterable[CampaignMetrics],
                         config: dict | None = None, created: str = "") -> int:
    return write_jsonl(path, (metrics_export_row(m) for m in metrics), config, created)


def _ratio_mean_pct(fractions: list[Fraction]) -> str:
    mean = sum(fractions, Fraction(0)) / len(fractions)
    return render_pct(mean.numerator, mean.denominator)


def _bucket_summary(bucket: list[CampaignMetrics]) -> dict:
    n = len(bucket)
    if n == 0:
        return {"campaigns": 0}
    return {
        "campaigns": n,
        "mean_size": sum(m.size for m in bucket) / n,
        "mean_submissions": sum(m.submissions for m in bucket) / n,
        "mean_footprint": sum(m.footprint for m in bucket) / n,
        "mean_source_distribution_pct": _ratio_mean_pct([m.source_distribution for m in bucket]),
        "mean_gsb_detection_rate_pct": _ratio_mean_pct([m.gsb_detection_rate for m in bucket]),
    }


def aggregate_metrics(metrics: Sequence[CampaignMetrics],
                      size_bucket_threshold: int = 100) -> dict:
    """Corpus summary: totals split by kind, corpus means (means of the
    per-campaign ratios), URL-length stats over per-campaign means, and
    size-bucketed sub-summaries."""
    if not metrics:
        raise ValueError("no campaigns to aggregate")
    n = len(metrics)
    single = [m for m in metrics if m.kind == KIND_SINGLE_URL]
    multi = [m for m in metrics if m.kind != KIND_SINGLE_URL]
    small = [m for m in metrics if m.size <= size_bucket_threshold]
    large = [m for m in metrics if m.size > size_bucket_threshold]
    return {
        "campaigns": {"total": n, "single_url": len(single), "multi_url": len(multi)},
        "unique_urls": {
            "single_url": sum(m.size for m in single),
            "multi_url": sum(m.size for m in multi),
            "total": sum(m.size for m in metrics),
        },
        "submissions": {
            "single_url": sum(m.submissions for m in single),
            "multi_url": sum(m.submissions for m in multi),
            "total": sum(m.submissions for m in metrics),
        },
        "means": {
            "size": sum(m.size for m in metrics) / n,
            "submissions": sum(m.submissions for m in metrics) / n,
            "footprint": sum(m.footprint for m in metrics) / n,
            "source_distribution_pct": _ratio_mean_pct([m.source_distribution for m in metrics]),
            "domain_diversity_pct": _ratio_mean_pct([m.domain_diversity for m in metrics]),
            "subdomain_diversity_pct": _ratio_mean_pct([m.subdomain_diversity for m in metrics]),
            "gsb_detection_rate_pct": _ratio_mean_pct([m.gsb_detection_rate for m in metrics]),
            "mean_vendor_flags": sum(m.mean_vendor_flags for m in metrics) / n,
        },
        "url_length_of_campaign_means": length_stats(m.url_length.mean for m in metrics).as_dict(),
        "size_buckets": {
            f"size_le_{size_bucket_threshold}": _bucket_summary(small),
            f"size_gt_{size_bucket_threshold}": _bucket_summary(large),
        },
    }


def empty_aggregate(size_bucket_threshold: int = 100) -> dict:
    """Zero-total summary shape for a corpus with no campaigns."""
    zero_kinds = {"single_url": 0, "multi_url": 0, "total": 0}
    return {
        "campaigns": {"total": 0, "single_url": 0, "multi_url": 0},
        "unique_urls": dict(zero_kinds),
        "submissions": dict(zero_kinds),
        "means": None,
        "url_length_of_campaign_means": None,
        "size_buckets": {
            f"size_le_{size_bucket_threshold}": {"campaigns": 0},
            f"size_gt_{size_bucket_threshold}": {"campaigns": 0},
        },
    }
