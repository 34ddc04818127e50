"""Group submissions by content hash into clusters and classify them.

Two storage strategies sit behind one interface: plain in-memory hash
grouping, and an external-memory sort-merge (spill sorted runs to disk,
stream-merge, scan hash groups) for corpora that exceed RAM. Both are
order-independent and produce identical cluster tables; exports are
emitted in hash order so files are byte-comparable across strategies
and input permutations.

A mean positive score is carried as the exact integer pair
(positives_sum, submission_count); the flagged threshold ("any vendor
hit at all") is therefore exact, and rounding happens only at export.
"""

from __future__ import annotations

import heapq
import json
import os
import tempfile
from collections.abc import Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .fmt import render_ratio
from .ingest import SubmissionRecord
from .jsonlio import write_jsonl
from .urlkit import normalize_url

SINGLETON = "singleton"
UNFLAGGED = "unflagged"
FLAGGED = "flagged"

_HASH_SLICE = slice(2, 2 + 64)  # hash offset inside a '["<hex>",...]' run line


@dataclass(slots=True)
class Cluster:
    """All submissions sharing one content hash, plus derived stats.

    ``per_url_flag_counts`` maps each normalised URL to
    ``[submission_count, max_positives_seen]``; its key view doubles as
    the cluster's unique-URL set.
    """

    content_hash: str
    submission_count: int = 0
    positives_sum: int = 0
    per_url_flag_counts: dict[str, list[int]] = field(default_factory=dict)

    @property
    def unique_urls(self):
        return self.per_url_flag_counts.keys()

    @property
    def unique_url_count(self) -> int:
        return len(self.per_url_flag_counts)

    @property
    def mean_positive_score(self) -> Fraction:
        return Fraction(self.positives_sum, self.submission_count)

    def add(self, normalized_url: str, positives: int) -> None:
        self.submission_count += 1
        self.positives_sum += positives
        entry = self.per_url_flag_counts.get(normalized_url)
        if entry is None:
            self.per_url_flag_counts[normalized_url] = [1, positives]
        else:
            entry[0] += 1
            if positives > entry[1]:
                entry[1] = positives


def mean_positive_score(positives: Iterable[int]) -> Fraction:
    """Exact mean of a non-empty positives sequence."""
    total = 0
    count = 0
    for p in positives:
        total += p
        count += 1
    if count == 0:
        raise ValueError("mean positive score of an empty sequence")
    return Fraction(total, count)


def classify_cluster(cluster: Cluster) -> str:
    if cluster.submission_count == 1:
        return SINGLETON
    return FLAGGED if cluster.positives_sum > 0 else UNFLAGGED


def build_clusters(records: Iterable[SubmissionRecord]) -> dict[str, Cluster]:
    """One cluster per distinct content hash; order-independent.

    Every record must carry a hash (hashless ones are filtered upstream
    because no cluster key exists for them).
    """
    clusters: dict[str, Cluster] = {}
    for rec in records:
        h = rec.content_hash
        if h is None:
            raise ValueError("record without content hash reached clustering")
        c = clusters.get(h)
        if c is None:
            c = clusters[h] = Cluster(h)
        c.add(normalize_url(rec.url), rec.positives)
    return clusters


def shard_index(content_hash: str, shards: int) -> int:
    """Stable hash-prefix shard assignment."""
    return int(content_hash[:4], 16) % shards


def build_clusters_sharded(records: Iterable[SubmissionRecord], shards: int,
                           threads: int = 1) -> dict[str, Cluster]:
    """Cluster hash-prefix shards independently and concatenate.

    Shards partition the hash space, so the union of shard tables is
    bit-identical to the sequential result.
    """
    if shards < 2:
        return build_clusters(records)
    parts: list[list[SubmissionRecord]] = [[] for _ in range(shards)]
    for rec in records:
        if rec.content_hash is None:
            raise ValueError("record without content hash reached clustering")
        parts[shard_index(rec.content_hash, shards)].append(rec)
    merged: dict[str, Cluster] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for table in pool.map(build_clusters, parts):
                merged.update(table)
    else:
        for part in parts:
            merged.update(build_clusters(part))
    return merged


def _run_line(content_hash: str, url: str, positives: int) -> str:
    # list-encoded as JSON; the fixed '["<64 hex>"' prefix makes plain
    # lexicographic line order group equal hashes contiguously
    return json.dumps([content_hash, url, positives], separators=(",", ":"))


def _group_sorted_lines(lines: Iterable[str]) -> Iterator[Cluster]:
    current: Cluster | None = None
    for line in lines:
        h = line[_HASH_SLICE]
        if current is None or current.content_hash != h:
            if current is not None:
                yield current
            current = Cluster(h)
        _, url, positives = json.loads(line)
        current.add(url, positives)
    if current is not None:
        yield current


def iter_clusters_external(records: Iterable[SubmissionRecord],
                           max_in_memory: int = 1_000_000,
                           tmpdir: str | None = None) -> Iterator[Cluster]:
    """Stream clusters in hash order, holding at most ``max_in_memory``
    record entries in RAM at a time.

    Records spill to sorted runs on disk; a streaming k-way merge then
    walks hash groups. Peak memory is one run buffer plus the largest
    single cluster's URL map.
    """
    if max_in_memory < 1:
        raise ValueError("max_in_memory must be >= 1")
    run_paths: list[str] = []
    buf: list[str] = []

    def spill() -> None:
        buf.sort()
        fd, path = tempfile.mkstemp(prefix="clusrun-", suffix=".jsonl", dir=tmpdir)
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write("\n".join(buf))
            f.write("\n")
        run_paths.append(path)
        buf.clear()

    try:
        for rec in records:
            if rec.content_hash is None:
                raise ValueError("record without content hash reached clustering")
            buf.append(_run_line(rec.content_hash, normalize_url(rec.url), rec.positives))
            if len(buf) >= max_in_memory:
                spill()
        if not run_paths:
            buf.sort()
            yield from _group_sorted_lines(buf)
            return
        if buf:
            spill()
        streams = [open(p, "r", encoding="utf-8") for p in run_paths]
        try:
            yield from _group_sorted_lines(line.rstrip("\n") for line in heapq.merge(*streams))
        finally:
            for s in streams:
                s.close()
    finally:
        for p in run_paths:
            try:
                os.unlink(p)
            except OSError:
                pass


def iter_clusters(records: Iterable[SubmissionRecord], mode: str = "memory",
                  max_in_memory: int = 1_000_000,
                  tmpdir: str | None = None) -> Iterator[Cluster]:
    """Unified entry point over both storage strategies (hash order)."""
    if mode == "memory":
        clusters = build_clusters(records)
        for h in sorted(clusters):
            yield clusters[h]
    elif mode == "external":
        yield from iter_clusters_external(records, max_in_memory, tmpdir)
    else:
        raise ValueError(f"unknown clustering mode {mode!r}")


def cluster_size_histogram(clusters) -> dict[int, int]:
    """Map submission-count -> number of clusters of that size."""
    values = clusters.values() if isinstance(clusters, dict) else clusters
    hist: dict[int, int] = {}
    for c in values:
        hist[c.submission_count] = hist.get(c.submission_count, 0) + 1
    return hist


def cluster_export_row(cluster: Cluster) -> dict:
    return {
        "content_hash": cluster.content_hash,
        "submission_count": cluster.submission_count,
        "unique_url_count": cluster.unique_url_count,
        "positives_sum": cluster.positives_sum,
        "mean_positive_score": render_ratio(cluster.positives_sum, cluster.submission_count, 6),
        "class": classify_cluster(cluster),
    }


def write_cluster_export(path, clusters_iter: Iterable[Cluster],
                         config: dict | None = None, created: str = "") -> int:
    """Write the cluster table export (one JSON object per cluster)."""
    return write_jsonl(path, (cluster_export_row(c) for c in clusters_iter), config, created)
