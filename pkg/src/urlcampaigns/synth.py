"""Deterministic synthetic corpora with ground-truth manifests.

The generator plants a cluster structure (heavy-tailed multi-submission
clusters plus a mass of singletons), per-submission vendor flags, a
controllable missing-hash fraction, and a blocklist covering a chosen
fraction of the flagged clusters — then records the whole truth in a
manifest so end-to-end pipeline runs can be checked against it exactly.

Reproducibility: every stochastic choice comes from the ``random()``
stream of the stdlib Mersenne Twister seeded once (the one sequence the
stdlib guarantees stable across versions; convenience methods are
reimplemented on top of it), and content hashes derive from
sha256(seed, cluster index). Same seed, same bytes — the draw order is
part of the corpus format.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .clusterer import FLAGGED, SINGLETON, UNFLAGGED, Cluster
from .jsonlio import dump_line, provenance_header
from .verifier import (
    KIND_MULTI_URL,
    Campaign,
    Verdict,
    campaign_id_for,
)

PRNG_NAME = "mt19937-random-stream"

RECORDS_FILENAME = "records.jsonl"
BLOCKLIST_FILENAME = "blocklist.tsv"
MANIFEST_FILENAME = "manifest.json"


class InfeasibleConfig(ValueError):
    """The requested corpus shape cannot be generated."""


class StableRng:
    """Deterministic RNG built only on random.Random().random()."""

    def __init__(self, seed: int):
        self._random = random.Random(seed).random

    def random(self) -> float:
        return self._random()

    def randint(self, a: int, b: int) -> int:
        return a + int(self._random() * (b - a + 1))

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, seq: list) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(0, i)
            seq[i], seq[j] = seq[j], seq[i]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    records: int = 10_000
    campaigns: int = 20          # multi-submission clusters
    singletons: int = 200        # one-submission clusters
    missing_hash_fraction: float = 0.0
    flag_probability: float = 0.08
    blocklisted_fraction: float = 0.5
    size_alpha: float = 1.5      # Pareto tail: many small clusters, few huge
    single_url_probability: float = 0.35
    tls_fraction: float = 0.6
    cross_url_probability: float = 0.01
    vendor_total: int = 72
    time_start: int = 1575244800  # 2019-12-02T00:00:00Z
    time_end: int = 1580342400    # 2020-01-30T00:00:00Z

    def validate(self) -> None:
        for name in ("missing_hash_fraction", "flag_probability",
                     "blocklisted_fraction", "single_url_probability",
                     "tls_fraction", "cross_url_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InfeasibleConfig(f"{name} must lie in [0, 1], got {value}")
        if self.records < 0 or self.campaigns < 0 or self.singletons < 0:
            raise InfeasibleConfig("counts must be non-negative")
        if self.vendor_total < 1:
            raise InfeasibleConfig("vendor_total must be positive")
        if self.time_end <= self.time_start:
            raise InfeasibleConfig("time range is empty")
        if self.size_alpha <= 0:
            raise InfeasibleConfig("size_alpha must be positive")


# URL component pools. Only JSON-safe characters appear here (no quotes
# or backslashes) so record lines can be emitted via f-strings.
_SUBDOMAINS = ("", "www", "mail", "login", "secure", "cdn", "get", "account",
               "www.icloud.com", "update")
_DOMAIN_TOKENS = ("get-apple", "icloud-login", "findmy-device", "secure-pay",
                  "bonus-hunter", "media-dl", "torrent-hub", "update-center",
                  "account-verify", "cloud-sync", "prize-wheel", "fast-files")
_SUFFIXES = ("com", "net", "support", "ru", "info", "live", "xyz", "co.uk",
             "review", "mobi", "us", "in")
_PLAIN_PATHS = ("/", "/index.php", "/login", "/account/verify", "/en-us/",
                "/promo", "/landing", "/download", "/redirect")
_EXTENSIONS = ("exe", "js", "zip", "rar", "apk", "scr", "doc", "pdf")
_TORRENT_PATHS = ("/files/payload.torrent", "/tracker/announce",
                  "/dl?m=magnet:?xt=urn:btih:00aa11bb22cc")
_COMMAND_PATHS = ("/exec?v=cmd.exe%5C/c%5Cpowershell",
                  "/run?t=powershell+DownloadFile",
                  "/task?c=svchost.exe+start")


class _ReservoirShuffler:
    """Streaming disorder with bounded memory: each incoming line lands
    in a random window slot, evicting one line downstream."""

    def __init__(self, rng: StableRng, window: int, emit):
        self._rng = rng
        self._window = max(1, window)
        self._emit = emit
        self._slots: list[str] = []

    def push(self, line: str) -> None:
        if len(self._slots) < self._window:
            self._slots.append(line)
            return
        j = self._rng.randint(0, self._window - 1)
        self._emit(self._slots[j])
        self._slots[j] = line

    def close(self) -> None:
        self._rng.shuffle(self._slots)
        for line in self._slots:
            self._emit(line)
        self._slots = []


def _cluster_sizes(rng: StableRng, count: int, budget: int, alpha: float) -> list[int]:
    """Heavy-tailed sizes, each >= 2, summing exactly to budget."""
    if count == 0:
        if budget != 0:
            raise InfeasibleConfig("hashed records left over with zero campaign clusters")
        return []
    if budget < 2 * count:
        raise InfeasibleConfig("record budget too small for the requested clusters")
    weights = [(1.0 - rng.random()) ** (-1.0 / alpha) for _ in range(count)]
    total = sum(weights)
    extra = budget - 2 * count
    shares = [int(extra * w / total) for w in weights]
    shares[max(range(count), key=weights.__getitem__)] += extra - sum(shares)
    return [2 + s for s in shares]


def _compose_url(rng: StableRng, cfg: SynthConfig, tag: str) -> str:
    scheme = "https" if rng.random() < cfg.tls_fraction else "http"
    sub = rng.choice(_SUBDOMAINS)
    token = rng.choice(_DOMAIN_TOKENS)
    suffix = rng.choice(_SUFFIXES)
    roll = rng.random()
    if roll < 0.04:
        path = rng.choice(_TORRENT_PATHS)
    elif roll < 0.10:
        path = "/files/setup." + rng.choice(_EXTENSIONS)
    elif roll < 0.12:
        path = rng.choice(_COMMAND_PATHS)
    else:
        path = rng.choice(_PLAIN_PATHS)
    host = f"{token}{rng.randint(0, 99)}.{suffix}"
    if sub:
        host = f"{sub}.{host}"
    join = "&" if "?" in path else "?"
    return f"{scheme}://{host}{path}{join}sid={tag}"


def _cluster_urls(rng: StableRng, cfg: SynthConfig, index: int, size: int,
                  recent: list[str]) -> list[str]:
    if size == 1 or rng.random() < cfg.single_url_probability:
        n_unique = 1
    else:
        n_unique = 2 + rng.randint(0, size - 2)
    urls: list[str] = []
    seen: set[str] = set()
    for j in range(n_unique):
        url = None
        if recent and rng.random() < cfg.cross_url_probability:
            candidate = rng.choice(recent)
            if candidate not in seen:
                url = candidate  # deliberately shared across clusters
        if url is None:
            url = _compose_url(rng, cfg, f"{index}x{j}")
        seen.add(url)
        urls.append(url)
    if recent is not None:
        recent.append(urls[0])
        if len(recent) > 50:
            del recent[0]
    return urls


def _content_hash(seed: int, index: int) -> str:
    return hashlib.sha256(f"{seed}:cluster:{index}".encode("utf-8")).hexdigest()


def _expected_class(size: int, positives_sum: int) -> str:
    if size == 1:
        return SINGLETON
    return FLAGGED if positives_sum > 0 else UNFLAGGED


def generate_corpus(cfg: SynthConfig, out_dir, detail: str = "full",
                    created: str = "") -> dict:
    """Write records.jsonl, blocklist.tsv and manifest.json; return the
    manifest. ``detail="summary"`` skips the per-cluster truth list
    (totals and histogram only) for very large corpora."""
    cfg.validate()
    if detail not in ("full", "summary"):
        raise ValueError(f"unknown manifest detail {detail!r}")
    rng = StableRng(cfg.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    n_missing = 0
    if cfg.missing_hash_fraction > 0.0:
        draw = rng.random
        threshold = cfg.missing_hash_fraction
        n_missing = sum(draw() < threshold for _ in range(cfg.records))
    n_hashed = cfg.records - n_missing
    if n_hashed < cfg.singletons + 2 * cfg.campaigns:
        raise InfeasibleConfig(
            f"{n_hashed} hashed records cannot fill {cfg.campaigns} clusters "
            f"plus {cfg.singletons} singletons")
    sizes = _cluster_sizes(rng, cfg.campaigns, n_hashed - cfg.singletons, cfg.size_alpha)
    sizes.extend([1] * cfg.singletons)

    records_path = out / RECORDS_FILENAME
    histogram: Counter[int] = Counter()
    class_counts = {SINGLETON: 0, UNFLAGGED: 0, FLAGGED: 0}
    clusters_truth: list[dict] = []
    flagged_clusters: list[tuple[str, list[str]]] = []
    recent_urls: list[str] = []

    with open(records_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_line(provenance_header(asdict(cfg), created)) + "\n")
        shuffler = _ReservoirShuffler(rng, min(65536, max(cfg.records, 1)),
                                      lambda line: f.write(line + "\n"))
        for index, size in enumerate(sizes):
            h = _content_hash(cfg.seed, index)
            urls = _cluster_urls(rng, cfg, index, size, recent_urls)
            n_unique = len(urls)
            positives_sum = 0
            for k in range(size):
                url = urls[k] if k < n_unique else urls[rng.randint(0, n_unique - 1)]
                positives = rng.randint(1, 12) if rng.random() < cfg.flag_probability else 0
                positives_sum += positives
                ts = rng.randint(cfg.time_start, cfg.time_end - 1)
                shuffler.push(
                    f'{{"url":"{url}","content_hash":"{h}","positives":{positives},'
                    f'"total":{cfg.vendor_total},"scan_time":{ts}}}')
            expected = _expected_class(size, positives_sum)
            class_counts[expected] += 1
            histogram[size] += 1
            if expected == FLAGGED:
                flagged_clusters.append((h, urls))
            if detail == "full":
                clusters_truth.append({
                    "content_hash": h,
                    "size": size,
                    "unique_urls": sorted(set(urls)),
                    "positives_sum": positives_sum,
                    "expected_class": expected,
                })
        for i in range(n_missing):
            url = _compose_url(rng, cfg, f"m{i}")
            positives = rng.randint(1, 12) if rng.random() < cfg.flag_probability else 0
            ts = rng.randint(cfg.time_start, cfg.time_end - 1)
            shuffler.push(
                f'{{"url":"{url}","positives":{positives},'
                f'"total":{cfg.vendor_total},"scan_time":{ts}}}')
        shuffler.close()

    if cfg.blocklisted_fraction > 0.0 and not flagged_clusters:
        raise InfeasibleConfig("blocklisted_fraction > 0 but the corpus has no flagged clusters")
    flagged_clusters.sort(key=lambda item: item[0])
    n_blocklisted = int(cfg.blocklisted_fraction * len(flagged_clusters))
    blocklisted: dict[str, list[str]] = {}
    blocklist_lines: list[str] = []
    for h, urls in flagged_clusters[:n_blocklisted]:
        picked = urls[: 2 if len(urls) > 1 and rng.random() < 0.3 else 1]
        threat = rng.choice(("MALWARE", "SOCIAL_ENGINEERING", "MALWARE,SOCIAL_ENGINEERING"))
        for u in picked:
            blocklist_lines.append(f"{u}\t{threat}")
        blocklisted[h] = picked

    blocklist_path = out / BLOCKLIST_FILENAME
    with open(blocklist_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# " + dump_line(provenance_header(asdict(cfg), created)) + "\n")
        f.write(f"# snapshot: {cfg.time_end}\n")
        for line in blocklist_lines:
            f.write(line + "\n")

    if detail == "full":
        for entry in clusters_truth:
            entry["campaign"] = entry["content_hash"] in blocklisted
            entry["blocklisted_urls"] = blocklisted.get(entry["content_hash"], [])
        clusters_truth.sort(key=lambda e: e["content_hash"])

    manifest: dict = {
        "prng": PRNG_NAME,
        "seed": cfg.seed,
        "tool_version": __version__,
        "created": created,
        "config": asdict(cfg),
        "totals": {
            "records": cfg.records,
            "missing_hash": n_missing,
            "hashed": n_hashed,
            "clusters": len(sizes),
            "singleton": class_counts[SINGLETON],
            "unflagged": class_counts[UNFLAGGED],
            "flagged": class_counts[FLAGGED],
            "campaigns": len(blocklisted),
            "blocklist_entries": len(blocklist_lines),
        },
        "size_histogram": {str(size): count for size, count in sorted(histogram.items())},
        "campaign_hashes": sorted(blocklisted),
    }
    if detail == "full":
        manifest["clusters"] = clusters_truth
    with open(out / MANIFEST_FILENAME, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Hand-shaped fixtures for the insight scanners and escalation replay.
# ---------------------------------------------------------------------------

def build_malware_campaign_fixture() -> Campaign:
    """A multi-URL malware-distribution campaign with known composition:
    1,589 unique URLs (1,572 https / 17 http), 46 torrent pointers,
    payload extensions exe:19 js:28 zip:7 rar:3, 9,589 submissions."""
    content_hash = hashlib.sha256(b"malware-distribution-fixture").hexdigest()
    paths: list[str] = []
    paths += [f"/files/pack{i}.torrent" for i in range(30)]
    paths += [f"/tracker/announce?iid={i}" for i in range(10)]
    paths += [f"/get?m=magnet:?xt=urn:btih:{i:040d}" for i in range(6)]
    for ext, count in (("exe", 19), ("js", 28), ("zip", 7), ("rar", 3)):
        paths += [f"/payload/{ext}{i}/setup.{ext}" for i in range(count)]
    filler = 0
    while len(paths) < 1589:
        paths.append(f"/landing/page{filler}")
        filler += 1
    urls = []
    for i, path in enumerate(paths):
        scheme = "https" if i < 1572 else "http"
        urls.append(f"{scheme}://mirror{i % 261}.ru{path}")
    assert len(set(urls)) == 1589

    cluster = Cluster(content_hash)
    for i, url in enumerate(urls):
        cluster.add(url, 1 if i % 6 == 0 else 0)
    for _ in range(9589 - len(urls)):
        cluster.add(urls[0], 0)

    detected = {urls[0], urls[46]}  # one torrent pointer, one dropper
    verdicts = {
        u: Verdict(u, frozenset({"MALWARE"}) if u in detected else frozenset(), 0)
        for u in urls
    }
    return Campaign(
        cluster=cluster,
        verdicts=verdicts,
        kind=KIND_MULTI_URL,
        campaign_id=campaign_id_for(content_hash),
    )


def build_two_url_replay() -> dict:
    """Escalation-replay fixture: a voucher-lure cluster where a second
    URL starts re-using the hash only after the first URL was marked.

    Returns the pre-marking records (7 submissions of the first URL, one
    carrying a single vendor flag), the post-marking records (5
    submissions of the second URL), and the blocklist entry that marks
    the first URL. The combined 12 submissions carry one flag in total.
    """
    from .ingest import SubmissionRecord  # local import to avoid cycle at module load

    content_hash = ("16f321a6" + hashlib.sha256(b"voucher-replay").hexdigest())[:64]
    url_first = "http://everyday-vouchers.com/"
    url_second = "http://sweepstakehunter.com/"
    day = 86400
    t0 = 1575244800  # first scan day
    marked_at = 1577923200  # the day the provider flagged the first URL

    pre = [
        SubmissionRecord(url_first, content_hash, 1 if i == 6 else 0, 72, t0 + i * 3 * day)
        for i in range(7)
    ]
    post = [
        SubmissionRecord(url_second, content_hash, 0, 72, marked_at + (i + 1) * 2 * day)
        for i in range(5)
    ]
    blocklist_lines = [
        f"# snapshot: {marked_at}",
        f"{url_first}\tSOCIAL_ENGINEERING",
    ]
    return {
        "content_hash": content_hash,
        "url_first": url_first,
        "url_second": url_second,
        "pre_marking_records": pre,
        "post_marking_records": post,
        "blocklist_lines": blocklist_lines,
        "marked_at": marked_at,
    }
