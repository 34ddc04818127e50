"""Online content-hash escalation.

Once a campaign's hash is known malicious, every future submission
bearing it raises a priority alert. A hit whose URL was never seen for
that hash is a "new-url" alert — the interesting case for triage, since
URL blocklists alone would have let it through — and the URL is then
remembered, so replays of the same stream are deterministic and later
identical submissions alert as "known-url".

The watchlist is a single-writer state machine: consume the stream
sequentially; share only immutable snapshots across threads.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass

from .ingest import SubmissionRecord
from .jsonlio import iter_jsonl, write_jsonl
from .urlkit import normalize_url
from .verifier import Campaign

NOVELTY_KNOWN = "known-url"
NOVELTY_NEW = "new-url"


@dataclass(slots=True)
class WatchlistEntry:
    content_hash: str
    campaign_id: str
    known_urls: set[str]
    first_marked: int


@dataclass(frozen=True, slots=True)
class EscalationAlert:
    url: str
    content_hash: str
    campaign_id: str
    novelty: str
    alert_time: int

    def as_dict(self) -> dict:
        return {
            "url": self.url,
            "content_hash": self.content_hash,
            "campaign_id": self.campaign_id,
            "novelty": self.novelty,
            "alert_time": self.alert_time,
        }


class Watchlist:
    def __init__(self, entries: Iterable[WatchlistEntry] = ()):
        self._entries: dict[str, WatchlistEntry] = {}
        for entry in entries:
            if entry.content_hash in self._entries:
                raise ValueError(f"duplicate watchlist hash {entry.content_hash}")
            if not entry.known_urls:
                raise ValueError("watchlist entry without known URLs")
            self._entries[entry.content_hash] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, content_hash: str) -> bool:
        return content_hash in self._entries

    def entry(self, content_hash: str) -> WatchlistEntry:
        return self._entries[content_hash]

    def entries(self) -> list[WatchlistEntry]:
        return [self._entries[h] for h in sorted(self._entries)]

    def check_submission(self, record: SubmissionRecord) -> EscalationAlert | None:
        """Alert iff the record's hash is watched.

        New URLs are appended to the entry's known set on alert, so the
        state only grows and replays from a fixed snapshot reproduce the
        same alert sequence. Hashless records never alert.
        """
        if record.content_hash is None:
            return None
        entry = self._entries.get(record.content_hash)
        if entry is None:
            return None
        url = normalize_url(record.url)
        if url in entry.known_urls:
            novelty = NOVELTY_KNOWN
        else:
            novelty = NOVELTY_NEW
            entry.known_urls.add(url)
        return EscalationAlert(url, entry.content_hash, entry.campaign_id,
                               novelty, record.scan_time)

    def save(self, path, config: dict | None = None, created: str = "") -> int:
        rows = (
            {
                "content_hash": e.content_hash,
                "campaign_id": e.campaign_id,
                "known_urls": sorted(e.known_urls),
                "first_marked": e.first_marked,
            }
            for e in self.entries()
        )
        return write_jsonl(path, rows, config, created)

    @classmethod
    def load(cls, path) -> "Watchlist":
        entries = [
            WatchlistEntry(
                content_hash=row["content_hash"],
                campaign_id=row["campaign_id"],
                known_urls=set(row["known_urls"]),
                first_marked=row["first_marked"],
            )
            for row in iter_jsonl(path)
        ]
        return cls(entries)


def build_watchlist(campaigns: Iterable[Campaign]) -> Watchlist:
    """One entry per confirmed campaign, keyed by its content hash.

    first_marked is the earliest confirming verdict time, so snapshots
    are reproducible from the same campaign set.
    """
    entries = []
    for campaign in campaigns:
        confirmed_times = [v.checked_at for v in campaign.verdicts.values() if v.confirmed]
        if not confirmed_times:
            raise ValueError(f"campaign {campaign.campaign_id} has no confirming verdict")
        entries.append(WatchlistEntry(
            content_hash=campaign.cluster.content_hash,
            campaign_id=campaign.campaign_id,
            known_urls=set(campaign.cluster.unique_urls),
            first_marked=min(confirmed_times),
        ))
    return Watchlist(entries)


def check_submission(record: SubmissionRecord, watchlist: Watchlist) -> EscalationAlert | None:
    return watchlist.check_submission(record)


def scan_stream(records: Iterable[SubmissionRecord],
                watchlist: Watchlist) -> Iterator[EscalationAlert]:
    """Alerts for a record stream, in stream order."""
    for record in records:
        alert = watchlist.check_submission(record)
        if alert is not None:
            yield alert
