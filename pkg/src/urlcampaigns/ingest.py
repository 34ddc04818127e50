"""Parse, validate, and stream URL-scan submission records.

Input is newline-delimited: one JSON object per line with fields ``url``
(required), ``content_hash`` (optional 64-char hex), ``positives`` and
``total`` (vendor counts), and ``scan_time`` (epoch seconds or an RFC3339
string; everything is UTC internally). A CSV reader with the same five
columns is also provided. Malformed lines never abort a stream: they are
counted and skipped, so parsing is total — every line either yields a
record or increments ``malformed``.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

from .jsonlio import PROVENANCE_KEY

HASH_HEX_LEN = 64


class RecordParseError(ValueError):
    """One line failed validation; carries the field and line number."""

    def __init__(self, message: str, line_no: int = 0, field: str = ""):
        super().__init__(message)
        self.line_no = line_no
        self.field = field

    def __str__(self) -> str:
        loc = f"line {self.line_no}: " if self.line_no else ""
        fld = f"field '{self.field}': " if self.field else ""
        return f"{loc}{fld}{self.args[0]}"


class IngestError(RuntimeError):
    """The source became unreadable mid-stream; partial stats attached."""

    def __init__(self, message: str, stats: "IngestStats"):
        super().__init__(message)
        self.stats = stats


@dataclass(slots=True)
class SubmissionRecord:
    """One URL scan event as reported by the scanning service."""

    url: str
    content_hash: str | None
    positives: int
    vendor_total: int
    scan_time: int  # epoch seconds, UTC


@dataclass(slots=True)
class IngestStats:
    total_lines: int = 0
    parsed_ok: int = 0
    missing_hash: int = 0
    malformed: int = 0

    def merge(self, other: "IngestStats") -> None:
        """Additive merge, for stats gathered over sharded line ranges."""
        self.total_lines += other.total_lines
        self.parsed_ok += other.parsed_ok
        self.missing_hash += other.missing_hash
        self.malformed += other.malformed

    def as_dict(self) -> dict[str, int]:
        return {
            "total_lines": self.total_lines,
            "parsed_ok": self.parsed_ok,
            "missing_hash": self.missing_hash,
            "malformed": self.malformed,
        }


def parse_scan_time(value: Any, line_no: int = 0) -> int:
    """Normalise a scan time to epoch seconds UTC.

    Accepts integers (epoch seconds), digit strings, and RFC3339 strings;
    timestamps without an offset are taken as UTC.
    """
    if isinstance(value, bool):
        raise RecordParseError("scan_time must be a timestamp", line_no, "scan_time")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value)
    if isinstance(value, str):
        s = value.strip()
        if s.lstrip("-").isdigit():
            return int(s)
        if s.endswith(("Z", "z")):
            s = s[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(s)
        except ValueError:
            raise RecordParseError(f"unparseable scan_time {value!r}", line_no, "scan_time") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise RecordParseError("scan_time must be a timestamp", line_no, "scan_time")


def _validate_hash(value: Any, line_no: int) -> str | None:
    if value is None or value == "":
        return None
    if not isinstance(value, str):
        raise RecordParseError("content_hash must be a string", line_no, "content_hash")
    h = value.strip().lower()
    if len(h) != HASH_HEX_LEN:
        raise RecordParseError(f"content_hash must be {HASH_HEX_LEN} hex chars", line_no, "content_hash")
    try:
        int(h, 16)
    except ValueError:
        raise RecordParseError("content_hash is not valid hex", line_no, "content_hash") from None
    return h


def record_from_fields(obj: dict[str, Any], line_no: int = 0) -> SubmissionRecord:
    """Validate one decoded record object against the schema."""
    url = obj.get("url")
    if not isinstance(url, str):
        raise RecordParseError("url missing or not a string", line_no, "url")
    url = url.strip()
    if not url:
        raise RecordParseError("url is empty", line_no, "url")

    content_hash = _validate_hash(obj.get("content_hash"), line_no)

    positives = obj.get("positives")
    total = obj.get("total")
    if isinstance(positives, bool) or not isinstance(positives, int):
        raise RecordParseError("positives missing or not an integer", line_no, "positives")
    if isinstance(total, bool) or not isinstance(total, int):
        raise RecordParseError("total missing or not an integer", line_no, "total")
    if positives < 0:
        raise RecordParseError("positives is negative", line_no, "positives")
    if total < 1:
        raise RecordParseError("total must be positive", line_no, "total")
    if positives > total:
        raise RecordParseError(f"positives {positives} exceeds total {total}", line_no, "positives")

    if "scan_time" not in obj:
        raise RecordParseError("scan_time missing", line_no, "scan_time")
    scan_time = parse_scan_time(obj["scan_time"], line_no)

    return SubmissionRecord(url, content_hash, positives, total, scan_time)


def parse_record(line: str, line_no: int = 0) -> SubmissionRecord:
    """Parse one JSON record line. Raises RecordParseError on any defect."""
    try:
        obj = json.loads(line)
    except ValueError:
        raise RecordParseError("not valid JSON", line_no) from None
    if not isinstance(obj, dict):
        raise RecordParseError("record is not a JSON object", line_no)
    return record_from_fields(obj, line_no)


def record_to_obj(record: SubmissionRecord) -> dict[str, Any]:
    """Canonical record object; re-parsing it yields an identical record."""
    obj: dict[str, Any] = {
        "url": record.url,
        "positives": record.positives,
        "total": record.vendor_total,
        "scan_time": record.scan_time,
    }
    if record.content_hash is not None:
        obj["content_hash"] = record.content_hash
    return obj


def record_to_line(record: SubmissionRecord) -> str:
    return json.dumps(record_to_obj(record), sort_keys=True, separators=(",", ":"))


def ingest_stream(lines: Iterable[str | bytes], stats: IngestStats | None = None,
                  on_error=None) -> tuple[Iterator[SubmissionRecord], IngestStats]:
    """Stream records from raw lines, in order, skipping malformed ones.

    Returns the record iterator plus the stats object it updates while
    being consumed; counters are final once the iterator is exhausted.
    Byte lines that are not valid UTF-8 count as malformed. Lines whose
    JSON object carries the provenance key are file headers and are
    skipped without counting. ``on_error`` (if given) receives each
    RecordParseError.
    """
    if stats is None:
        stats = IngestStats()

    def generate() -> Iterator[SubmissionRecord]:
        for line_no, raw in enumerate(lines, 1):
            if isinstance(raw, bytes):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError:
                    stats.total_lines += 1
                    stats.malformed += 1
                    if on_error is not None:
                        on_error(RecordParseError("line is not valid UTF-8", line_no))
                    continue
            else:
                line = raw
            stripped = line.strip()
            if stripped.startswith("{") and PROVENANCE_KEY in stripped[:32]:
                try:
                    obj = json.loads(stripped)
                except ValueError:
                    obj = None
                if isinstance(obj, dict) and PROVENANCE_KEY in obj:
                    continue
            stats.total_lines += 1
            try:
                record = parse_record(stripped, line_no)
            except RecordParseError as exc:
                stats.malformed += 1
                if on_error is not None:
                    on_error(exc)
                continue
            stats.parsed_ok += 1
            if record.content_hash is None:
                stats.missing_hash += 1
            yield record

    return generate(), stats


def _csv_stream(path, stats: IngestStats, on_error=None) -> Iterator[SubmissionRecord]:
    required = ["url", "content_hash", "positives", "total", "scan_time"]
    try:
        f = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}", stats) from exc
    with f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestError(f"{path}: CSV header missing columns {missing}", stats)
        try:
            for row_no, row in enumerate(reader, 2):  # data starts after header
                stats.total_lines += 1
                try:
                    obj: dict[str, Any] = {
                        "url": row.get("url"),
                        "content_hash": row.get("content_hash") or None,
                        "scan_time": row.get("scan_time"),
                    }
                    for field in ("positives", "total"):
                        cell = (row.get(field) or "").strip()
                        if not cell.lstrip("-").isdigit():
                            raise RecordParseError(f"{field} is not an integer", row_no, field)
                        obj[field] = int(cell)
                    record = record_from_fields(obj, row_no)
                except RecordParseError as exc:
                    stats.malformed += 1
                    if on_error is not None:
                        on_error(exc)
                    continue
                stats.parsed_ok += 1
                if record.content_hash is None:
                    stats.missing_hash += 1
                yield record
        except (OSError, UnicodeDecodeError, csv.Error) as exc:
            raise IngestError(f"error reading {path}: {exc}", stats) from exc


def read_records(path, fmt: str | None = None,
                 on_error=None) -> tuple[Iterator[SubmissionRecord], IngestStats]:
    """Open a records file and stream (records, stats).

    Format is picked from the extension unless ``fmt`` is given:
    ``.csv`` uses the five-column CSV reader, anything else is treated
    as JSON lines. An unreadable source raises IngestError carrying the
    stats gathered so far.
    """
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "jsonl"
    stats = IngestStats()
    if fmt == "csv":
        return _csv_stream(path, stats, on_error), stats
    if fmt != "jsonl":
        raise ValueError(f"unknown format {fmt!r}")

    def jsonl_lines() -> Iterator[bytes]:
        try:
            f = open(path, "rb")
        except OSError as exc:
            raise IngestError(f"cannot open {path}: {exc}", stats) from exc
        with f:
            try:
                yield from f
            except OSError as exc:
                raise IngestError(f"error reading {path}: {exc}", stats) from exc

    records, _ = ingest_stream(jsonl_lines(), stats, on_error)
    return records, stats
