"""Provenance-aware JSON-lines I/O shared by every pipeline stage.

Each output file starts with one header record keyed ``_provenance``
(tool, version, config digest, creation time); readers skip it. The
creation time is the only wall-clock field any stage writes, so outputs
are byte-reproducible given the same inputs, config, and a pinned
``created`` value.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Iterator
from typing import Any

from . import __version__

PROVENANCE_KEY = "_provenance"
TOOL_NAME = "urlcampaigns"


def config_digest(config: dict[str, Any] | None) -> str:
    blob = json.dumps(config or {}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def provenance_header(config: dict[str, Any] | None = None, created: str = "") -> dict[str, Any]:
    return {
        PROVENANCE_KEY: {
            "tool": TOOL_NAME,
            "version": __version__,
            "config_digest": config_digest(config),
            "created": created,
        }
    }


def dump_line(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def jsonl_bytes(rows: Iterable[dict[str, Any]], config: dict[str, Any] | None = None,
                created: str = "") -> bytes:
    """Serialise header + rows to the canonical JSONL byte form."""
    out = [dump_line(provenance_header(config, created))]
    out.extend(dump_line(row) for row in rows)
    out.append("")
    return "\n".join(out).encode("utf-8")


def write_jsonl(path, rows: Iterable[dict[str, Any]], config: dict[str, Any] | None = None,
                created: str = "") -> int:
    """Write a provenance-headed JSONL file; returns the data-row count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_line(provenance_header(config, created)) + "\n")
        for row in rows:
            f.write(dump_line(row) + "\n")
            count += 1
    return count


def iter_jsonl(path) -> Iterator[dict[str, Any]]:
    """Yield data records from a JSONL file, skipping provenance headers."""
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if isinstance(obj, dict) and PROVENANCE_KEY in obj:
                continue
            yield obj


def csv_comment_header(config: dict[str, Any] | None = None, created: str = "") -> str:
    """Provenance header as a '#' comment line for CSV outputs."""
    return "# " + dump_line(provenance_header(config, created))
