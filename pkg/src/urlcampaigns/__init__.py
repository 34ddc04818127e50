"""Campaign analytics over URL-scan submission streams.

The pipeline groups scan submissions by the hash of the content their URLs
resolved to, promotes vendor-flagged groups to verified malicious campaigns
via a pluggable blocklist provider, computes per-campaign metrics, and
escalates future submissions that bear a known-malicious content hash.
"""

__version__ = "0.1.0"
