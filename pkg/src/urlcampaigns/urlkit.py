"""URL anatomy: scheme / sub-domain / domain / suffix / path.

Hostnames are decomposed against a public-suffix rule table (longest
match; ``*.`` wildcard and ``!`` exception rules) so the registrable
label is separated from registry-controlled tails such as ``com`` or
``co.uk``. A snapshot of the rule list is bundled with the package;
callers may load their own for reproducible decisions across runs.

URL equality throughout the pipeline means equality of
:func:`normalize_url` output: scheme and host are case-insensitive,
paths are not.
"""

from __future__ import annotations

import ipaddress
import re
from collections.abc import Iterable
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from urllib.parse import urlsplit

REGISTERED_NAME = "registered-name"
IP_LITERAL = "ip-literal"

_SCHEME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*$")


class UrlParseError(ValueError):
    """No usable host could be recovered from the URL."""


@dataclass(frozen=True, slots=True)
class ParsedUrl:
    """One URL split into its five anatomical parts.

    ``subdomain`` is the entire dotted string left of the registrable
    domain ("www.icloud.com" stays one value, it is not split further).
    ``path`` keeps query and fragment verbatim. For IP hosts the literal
    sits in ``domain`` and ``suffix`` is empty.
    """

    scheme: str
    subdomain: str
    domain: str
    suffix: str
    path: str
    host_kind: str = REGISTERED_NAME

    @property
    def host(self) -> str:
        return ".".join(p for p in (self.subdomain, self.domain, self.suffix) if p)

    @property
    def registrable_domain(self) -> str:
        if self.host_kind == IP_LITERAL or not self.suffix:
            return self.domain
        if not self.domain:
            return self.suffix
        return f"{self.domain}.{self.suffix}"


class SuffixTable:
    """Immutable public-suffix rule set with longest-match lookup.

    Safe to share across threads once constructed.
    """

    def __init__(self, exact: Iterable[str], wildcards: Iterable[str],
                 exceptions: Iterable[str], source_id: str = "inline"):
        self._exact = frozenset(exact)
        self._wildcards = frozenset(wildcards)   # "ck" for rule "*.ck"
        self._exceptions = frozenset(exceptions)  # "www.ck" for rule "!www.ck"
        self.source_id = source_id

    @property
    def rule_count(self) -> int:
        return len(self._exact) + len(self._wildcards) + len(self._exceptions)

    def suffix_of(self, host: str) -> str:
        """Longest matching public suffix of a lowercase hostname.

        Exception rules win outright (their suffix is the rule minus its
        leftmost label). A host matching no rule falls back to its last
        label. Always terminates: each iteration drops one label.
        """
        labels = host.split(".")
        n = len(labels)
        for i in range(n):
            candidate = ".".join(labels[i:])
            if candidate in self._exceptions:
                return ".".join(labels[i + 1:])
            if i + 1 < n and ".".join(labels[i + 1:]) in self._wildcards:
                return candidate
            if candidate in self._exact:
                return candidate
        return labels[-1]


def load_suffix_table(lines: Iterable[str], source_id: str = "custom") -> SuffixTable:
    """Build a SuffixTable from public-suffix-list text.

    Blank lines and ``//`` comments are ignored; a rule is the text up to
    the first whitespace, lowercased. An empty rule set is an error.
    """
    exact: set[str] = set()
    wildcards: set[str] = set()
    exceptions: set[str] = set()
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        rule = line.split()[0].lower()
        if rule.startswith("!"):
            exceptions.add(rule[1:])
        elif rule.startswith("*."):
            wildcards.add(rule[2:])
        elif rule and rule != "*":
            exact.add(rule)
    table = SuffixTable(exact, wildcards, exceptions, source_id)
    if table.rule_count == 0:
        raise ValueError("suffix table has no rules")
    return table


def load_suffix_file(path) -> SuffixTable:
    with open(path, "r", encoding="utf-8") as f:
        return load_suffix_table(f, source_id=str(path))


@lru_cache(maxsize=1)
def bundled_suffix_table() -> SuffixTable:
    """The suffix-rule snapshot shipped inside the package."""
    text = resources.files("urlcampaigns.data").joinpath("public_suffix_list.dat").read_text("utf-8")
    return load_suffix_table(text.splitlines(), source_id="bundled-snapshot")


def _split_authority(s: str):
    """Split a trimmed URL into (scheme, SplitResult), recovering hosts
    from scheme-less forms. Opaque scheme:path URLs (mailto:, data:) have
    no host and are rejected."""
    if "://" in s:
        sp = urlsplit(s)
        return sp.scheme.lower(), sp
    if s.startswith("//"):
        return "", urlsplit(s)
    head, sep, tail = s.partition(":")
    if sep and not tail[:1].isdigit() and _SCHEME_RE.match(head):
        raise UrlParseError(f"no host in {head}: URL")
    return "", urlsplit("//" + s)


def parse_url(raw: str, table: SuffixTable) -> ParsedUrl:
    """Decompose a URL into scheme/sub-domain/domain/suffix/path.

    Userinfo and port are stripped and retained nowhere; the host is
    lowercased and any trailing dot removed. The suffix is the longest
    matching rule in ``table``; the domain is the single label left of
    it; the sub-domain is everything left of that. Raises
    :class:`UrlParseError` when no host can be recovered or it is empty.
    """
    s = raw.strip()
    if not s:
        raise UrlParseError("empty URL")
    scheme, sp = _split_authority(s)
    try:
        host = sp.hostname
    except ValueError as e:
        raise UrlParseError(str(e)) from e
    if not host:
        raise UrlParseError("empty host")
    host = host.rstrip(".")
    if not host:
        raise UrlParseError("empty host")

    path = sp.path
    if sp.query:
        path += "?" + sp.query
    if sp.fragment:
        path += "#" + sp.fragment

    try:
        ipaddress.ip_address(host)
    except ValueError:
        pass
    else:
        return ParsedUrl(scheme, "", host, "", path, IP_LITERAL)

    suffix = table.suffix_of(host)
    if suffix == host:
        subdomain, domain = "", ""
    else:
        remainder = host[: -(len(suffix) + 1)]
        subdomain, _, domain = remainder.rpartition(".")
    return ParsedUrl(scheme, subdomain, domain, suffix, path, REGISTERED_NAME)


def recompose(parsed: ParsedUrl) -> str:
    """Reassemble a URL string from its parts (inverse of parse_url up to
    normalisation)."""
    host = parsed.host
    if parsed.host_kind == IP_LITERAL and ":" in host:
        host = f"[{host}]"
    prefix = f"{parsed.scheme}://" if parsed.scheme else "//"
    return f"{prefix}{host}{parsed.path}"


def normalize_url(raw: str) -> str:
    """Canonical URL form used for uniqueness everywhere in the pipeline.

    Trims surrounding whitespace and lowercases the scheme and host;
    path, query and fragment bytes are untouched. Idempotent. Strings
    without a ``://`` separator are returned trimmed only.
    """
    s = raw.strip()
    i = s.find("://")
    if i <= 0:
        return s
    scheme, rest = s[:i], s[i + 3:]
    end = len(rest)
    for ch in "/?#":
        j = rest.find(ch)
        if j != -1 and j < end:
            end = j
    netloc, tail = rest[:end], rest[end:]
    at = netloc.rfind("@")
    userinfo, hostport = (netloc[: at + 1], netloc[at + 1:]) if at != -1 else ("", netloc)
    if hostport.startswith("["):
        k = hostport.find("]")
        host, port = (hostport, "") if k == -1 else (hostport[: k + 1], hostport[k + 1:])
    else:
        k = hostport.rfind(":")
        if k != -1 and hostport[k + 1:].isdigit():
            host, port = hostport[:k], hostport[k:]
        else:
            host, port = hostport, ""
    return f"{scheme.lower()}://{userinfo}{host.lower()}{port}{tail}"


def extract_extension(parsed: ParsedUrl) -> str | None:
    """File-extension token of the last path segment, if it has one.

    Query and fragment are stripped first; the token after the final dot
    counts only when it is 1-5 ASCII alphanumeric characters. Returned
    lowercase.
    """
    path = parsed.path.split("?", 1)[0].split("#", 1)[0]
    segment = path.rsplit("/", 1)[-1]
    if "." not in segment:
        return None
    token = segment.rsplit(".", 1)[1].lower()
    if 1 <= len(token) <= 5 and token.isascii() and token.isalnum():
        return token
    return None
