"""
Dataset ingestion, validation and registered-domain extraction.

Input is JSONL, one ResponseRecord per line:

    {"platform": str, "topic": str, "job_id": str, "timestamp": RFC3339,
     "query_id": str, "query_text": str, "response_id": str,
     "citations": [{"url": str, "domain": str (optional)}]}

Bad lines are collected as SchemaError diagnostics and skipped; parsing only
fails outright when nothing at all could be read.
"""

import hashlib
import ipaddress
import json
import logging
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from urllib.parse import urlsplit

import tldextract

from core.errors import (
    DuplicateResponse,
    IpHost,
    MalformedUrl,
    MixedKeys,
    NoRepeatedQueries,
    NoValidLines,
    SchemaError,
)
from core.models import CitationRef, Dataset, ResponseRecord, Sample, SampleKey, SourceFile

logger = logging.getLogger(__name__)

# Bundled public-suffix snapshot only: no network fetch, no on-disk cache.
_EXTRACT = tldextract.TLDExtract(
    suffix_list_urls=(),
    cache_dir=None,
    include_psl_private_domains=False,
)

_LABEL_FIELDS = ("platform", "topic", "job_id", "query_id", "response_id")


# ============================================================================
# DOMAIN EXTRACTION
# ============================================================================

def extract_domain(url: str) -> str:
    """Return the registered domain (eTLD+1) of an absolute http(s) URL.

    A single leading "www." label is stripped before suffix resolution.
    Hosts that match no suffix rule fall back to their last two labels.
    """
    if not isinstance(url, str) or not url.strip():
        raise MalformedUrl(str(url), "empty")
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname
        parts.port  # raises ValueError on a garbage port
    except ValueError as e:
        raise MalformedUrl(url, str(e))

    if parts.scheme.lower() not in ("http", "https"):
        raise MalformedUrl(url, "scheme must be http or https")
    if not host:
        raise MalformedUrl(url, "no host")

    host = host.rstrip(".").lower()
    try:
        ipaddress.ip_address(host)
    except ValueError:
        pass
    else:
        raise IpHost(url, host)

    if host.startswith("www."):
        host = host[4:]
    if "." not in host:
        raise MalformedUrl(url, f"host {host!r} has no registrable domain")

    ext = _EXTRACT(host)
    if ext.domain and ext.suffix:
        return f"{ext.domain}.{ext.suffix}"

    # No suffix rule matched (or host is a bare suffix): last two labels.
    labels = [lab for lab in host.split(".") if lab]
    if len(labels) < 2:
        raise MalformedUrl(url, f"host {host!r} has no registrable domain")
    return ".".join(labels[-2:])


# ============================================================================
# LINE PARSING
# ============================================================================

def normalize_label(value: str, lower: bool = False) -> str:
    value = unicodedata.normalize("NFC", value).strip()
    return value.lower() if lower else value


def parse_timestamp(raw: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_citations(raw, line_no: int) -> Tuple[Tuple[CitationRef, ...], bool]:
    if not isinstance(raw, list):
        raise SchemaError(line_no, "must be a list", field="citations")

    citations = []
    repaired = False
    for i, item in enumerate(raw):
        where = f"citations[{i}]"
        if not isinstance(item, dict) or not isinstance(item.get("url"), str):
            raise SchemaError(line_no, "expected an object with a string 'url'", field=where)
        url = item["url"].strip()
        try:
            domain = extract_domain(url)
        except (MalformedUrl, IpHost) as e:
            raise SchemaError(line_no, str(e), field=f"{where}.url")

        given = item.get("domain")
        if given is None or not isinstance(given, str) or given.strip().lower() != domain:
            if given is not None:
                logger.debug(f"line {line_no}: {where}.domain {given!r} replaced by {domain!r}")
            repaired = True
        citations.append(CitationRef(url=url, domain=domain))
    return tuple(citations), repaired


def parse_line(line: str, line_no: int) -> Tuple[ResponseRecord, bool]:
    """Parse one JSONL line. Returns (record, repaired)."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(line_no, f"invalid JSON: {e.msg}")
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "expected a JSON object")

    values = {}
    for name in _LABEL_FIELDS + ("query_text", "timestamp"):
        value = obj.get(name)
        if not isinstance(value, str):
            raise SchemaError(line_no, "missing or not a string", field=name)
        values[name] = value
    for name in _LABEL_FIELDS:
        values[name] = normalize_label(values[name], lower=name in ("platform", "topic"))
        if not values[name]:
            raise SchemaError(line_no, "must be non-empty", field=name)

    try:
        ts = parse_timestamp(values["timestamp"])
    except ValueError as e:
        raise SchemaError(line_no, f"bad RFC 3339 timestamp: {e}", field="timestamp")

    citations, repaired = _parse_citations(obj.get("citations"), line_no)

    record = ResponseRecord(
        platform=values["platform"],
        topic=values["topic"],
        job_id=values["job_id"],
        timestamp=ts,
        query_id=values["query_id"],
        query_text=unicodedata.normalize("NFC", values["query_text"]),
        response_id=values["response_id"],
        citations=citations,
    )
    return record, repaired


# ============================================================================
# DATASET ASSEMBLY
# ============================================================================

@dataclass
class ParseResult:
    dataset: Dataset
    accepted: int = 0
    repaired: int = 0
    rejected: int = 0
    errors: List[SchemaError] = field(default_factory=list)


class _DatasetBuilder:
    """Accumulates records across one or more input streams."""

    def __init__(self):
        self._responses: Dict[SampleKey, List[ResponseRecord]] = {}
        self._seen = set()
        self.accepted = 0
        self.repaired = 0
        self.errors: List[SchemaError] = []

    def feed(self, lines: Iterable[str], source: str = "<input>") -> int:
        n_lines = 0
        for line_no, line in enumerate(lines, start=1):
            n_lines += 1
            if not line.strip():
                continue
            try:
                record, repaired = parse_line(line, line_no)
                ident = (record.key, record.response_id)
                if ident in self._seen:
                    raise DuplicateResponse(line_no, record.key, record.response_id)
            except SchemaError as e:
                logger.debug(f"{source}: {e}")
                self.errors.append(e)
                continue
            self._seen.add(ident)
            self._responses.setdefault(record.key, []).append(record)
            self.accepted += 1
            if repaired:
                self.repaired += 1
        return n_lines

    def build(self, provenance: Sequence[SourceFile], job_order: Optional[Sequence[str]]) -> ParseResult:
        if self.accepted == 0:
            raise NoValidLines(len(self.errors))
        samples = {k: Sample(k, tuple(v)) for k, v in self._responses.items()}
        order = order_jobs({k.job_id for k in samples}, job_order)
        dataset = Dataset(samples=samples, provenance=tuple(provenance), job_order=order)
        if self.errors:
            logger.warning(f"Rejected {len(self.errors)} input lines (first: {self.errors[0]})")
        logger.info(
            f"Parsed {self.accepted} responses into {len(samples)} samples "
            f"({self.repaired} repaired, {len(self.errors)} rejected)"
        )
        return ParseResult(
            dataset=dataset,
            accepted=self.accepted,
            repaired=self.repaired,
            rejected=len(self.errors),
            errors=list(self.errors),
        )


def order_jobs(job_ids: Iterable[str], job_order: Optional[Sequence[str]] = None) -> Tuple[str, ...]:
    """Total order on jobs: the supplied order first, the rest lexicographically."""
    ids = set(job_ids)
    listed = []
    for job_id in job_order or ():
        if job_id in ids and job_id not in listed:
            listed.append(job_id)
    rest = sorted(ids - set(listed))
    if job_order and rest:
        logger.warning(f"{len(rest)} jobs missing from job order, appended lexicographically: {rest}")
    return tuple(listed) + tuple(rest)


def parse_dataset(
    lines: Iterable[str],
    job_order: Optional[Sequence[str]] = None,
    source: str = "<input>",
) -> ParseResult:
    """Parse a JSONL record stream into a Dataset plus line counts."""
    builder = _DatasetBuilder()
    n = builder.feed(lines, source=source)
    return builder.build([SourceFile(source, "", n)], job_order)


def read_job_order(path) -> List[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [normalize_label(line) for line in text.splitlines() if line.strip()]


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_dataset(paths: Sequence, job_order_path=None) -> ParseResult:
    """Parse one or more JSONL files into a single Dataset."""
    builder = _DatasetBuilder()
    provenance = []
    for path in paths:
        path = Path(path)
        with open(path, encoding="utf-8") as f:
            n = builder.feed(f, source=str(path))
        provenance.append(SourceFile(path.name, file_sha256(path), n))
    job_order = read_job_order(job_order_path) if job_order_path else None
    return builder.build(provenance, job_order)


# ============================================================================
# SERIALIZATION
# ============================================================================

def record_to_dict(record: ResponseRecord) -> dict:
    return {
        "platform": record.platform,
        "topic": record.topic,
        "job_id": record.job_id,
        "timestamp": format_timestamp(record.timestamp),
        "query_id": record.query_id,
        "query_text": record.query_text,
        "response_id": record.response_id,
        "citations": [{"url": c.url, "domain": c.domain} for c in record.citations],
    }


def serialize_dataset(dataset: Dataset) -> List[str]:
    """JSONL lines, samples in (platform, topic, job order) order."""
    lines = []
    for platform, topic in dataset.series_keys():
        for sample in dataset.series(platform, topic):
            for record in sample.responses:
                lines.append(json.dumps(record_to_dict(record), ensure_ascii=False))
    return lines


def write_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in serialize_dataset(dataset):
            f.write(line + "\n")
    return path


def write_job_order(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{j}\n" for j in dataset.job_order), encoding="utf-8")
    return path


# ============================================================================
# REPEATED QUERIES
# ============================================================================

def check_single_series(samples: Sequence[Sample]) -> Tuple[str, str]:
    series = {s.key.series for s in samples}
    if len(series) > 1:
        raise MixedKeys(f"Samples span several platform/topic pairs: {sorted(series)}")
    if not series:
        raise NoRepeatedQueries("No samples supplied")
    return series.pop()


def group_repeated_queries(
    samples: Sequence[Sample],
    include_duplicates: bool = False,
) -> Dict[str, List[ResponseRecord]]:
    """Map query_id to its runs, one per sample, for queries seen in >= 2 samples.

    Samples are taken in the order given (job order). A query asked more
    than once inside one sample keeps its first occurrence unless
    ``include_duplicates`` is set.
    """
    check_single_series(samples)

    runs: Dict[str, List[ResponseRecord]] = {}
    sample_count: Dict[str, int] = {}
    for sample in samples:
        seen_here = set()
        for record in sample.responses:
            qid = record.query_id
            if qid in seen_here and not include_duplicates:
                continue
            if qid not in seen_here:
                sample_count[qid] = sample_count.get(qid, 0) + 1
            seen_here.add(qid)
            runs.setdefault(qid, []).append(record)

    grouped = {qid: runs[qid] for qid in sorted(runs) if sample_count[qid] >= 2}
    if not grouped:
        raise NoRepeatedQueries(
            f"No query_id appears in two or more of {len(samples)} samples"
        )
    return grouped
