"""
Drift detection against a frozen baseline, and the content checksum ledger.

A domain is flagged between the baseline and a later sample only when both
hold: the per-domain 2x2 chi-squared test (domain vs. all other citations,
baseline vs. current; 1 dof, no continuity correction) gives p < alpha, AND
the absolute share change exceeds the practical threshold.

The ledger stores one SHA-256 per (url, job_id) in SQLite. Text is hashed as
UTF-8 after CRLF -> LF; nothing else is normalized.
"""

import hashlib
import json
import logging
import re
import sqlite3
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2_contingency

from core.errors import ConflictingHash, EmptySampleCitations, InvalidParameter, SchemaError
from core.metrics import SampleMetrics
from core.models import Sample

logger = logging.getLogger(__name__)

DEFAULT_DRIFT_ALPHA = 0.05
DEFAULT_PRACTICAL_DELTA = 0.02

_HEX64 = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class DriftFlag:
    domain: str
    baseline_job: str
    current_job: str
    baseline_share: float
    current_share: float
    chi2: float
    p_value: float
    share_delta: float
    flagged: bool
    low_count: bool = False


@dataclass(frozen=True)
class ChecksumRecord:
    url: str
    job_id: str
    sha256: str


class Status(str, Enum):
    UNCHANGED = "unchanged"
    CHANGED = "changed"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ContentStatus:
    domain: str
    job_id: str
    status: Status
    share: Optional[float] = None
    compared_urls: int = 0


# ============================================================================
# DRIFT TEST
# ============================================================================

def drift_test(
    baseline: SampleMetrics,
    current: SampleMetrics,
    alpha: float = DEFAULT_DRIFT_ALPHA,
    practical_threshold: float = DEFAULT_PRACTICAL_DELTA,
) -> List[DriftFlag]:
    """One DriftFlag per domain cited in either sample."""
    if not 0 < alpha < 1:
        raise InvalidParameter(f"alpha must be in (0, 1), got {alpha}")
    for m in (baseline, current):
        if m.total_citations == 0:
            raise EmptySampleCitations(f"Sample {m.key.label()} has no citations")

    n_base, n_cur = baseline.total_citations, current.total_citations
    flags = []
    for domain in sorted(set(baseline.per_domain) | set(current.per_domain)):
        a = baseline.per_domain[domain].count if domain in baseline.per_domain else 0
        b = current.per_domain[domain].count if domain in current.per_domain else 0
        table = np.array([[a, n_base - a], [b, n_cur - b]], dtype=float)
        try:
            stat, p_value, _, expected = chi2_contingency(table, correction=False)
            low_count = bool(np.any(expected < 5))
        except ValueError:
            # A zero row/column margin: the two samples cannot differ on this domain.
            stat, p_value, low_count = 0.0, 1.0, True
        share_a, share_b = a / n_base, b / n_cur
        delta = abs(share_b - share_a)
        flags.append(DriftFlag(
            domain=domain,
            baseline_job=baseline.key.job_id,
            current_job=current.key.job_id,
            baseline_share=share_a,
            current_share=share_b,
            chi2=float(stat),
            p_value=float(p_value),
            share_delta=delta,
            flagged=bool(p_value < alpha and delta > practical_threshold),
            low_count=low_count,
        ))

    n_flagged = sum(f.flagged for f in flags)
    n_low = sum(f.low_count for f in flags)
    if n_low:
        logger.debug(f"{current.key.label()}: {n_low} domains with expected cell count < 5")
    logger.debug(f"{baseline.key.job_id} -> {current.key.job_id}: {n_flagged}/{len(flags)} domains flagged")
    return flags


def drift_series(
    metrics: Sequence[SampleMetrics],
    alpha: float = DEFAULT_DRIFT_ALPHA,
    practical_threshold: float = DEFAULT_PRACTICAL_DELTA,
) -> List[DriftFlag]:
    """Every later sample against the first (frozen baseline)."""
    flags = []
    for current in metrics[1:]:
        flags.extend(drift_test(metrics[0], current, alpha, practical_threshold))
    return flags


def detect_span_drift(
    first: SampleMetrics,
    last: SampleMetrics,
    alpha: float = DEFAULT_DRIFT_ALPHA,
    practical_threshold: float = DEFAULT_PRACTICAL_DELTA,
    domains: Optional[Iterable[str]] = None,
) -> bool:
    """True when any (optionally restricted) domain is flagged first -> last."""
    keep = set(domains) if domains is not None else None
    return any(
        f.flagged for f in drift_test(first, last, alpha, practical_threshold)
        if keep is None or f.domain in keep
    )


# ============================================================================
# CHECKSUM LEDGER
# ============================================================================

def hash_text(text: str) -> str:
    return hashlib.sha256(text.replace("\r\n", "\n").encode("utf-8")).hexdigest()


class ChecksumLedger:
    """SQLite-backed (url, job_id) -> sha256 store. ``":memory:"`` by default."""

    def __init__(self, path=":memory:"):
        if path != ":memory:":
            Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(str(path))
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS checksums (
                url     TEXT NOT NULL,
                job_id  TEXT NOT NULL,
                sha256  TEXT NOT NULL,
                PRIMARY KEY (url, job_id)
            )
        """)
        self.conn.commit()

    def add(self, record: ChecksumRecord) -> bool:
        """Insert a record. Returns False if an identical record already exists."""
        try:
            self.conn.execute(
                "INSERT INTO checksums (url, job_id, sha256) VALUES (?, ?, ?)",
                (record.url, record.job_id, record.sha256),
            )
            self.conn.commit()
            return True
        except sqlite3.IntegrityError:
            existing = self.get(record.url, record.job_id)
            if existing != record.sha256:
                raise ConflictingHash(record.url, record.job_id, existing, record.sha256)
            return False

    def get(self, url: str, job_id: str) -> Optional[str]:
        row = self.conn.execute(
            "SELECT sha256 FROM checksums WHERE url = ? AND job_id = ?", (url, job_id)
        ).fetchone()
        return row[0] if row else None

    def for_job(self, job_id: str) -> Dict[str, str]:
        rows = self.conn.execute("SELECT url, sha256 FROM checksums WHERE job_id = ?", (job_id,))
        return dict(rows.fetchall())

    def __len__(self) -> int:
        return self.conn.execute("SELECT COUNT(*) FROM checksums").fetchone()[0]

    def close(self) -> None:
        self.conn.close()


def to_checksum_record(obj: dict, line_no: int = 0) -> ChecksumRecord:
    """Validate one checksum object: url, job_id and either sha256 or text."""
    for name in ("url", "job_id"):
        if not isinstance(obj.get(name), str) or not obj[name]:
            raise SchemaError(line_no, "missing or not a string", field=name)
    if isinstance(obj.get("sha256"), str):
        digest = obj["sha256"].strip().lower()
        if not _HEX64.match(digest):
            raise SchemaError(line_no, "must be 64 hex characters", field="sha256")
    elif isinstance(obj.get("text"), str):
        digest = hash_text(obj["text"])
    else:
        raise SchemaError(line_no, "one of 'sha256' or 'text' is required", field="sha256")
    return ChecksumRecord(url=obj["url"], job_id=obj["job_id"], sha256=digest)


def ingest_checksums(records: Iterable, ledger: Optional[ChecksumLedger] = None) -> ChecksumLedger:
    """Load (url, job_id, text|sha256) records into a ledger."""
    ledger = ledger if ledger is not None else ChecksumLedger()
    added = 0
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, ChecksumRecord):
            rec = to_checksum_record(rec, i)
        added += ledger.add(rec)
    logger.info(f"Checksum ledger: {added} new records ({len(ledger)} total)")
    return ledger


def load_checksums(path, ledger: Optional[ChecksumLedger] = None) -> ChecksumLedger:
    def _records():
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise SchemaError(line_no, f"invalid JSON: {e.msg}")
                yield to_checksum_record(obj, line_no)

    return ingest_checksums(_records(), ledger)


# ============================================================================
# CONTENT STATUS
# ============================================================================

def _domain_urls(sample: Sample, domain: str) -> set:
    return {c.url for r in sample.responses for c in r.citations if c.domain == domain}


def _domain_share(sample: Sample, domain: str) -> float:
    total = sum(r.n_citations for r in sample.responses)
    if total == 0:
        return 0.0
    hits = sum(1 for r in sample.responses for c in r.citations if c.domain == domain)
    return hits / total


def content_status(ledger: ChecksumLedger, samples: Sequence[Sample], domain: str) -> List[ContentStatus]:
    """Per-job status of a domain's cited pages relative to the previous job.

    ``samples`` must be in job order. The first job is always unknown; a job
    is changed when any URL cited for the domain (in either job) hashes
    differently in the two jobs, unchanged when every comparable URL matches,
    and unknown when no URL has a checksum in both jobs.
    """
    statuses = []
    for i, sample in enumerate(samples):
        job = sample.key.job_id
        share = _domain_share(sample, domain)
        if i == 0:
            statuses.append(ContentStatus(domain, job, Status.UNKNOWN, share, 0))
            continue

        prev = samples[i - 1]
        urls = _domain_urls(sample, domain) | _domain_urls(prev, domain)
        before = ledger.for_job(prev.key.job_id)
        after = ledger.for_job(job)
        pairs: List[Tuple[str, str]] = [(before[u], after[u]) for u in sorted(urls) if u in before and u in after]

        if not pairs:
            status = Status.UNKNOWN
        elif any(h0 != h1 for h0, h1 in pairs):
            status = Status.CHANGED
        else:
            status = Status.UNCHANGED
        statuses.append(ContentStatus(domain, job, status, share, len(pairs)))
    return statuses
