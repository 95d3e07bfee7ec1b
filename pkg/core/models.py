"""
Shared data models for the citation-visibility toolkit.

All records are frozen: a Dataset is built once by the corpus parser (or the
synthetic engine) and then only read by the analysis modules.
"""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Tuple


@dataclass(frozen=True)
class CitationRef:
    """One cited URL and its registered domain (eTLD+1)."""
    url: str
    domain: str


@dataclass(frozen=True, order=True)
class SampleKey:
    """Identity of one collection job: the unit S of every estimator."""
    platform: str
    topic: str
    job_id: str

    def __post_init__(self):
        for name in ("platform", "topic", "job_id"):
            if not getattr(self, name):
                raise ValueError(f"SampleKey.{name} must be non-empty")

    @property
    def series(self) -> Tuple[str, str]:
        return (self.platform, self.topic)

    def label(self) -> str:
        return f"{self.platform}/{self.topic}/{self.job_id}"


@dataclass(frozen=True)
class ResponseRecord:
    """A single synthesized answer to a single query."""
    platform: str
    topic: str
    job_id: str
    timestamp: datetime            # timezone-aware, UTC
    query_id: str
    query_text: str
    response_id: str
    citations: Tuple[CitationRef, ...] = ()

    @property
    def key(self) -> SampleKey:
        return SampleKey(self.platform, self.topic, self.job_id)

    @property
    def n_citations(self) -> int:
        return len(self.citations)


@dataclass(frozen=True)
class Sample:
    key: SampleKey
    responses: Tuple[ResponseRecord, ...] = ()

    def __post_init__(self):
        for r in self.responses:
            if r.key != self.key:
                raise ValueError(
                    f"Response {r.response_id} belongs to {r.key.label()}, not {self.key.label()}"
                )

    @property
    def n_responses(self) -> int:
        return len(self.responses)

    def head(self, n: int) -> "Sample":
        """Sample restricted to its first n responses (collection order)."""
        return Sample(self.key, self.responses[:n])


@dataclass(frozen=True)
class SourceFile:
    """Provenance of one ingested file."""
    path: str
    sha256: str
    lines: int


@dataclass(frozen=True)
class Dataset:
    """Samples keyed by SampleKey, plus provenance and an explicit job order.

    ``job_order`` lists job_ids earliest first. Jobs not named there sort
    after it, lexicographically.
    """
    samples: Dict[SampleKey, Sample] = field(default_factory=dict)
    provenance: Tuple[SourceFile, ...] = ()
    job_order: Tuple[str, ...] = ()

    @property
    def n_responses(self) -> int:
        return sum(s.n_responses for s in self.samples.values())

    def job_rank(self, job_id: str) -> Tuple[int, str]:
        if job_id in self.job_order:
            return (self.job_order.index(job_id), "")
        return (len(self.job_order), job_id)

    def series_keys(self) -> List[Tuple[str, str]]:
        """Distinct (platform, topic) pairs, sorted."""
        return sorted({k.series for k in self.samples})

    def series(self, platform: str, topic: str) -> List[Sample]:
        """Samples of one (platform, topic) in job order."""
        keys = [k for k in self.samples if k.series == (platform, topic)]
        keys.sort(key=lambda k: self.job_rank(k.job_id))
        return [self.samples[k] for k in keys]

    def get(self, platform: str, topic: str, job_id: str) -> Optional[Sample]:
        return self.samples.get(SampleKey(platform, topic, job_id))
