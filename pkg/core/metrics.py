"""
Visibility estimators over a single sample.

    count       c(d, S)  citations to domain d in sample S
    share       s(d, S)  c(d, S) / C(S), C(S) = total citations in S
    prevalence  p(d, S)  fraction of the N responses citing d at least once

Also: per-response citation summaries, frequently-cited domain
classification, and the count/share/prevalence correlation diagnostic.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Sequence

import numpy as np
from scipy import stats

from core.corpus import check_single_series
from core.errors import EmptySample, SingleSample
from core.models import Sample, SampleKey

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainMetrics:
    domain: str
    count: int
    share: float
    prevalence: float
    responses_citing: int


@dataclass(frozen=True)
class SampleMetrics:
    key: SampleKey
    n_responses: int
    total_citations: int
    per_domain: Dict[str, DomainMetrics] = field(default_factory=dict)

    def shares(self) -> Dict[str, float]:
        return {d: m.share for d, m in self.per_domain.items()}

    def prevalences(self) -> Dict[str, float]:
        return {d: m.prevalence for d, m in self.per_domain.items()}

    def counts(self) -> Dict[str, int]:
        return {d: m.count for d, m in self.per_domain.items()}

    def share(self, domain: str) -> float:
        m = self.per_domain.get(domain)
        return m.share if m else 0.0

    def prevalence(self, domain: str) -> float:
        m = self.per_domain.get(domain)
        return m.prevalence if m else 0.0


@dataclass(frozen=True)
class CitationSummary:
    n: int
    mean: float
    median: float
    std: float
    min: float
    p25: float
    p75: float
    p95: float
    max: float


@dataclass(frozen=True)
class FrequentlyCitedSet:
    platform: str
    topic: str
    n_samples: int
    domains: FrozenSet[str]
    appearance_histogram: Dict[int, int]
    appearances: Dict[str, int] = field(default_factory=dict)
    min_fraction: float = 1.0

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.domains))

    def __len__(self) -> int:
        return len(self.domains)

    def __contains__(self, domain) -> bool:
        return domain in self.domains


@dataclass(frozen=True)
class MetricCorrelation:
    platform: str
    n_rows: int
    count_share: float
    count_prevalence: float
    share_prevalence: float


# ============================================================================
# PER-SAMPLE ESTIMATORS
# ============================================================================

def compute_sample_metrics(sample: Sample) -> SampleMetrics:
    """Exact counts, shares and prevalences for every cited domain."""
    n = sample.n_responses
    if n == 0:
        raise EmptySample(f"Sample {sample.key.label()} has no responses")

    counts: Counter = Counter()
    citing: Counter = Counter()
    for record in sample.responses:
        domains = [c.domain for c in record.citations]
        counts.update(domains)
        citing.update(set(domains))

    total = sum(counts.values())
    per_domain = {}
    for domain in sorted(counts):
        c = counts[domain]
        per_domain[domain] = DomainMetrics(
            domain=domain,
            count=c,
            share=c / total,
            prevalence=citing[domain] / n,
            responses_citing=citing[domain],
        )
    return SampleMetrics(key=sample.key, n_responses=n, total_citations=total, per_domain=per_domain)


def summarize_counts(counts: Sequence[int]) -> CitationSummary:
    """Summary of citations-per-response; linear-interpolation percentiles, n-1 std."""
    if len(counts) == 0:
        raise EmptySample("No responses to summarize")
    arr = np.asarray(counts, dtype=float)
    p25, median, p75, p95 = np.percentile(arr, [25, 50, 75, 95])
    return CitationSummary(
        n=len(arr),
        mean=float(arr.mean()),
        median=float(median),
        std=float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
        min=float(arr.min()),
        p25=float(p25),
        p75=float(p75),
        p95=float(p95),
        max=float(arr.max()),
    )


def citation_summary(sample: Sample) -> CitationSummary:
    return summarize_counts([r.n_citations for r in sample.responses])


# ============================================================================
# ACROSS SAMPLES
# ============================================================================

def classify_frequently_cited(samples: Sequence[Sample], min_fraction: float = 1.0) -> FrequentlyCitedSet:
    """Domains cited in (at least min_fraction of) every sample of one platform/topic.

    The histogram maps k -> number of domains cited in exactly k samples.
    """
    platform, topic = check_single_series(samples)
    if len(samples) < 2:
        raise SingleSample(f"Need at least 2 samples for {platform}/{topic}, got {len(samples)}")
    if not 0 < min_fraction <= 1:
        raise ValueError("min_fraction must be in (0, 1]")

    appearances: Counter = Counter()
    for sample in samples:
        cited = {c.domain for r in sample.responses for c in r.citations}
        appearances.update(cited)

    n = len(samples)
    needed = max(1, math.ceil(min_fraction * n - 1e-9))
    histogram = {k: 0 for k in range(1, n + 1)}
    for k in appearances.values():
        histogram[k] += 1
    domains = frozenset(d for d, k in appearances.items() if k >= needed)

    logger.debug(f"{platform}/{topic}: {len(domains)} frequently cited of {len(appearances)} domains")
    return FrequentlyCitedSet(
        platform=platform,
        topic=topic,
        n_samples=n,
        domains=domains,
        appearance_histogram=histogram,
        appearances=dict(sorted(appearances.items())),
        min_fraction=min_fraction,
    )


def cross_sample_mean(metrics: Sequence[SampleMetrics], domains: Iterable[str], metric: str = "share") -> Dict[str, float]:
    """Mean share (or prevalence) per domain across samples; absence counts as 0."""
    attr = getattr(metric, "value", metric)

    def value(m: SampleMetrics, d: str) -> float:
        dm = m.per_domain.get(d)
        return 0.0 if dm is None else float(getattr(dm, attr))

    return {
        d: float(np.mean([value(m, d) for m in metrics])) if metrics else 0.0
        for d in sorted(domains)
    }


def metric_correlations(metrics: Sequence[SampleMetrics]) -> List[MetricCorrelation]:
    """Spearman correlations among count, share and prevalence, pooled per platform.

    Rows are (sample, domain) pairs. Pooling across samples is what makes
    count and share rank differently; within one sample they agree exactly.
    """
    by_platform: Dict[str, List[tuple]] = {}
    for m in metrics:
        rows = by_platform.setdefault(m.key.platform, [])
        for dm in m.per_domain.values():
            rows.append((dm.count, dm.share, dm.prevalence))

    results = []
    for platform in sorted(by_platform):
        rows = np.array(by_platform[platform], dtype=float)
        if len(rows) < 3:
            logger.warning(f"{platform}: only {len(rows)} rows, skipping metric correlations")
            continue
        rho, _ = stats.spearmanr(rows)
        rho = np.atleast_2d(rho)
        results.append(MetricCorrelation(
            platform=platform,
            n_rows=len(rows),
            count_share=float(rho[0, 1]),
            count_prevalence=float(rho[0, 2]),
            share_prevalence=float(rho[1, 2]),
        ))
    return results
