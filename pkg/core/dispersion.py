"""
Log-space dispersion of domain shares across samples, and ranked share tables.

Dispersion is the sample standard deviation (n-1) of natural-log shares, so
a log-std of 0.5 means day-to-day shares typically move by a factor of about
e**0.5 = 1.65. Only meaningful for domains cited in every sample; a zero
share is an error, not something to filter quietly.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from core.errors import EmptySampleCitations, InsufficientRows, SingleSample, ZeroShare
from core.metrics import SampleMetrics
from core.models import SampleKey

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DispersionRecord:
    domain: str
    n_samples: int
    geometric_mean_share: float
    log_std: float
    fold_factor: float
    platform: str = ""
    topic: str = ""


@dataclass(frozen=True)
class DispersionSummary:
    platform: str
    topic: Optional[str]
    mean_log_std: float
    median_log_std: float
    n_domains: int


@dataclass(frozen=True)
class RankShareRow:
    rank: int
    domain: str
    share: float
    count: int


@dataclass(frozen=True)
class RankShareTable:
    key: SampleKey
    rows: List[RankShareRow] = field(default_factory=list)


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


# ============================================================================
# LOG-STD
# ============================================================================

def log_std(shares: Sequence[float], domain: str = "", platform: str = "", topic: str = "") -> DispersionRecord:
    if len(shares) < 2:
        raise SingleSample(f"log-std of {domain or 'domain'} needs >= 2 samples, got {len(shares)}")
    arr = np.asarray(shares, dtype=float)
    if np.any(arr <= 0):
        raise ZeroShare(domain)
    logs = np.log(arr)
    sd = float(np.std(logs, ddof=1))
    if np.all(arr == arr[0]):
        sd = 0.0
    return DispersionRecord(
        domain=domain,
        n_samples=len(arr),
        geometric_mean_share=float(math.exp(logs.mean())),
        log_std=sd,
        fold_factor=float(math.exp(sd)),
        platform=platform,
        topic=topic,
    )


def dispersion_records(metrics: Sequence[SampleMetrics], domains) -> List[DispersionRecord]:
    """One record per domain over the samples of one platform/topic."""
    if not metrics:
        return []
    platform, topic = metrics[0].key.platform, metrics[0].key.topic
    return [
        log_std([m.share(d) for m in metrics], domain=d, platform=platform, topic=topic)
        for d in sorted(domains)
    ]


def dispersion_summary(
    records: Sequence[DispersionRecord],
    by_topic: bool = False,
) -> List[DispersionSummary]:
    """Mean and median log-std per platform (or per platform and topic)."""
    if not records:
        return []
    df = pd.DataFrame([{"platform": r.platform, "topic": r.topic, "log_std": r.log_std} for r in records])
    keys = ["platform", "topic"] if by_topic else ["platform"]
    grouped = df.groupby(keys, sort=True)["log_std"].agg(["mean", "median", "count"]).reset_index()
    return [
        DispersionSummary(
            platform=row["platform"],
            topic=row["topic"] if by_topic else None,
            mean_log_std=float(row["mean"]),
            median_log_std=float(row["median"]),
            n_domains=int(row["count"]),
        )
        for _, row in grouped.iterrows()
    ]


# ============================================================================
# RANKED SHARES
# ============================================================================

def rank_share_table(metrics: SampleMetrics) -> RankShareTable:
    """Domains by descending share, ties broken by domain name."""
    if metrics.total_citations == 0 or not metrics.per_domain:
        raise EmptySampleCitations(f"Sample {metrics.key.label()} has no citations")
    ordered = sorted(metrics.per_domain.values(), key=lambda m: (-m.share, m.domain))
    rows = [
        RankShareRow(rank=i, domain=m.domain, share=m.share, count=m.count)
        for i, m in enumerate(ordered, start=1)
    ]
    return RankShareTable(key=metrics.key, rows=rows)


def loglog_fit(table: RankShareTable, rank_range: Tuple[int, Optional[int]] = (1, None)) -> LogLogFit:
    """OLS of ln(share) on ln(rank) over an inclusive rank range."""
    lo, hi = rank_range
    rows = [r for r in table.rows if r.rank >= lo and (hi is None or r.rank <= hi) and r.share > 0]
    if len(rows) < 3:
        raise InsufficientRows(f"log-log fit needs >= 3 ranks in {rank_range}, got {len(rows)}")
    x = np.log([r.rank for r in rows])
    y = np.log([r.share for r in rows])
    fit = stats.linregress(x, y)
    return LogLogFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
        n_points=len(rows),
    )
