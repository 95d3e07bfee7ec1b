"""
Citation-set similarity across repeated runs of the same query.

Similarity is measured at the registered-domain level: two runs agree on a
domain when both cite at least one URL from it.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from core.errors import NoRepeatedQueries, SingleRun
from core.models import ResponseRecord

logger = logging.getLogger(__name__)

HISTOGRAM_EDGES = np.linspace(0.0, 1.0, 21)   # 0.05-wide bins


@dataclass(frozen=True)
class PairRecord:
    query_id: str
    sample_a: str
    sample_b: str
    jaccard: float
    intersection: int
    union: int


@dataclass(frozen=True)
class OverlapSummary:
    platform: str
    topic: str
    n_queries: int
    n_pairs: int
    median_jaccard: float
    identical_rate: float
    zero_overlap_rate: float
    mean_intersection: float
    mean_unique_domains: float
    histogram: Tuple[int, ...] = ()
    bin_edges: Tuple[float, ...] = tuple(HISTOGRAM_EDGES.tolist())


@dataclass(frozen=True)
class SimilarityBin:
    modal_count: int
    median_jaccard: float
    pair_count: int
    p25: float
    p75: float


@dataclass(frozen=True)
class SimilarityByCount:
    bins: List[SimilarityBin] = field(default_factory=list)


def domain_set(response: ResponseRecord) -> Set[str]:
    return {c.domain for c in response.citations}


def jaccard(x: Set[str], y: Set[str]) -> float:
    """|X & Y| / |X | Y|; two empty sets are identical (1.0)."""
    union = len(x | y)
    if union == 0:
        return 1.0
    return len(x & y) / union


def pair_records(query_id: str, responses: Sequence[ResponseRecord]) -> List[PairRecord]:
    if len(responses) < 2:
        raise SingleRun(f"Query {query_id!r} has {len(responses)} run(s); need at least 2")
    sets = [domain_set(r) for r in responses]
    records = []
    for i, j in combinations(range(len(responses)), 2):
        x, y = sets[i], sets[j]
        records.append(PairRecord(
            query_id=query_id,
            sample_a=responses[i].job_id,
            sample_b=responses[j].job_id,
            jaccard=jaccard(x, y),
            intersection=len(x & y),
            union=len(x | y),
        ))
    return records


def pairwise_jaccard(responses: Sequence[ResponseRecord]) -> List[float]:
    """Jaccard for every unordered pair of runs of one query."""
    qid = responses[0].query_id if responses else ""
    return [p.jaccard for p in pair_records(qid, responses)]


def all_pair_records(grouped: Dict[str, List[ResponseRecord]]) -> List[PairRecord]:
    if not grouped:
        raise NoRepeatedQueries("No repeated queries to compare")
    records = []
    for qid in sorted(grouped):
        records.extend(pair_records(qid, grouped[qid]))
    return records


def overlap_summary(grouped: Dict[str, List[ResponseRecord]]) -> OverlapSummary:
    """Median Jaccard, identical and zero-overlap rates, mean intersection/union sizes."""
    records = all_pair_records(grouped)
    j = np.array([p.jaccard for p in records], dtype=float)
    first = next(iter(grouped.values()))[0]
    hist, _ = np.histogram(j, bins=HISTOGRAM_EDGES)

    summary = OverlapSummary(
        platform=first.platform,
        topic=first.topic,
        n_queries=len(grouped),
        n_pairs=len(records),
        median_jaccard=float(np.median(j)),
        identical_rate=float(np.mean(j == 1.0)),
        zero_overlap_rate=float(np.mean(j == 0.0)),
        mean_intersection=float(np.mean([p.intersection for p in records])),
        mean_unique_domains=float(np.mean([p.union for p in records])),
        histogram=tuple(int(h) for h in hist),
    )
    logger.info(
        f"{summary.platform}/{summary.topic}: {summary.n_pairs} pairs over {summary.n_queries} queries, "
        f"median Jaccard {summary.median_jaccard:.3f}"
    )
    return summary


def modal_count(counts: Sequence[int]) -> int:
    """Most frequent value; ties resolve to the smallest."""
    tally = Counter(counts)
    best = max(tally.values())
    return min(c for c, k in tally.items() if k == best)


def similarity_by_count(grouped: Dict[str, List[ResponseRecord]]) -> SimilarityByCount:
    """Pair Jaccards binned by each query's modal citations-per-response."""
    if not grouped:
        raise NoRepeatedQueries("No repeated queries to compare")
    by_mode: Dict[int, List[float]] = {}
    for qid in sorted(grouped):
        runs = grouped[qid]
        mode = modal_count([r.n_citations for r in runs])
        by_mode.setdefault(mode, []).extend(pairwise_jaccard(runs))

    bins = []
    for mode in sorted(by_mode):
        values = np.array(by_mode[mode], dtype=float)
        p25, med, p75 = np.percentile(values, [25, 50, 75])
        bins.append(SimilarityBin(
            modal_count=mode,
            median_jaccard=float(med),
            pair_count=len(values),
            p25=float(p25),
            p75=float(p75),
        ))
    return SimilarityByCount(bins=bins)
