"""
Distribution-wide rank stability between samples.

The correlation is a weighted Spearman: domains are ranked by share in each
sample (rank 1 = highest share, average ranks for ties), and the weighted
Pearson correlation of the two rank vectors is taken with weight
w_d = (share_a(d) + share_b(d)) / 2. Uncertainty comes from a domain-level
bootstrap over the frequently-cited set; a domain drawn k times carries
weight k * w_d.
"""

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from core.errors import DegenerateRanks, InvalidParameter, SingleSample, TooFewDomains, VisibilityError
from core.metrics import SampleMetrics, compute_sample_metrics
from core.models import Sample, SampleKey
from core.resample import DEFAULT_ALPHA, DEFAULT_B, DEFAULT_SEED, bootstrap_generic, derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilityThresholds:
    sufficiency: float = 0.25   # max CI width for a pair to count
    stability: float = 0.9      # min rho for a sufficient pair to be stable


@dataclass(frozen=True)
class RankStabilityResult:
    sample_a: SampleKey
    sample_b: SampleKey
    rho: float
    ci_lower: float
    ci_upper: float
    ci_width: float
    sufficient: bool
    stable: bool
    n_domains: int
    B: int
    seed: int
    excluded: int = 0
    error: Optional[str] = None

    @property
    def point_outside(self) -> bool:
        return self.error is None and not (self.ci_lower <= self.rho <= self.ci_upper)


@dataclass(frozen=True)
class StabilitySeries:
    pairs: List[RankStabilityResult]
    span: RankStabilityResult
    mean_rho: Optional[float]
    mean_ci_width: Optional[float]
    n_sufficient: int = 0
    n_stable: int = 0
    span_drift_detected: Optional[bool] = None

    def with_span_drift(self, detected: bool) -> "StabilitySeries":
        return replace(self, span_drift_detected=bool(detected))


# ============================================================================
# WEIGHTED SPEARMAN
# ============================================================================

def _weighted_pearson(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    mx = np.average(x, weights=w)
    my = np.average(y, weights=w)
    dx, dy = x - mx, y - my
    var_x = np.average(dx * dx, weights=w)
    var_y = np.average(dy * dy, weights=w)
    if var_x <= 1e-15 or var_y <= 1e-15:
        raise DegenerateRanks("all ranks tied in at least one sample; correlation undefined")
    cov = np.average(dx * dy, weights=w)
    return float(np.clip(cov / np.sqrt(var_x * var_y), -1.0, 1.0))


def weighted_spearman(
    shares_a: Dict[str, float],
    shares_b: Dict[str, float],
    domains: Sequence[str],
    weights: Dict[str, float],
) -> float:
    """Weighted Pearson correlation of the share ranks of ``domains`` in two samples.

    Missing shares count as 0. Equals classical Spearman under equal weights.
    """
    if len(domains) == 0:
        raise InvalidParameter("weighted_spearman needs at least one domain")
    w = np.array([weights[d] for d in domains], dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidParameter("weights must be positive and finite")
    a = np.array([shares_a.get(d, 0.0) for d in domains], dtype=float)
    b = np.array([shares_b.get(d, 0.0) for d in domains], dtype=float)
    return _weighted_pearson(rankdata(-a, method="average"), rankdata(-b, method="average"), w)


def mean_share_weights(shares_a: Dict[str, float], shares_b: Dict[str, float], domains) -> Dict[str, float]:
    return {d: (shares_a.get(d, 0.0) + shares_b.get(d, 0.0)) / 2 for d in domains}


# ============================================================================
# PAIRS
# ============================================================================

def _as_metrics(item: Union[Sample, SampleMetrics]) -> SampleMetrics:
    return item if isinstance(item, SampleMetrics) else compute_sample_metrics(item)


def rank_stability_pair(
    sample_a,
    sample_b,
    domains,
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
    thresholds: StabilityThresholds = StabilityThresholds(),
) -> RankStabilityResult:
    """Point rho over ``domains`` plus a domain-bootstrap percentile CI.

    Replicates that draw a single distinct domain (or all-tied ranks) are
    undefined and excluded; the count is reported in ``excluded``.
    """
    ma, mb = _as_metrics(sample_a), _as_metrics(sample_b)
    shares_a, shares_b = ma.shares(), mb.shares()
    weights = mean_share_weights(shares_a, shares_b, sorted(set(domains)))

    zero = sorted(d for d, w in weights.items() if w <= 0)
    if zero:
        logger.warning(f"{ma.key.label()} vs {mb.key.label()}: {len(zero)} domains uncited in both, dropped")
        for d in zero:
            del weights[d]
    pool = sorted(weights)
    if len(pool) < 3:
        raise TooFewDomains(f"rank stability needs >= 3 domains, got {len(pool)}")

    def statistic(drawn: List[str]) -> float:
        multiplicity = Counter(drawn)
        distinct = sorted(multiplicity)
        if len(distinct) < 2:
            raise DegenerateRanks("resample holds a single distinct domain")
        w = {d: multiplicity[d] * weights[d] for d in distinct}
        return weighted_spearman(shares_a, shares_b, distinct, w)

    ci = bootstrap_generic(pool, statistic, B=B, alpha=alpha, seed=seed,
                           on_undefined="exclude", name="weighted_spearman")
    sufficient = ci.width <= thresholds.sufficiency
    return RankStabilityResult(
        sample_a=ma.key,
        sample_b=mb.key,
        rho=ci.point,
        ci_lower=ci.lower,
        ci_upper=ci.upper,
        ci_width=ci.width,
        sufficient=sufficient,
        stable=sufficient and ci.point >= thresholds.stability,
        n_domains=len(pool),
        B=B,
        seed=seed,
        excluded=ci.excluded,
    )


def _failed_pair(a: SampleKey, b: SampleKey, B: int, seed: int, error: Exception) -> RankStabilityResult:
    nan = float("nan")
    return RankStabilityResult(
        sample_a=a, sample_b=b, rho=nan, ci_lower=nan, ci_upper=nan, ci_width=nan,
        sufficient=False, stable=False, n_domains=0, B=B, seed=seed, error=str(error),
    )


def _pair_or_error(ma, mb, domains, B, alpha, seed, thresholds) -> RankStabilityResult:
    pair_seed = derive_seed(seed, "rank-stability", ma.key.job_id, mb.key.job_id)
    try:
        return rank_stability_pair(ma, mb, domains, B=B, alpha=alpha, seed=pair_seed, thresholds=thresholds)
    except VisibilityError as e:
        logger.warning(f"Rank stability {ma.key.label()} vs {mb.key.label()} failed: {e}")
        return _failed_pair(ma.key, mb.key, B, pair_seed, e)


def rank_stability_series(
    samples: Sequence,
    domains,
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
    thresholds: StabilityThresholds = StabilityThresholds(),
    span_drift_detected: Optional[bool] = None,
) -> StabilitySeries:
    """Consecutive-pair and first-vs-last rank stability over samples in job order.

    Each pair's bootstrap seed is derived from (seed, job_a, job_b), so the
    span of a two-job series reproduces its single consecutive pair.
    """
    metrics = [_as_metrics(s) for s in samples]
    if len(metrics) < 2:
        raise SingleSample(f"rank stability series needs >= 2 samples, got {len(metrics)}")
    domains = sorted(set(domains))

    pairs = [
        _pair_or_error(metrics[i], metrics[i + 1], domains, B, alpha, seed, thresholds)
        for i in range(len(metrics) - 1)
    ]
    span = _pair_or_error(metrics[0], metrics[-1], domains, B, alpha, seed, thresholds)

    sufficient = [p for p in pairs if p.sufficient]
    return StabilitySeries(
        pairs=pairs,
        span=span,
        mean_rho=float(np.mean([p.rho for p in sufficient])) if sufficient else None,
        mean_ci_width=float(np.mean([p.ci_width for p in sufficient])) if sufficient else None,
        n_sufficient=len(sufficient),
        n_stable=sum(p.stable for p in pairs),
        span_drift_detected=span_drift_detected,
    )
