"""
Seeded percentile bootstrap.

Replicate k of a run seeded with ``seed`` draws from its own Philox stream
keyed by (seed, k), so replicates can be evaluated in any order (or in
parallel) with bit-identical results. Intervals are plain percentile
intervals: the replicate values are sorted and the bounds taken at 1-indexed
ranks ceil(B*alpha/2) and ceil(B*(1-alpha/2)). No bias correction.
"""

import logging
import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import (
    EmptySampleCitations,
    GridExceedsSample,
    InvalidParameter,
    StatisticUndefined,
)
from core.models import Sample

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20250101
DEFAULT_B = 1000
DEFAULT_ALPHA = 0.05
TARGET_WIDTH = {"share": 0.05, "prevalence": 0.15}


class Metric(str, Enum):
    SHARE = "share"
    PREVALENCE = "prevalence"


@dataclass(frozen=True)
class BootstrapCI:
    metric: str
    domain: Optional[str]
    point: float
    lower: float
    upper: float
    replicates: int
    alpha: float
    seed: int
    excluded: int = 0
    width: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "width", self.upper - self.lower)

    @property
    def point_outside(self) -> bool:
        return self.point < self.lower or self.point > self.upper


@dataclass(frozen=True)
class ConvergencePoint:
    n: int
    max_ci_width: float
    reference_width: float
    crossed_target: bool
    max_domain: str = ""


@dataclass(frozen=True)
class ConvergenceCurve:
    metric: str
    points: List[ConvergencePoint]
    target_width: float
    crossing_n: Optional[int]
    p_anchor: float
    order: str = "prefix"
    draws: int = 1
    seed: int = DEFAULT_SEED

    def widths(self) -> List[float]:
        return [p.max_ci_width for p in self.points]


# ============================================================================
# SEEDING
# ============================================================================

def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def _check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidParameter(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit seed derived from (seed, keys); string keys are hashed with CRC-32."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replicate_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def _resample_weights(n: int, B: int, seed: int) -> np.ndarray:
    """(B, n) matrix: how often each item is drawn in each replicate."""
    w = np.empty((B, n), dtype=np.int64)
    for k in range(B):
        idx = replicate_rng(seed, k).integers(0, n, size=n)
        w[k] = np.bincount(idx, minlength=n)
    return w


# ============================================================================
# PERCENTILES
# ============================================================================

def percentile_ranks(B: int, alpha: float) -> Tuple[int, int]:
    """1-indexed order-statistic ranks of the lower and upper bounds."""
    lo = max(1, math.ceil(round(B * alpha / 2, 9)))
    hi = min(B, math.ceil(round(B * (1 - alpha / 2), 9)))
    return lo, hi


def percentile_bounds(values, alpha: float) -> Tuple[float, float]:
    ordered = np.sort(np.asarray(values, dtype=float))
    lo, hi = percentile_ranks(len(ordered), alpha)
    return float(ordered[lo - 1]), float(ordered[hi - 1])


def _check_params(n: int, B: int, alpha: float, min_items: int = 2) -> None:
    if n < min_items:
        raise InvalidParameter(f"need at least {min_items} items to resample, got {n}")
    if B < 100:
        raise InvalidParameter(f"B must be >= 100, got {B}")
    if not 0 < alpha < 1:
        raise InvalidParameter(f"alpha must be in (0, 1), got {alpha}")


# ============================================================================
# RESPONSE-LEVEL BOOTSTRAP
# ============================================================================

def _response_matrices(sample: Sample, domains: Sequence[str]):
    """Per-response counts for ``domains`` and per-response citation totals."""
    col = {d: j for j, d in enumerate(domains)}
    counts = np.zeros((sample.n_responses, len(domains)), dtype=np.int64)
    totals = np.zeros(sample.n_responses, dtype=np.int64)
    for i, record in enumerate(sample.responses):
        totals[i] = record.n_citations
        for c in record.citations:
            j = col.get(c.domain)
            if j is not None:
                counts[i, j] += 1
    return counts, totals


def _metric_values(metric: Metric, weights: np.ndarray, counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Metric per (replicate, domain); ``weights`` rows are draw counts per response."""
    if metric == Metric.SHARE:
        num = weights @ counts
        den = weights @ totals
        out = np.zeros(num.shape, dtype=float)
        nz = den > 0
        # Replicates with no citations at all contribute share 0.
        out[nz] = num[nz] / den[nz][:, None]
        return out
    presence = (counts > 0).astype(np.int64)
    return (weights @ presence) / counts.shape[0]


def point_estimates(sample: Sample, metric, domains: Sequence[str]) -> np.ndarray:
    """Full-sample metric values for ``domains`` (in the given order)."""
    counts, totals = _response_matrices(sample, list(domains))
    ones = np.ones((1, sample.n_responses), dtype=np.int64)
    return _metric_values(Metric(metric), ones, counts, totals)[0]


def bootstrap_all_domains(
    sample: Sample,
    metric,
    domains: Iterable[str],
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
) -> Dict[str, BootstrapCI]:
    """Percentile CIs for several domains from one shared replicate stream."""
    metric = Metric(metric)
    seed = _check_seed(seed)
    n = sample.n_responses
    _check_params(n, B, alpha)
    domains = sorted(set(domains))

    counts, totals = _response_matrices(sample, domains)
    if metric == Metric.SHARE and totals.sum() == 0:
        raise EmptySampleCitations(f"Sample {sample.key.label()} has no citations; share undefined")

    full = _metric_values(metric, np.ones((1, n), dtype=np.int64), counts, totals)[0]
    reps = _metric_values(metric, _resample_weights(n, B, seed), counts, totals)

    results = {}
    for j, domain in enumerate(domains):
        lower, upper = percentile_bounds(reps[:, j], alpha)
        results[domain] = BootstrapCI(
            metric=metric.value,
            domain=domain,
            point=float(full[j]),
            lower=lower,
            upper=upper,
            replicates=B,
            alpha=alpha,
            seed=seed,
        )
    return results


def bootstrap_metric_ci(
    sample: Sample,
    metric,
    domain: str,
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
) -> BootstrapCI:
    return bootstrap_all_domains(sample, metric, [domain], B=B, alpha=alpha, seed=seed)[domain]


# ============================================================================
# CONVERGENCE
# ============================================================================

def reference_width(p_anchor: float, n: int) -> float:
    """Normal-approximation 95% CI width for a proportion: 3.92 * sqrt(p(1-p)/n)."""
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    return 3.92 * math.sqrt(p_anchor * (1 - p_anchor) / n)


def default_grid(n: int, step: int = 10) -> List[int]:
    grid = list(range(step, n + 1, step))
    if not grid or grid[-1] != n:
        grid.append(n)
    return [g for g in grid if g >= 2]


def _subsample(sample: Sample, n: int, order: str, seed: int, draw: int) -> Sample:
    if order == "prefix":
        return sample.head(n)
    rng = np.random.Generator(np.random.Philox(derive_seed(seed, "subsample", n, draw)))
    idx = np.sort(rng.choice(sample.n_responses, size=n, replace=False))
    return Sample(sample.key, tuple(sample.responses[i] for i in idx))


def convergence_curve(
    sample: Sample,
    metric,
    domains: Iterable[str],
    grid: Optional[Sequence[int]] = None,
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
    order: str = "prefix",
    draws: int = 1,
    target_width: Optional[float] = None,
    p_anchor: Optional[float] = None,
) -> ConvergenceCurve:
    """Maximum CI width over ``domains`` as a function of the number of responses.

    Every grid point is computed; ``crossing_n`` is only reported.
    """
    metric = Metric(metric)
    domains = sorted(set(domains))
    if not domains:
        raise InvalidParameter("convergence_curve needs at least one domain")
    if order not in ("prefix", "random"):
        raise InvalidParameter(f"order must be 'prefix' or 'random', got {order!r}")
    if draws < 1:
        raise InvalidParameter("draws must be >= 1")
    if order == "prefix" and draws > 1:
        logger.warning("Prefix order yields one subsample per n; using draws=1")
        draws = 1

    N = sample.n_responses
    grid = default_grid(N) if grid is None else sorted(set(int(g) for g in grid))
    if not grid:
        raise InvalidParameter("empty grid")
    if grid[-1] > N:
        raise GridExceedsSample(f"grid value {grid[-1]} exceeds sample size {N}")
    if grid[0] < 2:
        raise InvalidParameter(f"grid values must be >= 2, got {grid[0]}")

    if target_width is None:
        target_width = TARGET_WIDTH[metric.value]
    if p_anchor is None:
        p_anchor = float(point_estimates(sample, metric, domains).max())

    points = []
    for n in grid:
        widths = []
        argmax = ""
        for draw in range(draws):
            sub = _subsample(sample, n, order, seed, draw)
            cis = bootstrap_all_domains(sub, metric, domains, B=B, alpha=alpha, seed=seed)
            top = max(cis.values(), key=lambda ci: (ci.width, ci.domain))
            widths.append(top.width)
            argmax = top.domain
        width = float(np.mean(widths))
        points.append(ConvergencePoint(
            n=n,
            max_ci_width=width,
            reference_width=reference_width(p_anchor, n),
            crossed_target=width <= target_width,
            max_domain=argmax if draws == 1 else "",
        ))

    crossing_n = next((p.n for p in points if p.crossed_target), None)
    logger.debug(f"{sample.key.label()} {metric.value}: {len(points)} grid points, crossing at {crossing_n}")
    return ConvergenceCurve(
        metric=metric.value,
        points=points,
        target_width=target_width,
        crossing_n=crossing_n,
        p_anchor=float(p_anchor),
        order=order,
        draws=draws,
        seed=seed,
    )


# ============================================================================
# GENERIC BOOTSTRAP
# ============================================================================

def bootstrap_generic(
    items: Sequence,
    statistic: Callable[[list], float],
    B: int = DEFAULT_B,
    alpha: float = DEFAULT_ALPHA,
    seed: int = DEFAULT_SEED,
    on_undefined: str = "raise",
    name: str = "statistic",
) -> BootstrapCI:
    """Percentile CI of ``statistic`` over with-replacement resamples of ``items``.

    A replicate whose statistic raises StatisticUndefined either aborts the
    run (``on_undefined="raise"``, the error carries the replicate index) or
    is dropped and counted in ``excluded`` (``on_undefined="exclude"``).
    """
    if on_undefined not in ("raise", "exclude"):
        raise InvalidParameter(f"on_undefined must be 'raise' or 'exclude', got {on_undefined!r}")
    seed = _check_seed(seed)
    items = list(items)
    n = len(items)
    _check_params(n, B, alpha)

    point = float(statistic(items))
    values = []
    excluded = 0
    for k in range(B):
        idx = replicate_rng(seed, k).integers(0, n, size=n)
        try:
            values.append(float(statistic([items[i] for i in idx])))
        except StatisticUndefined as e:
            if on_undefined == "raise":
                raise StatisticUndefined(str(e), replicate=k) from e
            excluded += 1

    if not values:
        raise StatisticUndefined(f"all {B} replicates undefined")
    if excluded:
        logger.warning(f"{name}: excluded {excluded} of {B} undefined replicates")
    lower, upper = percentile_bounds(values, alpha)
    return BootstrapCI(
        metric=name,
        domain=None,
        point=point,
        lower=lower,
        upper=upper,
        replicates=B,
        alpha=alpha,
        seed=seed,
        excluded=excluded,
    )
