"""
Synthetic stochastic answer engine with known ground truth.

Domains d0001.example, d0002.example, ... carry Zipf shares
share(r) = r^-s / sum(k^-s). For every query a reference citation set (its
first run) is drawn once; the first sample reproduces it. In later samples
each citation slot copies an unused reference slot with probability
``consistency`` and is otherwise drawn fresh from the current share vector.
A ``deterministic_fraction`` of queries returns its reference set verbatim in
every sample; with ``deterministic_domains`` > 0 those queries cite only a
reserved block of domains, which then show (near) zero log-std.

Drift events permute or shift the share vector from a job index onward
(between samples) or from a query index onward (inside every sample).

Every sample draws from its own stream derived from (seed, sample index), and
every reference set from (seed, query index), so generation order does not
affect the output.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.corpus import format_timestamp, write_dataset, write_job_order
from core.driftwatch import ChecksumRecord, hash_text
from core.errors import ConfigError, ScheduleOutOfBounds
from core.models import CitationRef, Dataset, ResponseRecord, Sample, SampleKey
from core.resample import DEFAULT_SEED, derive_seed

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2025, 1, 6, 9, 0, tzinfo=timezone.utc)


# ============================================================================
# CONFIGURATION TYPES
# ============================================================================

@dataclass(frozen=True)
class CountDistribution:
    """Citations per response: fixed, uniform(lo, hi) inclusive, or an empirical histogram."""
    kind: str = "fixed"
    value: int = 6
    lo: int = 0
    hi: int = 0
    values: Tuple[int, ...] = ()
    weights: Tuple[float, ...] = ()

    @classmethod
    def fixed(cls, n: int) -> "CountDistribution":
        return cls(kind="fixed", value=int(n))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "CountDistribution":
        return cls(kind="uniform", lo=int(lo), hi=int(hi))

    @classmethod
    def empirical(cls, values: Sequence[int], weights: Sequence[float]) -> "CountDistribution":
        total = float(sum(weights))
        return cls(
            kind="empirical",
            values=tuple(int(v) for v in values),
            weights=tuple(float(w) / total for w in weights) if total > 0 else tuple(weights),
        )

    def problem(self) -> Optional[str]:
        if self.kind == "fixed":
            return None if self.value >= 0 else "fixed count must be >= 0"
        if self.kind == "uniform":
            return None if 0 <= self.lo <= self.hi else "uniform needs 0 <= lo <= hi"
        if self.kind == "empirical":
            if not self.values or len(self.values) != len(self.weights):
                return "empirical needs equal-length non-empty values and weights"
            if min(self.values) < 0 or min(self.weights) < 0 or sum(self.weights) <= 0:
                return "empirical values and weights must be non-negative"
            return None
        return f"unknown kind {self.kind!r}"

    def draw(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return self.value
        if self.kind == "uniform":
            return int(rng.integers(self.lo, self.hi + 1))
        return int(self.values[rng.choice(len(self.values), p=np.asarray(self.weights))])


@dataclass(frozen=True)
class DriftEvent:
    """Change to the share vector from ``at`` onward.

    scope "job": from sample index ``at`` (0-based) onward.
    scope "query": from query index ``at`` (0-based) onward, inside every sample.
    Ranks are 1-based positions in the undrifted Zipf order. Applied in
    order: swaps, then the ``reverse`` block (inclusive), then shifts (set a
    rank's share and rescale all others to keep the total at 1).
    """
    at: int
    scope: str = "job"
    swaps: Tuple[Tuple[int, int], ...] = ()
    reverse: Optional[Tuple[int, int]] = None
    shifts: Tuple[Tuple[int, float], ...] = ()


@dataclass(frozen=True)
class SynthConfig:
    n_domains: int = 250
    zipf_s: float = 1.0
    citations_per_response: CountDistribution = CountDistribution.fixed(6)
    consistency: float = 0.6
    deterministic_fraction: float = 0.0
    deterministic_domains: int = 0
    drift: Tuple[DriftEvent, ...] = ()
    n_queries: int = 200
    n_samples: int = 9
    seed: int = DEFAULT_SEED
    platform: str = "synthetic"
    topic: str = "default"
    pages_per_domain: int = 5
    response_failure_rate: float = 0.0
    start: datetime = DEFAULT_START
    job_interval: timedelta = timedelta(days=1)

    def validate(self) -> None:
        problems: Dict[str, str] = {}
        if self.n_domains < 2:
            problems["n_domains"] = "must be >= 2"
        if not self.zipf_s > 0:
            problems["zipf_s"] = "must be > 0"
        for name in ("consistency", "deterministic_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems[name] = "must be in [0, 1]"
        if not 0.0 <= self.response_failure_rate < 1.0:
            problems["response_failure_rate"] = "must be in [0, 1)"
        if self.deterministic_domains < 0:
            problems["deterministic_domains"] = "must be >= 0"
        if self.n_queries < 1:
            problems["n_queries"] = "must be >= 1"
        if self.n_samples < 1:
            problems["n_samples"] = "must be >= 1"
        if self.pages_per_domain < 1:
            problems["pages_per_domain"] = "must be >= 1"
        if not self.platform.strip() or not self.topic.strip():
            problems["platform/topic"] = "must be non-empty"
        if self.seed < 0:
            problems["seed"] = "must be a non-negative integer"
        if self.job_interval <= timedelta(0):
            problems["job_interval"] = "must be positive"
        dist = self.citations_per_response.problem()
        if dist:
            problems["citations_per_response"] = dist
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["start"] = format_timestamp(self.start)
        out["job_interval"] = self.job_interval.total_seconds()
        return out


@dataclass(frozen=True)
class GroundTruth:
    true_share: Dict[str, float]
    regimes: List[dict] = field(default_factory=list)
    deterministic_domains: Tuple[str, ...] = ()
    deterministic_queries: Tuple[str, ...] = ()
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "true_share": self.true_share,
            "regimes": self.regimes,
            "deterministic_domains": list(self.deterministic_domains),
            "deterministic_queries": list(self.deterministic_queries),
            "config": self.config,
        }


# ============================================================================
# SHARE VECTORS
# ============================================================================

def domain_name(rank: int) -> str:
    return f"d{rank:04d}.example"


def zipf_shares(n_domains: int, s: float) -> np.ndarray:
    weights = np.arange(1, n_domains + 1, dtype=float) ** (-s)
    return weights / weights.sum()


def apply_event(shares: np.ndarray, event: DriftEvent) -> np.ndarray:
    out = shares.copy()
    for a, b in event.swaps:
        out[[a - 1, b - 1]] = out[[b - 1, a - 1]]
    if event.reverse is not None:
        lo, hi = event.reverse
        out[lo - 1:hi] = out[lo - 1:hi][::-1].copy()
    for rank, new_share in event.shifts:
        old = out[rank - 1]
        rest = 1.0 - old
        if rest > 0:
            out *= (1.0 - new_share) / rest
        out[rank - 1] = new_share
    return out / out.sum()


def check_schedule(config: SynthConfig, schedule: Iterable[DriftEvent]) -> None:
    for event in schedule:
        if event.scope not in ("job", "query"):
            raise ScheduleOutOfBounds(f"drift scope must be 'job' or 'query', got {event.scope!r}")
        limit = config.n_samples if event.scope == "job" else config.n_queries
        if not 0 <= event.at < limit:
            raise ScheduleOutOfBounds(f"{event.scope} drift at {event.at} outside [0, {limit})")
        ranks = [r for pair in event.swaps for r in pair] + [r for r, _ in event.shifts]
        if event.reverse is not None:
            lo, hi = event.reverse
            if lo >= hi:
                raise ScheduleOutOfBounds(f"reverse block {event.reverse} must have lo < hi")
            ranks += [lo, hi]
        bad = [r for r in ranks if not 1 <= r <= config.n_domains]
        if bad:
            raise ScheduleOutOfBounds(f"ranks {bad} outside 1..{config.n_domains}")
        for _, new_share in event.shifts:
            if not 0.0 < new_share < 1.0:
                raise ScheduleOutOfBounds(f"shifted share {new_share} must be in (0, 1)")


def inject_drift(config: SynthConfig, schedule: Sequence[DriftEvent]) -> SynthConfig:
    """Config with ``schedule`` appended to its drift events."""
    schedule = tuple(schedule)
    if not schedule:
        return config
    check_schedule(config, schedule)
    return replace(config, drift=config.drift + schedule)


class _Regimes:
    """Cumulative share vectors by (job events applied, query events applied)."""

    def __init__(self, config: SynthConfig):
        self.base = zipf_shares(config.n_domains, config.zipf_s)
        self.job_events = sorted((e for e in config.drift if e.scope == "job"), key=lambda e: e.at)
        self.query_events = sorted((e for e in config.drift if e.scope == "query"), key=lambda e: e.at)
        self._cache: Dict[Tuple[int, int], np.ndarray] = {}
        self._cum: Dict[Tuple[int, int], np.ndarray] = {}

    def level(self, job: int, query: int) -> Tuple[int, int]:
        return (
            sum(1 for e in self.job_events if e.at <= job),
            sum(1 for e in self.query_events if e.at <= query),
        )

    def shares(self, levels: Tuple[int, int]) -> np.ndarray:
        if levels not in self._cache:
            vec = self.base
            for e in self.job_events[:levels[0]]:
                vec = apply_event(vec, e)
            for e in self.query_events[:levels[1]]:
                vec = apply_event(vec, e)
            self._cache[levels] = vec
        return self._cache[levels]

    def cumulative(self, job: int, query: int) -> np.ndarray:
        levels = self.level(job, query)
        if levels not in self._cum:
            self._cum[levels] = np.cumsum(self.shares(levels))
        return self._cum[levels]


# ============================================================================
# GENERATION
# ============================================================================

def _stream(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(*keys)))


def _fresh(rng, n: int, cum: np.ndarray, names: Sequence[str], pages: int,
           used: set, out: List[Tuple[str, int]]) -> None:
    """Append up to n fresh (domain, page) slots; a slot whose domain has no unused page is dropped."""
    if n <= 0:
        return
    idx = np.minimum(np.searchsorted(cum, rng.random(n) * cum[-1], side="right"), len(names) - 1)
    for i in idx:
        domain = names[i]
        free = [p for p in range(1, pages + 1) if (domain, p) not in used]
        if not free:
            continue
        page = free[int(rng.integers(len(free)))]
        used.add((domain, page))
        out.append((domain, page))


def _run_slots(rng, n: int, reference: List[Tuple[str, int]], consistency: float,
               cum: np.ndarray, names: Sequence[str], pages: int) -> List[Tuple[str, int]]:
    copy_flags = rng.random(n) < consistency
    n_copy = min(int(copy_flags.sum()), len(reference))
    picked = rng.choice(len(reference), size=n_copy, replace=False) if n_copy else []
    slots = [reference[i] for i in sorted(int(i) for i in picked)]
    used = set(slots)
    _fresh(rng, n - n_copy, cum, names, pages, used, slots)
    order = rng.permutation(len(slots))
    return [slots[i] for i in order]


def _to_citations(slots: Sequence[Tuple[str, int]]) -> Tuple[CitationRef, ...]:
    return tuple(CitationRef(url=f"https://{d}/page-{p}", domain=d) for d, p in slots)


def generate(config: SynthConfig) -> Tuple[Dataset, GroundTruth]:
    """Generate n_samples x n_queries responses and the shares they were drawn from."""
    config.validate()
    check_schedule(config, config.drift)

    regimes = _Regimes(config)
    names = [domain_name(r) for r in range(1, config.n_domains + 1)]
    block = [domain_name(config.n_domains + k) for k in range(1, config.deterministic_domains + 1)]
    block_cum = np.cumsum(np.full(len(block), 1.0 / len(block))) if block else None
    pages = config.pages_per_domain

    n_det = int(round(config.deterministic_fraction * config.n_queries))
    det_rng = _stream(config.seed, "deterministic")
    det_queries = set(int(q) for q in det_rng.choice(config.n_queries, size=n_det, replace=False)) if n_det else set()

    # Reference (first-run) sets, one stream per query.
    references: List[List[Tuple[str, int]]] = []
    for q in range(config.n_queries):
        rng = _stream(config.seed, "reference", q)
        n = config.citations_per_response.draw(rng)
        slots: List[Tuple[str, int]] = []
        if q in det_queries and block:
            _fresh(rng, n, block_cum, block, pages, set(), slots)
        else:
            _fresh(rng, n, regimes.cumulative(0, q), names, pages, set(), slots)
        references.append(slots)

    job_ids = [f"job{j + 1:02d}" for j in range(config.n_samples)]
    spacing = min(timedelta(seconds=2), config.job_interval / (config.n_queries + 1))
    platform = config.platform.strip().lower()
    topic = config.topic.strip().lower()

    samples: Dict[SampleKey, Sample] = {}
    seen_levels = set()
    for j, job_id in enumerate(job_ids):
        rng = _stream(config.seed, "sample", j)
        key = SampleKey(platform, topic, job_id)
        responses = []
        for q in range(config.n_queries):
            failed = rng.random() < config.response_failure_rate
            if j == 0 or q in det_queries:
                slots = references[q]
            else:
                n = config.citations_per_response.draw(rng)
                seen_levels.add(regimes.level(j, q))
                slots = _run_slots(rng, n, references[q], config.consistency,
                                   regimes.cumulative(j, q), names, pages)
            if failed:
                continue
            query_id = f"q{q + 1:04d}"
            responses.append(ResponseRecord(
                platform=platform,
                topic=topic,
                job_id=job_id,
                timestamp=config.start + j * config.job_interval + q * spacing,
                query_id=query_id,
                query_text=f"{topic} question {q + 1}",
                response_id=f"{job_id}-{query_id}",
                citations=_to_citations(slots),
            ))
        samples[key] = Sample(key, tuple(responses))
    seen_levels |= {regimes.level(0, q) for q in range(config.n_queries)}

    dataset = Dataset(samples=samples, provenance=(), job_order=tuple(job_ids))
    truth = _ground_truth(config, regimes, names, block, det_queries, sorted(seen_levels))
    logger.info(
        f"Generated {len(samples)} samples x {config.n_queries} queries "
        f"({dataset.n_responses} responses, seed {config.seed})"
    )
    return dataset, truth


def _mixture(config: SynthConfig, shares: np.ndarray, names, block, det_share: float) -> Dict[str, float]:
    out = {name: float(s) * (1.0 - det_share) for name, s in zip(names, shares)}
    for name in block:
        out[name] = det_share / len(block)
    return out


def _ground_truth(config, regimes, names, block, det_queries, levels) -> GroundTruth:
    det_share = len(det_queries) / config.n_queries if block else 0.0
    regime_list = []
    for jl, ql in levels:
        regime_list.append({
            "job_from": regimes.job_events[jl - 1].at if jl else 0,
            "query_from": regimes.query_events[ql - 1].at if ql else 0,
            "true_share": _mixture(config, regimes.shares((jl, ql)), names, block, det_share),
        })
    return GroundTruth(
        true_share=_mixture(config, regimes.base, names, block, det_share),
        regimes=regime_list,
        deterministic_domains=tuple(block),
        deterministic_queries=tuple(f"q{q + 1:04d}" for q in sorted(det_queries)),
        config=config.to_dict(),
    )


# ============================================================================
# CHECKSUMS AND OUTPUT
# ============================================================================

def synthetic_checksums(
    dataset: Dataset,
    seed: int = DEFAULT_SEED,
    change_rate: float = 0.0,
    churn_domains: Iterable[str] = (),
    changes: Iterable[Tuple[str, str]] = (),
) -> List[ChecksumRecord]:
    """Checksums for every cited (url, job); content versions bump on scheduled changes.

    A URL's version rises at a job when (url, job_id) is in ``changes``, when
    its domain is in ``churn_domains`` (changes every job), or with
    probability ``change_rate`` keyed on (seed, url, job_id).
    """
    churn = set(churn_domains)
    scheduled = set(changes)
    cited: Dict[str, set] = {}
    domain_of: Dict[str, str] = {}
    for sample in dataset.samples.values():
        urls = cited.setdefault(sample.key.job_id, set())
        for record in sample.responses:
            for c in record.citations:
                urls.add(c.url)
                domain_of[c.url] = c.domain

    version: Dict[str, int] = {}
    records = []
    for job_id in dataset.job_order:
        for url in sorted(domain_of):
            changed = (
                (url, job_id) in scheduled
                or domain_of[url] in churn
                or (change_rate > 0 and derive_seed(seed, "content", url, job_id) % 1_000_000 < change_rate * 1_000_000)
            )
            if changed:
                version[url] = version.get(url, 0) + 1
        for url in sorted(cited.get(job_id, ())):
            text = f"{url}\ncontent version {version.get(url, 0)}\n"
            records.append(ChecksumRecord(url=url, job_id=job_id, sha256=hash_text(text)))
    return records


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def write_synthetic(
    dataset: Dataset,
    truth: GroundTruth,
    out_dir,
    checksums: Optional[Sequence[ChecksumRecord]] = None,
) -> List[Path]:
    """dataset.jsonl, job_order.txt, ground_truth.json, config.json and optionally checksums.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_dataset(dataset, out / "dataset.jsonl"), write_job_order(dataset, out / "job_order.txt")]

    _write_json(out / "ground_truth.json", {k: v for k, v in truth.to_dict().items() if k != "config"})
    _write_json(out / "config.json", truth.config)
    written += [out / "ground_truth.json", out / "config.json"]

    if checksums is not None:
        path = out / "checksums.jsonl"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for rec in checksums:
                f.write(json.dumps({"job_id": rec.job_id, "sha256": rec.sha256, "url": rec.url}, sort_keys=True) + "\n")
        written.append(path)
    logger.info(f"Wrote synthetic dataset to {out}")
    return written


def preset(name: str, regime: str = "daily", seed: int = DEFAULT_SEED) -> SynthConfig:
    """SynthConfig for a registered engine preset (see engines/)."""
    from engines import get_engine
    return get_engine(name).build(regime=regime, seed=seed)
