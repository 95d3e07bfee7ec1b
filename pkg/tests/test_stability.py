"""Tests for core/stability.py: weighted Spearman and rank-stability series."""

import math

import numpy as np
import pytest
from scipy import stats

from core.errors import DegenerateRanks, SingleSample, TooFewDomains
from core.metrics import DomainMetrics, SampleMetrics, classify_frequently_cited
from core.models import SampleKey
from core.stability import (
    StabilityThresholds,
    mean_share_weights,
    rank_stability_pair,
    rank_stability_series,
    weighted_spearman,
)
from core.synthengine import CountDistribution, DriftEvent, SynthConfig, apply_event, generate, zipf_shares
from tests.test_dispersion import metrics_for


def shares(values):
    return {f"d{i:02d}.com": float(v) for i, v in enumerate(values)}


# ---- Weighted Spearman ----

def test_uniform_weights_match_classical_spearman():
    """Uniform weights reduce to scipy's average-rank Spearman (1e-12), ties included."""
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(3, 51))
        a = rng.integers(1, 6, size=n) / 10 if rng.random() < 0.3 else rng.random(n)
        b = rng.random(n)
        if np.ptp(a) == 0:
            continue
        sa, sb = shares(a), shares(b)
        domains = sorted(sa)
        rho = weighted_spearman(sa, sb, domains, {d: 1.0 for d in domains})
        expected, _ = stats.spearmanr([sa[d] for d in domains], [sb[d] for d in domains])
        assert abs(rho - expected) < 1e-12


def test_rank_transform_invariance():
    """A strictly monotone transform of either share vector leaves rho unchanged."""
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(3, 30))
        a, b = rng.random(n), rng.random(n)
        sa, sb = shares(a), shares(b)
        domains = sorted(sa)
        w = {d: float(x) for d, x in zip(domains, rng.random(n) + 0.01)}
        transformed = {d: math.exp(3 * v) + v ** 3 for d, v in sa.items()}
        assert weighted_spearman(sa, sb, domains, w) == pytest.approx(
            weighted_spearman(transformed, sb, domains, w), abs=1e-12)


def test_weighted_spearman_brute_force_three_domains():
    """Three domains: matches a hand-rolled weighted Pearson of descending ranks."""
    sa = {"a": 0.5, "b": 0.3, "c": 0.2}
    sb = {"a": 0.2, "b": 0.5, "c": 0.3}
    w = mean_share_weights(sa, sb, ["a", "b", "c"])
    ra = np.array([1, 2, 3], dtype=float)
    rb = np.array([3, 1, 2], dtype=float)
    wv = np.array([w["a"], w["b"], w["c"]])
    ma, mb = np.average(ra, weights=wv), np.average(rb, weights=wv)
    cov = np.sum(wv * (ra - ma) * (rb - mb))
    expected = cov / math.sqrt(np.sum(wv * (ra - ma) ** 2) * np.sum(wv * (rb - mb) ** 2))
    assert weighted_spearman(sa, sb, ["a", "b", "c"], w) == pytest.approx(expected, abs=1e-12)


def test_identical_rankings_rho_one():
    """The same share vector twice correlates perfectly."""
    sa = shares([0.4, 0.3, 0.2, 0.1])
    assert weighted_spearman(sa, sa, sorted(sa), mean_share_weights(sa, sa, sorted(sa))) == pytest.approx(1.0)


def test_all_tied_ranks_degenerate():
    """Constant shares have no rank variance."""
    sa = shares([0.25] * 4)
    with pytest.raises(DegenerateRanks):
        weighted_spearman(sa, shares([0.4, 0.3, 0.2, 0.1]), sorted(sa), {d: 1.0 for d in sa})


def test_mean_share_weights():
    """w_d is the mean of the two shares, zero when uncited."""
    w = mean_share_weights({"a": 0.6, "b": 0.4}, {"a": 0.2, "c": 0.8}, ["a", "b", "c", "d"])
    assert w == pytest.approx({"a": 0.4, "b": 0.2, "c": 0.4, "d": 0.0})


# ---- Pairs ----

def test_pair_too_few_domains():
    """Two domains cannot carry a rank correlation interval."""
    ma = metrics_for({"a.com": 2, "b.com": 1}, job="j1")
    mb = metrics_for({"a.com": 1, "b.com": 2}, job="j2")
    with pytest.raises(TooFewDomains):
        rank_stability_pair(ma, mb, ["a.com", "b.com"], B=100)


def test_pair_drops_domains_uncited_in_both():
    """Domains with zero weight in both samples are dropped from the pool."""
    ma = metrics_for({"a.com": 4, "b.com": 3, "c.com": 2, "d.com": 1}, job="j1")
    mb = metrics_for({"a.com": 4, "b.com": 2, "c.com": 3, "d.com": 1}, job="j2")
    result = rank_stability_pair(ma, mb, ["a.com", "b.com", "c.com", "d.com", "zzz.com"], B=200)
    assert result.n_domains == 4
    assert result.error is None
    assert result.ci_lower <= result.ci_upper


def test_pair_flags_follow_thresholds():
    """sufficient means width <= sufficiency; stable also needs rho >= stability."""
    ma = metrics_for({f"d{i}.com": 20 - i for i in range(12)}, job="j1")
    mb = metrics_for({f"d{i}.com": 20 - i for i in range(12)}, job="j2")
    domains = sorted(ma.per_domain)
    loose = rank_stability_pair(ma, mb, domains, B=200, thresholds=StabilityThresholds(1.0, 0.9))
    assert loose.rho == pytest.approx(1.0)
    assert loose.sufficient and loose.stable
    strict = rank_stability_pair(ma, mb, domains, B=200, thresholds=StabilityThresholds(-1.0, 0.9))
    assert not strict.sufficient and not strict.stable


def test_near_identical_pair_reports_without_error():
    """Near-identical samples: every run completes and point_outside matches the interval."""
    base = {f"d{i:02d}.com": 40 - i for i in range(20)}
    nudged = dict(base, **{"d18.com": 21, "d19.com": 22})
    ma, mb = metrics_for(base, job="j1"), metrics_for(nudged, job="j2")
    domains = sorted(base)
    for seed in range(50):
        r = rank_stability_pair(ma, mb, domains, B=200, seed=seed)
        assert r.error is None
        assert r.rho >= 0.995
        assert r.point_outside == (r.rho < r.ci_lower or r.rho > r.ci_upper)


def far_swap_pair(n=600, gap=30, per_block=6):
    """Two share tables identical except disjoint swaps of domains ``gap`` ranks apart."""
    counts = {f"d{i:03d}.com": 3000 - i for i in range(n)}
    swapped = dict(counts)
    for start in range(0, n, 2 * gap):
        for t in range(per_block):
            x, y = f"d{start + t:03d}.com", f"d{start + t + gap:03d}.com"
            swapped[x], swapped[y] = counts[y], counts[x]
    total = sum(counts.values())

    def table(values, job):
        per_domain = {d: DomainMetrics(d, c, c / total, 1.0, 1) for d, c in values.items()}
        return SampleMetrics(SampleKey("p", "t", job), 1, total, per_domain)

    return table(counts, "j1"), table(swapped, "j2")


def test_near_identical_pair_lower_bound_can_exceed_point():
    """rho >= 0.995 with long-range swaps: some seeded runs put the lower bound above rho."""
    ma, mb = far_swap_pair()
    domains = sorted(ma.per_domain)
    runs = [rank_stability_pair(ma, mb, domains, B=100, seed=seed) for seed in range(50)]
    assert all(r.error is None for r in runs)
    assert 0.995 <= runs[0].rho < 1.0
    assert any(r.ci_lower > r.rho for r in runs)
    assert all(r.point_outside == (r.ci_lower > r.rho or r.ci_upper < r.rho) for r in runs)


# ---- Series ----

def _stationary(seed, n_samples=9, **changes):
    fields = dict(n_domains=60, zipf_s=1.0, citations_per_response=CountDistribution.fixed(20),
                  consistency=0.0, n_queries=200, n_samples=n_samples, seed=seed)
    fields.update(changes)
    return SynthConfig(**fields)


def _series(config, B=200):
    dataset, _ = generate(config)
    samples = dataset.series("synthetic", "default")
    domains = classify_frequently_cited(samples)
    return rank_stability_series(samples, domains, B=B, seed=config.seed)


def test_series_needs_two_samples():
    """One sample has no pairs."""
    with pytest.raises(SingleSample):
        rank_stability_series([metrics_for({"a.com": 1})], ["a.com"])


def test_series_shape():
    """n-1 consecutive pairs plus a first-vs-last span."""
    series = _series(_stationary(seed=2, n_samples=4))
    assert len(series.pairs) == 3
    assert series.span.sample_a.job_id == "job01"
    assert series.span.sample_b.job_id == "job04"
    assert series.n_sufficient == sum(p.sufficient for p in series.pairs)


def test_two_job_span_equals_its_pair():
    """With two jobs the span is the consecutive pair."""
    series = _series(_stationary(seed=3, n_samples=2))
    assert series.span == series.pairs[0]


def test_span_drift_hook_recorded():
    """The span-drift verdict passes through untouched."""
    dataset, _ = generate(_stationary(seed=4, n_samples=3))
    samples = dataset.series("synthetic", "default")
    domains = classify_frequently_cited(samples)
    series = rank_stability_series(samples, domains, B=100, span_drift_detected=True)
    assert series.span_drift_detected is True
    assert series.with_span_drift(False).span_drift_detected is False


def _separation(seed, B):
    stationary = _series(_stationary(seed=seed), B=B)
    reversed_head = _series(_stationary(seed=seed, drift=(DriftEvent(at=4, scope="job", reverse=(1, 30)),)), B=B)
    consecutive = [p.rho for p in stationary.pairs]
    ok_stationary = stationary.span.rho >= min(consecutive) - 0.05
    drifted_mean = float(np.mean([p.rho for p in reversed_head.pairs]))
    ok_drift = reversed_head.span.rho < drifted_mean - 0.1
    return ok_stationary, ok_drift


def test_span_detects_cumulative_drift():
    """Stationary: span rho near the consecutive ones. Reordered head at job 5: span rho drops."""
    results = [_separation(seed=300 + t, B=100) for t in range(10)]
    assert sum(s for s, _ in results) >= 9
    assert sum(d for _, d in results) >= 9


@pytest.mark.slow
def test_span_detects_cumulative_drift_full():
    """50 trials each, >= 90%."""
    results = [_separation(seed=300 + t, B=1000) for t in range(50)]
    assert sum(s for s, _ in results) >= 45
    assert sum(d for _, d in results) >= 45


def test_top_two_swap_is_a_weak_signal():
    """Swapping the top two domains lowers span rho only slightly; sampling noise hides it."""
    base = zipf_shares(60, 1.0)
    swapped = apply_event(base, DriftEvent(at=4, swaps=((1, 2),)))
    before, after = shares(base), shares(swapped)
    domains = sorted(before)
    span_rho = weighted_spearman(before, after, domains, mean_share_weights(before, after, domains))
    assert weighted_spearman(before, before, domains, mean_share_weights(before, before, domains)) == pytest.approx(1.0)
    assert 0.99 < span_rho < 1.0

    gaps = []
    for t in range(10):
        config = _stationary(seed=300 + t, drift=(DriftEvent(at=4, scope="job", swaps=((1, 2),)),))
        series = _series(config, B=100)
        gaps.append(float(np.mean([p.rho for p in series.pairs])) - series.span.rho)
    assert sum(g < 0.1 for g in gaps) >= 9


def test_stationary_pairs_mostly_stable():
    """A stationary engine with plenty of citations gives high consecutive rho."""
    series = _series(_stationary(seed=5, n_samples=3))
    assert all(p.rho > 0.8 for p in series.pairs)


def test_failed_pair_recorded_not_raised():
    """A pair that cannot be computed becomes an error row; the series continues."""
    ms = [metrics_for({"a.com": 3, "b.com": 2, "c.com": 1}, job=f"j{i}") for i in range(3)]
    series = rank_stability_series(ms, ["a.com", "b.com"], B=100)
    assert all(p.error for p in series.pairs)
    assert math.isnan(series.span.rho)
    assert series.mean_rho is None
    assert not any(p.point_outside for p in series.pairs)
