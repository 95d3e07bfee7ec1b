"""Tests for core/metrics.py: count, share, prevalence and frequently-cited sets."""

import itertools
from datetime import datetime, timezone

import numpy as np
import pytest
from scipy import stats

from core.errors import EmptySample, MixedKeys, SingleSample
from core.metrics import (
    citation_summary,
    classify_frequently_cited,
    compute_sample_metrics,
    cross_sample_mean,
    metric_correlations,
    summarize_counts,
)
from core.models import CitationRef, ResponseRecord, Sample, SampleKey

TS = datetime(2025, 1, 6, 9, tzinfo=timezone.utc)


def make_sample(responses, job="j1", platform="p", topic="t"):
    """responses: list of domain lists, one per response."""
    key = SampleKey(platform, topic, job)
    records = tuple(
        ResponseRecord(
            platform=platform, topic=topic, job_id=job, timestamp=TS,
            query_id=f"q{i}", query_text="", response_id=f"{job}-{i}",
            citations=tuple(CitationRef(f"https://{d}/{k}", d) for k, d in enumerate(domains)),
        )
        for i, domains in enumerate(responses)
    )
    return Sample(key, records)


# ---- Per-sample estimators ----

def test_sample_metrics_hand_example():
    """r1 cites A,A,B and r2 cites A: share(A)=0.75, prevalence(B)=0.5."""
    m = compute_sample_metrics(make_sample([["a.com", "a.com", "b.com"], ["a.com"]]))
    a, b = m.per_domain["a.com"], m.per_domain["b.com"]
    assert (a.count, a.share, a.prevalence) == (3, 0.75, 1.0)
    assert (b.count, b.share, b.prevalence) == (1, 0.25, 0.5)
    assert m.total_citations == 4


def test_sample_metrics_single_domain():
    """One response citing A once: share and prevalence are 1."""
    m = compute_sample_metrics(make_sample([["a.com"]]))
    assert m.per_domain["a.com"].share == 1.0
    assert m.per_domain["a.com"].prevalence == 1.0


def test_zero_citation_response_counts_toward_n():
    """A citation-less response joins N but not C(S)."""
    m = compute_sample_metrics(make_sample([["a.com"], []]))
    assert m.n_responses == 2
    assert m.total_citations == 1
    assert m.per_domain["a.com"].prevalence == 0.5


def test_empty_sample_raises():
    """N = 0 is refused."""
    with pytest.raises(EmptySample):
        compute_sample_metrics(make_sample([]))


def test_all_zero_citations_gives_empty_map():
    """C(S) = 0 leaves the per-domain map empty."""
    m = compute_sample_metrics(make_sample([[], []]))
    assert m.per_domain == {}
    assert m.total_citations == 0


def _brute_force(responses):
    domains = sorted({d for r in responses for d in r})
    total = sum(len(r) for r in responses)
    out = {}
    for d in domains:
        count = sum(r.count(d) for r in responses)
        out[d] = (count, count / total, sum(d in r for r in responses) / len(responses))
    return out


def test_sample_metrics_brute_force_all_small_datasets():
    """All datasets of <=3 responses x <=2 citations over 3 domains match a brute-force oracle."""
    domains = ["a.com", "b.com", "c.com"]
    citation_lists = [list(c) for k in range(3) for c in itertools.product(domains, repeat=k)]
    for n in (1, 2, 3):
        for responses in itertools.product(citation_lists, repeat=n):
            if not any(responses):
                continue
            m = compute_sample_metrics(make_sample(list(responses)))
            expected = _brute_force(list(responses))
            assert set(m.per_domain) == set(expected)
            for d, (count, share, prevalence) in expected.items():
                dm = m.per_domain[d]
                assert dm.count == count
                assert abs(dm.share - share) < 1e-12
                assert abs(dm.prevalence - prevalence) < 1e-12
                assert dm.responses_citing <= dm.count


def test_share_sums_to_one_and_prevalence_integral():
    """Shares sum to 1; prevalence * N is an integer."""
    rng = np.random.default_rng(3)
    responses = [list(rng.choice(["a.com", "b.com", "c.com", "d.com"], size=rng.integers(0, 6))) for _ in range(40)]
    m = compute_sample_metrics(make_sample(responses))
    assert abs(sum(m.shares().values()) - 1.0) < 1e-9
    for dm in m.per_domain.values():
        assert abs(dm.prevalence * m.n_responses - round(dm.prevalence * m.n_responses)) < 1e-9


def test_count_and_share_rank_identically_within_sample():
    """Per sample, the count ranking and the share ranking correlate exactly."""
    rng = np.random.default_rng(5)
    responses = [list(rng.choice([f"d{i}.com" for i in range(12)], size=5)) for _ in range(30)]
    m = compute_sample_metrics(make_sample(responses))
    domains = sorted(m.per_domain)
    rho, _ = stats.spearmanr([m.per_domain[d].count for d in domains], [m.per_domain[d].share for d in domains])
    assert rho == pytest.approx(1.0, abs=1e-12)


# ---- Citation summaries ----

def test_summary_constant_counts():
    """[5,5,5]: mean 5, std 0, every percentile 5."""
    s = summarize_counts([5, 5, 5])
    assert s.mean == 5 and s.std == 0
    assert s.p25 == s.median == s.p75 == s.p95 == 5


def test_summary_linear_interpolation():
    """[1,2,3,4]: median 2.5, p25 1.75, p75 3.25."""
    s = summarize_counts([1, 2, 3, 4])
    assert s.median == 2.5
    assert s.p25 == 1.75
    assert s.p75 == 3.25
    assert s.std == pytest.approx(np.std([1, 2, 3, 4], ddof=1))


def test_summary_ordering():
    """min <= p25 <= median <= p75 <= p95 <= max."""
    s = citation_summary(make_sample([["a.com"] * k for k in (1, 4, 2, 9, 3, 3, 7)]))
    assert s.min <= s.p25 <= s.median <= s.p75 <= s.p95 <= s.max


# ---- Frequently cited ----

def test_frequently_cited_every_sample():
    """A domain in all samples is a member; in 2 of 3 it is not."""
    samples = [
        make_sample([["a.com", "d.com"]], job="j1"),
        make_sample([["a.com"]], job="j2"),
        make_sample([["a.com", "d.com"]], job="j3"),
    ]
    fc = classify_frequently_cited(samples)
    assert "a.com" in fc
    assert "d.com" not in fc
    assert fc.appearance_histogram == {1: 0, 2: 1, 3: 1}


def test_frequently_cited_histogram_boundary():
    """8 of 9 samples: excluded and counted in bin 8."""
    samples = [make_sample([["a.com", "b.com" if j < 8 else "a.com"]], job=f"j{j}") for j in range(9)]
    fc = classify_frequently_cited(samples)
    assert set(fc) == {"a.com"}
    assert fc.appearance_histogram[8] == 1
    assert fc.appearance_histogram[9] == 1


def test_frequently_cited_min_fraction():
    """A lower min_fraction admits domains seen in most samples."""
    samples = [make_sample([["a.com", "b.com" if j < 8 else "a.com"]], job=f"j{j}") for j in range(9)]
    assert "b.com" in classify_frequently_cited(samples, min_fraction=0.8)


def test_frequently_cited_monotone():
    """Adding a sample never grows the set."""
    samples = [make_sample([["a.com", "b.com", "c.com"]], job="j1"), make_sample([["a.com", "b.com"]], job="j2")]
    before = set(classify_frequently_cited(samples))
    after = set(classify_frequently_cited(samples + [make_sample([["a.com"]], job="j3")]))
    assert after <= before


def test_frequently_cited_needs_two_samples():
    """A single sample has no frequently-cited set."""
    with pytest.raises(SingleSample):
        classify_frequently_cited([make_sample([["a.com"]])])


def test_frequently_cited_mixed_keys():
    """Samples from two platforms are refused."""
    with pytest.raises(MixedKeys):
        classify_frequently_cited([make_sample([["a.com"]], platform="x"), make_sample([["a.com"]], platform="y")])


# ---- Across samples ----

def test_cross_sample_mean_counts_absence_as_zero():
    """Mean share over samples treats an uncited sample as 0."""
    m1 = compute_sample_metrics(make_sample([["a.com", "b.com"]], job="j1"))
    m2 = compute_sample_metrics(make_sample([["a.com"]], job="j2"))
    assert cross_sample_mean([m1, m2], ["a.com", "b.com"]) == {"a.com": 0.75, "b.com": 0.25}
    assert cross_sample_mean([m1, m2], ["b.com"], metric="prevalence") == {"b.com": 0.5}


def test_metric_correlations_pooled():
    """Pooled count/share/prevalence correlations are reported per platform."""
    rng = np.random.default_rng(11)
    metrics = []
    for j in range(4):
        responses = [list(rng.choice([f"d{i}.com" for i in range(8)], size=rng.integers(1, 8))) for _ in range(20)]
        metrics.append(compute_sample_metrics(make_sample(responses, job=f"j{j}")))
    (corr,) = metric_correlations(metrics)
    assert corr.platform == "p"
    assert corr.n_rows == sum(len(m.per_domain) for m in metrics)
    assert 0.5 < corr.count_share <= 1.0
