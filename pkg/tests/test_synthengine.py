"""Tests for core/synthengine.py: the synthetic answer engine and its ground truth."""

import json
from datetime import timedelta

import numpy as np
import pytest

from core.corpus import group_repeated_queries, load_dataset, serialize_dataset
from core.driftwatch import Status, content_status, ingest_checksums
from core.errors import ConfigError, ScheduleOutOfBounds
from core.metrics import compute_sample_metrics
from core.overlap import overlap_summary
from core.synthengine import (
    CountDistribution,
    DriftEvent,
    SynthConfig,
    apply_event,
    domain_name,
    generate,
    inject_drift,
    synthetic_checksums,
    write_synthetic,
    zipf_shares,
)


def small(**changes):
    fields = dict(n_domains=40, citations_per_response=CountDistribution.fixed(5),
                  n_queries=30, n_samples=3, seed=7)
    fields.update(changes)
    return SynthConfig(**fields)


def grouped_of(dataset):
    (platform, topic), = dataset.series_keys()
    return group_repeated_queries(dataset.series(platform, topic))


# ---- Share vectors ----

def test_zipf_shares_formula():
    """share(r) = r^-s / sum k^-s."""
    shares = zipf_shares(4, 1.0)
    total = 1 + 1 / 2 + 1 / 3 + 1 / 4
    assert shares == pytest.approx([1 / total, 0.5 / total, (1 / 3) / total, 0.25 / total])
    assert shares.sum() == pytest.approx(1.0)


def test_apply_event_swap_reverse_shift():
    """Swaps, reversed blocks and shifts keep a normalized vector."""
    base = zipf_shares(6, 1.0)
    swapped = apply_event(base, DriftEvent(at=0, swaps=((1, 2),)))
    assert swapped[0] == pytest.approx(base[1]) and swapped[1] == pytest.approx(base[0])
    reversed_head = apply_event(base, DriftEvent(at=0, reverse=(1, 3)))
    assert list(reversed_head[:3]) == pytest.approx(list(base[:3][::-1]))
    shifted = apply_event(base, DriftEvent(at=0, shifts=((3, 0.4),)))
    assert shifted[2] == pytest.approx(0.4)
    assert shifted.sum() == pytest.approx(1.0)
    assert shifted[0] / shifted[1] == pytest.approx(base[0] / base[1])


def test_domain_names():
    """Zero-padded synthetic names."""
    assert domain_name(1) == "d0001.example"
    assert domain_name(250) == "d0250.example"


# ---- Generation ----

def test_generate_shape_and_truth():
    """n_samples x n_queries responses; ground truth sums to 1."""
    dataset, truth = generate(small())
    assert len(dataset.samples) == 3
    assert dataset.n_responses == 90
    assert dataset.job_order == ("job01", "job02", "job03")
    assert sum(truth.true_share.values()) == pytest.approx(1.0)
    assert truth.config["seed"] == 7


def test_generate_deterministic():
    """Same config and seed serialize to identical lines; another seed differs."""
    a, _ = generate(small())
    b, _ = generate(small())
    c, _ = generate(small(seed=8))
    assert serialize_dataset(a) == serialize_dataset(b)
    assert serialize_dataset(a) != serialize_dataset(c)


def test_citation_counts_follow_distribution():
    """Fixed counts are honoured exactly when pages never run out."""
    dataset, _ = generate(small(n_domains=500, zipf_s=0.5))
    counts = {r.n_citations for s in dataset.samples.values() for r in s.responses}
    assert counts == {5}


def test_urls_unique_within_response():
    """A response never cites the same URL twice; domains may repeat."""
    dataset, _ = generate(small(n_domains=3, citations_per_response=CountDistribution.fixed(8)))
    for sample in dataset.samples.values():
        for r in sample.responses:
            urls = [c.url for c in r.citations]
            assert len(urls) == len(set(urls))
            assert len({c.domain for c in r.citations}) <= 3


def test_fully_deterministic_limit():
    """consistency=1 and deterministic_fraction=1: every repeated query cites the same set."""
    dataset, _ = generate(small(consistency=1.0, deterministic_fraction=1.0))
    assert overlap_summary(grouped_of(dataset)).identical_rate == 1.0


def test_independent_draw_limit():
    """consistency=0 over a large flat pool: pair Jaccard concentrates at 0."""
    config = small(n_domains=2000, zipf_s=0.3, consistency=0.0, n_queries=100, citations_per_response=CountDistribution.fixed(6))
    summary = overlap_summary(grouped_of(generate(config)[0]))
    assert summary.median_jaccard == 0.0
    assert summary.zero_overlap_rate > 0.9


def test_pooled_top_share_matches_truth():
    """Zipf 1.1 over 500 domains, 200 x 9: pooled top share within 0.02 of truth."""
    config = SynthConfig(n_domains=500, zipf_s=1.1, consistency=0.0, n_queries=200, n_samples=9, seed=21)
    dataset, truth = generate(config)
    top = domain_name(1)
    hits = total = 0
    for sample in dataset.samples.values():
        m = compute_sample_metrics(sample)
        hits += m.per_domain[top].count
        total += m.total_citations
    assert abs(hits / total - truth.true_share[top]) <= 0.02


def test_consistency_monotone():
    """Median pair Jaccard does not decrease along a 5-point consistency grid."""
    medians = []
    for c in (0.0, 0.25, 0.5, 0.75, 1.0):
        config = small(n_domains=200, consistency=c, n_queries=200, n_samples=4,
                       citations_per_response=CountDistribution.fixed(10), seed=13)
        medians.append(overlap_summary(grouped_of(generate(config)[0])).median_jaccard)
    assert medians == sorted(medians)
    assert medians[-1] > medians[0]


def test_response_failure_rate():
    """Dropped responses thin each sample; the rest keep their query ids."""
    dataset, _ = generate(small(response_failure_rate=0.2, n_queries=200))
    assert 400 < dataset.n_responses < 560
    assert all(r.query_id.startswith("q") for s in dataset.samples.values() for r in s.responses)


def test_deterministic_block_domains():
    """Deterministic queries cite only the reserved block, identically in every sample."""
    dataset, truth = generate(small(deterministic_fraction=0.2, deterministic_domains=3))
    block = set(truth.deterministic_domains)
    assert block == {domain_name(41), domain_name(42), domain_name(43)}
    assert len(truth.deterministic_queries) == 6
    grouped = grouped_of(dataset)
    for qid in truth.deterministic_queries:
        sets = [{c.domain for c in r.citations} for r in grouped[qid]]
        assert all(s == sets[0] for s in sets)
        assert sets[0] <= block


def test_config_errors_named():
    """Invalid fields are reported together."""
    with pytest.raises(ConfigError) as info:
        generate(small(consistency=1.5, n_queries=0))
    assert {"consistency", "n_queries"} <= set(info.value.diagnostics)


# ---- Drift schedules ----

def test_inject_drift_empty_schedule():
    """Nothing scheduled: the config comes back unchanged."""
    config = small()
    assert inject_drift(config, []) is config


def test_inject_drift_appends_events():
    """Events are appended and reported per regime in the ground truth."""
    config = inject_drift(small(), [DriftEvent(at=1, swaps=((1, 2),))])
    assert len(config.drift) == 1
    _, truth = generate(config)
    assert len(truth.regimes) == 2
    later = truth.regimes[1]["true_share"]
    assert later[domain_name(1)] == pytest.approx(truth.true_share[domain_name(2)])


@pytest.mark.parametrize("event", [
    DriftEvent(at=3),
    DriftEvent(at=-1),
    DriftEvent(at=30, scope="query"),
    DriftEvent(at=0, scope="sample"),
    DriftEvent(at=0, swaps=((1, 41),)),
    DriftEvent(at=0, reverse=(5, 2)),
    DriftEvent(at=0, shifts=((1, 1.0),)),
])
def test_inject_drift_out_of_bounds(event):
    """Indices, ranks and shifted shares outside their ranges are refused."""
    with pytest.raises(ScheduleOutOfBounds):
        inject_drift(small(), [event])


def test_job_drift_changes_later_samples_only():
    """A job-scoped reversal leaves earlier samples drawn from the base vector."""
    reversed_config = small(n_domains=10, consistency=0.0, n_queries=200, n_samples=2,
                            drift=(DriftEvent(at=1, reverse=(1, 10)),))
    dataset, _ = generate(reversed_config)
    first, second = (compute_sample_metrics(s) for s in dataset.series("synthetic", "default"))
    assert first.share(domain_name(1)) > first.share(domain_name(10))
    assert second.share(domain_name(1)) < second.share(domain_name(10))


# ---- Files and checksums ----

def test_write_synthetic(tmp_path):
    """Writes the dataset, job order, truth, config echo and checksums; the dataset reloads."""
    dataset, truth = generate(small())
    paths = write_synthetic(dataset, truth, tmp_path / "sim", checksums=synthetic_checksums(dataset))
    assert sorted(p.name for p in paths) == [
        "checksums.jsonl", "config.json", "dataset.jsonl", "ground_truth.json", "job_order.txt",
    ]
    reloaded = load_dataset([tmp_path / "sim" / "dataset.jsonl"], tmp_path / "sim" / "job_order.txt").dataset
    assert serialize_dataset(reloaded) == serialize_dataset(dataset)
    ground = json.loads((tmp_path / "sim" / "ground_truth.json").read_text(encoding="utf-8"))
    assert sum(ground["true_share"].values()) == pytest.approx(1.0)


def test_synthetic_checksums_churn_and_stable():
    """Churn domains change every job; others stay unchanged without scheduled changes."""
    dataset, _ = generate(small(n_domains=5, consistency=0.0))
    samples = dataset.series("synthetic", "default")
    ledger = ingest_checksums(synthetic_checksums(dataset, churn_domains=[domain_name(1)]))
    churn = [s.status for s in content_status(ledger, samples, domain_name(1))]
    stable = [s.status for s in content_status(ledger, samples, domain_name(2))]
    assert churn == [Status.UNKNOWN, Status.CHANGED, Status.CHANGED]
    assert stable == [Status.UNKNOWN, Status.UNCHANGED, Status.UNCHANGED]


def test_synthetic_checksums_scheduled_change():
    """A scheduled (url, job) change flips only that transition."""
    dataset, _ = generate(small(n_domains=5, consistency=0.0))
    samples = dataset.series("synthetic", "default")
    def urls(sample):
        return {c.url for r in sample.responses for c in r.citations if c.domain == domain_name(2)}

    url = sorted(urls(samples[0]) & urls(samples[1]) & urls(samples[2]))[0]
    ledger = ingest_checksums(synthetic_checksums(dataset, changes=[(url, "job02")]))
    statuses = [s.status for s in content_status(ledger, samples, domain_name(2))]
    assert statuses == [Status.UNKNOWN, Status.CHANGED, Status.UNCHANGED]


def test_high_frequency_timestamps_follow_interval():
    """Responses in consecutive jobs are one job interval apart."""
    dataset, _ = generate(small(job_interval=timedelta(minutes=10)))
    first, second = dataset.series("synthetic", "default")[:2]
    assert second.responses[0].timestamp - first.responses[0].timestamp == timedelta(minutes=10)
    assert np.all(np.diff([r.timestamp.timestamp() for r in first.responses]) > 0)
