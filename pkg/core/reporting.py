"""
Tabular exports and the consolidated report for the visibility toolkit.

Every builder returns a pandas DataFrame with a fixed column order; the
writers pin line endings and key order so a rerun with the same inputs and
seed produces byte-identical files. Nothing here draws random numbers.
"""

import json
import logging
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.dispersion import DispersionRecord, DispersionSummary, RankShareTable
from core.driftwatch import ContentStatus, DriftFlag
from core.metrics import CitationSummary, FrequentlyCitedSet, MetricCorrelation, SampleMetrics
from core.models import SampleKey
from core.overlap import OverlapSummary, PairRecord, SimilarityByCount
from core.resample import BootstrapCI, ConvergenceCurve
from core.stability import StabilitySeries

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "visibility-report/1"

Series = Tuple[str, str]


def _key_columns(key: SampleKey) -> dict:
    return {"platform": key.platform, "topic": key.topic, "job_id": key.job_id}


def _frame(rows: List[dict], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=list(columns))


# ============================================================================
# METRICS
# ============================================================================

def citation_summary_frame(summaries: Iterable[Tuple[SampleKey, CitationSummary]]) -> pd.DataFrame:
    rows = [{**_key_columns(k), **asdict(s)} for k, s in summaries]
    return _frame(rows, ["platform", "topic", "job_id", "n", "mean", "median", "std",
                         "min", "p25", "p75", "p95", "max"])


def sample_metrics_frame(metrics: Iterable[SampleMetrics]) -> pd.DataFrame:
    rows = [
        {**_key_columns(m.key), "domain": dm.domain, "count": dm.count,
         "share": dm.share, "prevalence": dm.prevalence}
        for m in metrics
        for dm in m.per_domain.values()
    ]
    return _frame(rows, ["platform", "topic", "job_id", "domain", "count", "share", "prevalence"])


def metric_correlations_frame(correlations: Iterable[MetricCorrelation]) -> pd.DataFrame:
    return _frame([asdict(c) for c in correlations],
                  ["platform", "n_rows", "count_share", "count_prevalence", "share_prevalence"])


def appearance_histogram_frame(sets: Iterable[FrequentlyCitedSet]) -> pd.DataFrame:
    """One row per (series, k): domains cited in exactly k of the series' samples."""
    rows = [
        {"platform": s.platform, "topic": s.topic, "n_samples": s.n_samples,
         "appearances": k, "n_domains": n, "every_sample": k == s.n_samples}
        for s in sets
        for k, n in sorted(s.appearance_histogram.items())
    ]
    return _frame(rows, ["platform", "topic", "n_samples", "appearances", "n_domains", "every_sample"])


def share_timeseries_frame(metrics: Sequence[SampleMetrics], domains: Iterable[str]) -> pd.DataFrame:
    """Share and prevalence of each tracked domain per job, zero when uncited that job."""
    rows = [
        {**_key_columns(m.key), "job_index": i, "domain": d, "share": m.share(d),
         "prevalence": m.prevalence(d)}
        for d in sorted(domains)
        for i, m in enumerate(metrics)
    ]
    return _frame(rows, ["platform", "topic", "job_id", "job_index", "domain", "share", "prevalence"])


# ============================================================================
# OVERLAP
# ============================================================================

def overlap_pairs_frame(series: Series, pairs: Iterable[PairRecord]) -> pd.DataFrame:
    platform, topic = series
    rows = [{"platform": platform, "topic": topic, **asdict(p)} for p in pairs]
    return _frame(rows, ["platform", "topic", "query_id", "sample_a", "sample_b",
                         "jaccard", "intersection", "union"])


def overlap_summary_frame(summaries: Iterable[OverlapSummary]) -> pd.DataFrame:
    rows = []
    for s in summaries:
        row = asdict(s)
        row.pop("histogram")
        row.pop("bin_edges")
        rows.append(row)
    return _frame(rows, ["platform", "topic", "n_queries", "n_pairs", "median_jaccard",
                         "identical_rate", "zero_overlap_rate", "mean_intersection",
                         "mean_unique_domains"])


def overlap_histogram_frame(summaries: Iterable[OverlapSummary]) -> pd.DataFrame:
    rows = []
    for s in summaries:
        edges = s.bin_edges
        for i, count in enumerate(s.histogram):
            rows.append({"platform": s.platform, "topic": s.topic, "bin_lower": edges[i],
                         "bin_upper": edges[i + 1], "pairs": count,
                         "fraction": count / s.n_pairs if s.n_pairs else 0.0})
    return _frame(rows, ["platform", "topic", "bin_lower", "bin_upper", "pairs", "fraction"])


def similarity_by_count_frame(series: Series, curve: SimilarityByCount) -> pd.DataFrame:
    platform, topic = series
    rows = [{"platform": platform, "topic": topic, **asdict(b)} for b in curve.bins]
    return _frame(rows, ["platform", "topic", "modal_count", "median_jaccard", "pair_count", "p25", "p75"])


# ============================================================================
# CONFIDENCE INTERVALS
# ============================================================================

def ci_frame(
    key: SampleKey,
    cis: Iterable[BootstrapCI],
    cross_sample_mean: Optional[Dict[str, float]] = None,
) -> pd.DataFrame:
    """domain, point, lower, upper first; then width and provenance columns."""
    means = cross_sample_mean or {}
    rows = [
        {"domain": ci.domain, "point": ci.point, "lower": ci.lower, "upper": ci.upper,
         "width": ci.width, "cross_sample_mean": means.get(ci.domain, float("nan")),
         "point_outside": ci.point_outside, **_key_columns(key), "metric": ci.metric,
         "replicates": ci.replicates, "alpha": ci.alpha, "seed": ci.seed}
        for ci in cis
    ]
    return _frame(rows, ["domain", "point", "lower", "upper", "width", "cross_sample_mean",
                         "point_outside", "platform", "topic", "job_id", "metric",
                         "replicates", "alpha", "seed"])


def convergence_frame(key: SampleKey, curve: ConvergenceCurve) -> pd.DataFrame:
    rows = [
        {**_key_columns(key), "metric": curve.metric, "n": p.n, "max_ci_width": p.max_ci_width,
         "reference_width": p.reference_width, "target_width": curve.target_width,
         "crossed_target": p.crossed_target, "max_domain": p.max_domain,
         "order": curve.order, "draws": curve.draws, "seed": curve.seed}
        for p in curve.points
    ]
    return _frame(rows, ["platform", "topic", "job_id", "metric", "n", "max_ci_width",
                         "reference_width", "target_width", "crossed_target", "max_domain",
                         "order", "draws", "seed"])


# ============================================================================
# DISPERSION
# ============================================================================

def rank_share_frame(
    tables: Iterable[RankShareTable],
    baseline_job: Optional[str] = None,
    frequent: Optional[FrequentlyCitedSet] = None,
) -> pd.DataFrame:
    """Ranked shares per job; baseline marks the first job, frequently_cited the overlay domains."""
    tracked = frequent.domains if frequent is not None else frozenset()
    rows = [
        {**_key_columns(t.key), "rank": r.rank, "domain": r.domain, "share": r.share, "count": r.count,
         "baseline": t.key.job_id == baseline_job, "frequently_cited": r.domain in tracked}
        for t in tables
        for r in t.rows
    ]
    return _frame(rows, ["platform", "topic", "job_id", "rank", "domain", "share", "count",
                         "baseline", "frequently_cited"])


def dispersion_domains_frame(records: Iterable[DispersionRecord]) -> pd.DataFrame:
    return _frame([asdict(r) for r in records],
                  ["platform", "topic", "domain", "n_samples", "geometric_mean_share",
                   "log_std", "fold_factor"])


def dispersion_summary_frame(summaries: Iterable[DispersionSummary]) -> pd.DataFrame:
    rows = [{**asdict(s), "topic": s.topic if s.topic is not None else "*"} for s in summaries]
    return _frame(rows, ["platform", "topic", "mean_log_std", "median_log_std", "n_domains"])


# ============================================================================
# STABILITY AND DRIFT
# ============================================================================

def stability_pairs_frame(series: StabilitySeries) -> pd.DataFrame:
    rows = []
    for kind, result in [("consecutive", p) for p in series.pairs] + [("span", series.span)]:
        rows.append({
            "platform": result.sample_a.platform, "topic": result.sample_a.topic, "kind": kind,
            "job_a": result.sample_a.job_id, "job_b": result.sample_b.job_id,
            "rho": result.rho, "ci_lower": result.ci_lower, "ci_upper": result.ci_upper,
            "ci_width": result.ci_width, "sufficient": result.sufficient, "stable": result.stable,
            "point_outside": result.point_outside, "n_domains": result.n_domains,
            "excluded": result.excluded, "B": result.B, "seed": result.seed,
            "error": result.error or "",
        })
    return _frame(rows, ["platform", "topic", "kind", "job_a", "job_b", "rho", "ci_lower",
                         "ci_upper", "ci_width", "sufficient", "stable", "point_outside",
                         "n_domains", "excluded", "B", "seed", "error"])


def stability_summary_frame(rows: Iterable[Tuple[Series, StabilitySeries]]) -> pd.DataFrame:
    out = [
        {"platform": p, "topic": t, "n_pairs": len(s.pairs), "n_sufficient": s.n_sufficient,
         "n_stable": s.n_stable, "mean_rho": s.mean_rho, "mean_ci_width": s.mean_ci_width,
         "span_rho": s.span.rho, "span_ci_width": s.span.ci_width,
         "span_drift_detected": s.span_drift_detected}
        for (p, t), s in rows
    ]
    return _frame(out, ["platform", "topic", "n_pairs", "n_sufficient", "n_stable", "mean_rho",
                        "mean_ci_width", "span_rho", "span_ci_width", "span_drift_detected"])


def drift_flags_frame(series: Series, flags: Iterable[DriftFlag]) -> pd.DataFrame:
    platform, topic = series
    rows = [{"platform": platform, "topic": topic, **asdict(f)} for f in flags]
    return _frame(rows, ["platform", "topic", "domain", "baseline_job", "current_job",
                         "baseline_share", "current_share", "share_delta", "chi2", "p_value",
                         "flagged", "low_count"])


def content_status_frame(
    series: Series,
    statuses: Iterable[ContentStatus],
    flagged: Optional[Dict[Tuple[str, str], bool]] = None,
) -> pd.DataFrame:
    platform, topic = series
    flagged = flagged or {}
    rows = [
        {"platform": platform, "topic": topic, "domain": s.domain, "job_id": s.job_id,
         "share": s.share, "status": s.status.value, "compared_urls": s.compared_urls,
         "drift_flagged": flagged.get((s.domain, s.job_id), False)}
        for s in statuses
    ]
    return _frame(rows, ["platform", "topic", "domain", "job_id", "share", "status",
                         "compared_urls", "drift_flagged"])


# ============================================================================
# WRITERS
# ============================================================================

def concat(frames: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Stack frames of one export; an all-empty export keeps its header."""
    if not frames:
        return pd.DataFrame()
    non_empty = [f for f in frames if not f.empty]
    if not non_empty:
        return frames[0]
    return pd.concat(non_empty, ignore_index=True)


def write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def to_jsonable(obj):
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(obj, Enum):
        return obj.value
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_report_json(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


# ============================================================================
# PLAIN-TEXT SUMMARY
# ============================================================================

def _fmt(value, spec: str = ".3f") -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "n/a"
    return format(value, spec)


def format_summary_text(report: dict) -> str:
    """Human-readable digest of a report dict (overlap rates in percent)."""
    prov = report.get("provenance", {})
    sections = report.get("sections", {})
    text = f"""
CITATION VISIBILITY REPORT
{'=' * 80}

Inputs: {', '.join(i['name'] for i in prov.get('inputs', [])) or 'n/a'}
Seed: {prov.get('seed')} | B: {prov.get('B')} | alpha: {prov.get('alpha')}
Responses: {report.get('ingest', {}).get('accepted', 0)} | Samples: {report.get('ingest', {}).get('samples', 0)}
"""

    metrics = sections.get("metrics", {})
    overlap = sections.get("overlap", {})
    stability = sections.get("stability", {})
    converge = sections.get("converge", {})
    drift = sections.get("drift", {})

    for series in sorted(set(metrics) | set(overlap) | set(stability)):
        m = metrics.get(series, {})
        o = overlap.get(series, {})
        s = stability.get(series, {})
        text += f"""
{'=' * 80}
{series}
{'=' * 80}
   Samples: {m.get('n_samples', 'n/a')} | Frequently cited domains: {m.get('n_frequently_cited', 'n/a')}
   Citations per response (median): {_fmt(m.get('median_citations'), '.1f')}
"""
        if o:
            text += (
                f"   Median Jaccard: {_fmt(o.get('median_jaccard'), '.2f')} | "
                f"Identical: {_fmt(100 * o['identical_rate'], '.2f')}% | "
                f"Zero overlap: {_fmt(100 * o['zero_overlap_rate'], '.2f')}%\n"
            )
        for metric, c in sorted(converge.get(series, {}).items()):
            text += f"   {metric.capitalize()} CI width at full sample: {_fmt(c.get('final_width'))} (target {_fmt(c.get('target_width'), '.2f')}, crossed at n={c.get('crossing_n') or 'never'})\n"
        if s:
            text += (
                f"   Rank stability: {s.get('n_stable', 0)}/{s.get('n_pairs', 0)} pairs stable, "
                f"mean rho {_fmt(s.get('mean_rho'))}, span rho {_fmt(s.get('span_rho'))}\n"
            )
        if series in drift:
            text += f"   Drift flags vs baseline: {drift[series].get('n_flagged', 0)}\n"

    errors = report.get("errors", [])
    if errors:
        text += f"\n{'=' * 80}\nSKIPPED ({len(errors)})\n"
        for e in errors:
            text += f"   [{e['section']}] {e['series']}: {e['error']}\n"

    text += f"\n{'=' * 80}\nSchema: {report.get('schema', REPORT_SCHEMA)} | Version: {prov.get('version')}\n"
    return text
