"""
Pipeline orchestrator for the citation-visibility toolkit.

run_command() dispatches one CLI subcommand; run_report() runs every
analysis section over every (platform, topic) series and writes the full
set of CSV exports plus report.json. A failing series is logged, recorded
under "errors" in the report, and skipped; the rest of the report still
completes.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import pandas as pd

from core import __version__
from core.config import RunConfig
from core.corpus import group_repeated_queries, load_dataset, write_dataset, write_job_order
from core.dispersion import (
    dispersion_records, dispersion_summary, loglog_fit, rank_share_table,
)
from core.driftwatch import (
    ChecksumLedger, content_status, detect_span_drift, drift_series, load_checksums,
)
from core.errors import InvalidParameter, VisibilityError
from core.metrics import (
    FrequentlyCitedSet, SampleMetrics, citation_summary, classify_frequently_cited,
    compute_sample_metrics, cross_sample_mean, metric_correlations,
)
from core.models import Dataset, Sample, SampleKey
from core.overlap import all_pair_records, overlap_summary, similarity_by_count
from core.resample import bootstrap_all_domains, convergence_curve, derive_seed
from core.stability import rank_stability_series
from core import reporting
from core.synthengine import domain_name, generate, preset, synthetic_checksums, write_synthetic

logger = logging.getLogger(__name__)

Series = Tuple[str, str]

# Synthetic checksums written by `simulate`: occasional page edits plus one
# domain whose pages re-render differently every job.
SIM_CHANGE_RATE = 0.05
SIM_CHURN_RANK = 5


@dataclass
class SectionResult:
    frames: Dict[str, List[pd.DataFrame]] = field(default_factory=dict)
    summary: Dict[str, dict] = field(default_factory=dict)

    def add(self, name: str, frame: pd.DataFrame) -> None:
        self.frames.setdefault(name, []).append(frame)


class AnalysisContext:
    """A parsed dataset plus caches shared by the analysis sections."""

    def __init__(self, config: RunConfig, dataset: Dataset, ledger: Optional[ChecksumLedger] = None,
                 ingest: Optional[dict] = None):
        self.config = config
        self.dataset = dataset
        self.ledger = ledger
        self.ingest = ingest or {}
        self.errors: List[dict] = []
        self._metrics: Dict[SampleKey, SampleMetrics] = {}
        self._frequent: Dict[Series, FrequentlyCitedSet] = {}

    def series_keys(self) -> List[Series]:
        return self.dataset.series_keys()

    def samples(self, series: Series) -> List[Sample]:
        return self.dataset.series(*series)

    def metrics(self, sample: Sample) -> SampleMetrics:
        if sample.key not in self._metrics:
            self._metrics[sample.key] = compute_sample_metrics(sample)
        return self._metrics[sample.key]

    def series_metrics(self, series: Series) -> List[SampleMetrics]:
        return [self.metrics(s) for s in self.samples(series)]

    def frequent(self, series: Series) -> FrequentlyCitedSet:
        if series not in self._frequent:
            self._frequent[series] = classify_frequently_cited(
                self.samples(series), min_fraction=self.config.min_fraction
            )
        return self._frequent[series]

    def tracked_domains(self, series: Series) -> List[str]:
        """Frequently-cited domains; every cited domain for a single-sample series."""
        samples = self.samples(series)
        if len(samples) >= 2:
            return sorted(self.frequent(series))
        return sorted(self.metrics(samples[0]).per_domain)

    def record_error(self, section: str, series: Series, error: Exception) -> None:
        label = "/".join(series)
        logger.error(f"[{section}] {label} skipped: {error}", exc_info=True)
        self.errors.append({"section": section, "series": label,
                            "error_type": type(error).__name__, "error": str(error)})

    def for_each_series(self, section: str, body: Callable[[Series], None]) -> None:
        for series in self.series_keys():
            try:
                body(series)
            except VisibilityError as e:
                self.record_error(section, series, e)


def _label(series: Series) -> str:
    return "/".join(series)


# ============================================================================
# INPUTS
# ============================================================================

def resolve_inputs(config: RunConfig) -> Tuple[List[Path], Optional[Path], Optional[Path]]:
    """Expand directories to dataset.jsonl (plus job_order.txt / checksums.jsonl if present)."""
    if not config.inputs:
        raise InvalidParameter(f"'{config.command}' needs --in")
    paths: List[Path] = []
    job_order = Path(config.job_order) if config.job_order else None
    checksums = Path(config.checksums) if config.checksums else None
    for raw in config.inputs:
        path = Path(raw)
        if path.is_dir():
            if job_order is None and (path / "job_order.txt").exists():
                job_order = path / "job_order.txt"
            if checksums is None and (path / "checksums.jsonl").exists():
                checksums = path / "checksums.jsonl"
            path = path / "dataset.jsonl"
        if not path.exists():
            raise FileNotFoundError(f"Input not found: {path}")
        paths.append(path)
    return paths, job_order, checksums


def load_context(config: RunConfig) -> AnalysisContext:
    paths, job_order, checksums = resolve_inputs(config)
    result = load_dataset(paths, job_order_path=job_order)
    ledger = load_checksums(checksums) if checksums else None
    ingest = {
        "accepted": result.accepted,
        "repaired": result.repaired,
        "rejected": result.rejected,
        "samples": len(result.dataset.samples),
        "series": [_label(s) for s in result.dataset.series_keys()],
        "job_order": list(result.dataset.job_order),
        "errors": [str(e) for e in result.errors[:50]],
    }
    return AnalysisContext(config, result.dataset, ledger=ledger, ingest=ingest)


# ============================================================================
# SECTIONS
# ============================================================================

def section_metrics(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()
    all_metrics = []
    for series in ctx.series_keys():
        samples = ctx.samples(series)
        metrics = ctx.series_metrics(series)
        all_metrics.extend(metrics)
        summaries = [(s.key, citation_summary(s)) for s in samples]
        out.add("citation_summary", reporting.citation_summary_frame(summaries))
        out.add("sample_metrics", reporting.sample_metrics_frame(metrics))
        pooled = [r.n_citations for s in samples for r in s.responses]
        summary = {
            "n_samples": len(samples),
            "n_responses": sum(s.n_responses for s in samples),
            "median_citations": float(pd.Series(pooled).median()) if pooled else None,
        }
        if len(samples) >= 2:
            fc = ctx.frequent(series)
            out.add("appearance_histogram", reporting.appearance_histogram_frame([fc]))
            out.add("share_timeseries", reporting.share_timeseries_frame(metrics, fc))
            summary["n_frequently_cited"] = len(fc)
            summary["n_domains"] = len(fc.appearances)
        out.summary[_label(series)] = summary
    out.add("metric_correlations", reporting.metric_correlations_frame(metric_correlations(all_metrics)))
    return out


def section_overlap(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()
    summaries = []

    def body(series: Series) -> None:
        grouped = group_repeated_queries(ctx.samples(series), include_duplicates=ctx.config.include_duplicates)
        summary = overlap_summary(grouped)
        summaries.append(summary)
        out.add("overlap_pairs", reporting.overlap_pairs_frame(series, all_pair_records(grouped)))
        out.add("similarity_by_count", reporting.similarity_by_count_frame(series, similarity_by_count(grouped)))
        out.summary[_label(series)] = {
            "n_queries": summary.n_queries,
            "n_pairs": summary.n_pairs,
            "median_jaccard": summary.median_jaccard,
            "identical_rate": summary.identical_rate,
            "zero_overlap_rate": summary.zero_overlap_rate,
            "mean_intersection": summary.mean_intersection,
            "mean_unique_domains": summary.mean_unique_domains,
        }

    ctx.for_each_series("overlap", body)
    out.add("overlap_summary", reporting.overlap_summary_frame(summaries))
    out.add("overlap_histogram", reporting.overlap_histogram_frame(summaries))
    return out


def section_ci(ctx: AnalysisContext, metrics: Tuple[str, ...] = ("share", "prevalence")) -> SectionResult:
    out = SectionResult()
    cfg = ctx.config

    def body(series: Series) -> None:
        domains = ctx.tracked_domains(series)
        if not domains:
            logger.warning(f"{_label(series)}: no tracked domains, no intervals")
            return
        platform, topic = series
        samples = ctx.samples(series)
        per_metric = {}
        for metric in metrics:
            means = cross_sample_mean(ctx.series_metrics(series), domains, metric) if len(samples) > 1 else None
            widths = []
            for sample in samples:
                seed = derive_seed(cfg.seed, "ci", metric, platform, topic, sample.key.job_id)
                cis = bootstrap_all_domains(sample, metric, domains, B=cfg.B, alpha=cfg.alpha, seed=seed)
                out.add(f"ci_{metric}", reporting.ci_frame(sample.key, cis.values(), means))
                widths.extend(ci.width for ci in cis.values())
            per_metric[metric] = {
                "n_domains": len(domains),
                "max_width": max(widths),
                "mean_width": sum(widths) / len(widths),
            }
        out.summary[_label(series)] = per_metric

    ctx.for_each_series("ci", body)
    return out


def section_converge(ctx: AnalysisContext, metrics: Tuple[str, ...] = ("share", "prevalence")) -> SectionResult:
    """Convergence curves on the first (baseline) sample of each series."""
    out = SectionResult()
    cfg = ctx.config

    def body(series: Series) -> None:
        domains = ctx.tracked_domains(series)
        if not domains:
            logger.warning(f"{_label(series)}: no tracked domains, no convergence curve")
            return
        baseline = ctx.samples(series)[0]
        per_metric = {}
        for metric in metrics:
            curve = convergence_curve(
                baseline, metric, domains,
                B=cfg.B, alpha=cfg.alpha,
                seed=derive_seed(cfg.seed, "converge", metric, *series),
                order=cfg.convergence_order, draws=cfg.draws,
                target_width=cfg.target_width(metric),
            )
            out.add(f"convergence_{metric}", reporting.convergence_frame(baseline.key, curve))
            per_metric[metric] = {
                "job_id": baseline.key.job_id,
                "crossing_n": curve.crossing_n,
                "final_width": curve.points[-1].max_ci_width,
                "target_width": curve.target_width,
                "p_anchor": curve.p_anchor,
            }
        out.summary[_label(series)] = per_metric

    ctx.for_each_series("converge", body)
    return out


def section_dispersion(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()
    records = []

    def body(series: Series) -> None:
        metrics = ctx.series_metrics(series)
        tables = [rank_share_table(m) for m in metrics if m.total_citations > 0]
        frequent = ctx.frequent(series) if len(metrics) >= 2 else None
        out.add("rank_share", reporting.rank_share_frame(tables, metrics[0].key.job_id, frequent))
        fits = {}
        for table in tables:
            try:
                fit = loglog_fit(table, rank_range=(1, 50))
                fits[table.key.job_id] = {"slope": fit.slope, "r_squared": fit.r_squared, "n_points": fit.n_points}
            except VisibilityError as e:
                logger.warning(f"{table.key.label()}: no log-log fit ({e})")
        summary = {"loglog_fit": fits}
        if len(metrics) >= 2:
            everywhere = [d for d in ctx.frequent(series) if all(m.share(d) > 0 for m in metrics)]
            recs = dispersion_records(metrics, everywhere)
            records.extend(recs)
            summary["n_domains"] = len(recs)
            summary["zero_log_std"] = sorted(r.domain for r in recs if r.log_std == 0.0)
        out.summary[_label(series)] = summary

    ctx.for_each_series("dispersion", body)
    out.add("dispersion_domains", reporting.dispersion_domains_frame(records))
    out.add("dispersion_summary", reporting.dispersion_summary_frame(
        dispersion_summary(records) + dispersion_summary(records, by_topic=True)
    ))
    return out


def section_stability(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()
    cfg = ctx.config
    rows = []

    def body(series: Series) -> None:
        metrics = ctx.series_metrics(series)
        domains = ctx.tracked_domains(series)
        span_drift = detect_span_drift(metrics[0], metrics[-1], cfg.drift_alpha,
                                       cfg.practical_delta, domains=domains) if len(metrics) >= 2 else None
        result = rank_stability_series(
            metrics, domains, B=cfg.B, alpha=cfg.alpha,
            seed=derive_seed(cfg.seed, "stability", *series),
            thresholds=cfg.thresholds, span_drift_detected=span_drift,
        )
        rows.append((series, result))
        out.add("stability_pairs", reporting.stability_pairs_frame(result))
        out.summary[_label(series)] = {
            "n_pairs": len(result.pairs),
            "n_sufficient": result.n_sufficient,
            "n_stable": result.n_stable,
            "mean_rho": result.mean_rho,
            "mean_ci_width": result.mean_ci_width,
            "span_rho": result.span.rho,
            "span_ci_width": result.span.ci_width,
            "span_drift_detected": span_drift,
            "point_outside_pairs": sum(p.point_outside for p in result.pairs),
        }

    ctx.for_each_series("stability", body)
    out.add("stability_summary", reporting.stability_summary_frame(rows))
    return out


def _drift_flags(ctx: AnalysisContext, series: Series):
    cfg = ctx.config
    return drift_series(ctx.series_metrics(series), alpha=cfg.drift_alpha, practical_threshold=cfg.practical_delta)


def section_drift(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()

    def body(series: Series) -> None:
        flags = _drift_flags(ctx, series)
        out.add("drift_flags", reporting.drift_flags_frame(series, flags))
        flagged = [f for f in flags if f.flagged]
        out.summary[_label(series)] = {
            "baseline_job": ctx.samples(series)[0].key.job_id,
            "n_tests": len(flags),
            "n_flagged": len(flagged),
            "flagged_domains": sorted({f.domain for f in flagged}),
        }

    ctx.for_each_series("drift", body)
    return out


def section_content_status(ctx: AnalysisContext) -> SectionResult:
    out = SectionResult()
    if ctx.ledger is None:
        logger.warning("No checksums supplied; every content status is unknown")
        ledger = ChecksumLedger()
    else:
        ledger = ctx.ledger

    def body(series: Series) -> None:
        samples = ctx.samples(series)
        flagged = {(f.domain, f.current_job): f.flagged for f in _drift_flags(ctx, series)} if len(samples) > 1 else {}
        counts: Dict[str, int] = {}
        for domain in ctx.tracked_domains(series):
            statuses = content_status(ledger, samples, domain)
            out.add("content_status", reporting.content_status_frame(series, statuses, flagged))
            for s in statuses:
                counts[s.status.value] = counts.get(s.status.value, 0) + 1
        out.summary[_label(series)] = counts

    ctx.for_each_series("content-status", body)
    return out


SECTIONS: Dict[str, Callable[[AnalysisContext], SectionResult]] = {
    "metrics": section_metrics,
    "overlap": section_overlap,
    "ci": section_ci,
    "converge": section_converge,
    "dispersion": section_dispersion,
    "stability": section_stability,
    "drift": section_drift,
    "content-status": section_content_status,
}


# ============================================================================
# OUTPUT
# ============================================================================

def write_frames(result: SectionResult, out_dir: Path) -> List[Path]:
    written = []
    for name in sorted(result.frames):
        frame = reporting.concat(result.frames[name])
        written.append(reporting.write_csv(frame, out_dir / f"{name}.csv"))
    return written


def _provenance(ctx: AnalysisContext) -> dict:
    cfg = ctx.config
    return {
        "inputs": [{"name": s.path, "sha256": s.sha256, "lines": s.lines} for s in ctx.dataset.provenance],
        "seed": cfg.seed,
        "B": cfg.B,
        "alpha": cfg.alpha,
        "version": __version__,
        "parameters": cfg.echo(),
    }


def run_section(config: RunConfig, name: str) -> List[Path]:
    """One analysis subcommand: its CSV exports plus a small JSON echo."""
    ctx = load_context(config)
    out_dir = Path(config.out_dir)
    if name in ("ci", "converge"):
        result = SECTIONS[name](ctx, (config.metric,))
    else:
        result = SECTIONS[name](ctx)
    written = write_frames(result, out_dir)
    echo = {
        "schema": reporting.REPORT_SCHEMA,
        "command": name,
        "provenance": _provenance(ctx),
        "summary": result.summary,
        "errors": ctx.errors,
    }
    written.append(reporting.write_report_json(echo, out_dir / f"{name}.json"))
    logger.info(f"{name}: wrote {len(written)} files to {out_dir}")
    return written


def run_ingest(config: RunConfig) -> List[Path]:
    """Validate inputs and write the normalized dataset and job order."""
    ctx = load_context(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        write_dataset(ctx.dataset, out_dir / "dataset.jsonl"),
        write_job_order(ctx.dataset, out_dir / "job_order.txt"),
        reporting.write_report_json(
            {"schema": reporting.REPORT_SCHEMA, "command": "ingest",
             "provenance": _provenance(ctx), "ingest": ctx.ingest},
            out_dir / "ingest.json",
        ),
    ]
    logger.info(f"ingest: {ctx.ingest['accepted']} responses accepted, {ctx.ingest['rejected']} rejected")
    return written


def run_simulate(config: RunConfig) -> List[Path]:
    synth = preset(config.preset, regime=config.regime, seed=config.seed)
    dataset, truth = generate(synth)
    checksums = synthetic_checksums(
        dataset, seed=config.seed, change_rate=SIM_CHANGE_RATE,
        churn_domains=[domain_name(SIM_CHURN_RANK)],
    )
    return write_synthetic(dataset, truth, config.out_dir, checksums=checksums)


def build_report(ctx: AnalysisContext) -> Tuple[dict, SectionResult]:
    merged = SectionResult()
    summaries = {}
    for name, section in SECTIONS.items():
        logger.info(f"report: {name}")
        result = section(ctx)
        for key, frames in result.frames.items():
            merged.frames.setdefault(key, []).extend(frames)
        summaries[name] = result.summary
    report = {
        "schema": reporting.REPORT_SCHEMA,
        "provenance": _provenance(ctx),
        "ingest": {k: v for k, v in ctx.ingest.items() if k != "errors"},
        "sections": summaries,
        "errors": ctx.errors,
    }
    return report, merged


def run_report(config: RunConfig) -> Tuple[List[Path], str]:
    """Full pipeline: every section, every series. Returns files and a text summary."""
    ctx = load_context(config)
    out_dir = Path(config.out_dir)
    report, merged = build_report(ctx)
    written = write_frames(merged, out_dir)
    report["outputs"] = sorted([p.name for p in written] + ["report.json"])
    written.append(reporting.write_report_json(report, out_dir / "report.json"))
    if ctx.errors:
        logger.warning(f"report: {len(ctx.errors)} series/section combinations skipped")
    logger.info(f"report: wrote {len(written)} files to {out_dir}")
    return written, reporting.format_summary_text(report)


def run_command(config: RunConfig) -> Tuple[List[Path], Optional[str]]:
    """Dispatch one subcommand. Returns written paths and optional stdout text."""
    command = config.command
    if command == "simulate":
        return run_simulate(config), None
    if command == "ingest":
        return run_ingest(config), None
    if command == "report":
        return run_report(config)
    if command in SECTIONS:
        return run_section(config, command), None
    raise InvalidParameter(f"Unknown command {command!r}")
