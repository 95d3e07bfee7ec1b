"""
Core modules for the citation-visibility toolkit.

Visibility metrics from generative answer engines are treated as sample
estimators: point estimates come with bootstrap intervals, overlap,
dispersion and rank-stability diagnostics, and drift tests.

Submodules:
    core.models      - CitationRef, ResponseRecord, SampleKey, Sample, Dataset
    core.corpus      - JSONL ingestion, registered-domain extraction, repeated-query grouping
    core.metrics     - count / share / prevalence, citation summaries, frequently-cited sets
    core.overlap     - pairwise domain Jaccard across repeated runs
    core.resample    - seeded percentile bootstrap and CI-width convergence
    core.dispersion  - log-std dispersion and ranked share tables
    core.stability   - weighted Spearman rank stability between samples
    core.driftwatch  - chi-squared drift test and the content checksum ledger
    core.synthengine - synthetic answer engine with known ground truth
    core.config      - RunConfig (defaults, VIS_* env vars, CLI overrides)
    core.pipeline    - per-subcommand runners and the full report
    core.reporting   - CSV / JSON exports and the plain-text summary
"""

__version__ = "1.0.0"
