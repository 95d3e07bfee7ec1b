"""
Entry point for the citation-visibility toolkit.

Subcommands:
  ingest          validate JSONL input, write the normalized dataset
  metrics         counts, shares, prevalences, citation summaries
  overlap         pairwise domain Jaccard across repeated queries
  ci              bootstrap confidence intervals (--metric share|prevalence)
  converge        CI width vs. number of responses
  dispersion      log-std across samples, ranked share tables
  stability       weighted Spearman rank stability between jobs
  drift           chi-squared drift flags against the first job
  content-status  checksum-based content change per job
  simulate        synthetic dataset from a calibrated engine preset
  report          every analysis above, plus report.json

Every option can also come from a VIS_* environment variable (or a .env
file); flags win. No variable is required.

Examples:
  python run.py simulate --preset searchgpt-like --out data/
  python run.py report --in data/ --out results/
  python run.py ci --in data/ --metric share --B 1000 --alpha 0.05 --out ci/
  python run.py simulate --preset gemini-like --regime high-frequency --seed 7 --out hf/
  VIS_B=2000 python run.py stability --in data/ --out stab/
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

COMMANDS = (
    "ingest", "metrics", "overlap", "ci", "converge", "dispersion",
    "stability", "drift", "content-status", "simulate", "report",
)

logger = logging.getLogger("run")


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    from engines import list_engines

    parser = argparse.ArgumentParser(
        description="Citation visibility with uncertainty: estimates, intervals, stability, drift",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run.")
    parser.add_argument(
        "--in",
        dest="inputs",
        nargs="+",
        metavar="PATH",
        help="JSONL files, or directories holding dataset.jsonl "
             "(job_order.txt and checksums.jsonl next to it are picked up).",
    )
    parser.add_argument("--out", dest="out_dir", metavar="DIR", help="Output directory. Default: out/")
    parser.add_argument("--seed", type=int, help="Random seed. Default: 20250101.")
    parser.add_argument("--B", type=int, help="Bootstrap replicates. Default: 1000.")
    parser.add_argument("--alpha", type=float, help="CI level is 1 - alpha. Default: 0.05.")
    parser.add_argument("--target-width-share", type=float, help="Target CI width for share. Default: 0.05.")
    parser.add_argument("--target-width-prevalence", type=float,
                        help="Target CI width for prevalence. Default: 0.15.")
    parser.add_argument("--sufficiency", type=float,
                        help="Max rho CI width for a job pair to count. Default: 0.25.")
    parser.add_argument("--stability", type=float, help="Min rho for a sufficient pair to be stable. Default: 0.9.")
    parser.add_argument("--drift-alpha", type=float, help="Drift test significance level. Default: 0.05.")
    parser.add_argument("--practical-delta", type=float,
                        help="Minimum absolute share change for a drift flag. Default: 0.02.")
    parser.add_argument("--min-fraction", type=float,
                        help="Fraction of samples a frequently-cited domain must appear in. Default: 1.0.")
    parser.add_argument("--job-order", metavar="FILE", help="One job_id per line, earliest first.")
    parser.add_argument("--checksums", metavar="FILE", help="Checksum JSONL for content-status.")
    parser.add_argument("--preset", choices=list_engines(), help="Engine preset for simulate.")
    parser.add_argument("--regime", choices=("daily", "high-frequency"),
                        help="Sampling regime for simulate. Default: daily.")
    parser.add_argument("--metric", choices=("share", "prevalence"),
                        help="Metric for ci / converge. Default: share.")
    parser.add_argument("--order", dest="convergence_order", choices=("prefix", "random"),
                        help="Subsample order for converge. Default: prefix.")
    parser.add_argument("--draws", type=int, help="Random subsamples per grid point (random order).")
    parser.add_argument("--include-duplicates", action="store_true",
                        help="Pair within-sample repeats of a query in overlap.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only.")
    return parser.parse_args(argv)


_ENV_FLAGS = (
    "inputs", "out_dir", "seed", "B", "alpha", "target_width_share", "target_width_prevalence",
    "sufficiency", "stability", "drift_alpha", "practical_delta", "min_fraction", "job_order",
    "checksums", "preset", "regime", "metric", "convergence_order", "draws",
)


def _apply_args_to_env(args: argparse.Namespace, env: Dict[str, str]) -> Dict[str, str]:
    """Push parsed CLI args into VIS_* variables so RunConfig picks them up."""
    env = dict(env)
    env["VIS_COMMAND"] = args.command
    for name in _ENV_FLAGS:
        value = getattr(args, name)
        if value is None:
            continue
        env[f"VIS_{name.upper()}"] = ",".join(value) if isinstance(value, list) else str(value)
    if args.include_duplicates:
        env["VIS_INCLUDE_DUPLICATES"] = "true"
    return env


def _log_level(args: argparse.Namespace, env: Dict[str, str]) -> int:
    if args.verbose:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    return getattr(logging, env.get("VIS_LOG_LEVEL", "INFO").upper(), logging.INFO)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass

    logging.basicConfig(
        level=_log_level(args, os.environ),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        force=True,
    )

    from core.config import RunConfig
    from core.errors import VisibilityError
    from core.pipeline import run_command

    try:
        config = RunConfig.from_env(_apply_args_to_env(args, os.environ))
        written, text = run_command(config)
    except (VisibilityError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    if text:
        print(text)
    logger.info(f"Done: {len(written)} files written")
    return 0


if __name__ == "__main__":
    sys.exit(main())
