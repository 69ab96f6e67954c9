"""
Command-line interface for the KE toolkit.

Verbs:
    compute  REF               KE of one work (DOI or OpenAlex ID)
    batch    INPUT -o OUT      KE for a file of refs, plus an exclusion report
    cohort   SPEC.json -o OUT  harvest a cohort, compute KE and bins
    analyze  RESULTS -o OUT    statistical report over a results file
    config   [--save]          show the resolved settings, optionally saving them

Data goes to stdout or output files; status lines go to stderr.
"""

import argparse
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import requests
from colorama import Fore, Style

from src.errors import KEToolkitError, UsageError
from src.services.analysis import T_TESTS, AnalysisOptions, analyze, write_report
from src.services.cohort import CohortSpec, assign_bins, attach_ke, build_cohort
from src.services.eccentricity import KEResult, compute_ke
from src.services.openalex_client import OpenAlexClient
from src.services.results_table import (
    BIN_COLUMNS,
    RESULT_COLUMNS,
    exclusions_path,
    load_results,
    result_row,
    write_exclusions,
    write_results,
)
from src.services.work_cache import WorkCache
from src.services.work_record import WorkRecord
from src.settings_manager import OUTPUT_FORMATS, LOG_LEVELS, RunConfig, SettingsManager

logger = logging.getLogger(__name__)

# argparse dest -> RunConfig field
GLOBAL_OPTIONS = {
    "cache_dir": "cache_dir",
    "mailto": "contact_email",
    "rps": "rate_limit_rps",
    "parallelism": "parallelism",
    "format": "output_format",
    "offline": "offline",
    "coverage_threshold": "coverage_threshold",
    "log_level": "log_level",
    "log_file": "log_file",
}


def status(message: str, color: str = Fore.CYAN):
    """Print a human-facing status line on stderr."""
    print(f"{color}{message}{Style.RESET_ALL}", file=sys.stderr)


def print_progress_bar(progress: float, width: int = 40, label: str = "Progress"):
    """Draw a progress bar on stderr."""
    filled = int(width * progress)
    bar = "█" * filled + "-" * (width - filled)
    sys.stderr.write(f"\r{Fore.GREEN}{label}: |{bar}| {int(100 * progress)}%{Style.RESET_ALL}")
    if progress >= 1:
        sys.stderr.write("\n")
    sys.stderr.flush()


def _add_global_options(parser: argparse.ArgumentParser):
    # SUPPRESS keeps unset flags out of the namespace, so flags work before or after the verb
    group = parser.add_argument_group("global options")
    group.add_argument("--cache-dir", default=argparse.SUPPRESS,
                       help="Directory holding works.jsonl (default: .ke-cache)")
    group.add_argument("--mailto", default=argparse.SUPPRESS,
                       help="Contact email for the OpenAlex polite pool (env KE_MAILTO)")
    group.add_argument("--rps", type=float, default=argparse.SUPPRESS,
                       help="Maximum OpenAlex requests per second")
    group.add_argument("--parallelism", type=int, default=argparse.SUPPRESS,
                       help="Concurrent OpenAlex requests")
    group.add_argument("--format", choices=OUTPUT_FORMATS, default=argparse.SUPPRESS,
                       help="Output format for results and reports")
    group.add_argument("--offline", action="store_true", default=argparse.SUPPRESS,
                       help="Use cached works only; never touch the network")
    group.add_argument("--coverage-threshold", type=float, default=argparse.SUPPRESS,
                       help="Coverage below which results are flagged low-confidence")
    group.add_argument("--log-level", choices=LOG_LEVELS, default=argparse.SUPPRESS,
                       help="Logging level")
    group.add_argument("--log-file", default=argparse.SUPPRESS, help="Also log to this file")
    group.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                       help="More logging (-v info, -vv debug)")
    group.add_argument("--config-dir", default=argparse.SUPPRESS,
                       help="Directory with settings.json (env KE_CONFIG_DIR)")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with all verbs."""
    parser = argparse.ArgumentParser(
        prog="ke-toolkit",
        description="Compute Knowledge Eccentricity (KE) from OpenAlex reference graphs "
                    "and analyze KE across cohorts.",
    )
    _add_global_options(parser)
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    compute = commands.add_parser("compute", help="Compute KE for one work")
    compute.add_argument("ref", help="DOI or OpenAlex work ID")
    _add_global_options(compute)

    batch = commands.add_parser("batch", help="Compute KE for a file of refs")
    batch.add_argument("input", help="Text file, one DOI or OpenAlex ID per line (# comments allowed)")
    batch.add_argument("-o", "--output", required=True, help="Results file")
    _add_global_options(batch)

    cohort = commands.add_parser("cohort", help="Harvest a cohort and compute KE")
    cohort.add_argument("spec", help="Cohort spec (JSON)")
    cohort.add_argument("-o", "--output", required=True, help="Results file")
    cohort.add_argument("--per-cell-limit", type=int, help="Override the spec's per-cell limit")
    cohort.add_argument("--influence-ids",
                        help="File of OpenAlex IDs or DOIs defining the Influence group explicitly")
    _add_global_options(cohort)

    report = commands.add_parser("analyze", help="Statistical report over a results file")
    report.add_argument("results", help="Results file from batch or cohort (CSV or JSON)")
    report.add_argument("-o", "--output", required=True,
                        help="Report file (json) or directory of CSV tables (csv)")
    report.add_argument("--alpha", type=float, default=0.05, help="Significance level for Tukey HSD")
    report.add_argument("--bins", type=int, default=20, help="Interior histogram bins")
    report.add_argument("--threshold", type=float,
                        help="KE threshold for shares (default: pooled mean KE)")
    report.add_argument("--t-test", choices=sorted(T_TESTS), default="welch",
                        help="Two-sample test for group comparisons")
    report.add_argument("--exclude-low-confidence", action="store_true",
                        help="Drop rows flagged low_confidence before analysis")
    _add_global_options(report)

    settings = commands.add_parser("config", help="Show the resolved settings")
    settings.add_argument("--save", action="store_true",
                          help="Write the resolved settings to settings.json")
    _add_global_options(settings)

    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Collect RunConfig values given as flags."""
    overrides = {field: getattr(args, dest) for dest, field in GLOBAL_OPTIONS.items()
                 if hasattr(args, dest)}
    verbosity = getattr(args, "verbose", 0)
    if verbosity:
        overrides["log_level"] = "DEBUG" if verbosity > 1 else "INFO"
    return overrides


def make_client(config: RunConfig, session: Optional[requests.Session] = None) -> OpenAlexClient:
    return OpenAlexClient(config.client_config(), WorkCache(config.cache_path), session=session)


def read_refs(path: str) -> List[str]:
    """
    Read one ref per line, skipping blank lines and # comments.

    Args:
        path: Input text file

    Returns:
        List[str]: Refs in file order
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise UsageError(f"cannot read input {path}: {e}") from e
    return [line.strip() for line in lines if line.strip() and not line.strip().startswith("#")]


def evaluate_ref(client: OpenAlexClient, ref: str) -> Tuple[WorkRecord, KEResult]:
    work = client.fetch_work(ref)
    return work, compute_ke(client.resolve_neighborhood(work.id))


def format_compute_line(result: KEResult, config: RunConfig) -> str:
    row = result.to_row(config.coverage_threshold)
    if config.output_format == "json":
        return json.dumps(row)
    return (f"{row['id']},{row['n_refs']},{row['internal_links']},{row['ke']:.6f},"
            f"{row['coverage']:.4f},{row['low_confidence']}")


def cmd_compute(args: argparse.Namespace, config: RunConfig,
                session: Optional[requests.Session] = None) -> int:
    config.require_contact_email()
    client = make_client(config, session)
    _, result = evaluate_ref(client, args.ref)

    print(format_compute_line(result, config))
    if result.is_low_coverage(config.coverage_threshold):
        status(f"Low confidence: only {result.coverage:.0%} of reference lists resolved",
               Fore.YELLOW)
    return 0


def cmd_batch(args: argparse.Namespace, config: RunConfig,
              session: Optional[requests.Session] = None) -> int:
    refs = read_refs(args.input)
    config.require_contact_email()
    client = make_client(config, session)
    status(f"Computing KE for {len(refs)} work(s)...")

    done = []
    progress_lock = threading.Lock()

    def evaluate(ref: str):
        try:
            outcome = evaluate_ref(client, ref), None
        except KEToolkitError as e:
            outcome = None, e
        with progress_lock:
            done.append(ref)
            if len(refs) > 1:
                print_progress_bar(len(done) / len(refs), label="Batch")
        return outcome

    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        outcomes = list(pool.map(evaluate, refs))

    rows, exclusions = [], []
    for ref, (evaluated, error) in zip(refs, outcomes):
        if error is not None:
            logger.info(f"Excluding {ref}: {error}")
            exclusions.append({"ref": ref, "reason": error.kind, "message": str(error)})
            continue
        work, result = evaluated
        rows.append(result_row(work, result, threshold=config.coverage_threshold))

    write_results(rows, args.output, config.output_format)
    write_exclusions(exclusions, exclusions_path(args.output))

    status(f"✓ {len(rows)} result(s) written to {args.output}", Fore.GREEN)
    if exclusions:
        status(f"⚠ {len(exclusions)} ref(s) excluded; see {exclusions_path(args.output)}", Fore.YELLOW)
    return 0


def cmd_cohort(args: argparse.Namespace, config: RunConfig,
               session: Optional[requests.Session] = None) -> int:
    spec = CohortSpec.from_file(args.spec)
    if args.per_cell_limit is not None:
        spec = replace(spec, per_cell_limit=args.per_cell_limit)
    if args.influence_ids:
        spec = replace(spec, influence_mode="explicit", influence_ids=read_refs(args.influence_ids))

    config.require_contact_email()
    client = make_client(config, session)
    status(f"Harvesting {len(spec.years)} year(s) x {len(spec.groups)} group(s)...")

    build = attach_ke(client, build_cohort(client, spec))
    records, skipped = assign_bins(build.records)

    rows = []
    for record in records:
        row = result_row(record.work, record.ke, record.group.value, config.coverage_threshold)
        row.update({
            "team_bin": record.team_bin.value if record.team_bin else None,
            "refcount_bin": record.refcount_bin.value if record.refcount_bin else None,
            "fwci_bin": record.fwci_bin.value if record.fwci_bin else None,
            "fetched_at": record.fetched_at,
        })
        rows.append(row)

    write_results(rows, args.output, config.output_format, columns=RESULT_COLUMNS + BIN_COLUMNS)
    write_exclusions(build.exclusions.rows(), exclusions_path(args.output))

    for year, group in build.empty_cells:
        status(f"⚠ No works found for {group.value} {year}", Fore.YELLOW)
    for reason, count in sorted(skipped.items()):
        if count:
            logger.info(f"{count} record(s) without bins: {reason}")
    status(f"✓ {len(rows)} cohort record(s) written to {args.output} "
           f"({build.exclusions.excluded} excluded)", Fore.GREEN)
    return 0


def cmd_analyze(args: argparse.Namespace, config: RunConfig,
                session: Optional[requests.Session] = None) -> int:
    frame = load_results(args.results)
    options = AnalysisOptions(
        alpha=args.alpha,
        histogram_bins=args.bins,
        threshold=args.threshold,
        t_test=args.t_test,
        exclude_low_confidence=args.exclude_low_confidence,
    )
    report = analyze(frame, options)
    output = write_report(report, Path(args.output), config.output_format)
    status(f"✓ Analysis of {len(frame)} row(s) written to {output}", Fore.GREEN)
    return 0


def cmd_config(args: argparse.Namespace, config: RunConfig,
               session: Optional[requests.Session] = None) -> int:
    print(json.dumps(asdict(config), indent=2, sort_keys=True))
    if args.save:
        path = SettingsManager(getattr(args, "config_dir", None)).save_settings(config)
        status(f"✓ Settings saved to {path}", Fore.GREEN)
    return 0


COMMANDS = {
    "compute": cmd_compute,
    "batch": cmd_batch,
    "cohort": cmd_cohort,
    "analyze": cmd_analyze,
    "config": cmd_config,
}
