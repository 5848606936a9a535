#!/usr/bin/env python3
"""
Causal-Pinpointer CLI

Command-line interface for recursive causal discovery with latent
confounders, compatible-matrix enumeration and simulation benchmarks.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml
from prometheus_client import write_to_textfile

from .cli_output import OutputFormatter, print_error, print_info, print_success, print_warning
from .config import CausalPinpointerConfig, ConfigManager, get_config
from .errors import CausalPinpointerError, DataFormatError, DiscoveryFailure, UnderdeterminedError
from .export import Exporter
from .graph_model import (
    count_compatible,
    count_sparsest,
    enumerate_compatible,
    exog_set,
    normalize_params,
    path_matrix,
    sib_set,
    support_preserving,
)
from .recursive_discovery import DiscoveryOptions, discover
from .schemas import CumulantSetModel, DiscoveryResultModel, ExperimentConfig, GraphModel
from .simulation_bench import (
    ORACLE_SCALE_RANGE,
    SemModel,
    exact_cumulants_for,
    max_abs_match_error,
    run_experiment,
    sample_model,
)
from .tensor_cumulants import Dataset, sample_cumulants

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


def print_banner():
    """Print application banner"""
    banner = """
╔═══════════════════════════════════════════════════════════════╗
║                     CAUSAL-PINPOINTER                         ║
║     Recursive causal discovery with latent confounders        ║
╚═══════════════════════════════════════════════════════════════╝
"""
    print(banner, file=sys.stderr)


def _configure_logging(args, config: CausalPinpointerConfig):
    verbosity = config.output.verbosity
    if args.verbose:
        verbosity = "debug" if args.verbose > 1 else "verbose"
    elif args.quiet:
        verbosity = "quiet"
    level = {"quiet": logging.ERROR, "normal": logging.WARNING,
             "verbose": logging.INFO, "debug": logging.DEBUG}.get(verbosity, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _formatter(config: CausalPinpointerConfig) -> OutputFormatter:
    return OutputFormatter(use_colors=config.output.colors, use_emoji=config.output.emoji)


def _discovery_options(args, config: CausalPinpointerConfig, exact: bool = False) -> DiscoveryOptions:
    defaults = config.discovery
    return DiscoveryOptions(
        ell_max=args.lmax if args.lmax is not None else defaults.ell_max,
        k_max=args.kmax if args.kmax is not None else defaults.k_max,
        exact=exact,
        threshold=args.threshold,
        threshold_scale=args.threshold_scale if args.threshold_scale is not None else defaults.threshold_scale,
        exact_threshold=defaults.exact_threshold,
        match_tol=args.match_tol if args.match_tol is not None else (None if exact else defaults.match_tol),
        im_tol=defaults.im_tol,
        sep_tol=defaults.sep_tol,
        rank_tol=defaults.rank_tol,
        support_tol=None if exact else defaults.support_tol,
        ratio_tol=None if exact else defaults.ratio_tol,
    )


def _emit_result(args, config: CausalPinpointerConfig, result, options: DiscoveryOptions):
    model = DiscoveryResultModel.from_result(result, options.match_tol)
    exporter = Exporter(config.export_dir)
    if args.pairs_out:
        records = [test for report in result.iterations for test in report.tests]
        exporter.write_records(records, args.pairs_out)
    if args.out:
        path = exporter.export_discovery_result(model, args.format, args.out)
        print_success(f"Result written to {path}")
    else:
        print(model.model_dump_json(indent=2, by_alias=True))
    if config.output.format != "json" and not args.quiet:
        rank_tests = [test for report in result.iterations for test in report.tests] if args.verbose else None
        print(_formatter(config).discovery_summary(model, rank_tests), file=sys.stderr)


def cmd_discover(args, config: CausalPinpointerConfig) -> int:
    """Handle discover command"""
    data = Dataset.from_csv(args.csv, header=args.header)
    if data.p < 2:
        print_warning("Single-variable data: the result is trivial")
    options = _discovery_options(args, config)
    try:
        result = discover(data, options)
    except DiscoveryFailure as e:
        if args.pairs_out:
            Exporter(config.export_dir).write_records(e.diagnostics, args.pairs_out)
        raise
    _emit_result(args, config, result, options)
    return EXIT_OK


def cmd_oracle(args, config: CausalPinpointerConfig) -> int:
    """Handle oracle command: exact cumulants of a parameterized graph, discovery in exact mode"""
    graph_model = GraphModel.load(args.graph)
    g = graph_model.to_graph()
    rng = np.random.default_rng(args.seed)
    if graph_model.has_params():
        params = graph_model.to_params()
    else:
        print_info("Graph file has no weights; sampling them from the seed")
        _, params = sample_model(g, rng, permute=False)
    scales = graph_model.scales
    if scales is None and graph_model.omegas is None:
        scales = rng.uniform(*ORACLE_SCALE_RANGE, size=g.p + g.ell)
    model = SemModel(g, params, graph_model.noise or "gamma", scales, graph_model.source_cumulants())

    options = _discovery_options(args, config, exact=True)
    result = discover(exact_cumulants_for(model, options.k_max), options)
    truth, _ = normalize_params(params, g)
    error = max_abs_match_error(path_matrix(truth), result.candidates)
    _emit_result(args, config, result, options)
    if not args.quiet:
        print_info(f"Closest candidate differs from the true path matrix by {error:.2e}")
    return EXIT_OK


def cmd_enumerate(args, config: CausalPinpointerConfig) -> int:
    """Handle enumerate command"""
    graph_model = GraphModel.load(args.graph)
    g = graph_model.to_graph()
    exog = {v: sorted(exog_set(g, v)) for v in range(g.p)}
    siblings = {v: sorted(sib_set(g, v)) for v in range(g.p)}
    counts = {"n_G": count_compatible(g), "n_G_sparse": count_sparsest(g)}
    report = {
        **counts,
        "exog": {str(v): js for v, js in exog.items()},
        "siblings": {str(v): ws for v, ws in siblings.items()},
    }
    if graph_model.has_params():
        params, _ = normalize_params(graph_model.to_params(), g)
        report["candidates"] = [c.values.tolist() for c in enumerate_compatible(path_matrix(params), g)]
        report["candidate_sparse"] = support_preserving(g)

    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        print_success(f"Report written to {args.out}")
    else:
        print(text)
    if config.output.format != "json" and not args.quiet:
        print(_formatter(config).enumeration_summary(counts, exog, siblings), file=sys.stderr)
    return EXIT_OK


def cmd_bench(args, config: CausalPinpointerConfig) -> int:
    """Handle bench command"""
    defaults = config.bench
    values = {
        "setting": args.setting or defaults.setting,
        "noise": args.noise or defaults.noise,
        "n": args.n if args.n is not None else defaults.n,
        "reps": args.reps if args.reps is not None else defaults.reps,
        "seed": args.seed if args.seed is not None else defaults.seed,
        "jobs": args.jobs if args.jobs is not None else defaults.jobs,
        "exact": args.exact or defaults.exact,
        "path_tol": defaults.path_tol,
        "ell_max": args.lmax,
        "k_max": args.kmax,
        "threshold_scale": args.threshold_scale or config.discovery.threshold_scale,
        "match_tol": args.match_tol or config.discovery.match_tol,
        "noise_params": defaults.noise_params,
        "source_scales": defaults.source_scales,
    }
    if args.bench_config:
        with open(args.bench_config, "r", encoding="utf-8") as f:
            try:
                values.update(json.load(f))
            except json.JSONDecodeError as e:
                raise DataFormatError(f"Invalid benchmark config {args.bench_config}: {e}") from e
    try:
        experiment = ExperimentConfig(**values)
    except ValueError as e:
        print_error(f"Invalid benchmark configuration: {e}")
        return EXIT_USAGE

    report = run_experiment(experiment)
    summary = report.summary()
    exporter = Exporter(config.export_dir)
    if args.out:
        exporter.export_bench(report.rows(), summary, "csv", args.out)
        print_success(f"Per-replication rows written to {args.out}")
    else:
        sys.stdout.write(exporter.format_bench_csv(report.rows()))
    if args.summary_out:
        summary_format = "markdown" if args.summary_out.endswith(".md") else "json"
        exporter.export_bench(report.rows(), summary, summary_format, args.summary_out)
    if args.metrics_out:
        write_to_textfile(args.metrics_out, report.registry)
    if not args.quiet:
        if config.output.format == "json":
            print(summary.model_dump_json(indent=2), file=sys.stderr)
        else:
            print(_formatter(config).bench_summary(summary), file=sys.stderr)
    return EXIT_OK


def cmd_cumulants(args, config: CausalPinpointerConfig) -> int:
    """Handle cumulants command"""
    data = Dataset.from_csv(args.csv, header=args.header)
    model = CumulantSetModel.from_cumulants(sample_cumulants(data, args.k))
    if args.out:
        Exporter(config.export_dir).write_json(model, args.out)
        print_success(f"Cumulants up to order {args.k} written to {args.out}")
    else:
        print(model.model_dump_json(indent=2))
    return EXIT_OK


def cmd_config(args, config: CausalPinpointerConfig) -> int:
    """Handle config command: show the effective configuration, save it or write an example"""
    manager = ConfigManager(args.config)
    if args.init:
        path = manager.create_example_config(Path(args.init))
        print_success(f"Example configuration written to {path}")
    elif args.save:
        path = Path(args.save)
        manager.save_config(config, path, format="json" if path.suffix == ".json" else "yaml")
        print_success(f"Configuration written to {path}")
    else:
        print(yaml.safe_dump(asdict(config), default_flow_style=False, sort_keys=False), end="")
        if manager.loaded_file and not args.quiet:
            print_info(f"Loaded from {manager.loaded_file}")
    return EXIT_OK


def _add_discovery_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--lmax", type=int, default=None, help="Bound on pairwise confounding (default 1)")
    parser.add_argument("--kmax", type=int, default=None, help="Highest cumulant order (default: auto)")
    parser.add_argument("--threshold-scale", type=float, default=None, help="Multiplier on the rank threshold schedule")
    parser.add_argument("--threshold", type=float, default=None, help="Fixed rank threshold (overrides the schedule)")
    parser.add_argument("--match-tol", type=float, default=None, help="Latent matching tolerance (default 0.1, or 1e-5 on exact cumulants)")


def _add_result_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--out", "-o", help="Output file (default: stdout)")
    parser.add_argument("--format", choices=["json", "markdown"], default="json", help="Output format for --out")
    parser.add_argument("--pairs-out", help="Write per-pair rank-test diagnostics to this JSON file")


def build_parser() -> argparse.ArgumentParser:
    description_text = """
Causal-Pinpointer: recursive causal discovery for linear non-Gaussian models
with latent confounders.

QUICK START:
  pinpoint.py discover data.csv --lmax 1          # Order, latents, compatible matrices
  pinpoint.py enumerate graph.json                 # Count compatible path matrices
  pinpoint.py oracle graph.json                    # Run on exact cumulants
  pinpoint.py bench --setting c --reps 100         # Simulation benchmark
"""
    epilog_text = """
EXIT CODES:
  0 success, 2 usage, 3 I/O, 4 underdetermined, 5 discovery failure

For detailed help on any command: pinpoint.py <command> --help
"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Configuration file (YAML or JSON)")
    common.add_argument("--verbose", "-v", action="count", default=0, help="More log output (repeat for debug)")
    common.add_argument("--quiet", "-q", action="store_true", help="Only errors")

    parser = argparse.ArgumentParser(
        prog="pinpoint.py",
        description=description_text,
        epilog=epilog_text,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    discover_parser = subparsers.add_parser(
        "discover", parents=[common], help="Discover order, latents and path matrices from a CSV",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="""
Recover the causal order, the number and attachment of latent confounders
and every path matrix compatible with the data.

EXAMPLES:
  pinpoint.py discover data.csv
  pinpoint.py discover data.csv --lmax 2 --out result.json --pairs-out pairs.json
""",
    )
    discover_parser.add_argument("csv", help="Data file, one row per sample")
    discover_parser.add_argument("--header", dest="header", action="store_true", default=None,
                                 help="First line is a header")
    discover_parser.add_argument("--no-header", dest="header", action="store_false", help="No header line")
    _add_discovery_flags(discover_parser)
    _add_result_flags(discover_parser)

    enumerate_parser = subparsers.add_parser(
        "enumerate", parents=[common], help="Count and list compatible path matrices of a graph",
    )
    enumerate_parser.add_argument("graph", help="Graph JSON file")
    enumerate_parser.add_argument("--out", "-o", help="Output file (default: stdout)")

    oracle_parser = subparsers.add_parser(
        "oracle", parents=[common], help="Run discovery on exact cumulants of a parameterized graph",
    )
    oracle_parser.add_argument("graph", help="Graph JSON file (weights optional)")
    oracle_parser.add_argument("--seed", type=int, default=0, help="Seed for missing weights and scales")
    _add_discovery_flags(oracle_parser)
    _add_result_flags(oracle_parser)

    bench_parser = subparsers.add_parser(
        "bench", parents=[common], help="Replicated simulation benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="""
Sample models of a setting, run discovery and score RMSE, precision and recall.

EXAMPLES:
  pinpoint.py bench --setting a --noise gamma --n 10000 --reps 100 --jobs 4 --out a.csv
  pinpoint.py bench --setting f --exact --reps 10
""",
    )
    bench_parser.add_argument("--bench-config", help="JSON file with experiment fields")
    bench_parser.add_argument("--setting", help="Setting a-f or graph JSON file")
    bench_parser.add_argument("--noise", choices=["gamma", "lognormal", "beta"])
    bench_parser.add_argument("--n", type=int, default=None, help="Sample size")
    bench_parser.add_argument("--reps", type=int, default=None, help="Replications")
    bench_parser.add_argument("--seed", type=int, default=None)
    bench_parser.add_argument("--jobs", type=int, default=None, help="Worker processes")
    bench_parser.add_argument("--exact", action="store_true", help="Exact cumulants instead of samples")
    bench_parser.add_argument("--out", "-o", help="Per-replication CSV (default: stdout)")
    bench_parser.add_argument("--summary-out", help="Summary file, JSON or Markdown (.md)")
    bench_parser.add_argument("--metrics-out", help="Prometheus text-format metrics file")
    _add_discovery_flags(bench_parser)

    cumulants_parser = subparsers.add_parser(
        "cumulants", parents=[common], help="Sample cumulants of a CSV as JSON",
    )
    cumulants_parser.add_argument("csv", help="Data file, one row per sample")
    cumulants_parser.add_argument("-k", type=int, default=4, help="Highest order (default 4)")
    cumulants_parser.add_argument("--header", dest="header", action="store_true", default=None)
    cumulants_parser.add_argument("--no-header", dest="header", action="store_false")
    cumulants_parser.add_argument("--out", "-o", help="Output file (default: stdout)")

    config_parser = subparsers.add_parser(
        "config", parents=[common], help="Show, save or create a configuration file",
    )
    config_action = config_parser.add_mutually_exclusive_group()
    config_action.add_argument("--init", metavar="PATH", help="Write an example configuration (YAML or JSON)")
    config_action.add_argument("--save", metavar="PATH", help="Write the effective configuration (YAML or JSON)")
    return parser


COMMANDS = {
    "discover": cmd_discover,
    "enumerate": cmd_enumerate,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
    "cumulants": cmd_cumulants,
    "config": cmd_config,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if not args.command:
        print_banner()
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        config = get_config(args.config)
        _configure_logging(args, config)
        return COMMANDS[args.command](args, config)
    except UnderdeterminedError as e:
        print_error(f"Underdetermined at iteration {e.iteration}: {e}")
        return e.exit_code
    except DiscoveryFailure as e:
        where = f" at iteration {e.iteration}" if e.iteration else ""
        print_error(f"Discovery failed{where}: {e}")
        if e.diagnostics:
            rejected = [d for d in e.diagnostics if not d.get("accepted")]
            print_info(f"{len(rejected)} of {len(e.diagnostics)} rank tests rejected a drop")
        return e.exit_code
    except (OSError, DataFormatError) as e:
        print_error(f"I/O error: {e}")
        return EXIT_IO
    except CausalPinpointerError as e:
        print_error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
