#!/usr/bin/env python3
"""Main CLI interface for tidybalance."""

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd
from funlog import log_calls
from pydantic import ValidationError

from tidybalance.core.approx import prob_declared_balanced, prob_dim_imbalanced, table1
from tidybalance.core.files import (
    format_report,
    load_clusters,
    load_covariates,
    load_reference,
    load_simulation_config,
    load_split,
    report_json,
    save_reference,
    table1_frame,
    write_random_p,
    write_report_csv,
    write_simulation_outputs,
)
from tidybalance.core.pseudo_p import DEFAULT_GRID_MAX, DEFAULT_GRID_STEP, DEFAULT_ROUNDS, assess_with_distribution
from tidybalance.core.sampling import build_reference
from tidybalance.core.simulation import run_simulation
from tidybalance.errors import BalanceError, InfeasibleSchemeError, InputParseError, InvalidInputError
from tidybalance.models.balance_models import (
    ApproxQuery,
    BalanceConfig,
    Population,
    ReferenceMode,
    SamplingScheme,
    SchemeKind,
)
from tidybalance.models.simulation_models import SimulationConfig

logger = logging.getLogger(__name__)

EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_INFEASIBLE = 5


def parse_adhoc(text: str) -> BalanceConfig:
    """Parse an ad-hoc cutoff written as `DELTA:R`, e.g. `0.1:2`."""
    try:
        delta, r = text.split(":")
        return BalanceConfig(delta_cutoff=float(delta), max_imbalanced=int(r))
    except (ValueError, ValidationError) as e:
        raise argparse.ArgumentTypeError(f"expected DELTA:R, got {text!r}") from e


def build_scheme(args: argparse.Namespace, pop: Population, m_size: int, n_size: int) -> SamplingScheme:
    kind = SchemeKind(args.scheme)
    clusters = None
    if kind == SchemeKind.cluster:
        if not args.clusters:
            raise InvalidInputError("The cluster scheme needs --clusters")
        clusters = load_clusters(Path(args.clusters), pop)
    return SamplingScheme(
        kind=kind,
        m_size=m_size,
        n_size=n_size,
        partial_first=args.partial_first,
        clusters=clusters,
    )


def build_mode(args: argparse.Namespace) -> ReferenceMode:
    if args.mode == "enumerate":
        return ReferenceMode.exhaustive()
    return ReferenceMode.monte_carlo(args.rounds)


@log_calls(level="info", show_timing_only=True)
def cmd_assess(args: argparse.Namespace) -> None:
    """Assess the balance of an observed split against an ideal sampling scheme."""
    pop = load_covariates(Path(args.covariates))
    split = load_split(Path(args.split), pop)
    scheme = build_scheme(args, pop, *split.sizes)
    reference = load_reference(Path(args.reference)) if args.reference else None
    report, dist = assess_with_distribution(
        pop,
        split,
        scheme,
        mode=build_mode(args),
        seed=args.seed,
        reference=reference,
        exact=args.exact,
        grid_step=args.grid_step,
        grid_max=args.grid_max,
        adhoc=args.adhoc or [],
        threads=args.threads,
    )
    if args.dump_random_p:
        write_random_p(dist, Path(args.dump_random_p))
        logger.info(f"Wrote {len(dist)} reference pseudo p-values to {args.dump_random_p}")

    if args.out_format == "json":
        print(report_json(report))
    elif args.out_format == "csv":
        write_report_csv(report, sys.stdout)
    else:
        print(format_report(report))


def cmd_reference(args: argparse.Namespace) -> None:
    """Build a reference set once and cache it for later assessments."""
    pop = load_covariates(Path(args.covariates))
    scheme = build_scheme(args, pop, args.m_size, args.n_size)
    ref = build_reference(pop, scheme, build_mode(args), args.seed, args.threads)
    save_reference(ref, Path(args.out))
    if not args.quiet:
        print(f"Wrote reference of {ref.rows} splits ({scheme.describe()}, seed {ref.provenance.seed}) to {args.out}")


def simulation_config(args: argparse.Namespace) -> SimulationConfig:
    """Load the TOML config; --seed, --threads and --iterations override it when given."""
    config = load_simulation_config(Path(args.config))
    overrides = {
        name: getattr(args, name)
        for name in ("seed", "threads", "iterations")
        if getattr(args, name) is not None
    }
    return SimulationConfig.model_validate(config.model_dump() | overrides)


def cmd_simulate(args: argparse.Namespace) -> None:
    """Run the design-comparison simulation described by a TOML config."""
    result = run_simulation(simulation_config(args))
    written = write_simulation_outputs(result, Path(args.out_dir))
    if not args.quiet:
        for path in written:
            print(path)


def cmd_approx(args: argparse.Namespace) -> None:
    """Approximate probabilities that SRS samples pass the ad-hoc procedure."""
    if args.table1:
        frame = table1_frame(table1())
        if args.out_format == "json":
            print(frame.to_json(orient="records", indent=2))
        elif args.out_format == "csv":
            frame.to_csv(sys.stdout, index=False)
        else:
            print(frame.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
        return

    missing = [name for name in ("n", "m", "delta", "j", "r") if getattr(args, name) is None]
    if missing:
        raise InvalidInputError(f"approx needs --{', --'.join(missing)} (or --table1)")
    query = ApproxQuery(n=args.n, m=args.m, delta=args.delta, j_dims=args.j, r_max=args.r)
    result = {
        **query.model_dump(),
        "p_dim": prob_dim_imbalanced(query.n, query.m, query.delta),
        "p_balanced": prob_declared_balanced(query),
    }
    if args.out_format == "json":
        print(json.dumps(result, indent=2))
    elif args.out_format == "csv":
        pd.DataFrame([result]).to_csv(sys.stdout, index=False)
    else:
        print(f"P(SMD >= {query.delta:g} for one covariate) = {result['p_dim']:.4g}")
        print(f"P(at most {query.r_max} of {query.j_dims} imbalanced) = {result['p_balanced']:.4g}")


def add_scheme_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scheme",
        choices=[k.value for k in SchemeKind],
        default=SchemeKind.srs.value,
        help="Ideal sampling scheme for the reference distribution",
    )
    parser.add_argument("--partial-first", type=int, help="Units of M drawn from the first half (partial)")
    parser.add_argument("--clusters", help="CSV of unit id and cluster label (cluster scheme)")
    parser.add_argument("--mode", choices=["enumerate", "monte_carlo"], default="monte_carlo")
    parser.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS, help="Monte Carlo rounds")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Random seed (drawn from OS entropy if omitted)")
    common.add_argument("--out-format", choices=["text", "csv", "json"], default="text")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only print errors")
    verbosity.add_argument("--verbose", action="store_true", help="Log progress and timings")

    parser = argparse.ArgumentParser(
        description="TidyBalance - Covariate balance of two study arms drawn from a finite population"
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Assess an observed split
    assess_parser = subparsers.add_parser("assess", parents=[common], help="Pseudo p-values of a split")
    assess_parser.add_argument("covariates", help="Covariate CSV (unit id, then one column per covariate)")
    assess_parser.add_argument("split", help="Split CSV (unit id, arm M or N)")
    add_scheme_arguments(assess_parser)
    assess_parser.add_argument("--threads", type=int, default=1, help="Worker threads")
    assess_parser.add_argument("--grid-step", type=float, default=DEFAULT_GRID_STEP)
    assess_parser.add_argument("--grid-max", type=float, default=DEFAULT_GRID_MAX)
    assess_parser.add_argument("--exact", action="store_true", help="Use every realized SMD as a cutoff")
    assess_parser.add_argument("--reference", help="Cached reference from the reference command")
    assess_parser.add_argument(
        "--adhoc", type=parse_adhoc, action="append", metavar="DELTA:R", help="Ad-hoc cutoff to report"
    )
    assess_parser.add_argument("--dump-random-p", help="Write reference pseudo p-values to this CSV")

    # Simulation study
    simulate_parser = subparsers.add_parser("simulate", parents=[common], help="Run a simulation config")
    simulate_parser.add_argument("config", help="TOML simulation config")
    simulate_parser.add_argument("--out-dir", default="simulation_out", help="Output directory")
    simulate_parser.add_argument("--iterations", type=int, help="Override the configured iterations")
    simulate_parser.add_argument("--threads", type=int, help="Override the configured worker threads")

    # Analytic approximation
    approx_parser = subparsers.add_parser("approx", parents=[common], help="Normal-binomial approximation")
    approx_parser.add_argument("--table1", action="store_true", help="All conventional settings")
    approx_parser.add_argument("--n", type=int)
    approx_parser.add_argument("--m", type=int)
    approx_parser.add_argument("--delta", type=float)
    approx_parser.add_argument("--j", type=int)
    approx_parser.add_argument("--r", type=int)

    # Reference cache
    reference_parser = subparsers.add_parser("reference", parents=[common], help="Build a reference cache")
    reference_parser.add_argument("covariates", help="Covariate CSV")
    reference_parser.add_argument("--m-size", type=int, required=True)
    reference_parser.add_argument("--n-size", type=int, required=True)
    add_scheme_arguments(reference_parser)
    reference_parser.add_argument("--threads", type=int, default=1, help="Worker threads")
    reference_parser.add_argument("--out", required=True, help="Output .npz path")

    return parser


COMMANDS = {
    "assess": cmd_assess,
    "simulate": cmd_simulate,
    "approx": cmd_approx,
    "reference": cmd_reference,
}


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    level = logging.ERROR if args.quiet else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    try:
        COMMANDS[args.command](args)
    except InputParseError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleSchemeError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BalanceError, ValidationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
